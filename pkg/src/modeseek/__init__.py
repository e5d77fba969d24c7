"""Mode-seeking search over finite autoregressive sequence models.

The package provides locally normalized next-token models backed by context
tables, exact and approximate decoders over their finite sequence spaces
(greedy, beam, best-first and n-best depth-first search with admissible
pruning), a pairwise edit-distance uncertainty score over reference sets, and
analyses relating that score to search behavior.
"""

from .core import (
    DatasetItem,
    Hypothesis,
    Sequence,
    UnknownToken,
    Vocabulary,
    load_dataset,
    tokenize,
    write_dataset,
)
from .models import (
    ConditionalModel,
    IncompleteSequence,
    PrefixComplete,
    SynthSpec,
    TableModel,
    gen_synthetic,
    load_model,
    logprob_sequence,
    save_model,
    synth_dataset,
    validate_model,
)
from .search import (
    InvalidSeed,
    NBestState,
    SearchBudget,
    SearchResult,
    SpaceTooLarge,
    beam,
    dfs,
    enumerate_all,
    greedy,
    hypothesis_sort_key,
    nbest_dfs,
    write_results,
)
from .metrics import (
    AllEmptyReferences,
    BucketStat,
    DegenerateInput,
    TooFewReferences,
    UncertaintyRecord,
    bucketize,
    levenshtein,
    spearman_rho,
    uncertainty_records,
    uncertainty_u,
)
from .analysis import (
    CorrelationReport,
    ErrorReport,
    GapReport,
    IdMismatch,
    ItemResult,
    MassReport,
    UnterminatedExact,
    correlate,
    count_search_errors,
    mass_coverage,
    mass_gap,
    read_results,
    split_terminated,
)

__version__ = "0.1.0"

__all__ = [
    "AllEmptyReferences",
    "BucketStat",
    "ConditionalModel",
    "CorrelationReport",
    "DatasetItem",
    "DegenerateInput",
    "ErrorReport",
    "GapReport",
    "Hypothesis",
    "IdMismatch",
    "IncompleteSequence",
    "InvalidSeed",
    "ItemResult",
    "MassReport",
    "NBestState",
    "PrefixComplete",
    "SearchBudget",
    "SearchResult",
    "Sequence",
    "SpaceTooLarge",
    "SynthSpec",
    "TableModel",
    "TooFewReferences",
    "UncertaintyRecord",
    "UnknownToken",
    "UnterminatedExact",
    "Vocabulary",
    "beam",
    "bucketize",
    "correlate",
    "count_search_errors",
    "dfs",
    "enumerate_all",
    "gen_synthetic",
    "greedy",
    "hypothesis_sort_key",
    "levenshtein",
    "load_dataset",
    "load_model",
    "logprob_sequence",
    "mass_coverage",
    "mass_gap",
    "nbest_dfs",
    "read_results",
    "save_model",
    "spearman_rho",
    "split_terminated",
    "synth_dataset",
    "tokenize",
    "uncertainty_records",
    "uncertainty_u",
    "validate_model",
    "write_dataset",
    "write_results",
]
