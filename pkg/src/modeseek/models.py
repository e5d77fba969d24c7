"""Scorable next-token models: context-table lookup and seeded synthetic generation.

Every model in this module is locally normalized: conditioned on a source key
and a target prefix it yields one log-probability row over the vocabulary.
Prefixes that reach `max_len` tokens receive the end-of-sentence token with
probability exactly one, so the space of complete sequences is finite and can
be enumerated, which is what makes exact search and exact oracles possible.
"""

from __future__ import annotations

import itertools
import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DatasetItem, Sequence, Vocabulary

ROW_SUM_TOL = 1e-6


class PrefixComplete(Exception):
    """Asked to extend a prefix that already ends with the end-of-sentence token."""


class IncompleteSequence(Exception):
    """Asked for the total score of a sequence that is not complete."""


class ConditionalModel(ABC):
    """Locally normalized next-token distribution conditioned on a source key.

    Rows are read-only numpy arrays of natural-log probabilities indexed by
    token id. Scoring is a pure function of (source, prefix): repeated calls
    return identical rows.
    """

    def __init__(self, vocab: Vocabulary, max_len: int):
        if max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {max_len}")
        self.vocab = vocab
        self.max_len = max_len
        forced = np.full(len(vocab), -math.inf)
        forced[vocab.eos_index] = 0.0
        forced.flags.writeable = False
        self._forced_eos_row = forced

    @abstractmethod
    def _row(self, source: str, prefix_ids: tuple[int, ...]) -> np.ndarray:
        """Log-probability row for prefixes shorter than `max_len`."""

    def row_for(self, source: str, prefix_ids: tuple[int, ...]) -> np.ndarray:
        """Log-probability row for extending `prefix_ids` under `source`.

        Once the prefix holds `max_len` tokens the row forces end-of-sentence
        with probability one. The returned array is shared and read-only.
        """
        if len(prefix_ids) >= self.max_len:
            return self._forced_eos_row
        return self._row(source, prefix_ids)

    def score_step(self, source: str, prefix: Sequence) -> np.ndarray:
        """Row for the next step after `prefix`; rejects complete prefixes."""
        if prefix.is_complete(self.vocab.eos_index):
            raise PrefixComplete(
                f"prefix already ends with {self.vocab.eos_token!r} and cannot be extended"
            )
        return self.row_for(source, prefix.token_ids)


def logprob_sequence(model: ConditionalModel, source: str, sequence: Sequence) -> float:
    """Total log-probability of a complete sequence, summed step by step."""
    if not sequence.is_complete(model.vocab.eos_index):
        raise IncompleteSequence(
            f"sequence does not end with {model.vocab.eos_token!r} exactly once"
        )
    ids = sequence.token_ids
    total = 0.0
    for j, w in enumerate(ids):
        total += float(model.row_for(source, ids[:j])[w])
    return total


def _check_row(vocab: Vocabulary, probs: dict) -> tuple[list[str], list[str], float]:
    """(unknown tokens, negative-probability tokens, row total) for a raw row."""
    unknown = [tok for tok in probs if tok not in vocab]
    negative = [tok for tok, p in probs.items() if float(p) < 0.0]
    total = float(sum(float(p) for p in probs.values()))
    return unknown, negative, total


class TableModel(ConditionalModel):
    """Finite conditional model backed by per-source context tables.

    `source_probs` maps a source key to rows keyed by a context string: the
    last (at most `context_order`) target tokens joined by single spaces, ""
    for the root. Lookup backs off from the longest stored suffix of the
    current prefix down to the root context and finally to `fallback_probs`,
    so it is total for any source and prefix. Raw linear-domain rows are kept
    alongside the compiled log rows so that models round-trip through files
    unchanged; construction is permissive and `validate_model` reports
    normalization or unknown-token problems as data.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        max_len: int,
        context_order: int,
        source_probs: dict[str, dict[str, dict[str, float]]] | None,
        fallback_probs: dict[str, float],
    ):
        super().__init__(vocab, max_len)
        if context_order < 0:
            raise ValueError(f"context_order must be >= 0, got {context_order}")
        self.context_order = context_order
        self.fallback_probs = dict(fallback_probs)
        self.source_probs = {
            src: {ctx: dict(row) for ctx, row in table.items()}
            for src, table in (source_probs or {}).items()
        }
        self._fallback = self._compile_row(self.fallback_probs)
        self._tables: dict[str, dict[tuple[int, ...], np.ndarray]] = {}
        for src, table in self.source_probs.items():
            compiled: dict[tuple[int, ...], np.ndarray] = {}
            for ctx, row in table.items():
                ids = []
                ok = True
                for tok in ctx.split():
                    idx = vocab.index_of(tok)
                    if idx is None:
                        ok = False  # unreachable context; validate_model reports it
                        break
                    ids.append(idx)
                if ok:
                    compiled[tuple(ids)] = self._compile_row(row)
            self._tables[src] = compiled

    def _compile_row(self, probs: dict[str, float]) -> np.ndarray:
        row = np.full(len(self.vocab), -math.inf)
        for tok, p in probs.items():
            idx = self.vocab.index_of(tok)
            if idx is not None and float(p) > 0.0:
                row[idx] = math.log(float(p))
        row.flags.writeable = False
        return row

    def _row(self, source: str, prefix_ids: tuple[int, ...]) -> np.ndarray:
        table = self._tables.get(source)
        if table is not None:
            upto = min(self.context_order, len(prefix_ids))
            for m in range(upto, -1, -1):
                row = table.get(prefix_ids[len(prefix_ids) - m :])
                if row is not None:
                    return row
        return self._fallback


def validate_model(model: TableModel) -> list[str]:
    """Normalization and token problems of every stored row, as messages.

    Empty iff each row sums to 1 within 1e-6, mentions only vocabulary
    tokens, and has no negative probabilities. Context keys must also consist
    of vocabulary tokens.
    """
    violations: list[str] = []

    def check(label: str, probs: dict) -> None:
        unknown, negative, total = _check_row(model.vocab, probs)
        for tok in unknown:
            violations.append(f"{label}: unknown token {tok!r}")
        for tok in negative:
            violations.append(f"{label}: negative probability for {tok!r}")
        if abs(total - 1.0) > ROW_SUM_TOL:
            violations.append(f"{label}: row sums to {total!r}")

    check("fallback", model.fallback_probs)
    for src, table in model.source_probs.items():
        for ctx, row in table.items():
            label = f"source {src!r} context {ctx!r}"
            for tok in ctx.split():
                if tok not in model.vocab:
                    violations.append(f"{label}: unknown context token {tok!r}")
            check(label, row)
    return violations


def _renormalized(probs: dict[str, float], label: str) -> dict[str, float]:
    total = float(sum(float(p) for p in probs.values()))
    if total <= 0.0:
        raise ValueError(f"{label}: cannot renormalize a row with total {total!r}")
    return {tok: float(p) / total for tok, p in probs.items()}


def load_model(path: str | Path, renormalize: bool = False) -> TableModel:
    """Read a model JSON file, validating every row.

    Validation failures abort with a ValueError listing each violation.
    With `renormalize`, rows whose only problem is an off-scale total are
    rescaled to sum to one; unknown tokens and negative probabilities are
    never repaired.
    """
    with open(path, encoding="utf-8") as handle:
        data = json.load(handle)
    for key in ("vocab", "eos", "context_order", "max_len", "fallback"):
        if key not in data:
            raise ValueError(f"{path}: missing required key {key!r}")
    tokens = tuple(str(t) for t in data["vocab"])
    eos = str(data["eos"])
    if eos not in tokens:
        raise ValueError(f"{path}: eos token {eos!r} not present in vocab")
    vocab = Vocabulary(tokens, tokens.index(eos))
    fallback = dict(data["fallback"])
    sources = {
        str(src): {str(ctx): dict(row) for ctx, row in table.items()}
        for src, table in data.get("sources", {}).items()
    }
    model = TableModel(vocab, int(data["max_len"]), int(data["context_order"]), sources, fallback)
    violations = validate_model(model)
    if violations and renormalize:
        hard = [v for v in violations if "row sums to" not in v]
        if hard:
            raise ValueError(f"{path}: model failed validation:\n" + "\n".join(hard))
        fallback = _renormalized(fallback, "fallback")
        sources = {
            src: {ctx: _renormalized(row, f"source {src!r} context {ctx!r}") for ctx, row in table.items()}
            for src, table in sources.items()
        }
        model = TableModel(
            vocab, int(data["max_len"]), int(data["context_order"]), sources, fallback
        )
        violations = validate_model(model)
    if violations:
        raise ValueError(f"{path}: model failed validation:\n" + "\n".join(violations))
    return model


def save_model(model: TableModel, path: str | Path) -> None:
    """Write the model as JSON with linear-domain probabilities."""
    data = {
        "vocab": list(model.vocab.tokens),
        "eos": model.vocab.eos_token,
        "context_order": model.context_order,
        "max_len": model.max_len,
        "fallback": model.fallback_probs,
        "sources": model.source_probs,
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(data, handle, ensure_ascii=False)
        handle.write("\n")


@dataclass(frozen=True)
class SynthSpec:
    """Parameters for one synthetic model family.

    `vocab_size` counts the ordinary tokens; the end-of-sentence token is
    added on top. `alpha` is the symmetric Dirichlet concentration used for
    every row: small values give peaked rows, large values flat ones.
    """

    vocab_size: int
    max_len: int
    context_order: int
    alpha: float
    seed: int
    num_sources: int = 1

    def __post_init__(self) -> None:
        if self.vocab_size < 2:
            raise ValueError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")
        if self.context_order < 0:
            raise ValueError(f"context_order must be >= 0, got {self.context_order}")
        if not self.alpha > 0.0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.num_sources < 1:
            raise ValueError(f"num_sources must be >= 1, got {self.num_sources}")


def _synth_vocab(vocab_size: int) -> Vocabulary:
    return Vocabulary(tuple(f"w{i}" for i in range(vocab_size)) + ("</s>",), vocab_size)


def _seed_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    # one child stream for rows, one for reference sampling, so both are
    # reproducible from the single spec seed independently of call order
    rows_ss, refs_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(rows_ss), np.random.default_rng(refs_ss)


def _dirichlet_row(rng: np.random.Generator, alpha: float, size: int) -> np.ndarray:
    # per-component Gamma(alpha, 1) draws normalized to the simplex; draws are
    # clamped away from exact zero so every row keeps full support
    draws = rng.gamma(alpha, 1.0, size=size)
    draws = np.maximum(draws, np.finfo(float).tiny)
    return draws / draws.sum()


def gen_synthetic(spec: SynthSpec) -> TableModel:
    """Deterministically generate a table model from `spec`.

    Sources are keyed "src0".."srcN-1". For every source, one row is drawn
    per target context of length 0..min(context_order, max_len - 1) over the
    ordinary tokens, in order of context length then token ids. Rows come
    from a symmetric Dirichlet(alpha) over vocab_size + 1 outcomes, sampled
    as normalized per-component Gamma draws from numpy's PCG64 generator
    seeded with `spec.seed`, so equal specs produce bit-identical models.
    """
    vocab = _synth_vocab(spec.vocab_size)
    rng, _ = _seed_streams(spec.seed)
    ordinary = vocab.tokens[: spec.vocab_size]
    ctx_cap = min(spec.context_order, spec.max_len - 1)
    sources: dict[str, dict[str, dict[str, float]]] = {}
    for s in range(spec.num_sources):
        table: dict[str, dict[str, float]] = {}
        for m in range(ctx_cap + 1):
            for ctx in itertools.product(ordinary, repeat=m):
                row = _dirichlet_row(rng, spec.alpha, len(vocab))
                table[" ".join(ctx)] = {tok: float(p) for tok, p in zip(vocab.tokens, row)}
        sources[f"src{s}"] = table
    fallback = {tok: 1.0 / len(vocab) for tok in vocab.tokens}
    return TableModel(vocab, spec.max_len, spec.context_order, sources, fallback)


def _sample_ids(model: TableModel, source: str, rng: np.random.Generator) -> tuple[int, ...]:
    eos = model.vocab.eos_index
    ids: tuple[int, ...] = ()
    while True:
        probs = np.exp(model.row_for(source, ids))
        probs = probs / probs.sum()
        w = int(rng.choice(len(probs), p=probs))
        ids = ids + (w,)
        if w == eos:
            return ids


def synth_dataset(model: TableModel, spec: SynthSpec, refs_per_source: int) -> list[DatasetItem]:
    """Companion dataset for a generated model: references sampled from it.

    One item per source, with the source key as both id and source text.
    References are ancestral samples from the model with the trailing
    end-of-sentence token stripped, drawn from the reference stream of
    `spec.seed`, so equal inputs produce identical datasets.
    """
    if refs_per_source < 0:
        raise ValueError(f"refs_per_source must be >= 0, got {refs_per_source}")
    _, rng = _seed_streams(spec.seed)
    eos = model.vocab.eos_index
    items: list[DatasetItem] = []
    for s in range(spec.num_sources):
        key = f"src{s}"
        refs = []
        for _ in range(refs_per_source):
            ids = _sample_ids(model, key, rng)
            toks = tuple(model.vocab.tokens[i] for i in ids if i != eos)
            refs.append(toks)
        items.append(DatasetItem(item_id=key, source=(key,), references=tuple(refs)))
    return items
