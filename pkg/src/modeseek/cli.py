"""Command-line driver for the mode-seeking search toolkit.

Subcommands:
  synth        generate a synthetic model plus a companion dataset
  decode       run greedy or beam search over a dataset
  exact        run exact n-best depth-first search over a dataset
  uncertainty  per-item reference uncertainty and length-bucketed stats
  analyze      compare result files: errors, mass, gap, correlate

Example pipeline:
  modeseek synth --out model.json --vocab-size 4 --max-len 5 --alpha 0.5 \
      --seed 1 --num-sources 50 --refs-per-source 4
  modeseek decode --model model.json --dataset model.dataset.jsonl \
      --method greedy --out greedy.jsonl
  modeseek exact --model model.json --dataset model.dataset.jsonl \
      --nbest 10 --out exact.jsonl
  modeseek uncertainty --dataset model.dataset.jsonl --out u.csv
  modeseek analyze errors --approx greedy.jsonl --exact exact.jsonl --out errors.csv

Every subcommand is deterministic: equal inputs and flags produce
byte-identical output files, regardless of --jobs. Exit codes: 0 success,
1 internal error, 2 bad user input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .analysis import (
    IdMismatch,
    UnterminatedExact,
    correlate,
    count_search_errors,
    mass_coverage,
    mass_gap,
    read_results,
    split_terminated,
    write_error_csv,
    write_gap_csv,
    write_mass_csv,
    write_mass_hist_csv,
    write_pairs_csv,
)
from .core import DatasetItem, UnknownToken, load_dataset, write_dataset
from .metrics import (
    AllEmptyReferences,
    DegenerateInput,
    TooFewReferences,
    bucketize,
    read_uncertainty_csv,
    uncertainty_records,
    write_bucket_csv,
    write_uncertainty_csv,
)
from .models import (
    IncompleteSequence,
    PrefixComplete,
    SynthSpec,
    TableModel,
    gen_synthetic,
    load_model,
    save_model,
    synth_dataset,
)
from .search import (
    InvalidSeed,
    SearchBudget,
    SearchResult,
    SpaceTooLarge,
    beam,
    greedy,
    nbest_dfs,
    write_results,
)

log = logging.getLogger("modeseek")

USER_ERRORS = (
    OSError,
    ValueError,
    UnknownToken,
    PrefixComplete,
    IncompleteSequence,
    SpaceTooLarge,
    InvalidSeed,
    TooFewReferences,
    AllEmptyReferences,
    DegenerateInput,
    IdMismatch,
    UnterminatedExact,
)

_WORKER: dict = {}


def _init_worker(model: TableModel, kind: str, params: dict) -> None:
    _WORKER["model"] = model
    _WORKER["kind"] = kind
    _WORKER["params"] = params


def _search_item(item: DatasetItem) -> tuple[str, SearchResult]:
    return _run_search(_WORKER["model"], _WORKER["kind"], _WORKER["params"], item)


def _run_search(
    model: TableModel, kind: str, params: dict, item: DatasetItem
) -> tuple[str, SearchResult]:
    source = item.source_text
    if kind == "greedy":
        return item.item_id, greedy(model, source)
    if kind == "beam":
        return item.item_id, beam(model, source, params["beam_size"])
    if kind == "exact":
        seeds = None
        if params["seam"] > 0:
            seeds = beam(model, source, params["seam"]).hypotheses
        budget = SearchBudget(params["max_states"])
        return item.item_id, nbest_dfs(model, source, params["n"], budget, seeds)
    raise ValueError(f"unknown search kind {kind!r}")


def _map_items(
    model: TableModel, kind: str, params: dict, items: list[DatasetItem], jobs: int
) -> list[tuple[str, SearchResult]]:
    """Run one search per item, preserving dataset order regardless of jobs."""
    if jobs <= 1:
        return [_run_search(model, kind, params, item) for item in items]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(
        max_workers=jobs, initializer=_init_worker, initargs=(model, kind, params)
    ) as pool:
        return list(pool.map(_search_item, items, chunksize=max(1, len(items) // (jobs * 4) or 1)))


def cmd_synth(args: argparse.Namespace) -> int:
    start = time.perf_counter()
    spec = SynthSpec(
        vocab_size=args.vocab_size,
        max_len=args.max_len,
        context_order=args.context_order,
        alpha=args.alpha,
        seed=args.seed,
        num_sources=args.num_sources,
    )
    model = gen_synthetic(spec)
    items = synth_dataset(model, spec, args.refs_per_source)
    out = Path(args.out)
    save_model(model, out)
    dataset_path = out.with_suffix(".dataset.jsonl")
    write_dataset(dataset_path, items)
    log.info("model written to %s, dataset to %s", out, dataset_path)
    print(
        f"synth: {spec.num_sources} sources, vocab {spec.vocab_size}+eos, "
        f"alpha {spec.alpha}, wrote {out} and {dataset_path}, "
        f"{time.perf_counter() - start:.2f}s"
    )
    return 0


def cmd_decode(args: argparse.Namespace) -> int:
    start = time.perf_counter()
    model = load_model(args.model, renormalize=args.renormalize)
    items = load_dataset(args.dataset)
    if args.method == "beam":
        kind, params = "beam", {"beam_size": args.beam_size}
    else:
        kind, params = "greedy", {}
    records = _map_items(model, kind, params, items, args.jobs)
    write_results(args.out, records, model.vocab)
    print(
        f"decode: {len(items)} items, method={args.method}, "
        f"wrote {args.out}, {time.perf_counter() - start:.2f}s"
    )
    return 0


def cmd_exact(args: argparse.Namespace) -> int:
    start = time.perf_counter()
    model = load_model(args.model, renormalize=args.renormalize)
    items = load_dataset(args.dataset)
    params = {"n": args.nbest, "max_states": args.max_states, "seam": args.seed_with_beam}
    records = _map_items(model, "exact", params, items, args.jobs)
    write_results(args.out, records, model.vocab)
    unterminated = sum(1 for _, res in records if not res.terminated)
    print(
        f"exact: {len(items)} items, n={args.nbest}, {unterminated} hit the "
        f"state budget, wrote {args.out}, {time.perf_counter() - start:.2f}s"
    )
    return 0


def cmd_uncertainty(args: argparse.Namespace) -> int:
    start = time.perf_counter()
    items = load_dataset(args.dataset)
    records, skipped = uncertainty_records(items)
    for item_id in skipped:
        log.warning("skipping %s: needs at least 2 non-empty references", item_id)
    boundaries = [float(b) for b in args.buckets.split(",")]
    stats = bucketize([(rec.avg_ref_len, rec.u) for rec in records], boundaries)
    out = Path(args.out)
    write_uncertainty_csv(out, records)
    buckets_path = out.with_suffix(".buckets.csv")
    write_bucket_csv(buckets_path, stats)
    print(
        f"uncertainty: {len(records)} items, {len(skipped)} skipped, "
        f"wrote {out} and {buckets_path}, {time.perf_counter() - start:.2f}s"
    )
    return 0


def _filtered_pair(approx_path: str, exact_path: str):
    """Aligned (approx, exact) rows with budget-hit exact items dropped."""
    approx = read_results(approx_path)
    exact = read_results(exact_path)
    kept_exact, dropped = split_terminated(exact)
    dropped_set = set(dropped)
    kept_approx = [r for r in approx if r.item_id not in dropped_set]
    return kept_approx, kept_exact, dropped


def cmd_analyze(args: argparse.Namespace) -> int:
    start = time.perf_counter()
    out = Path(args.out)
    if args.mode == "errors":
        approx, exact, dropped = _filtered_pair(args.approx, args.exact)
        report = count_search_errors(approx, exact)
        write_error_csv(out, report)
        print(
            f"analyze errors: {report.total_items} items, {len(dropped)} excluded "
            f"for hitting the budget, {report.search_errors} errors "
            f"(rate {report.error_rate:.4f}), wrote {out}, "
            f"{time.perf_counter() - start:.2f}s"
        )
        return 0
    if args.mode == "mass":
        results = read_results(args.results)
        report = mass_coverage(results, args.nbest)
        write_mass_csv(out, report)
        hist_path = out.with_suffix(".hist.csv")
        write_mass_hist_csv(hist_path, report)
        print(
            f"analyze mass: {len(report.per_item)} items, n={args.nbest}, "
            f"mean mass {report.mean_mass:.6f}, wrote {out} and {hist_path}, "
            f"{time.perf_counter() - start:.2f}s"
        )
        return 0
    if args.mode == "gap":
        approx, exact, dropped = _filtered_pair(args.approx, args.exact)
        report = mass_gap(approx, exact, args.nbest)
        write_gap_csv(out, report)
        print(
            f"analyze gap: {len(report.per_item)} items, {len(dropped)} excluded "
            f"for hitting the budget, n={args.nbest}, mean gap {report.mean_gap:.6f}, "
            f"wrote {out}, {time.perf_counter() - start:.2f}s"
        )
        return 0
    if args.mode == "correlate":
        u_records = read_uncertainty_csv(args.uncertainty)
        if args.which == "errors":
            approx, exact, _ = _filtered_pair(args.approx, args.exact)
            error_report = count_search_errors(approx, exact)
            values = [(it.item_id, float(it.is_error)) for it in error_report.per_item]
        elif args.which == "states":
            values = [(r.item_id, float(r.explored_states)) for r in read_results(args.results)]
        else:
            mass_report = mass_coverage(read_results(args.results), args.nbest)
            values = [(it.item_id, it.cumulative_mass) for it in mass_report.per_item]
        report = correlate(u_records, values, args.which)
        write_pairs_csv(out, report)
        print(
            f"analyze correlate: which={args.which}, {len(report.pairs)} pairs, "
            f"rho {report.rho:.4f}, wrote {out}, {time.perf_counter() - start:.2f}s"
        )
        return 0
    raise ValueError(f"unknown analyze mode {args.mode!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modeseek",
        description="Exact and approximate mode-seeking search over finite sequence models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic model and dataset")
    p_synth.add_argument("--out", required=True, help="model JSON path; the dataset lands beside it")
    p_synth.add_argument("--vocab-size", type=int, default=5)
    p_synth.add_argument("--max-len", type=int, default=6)
    p_synth.add_argument("--context-order", type=int, default=1)
    p_synth.add_argument("--alpha", type=float, default=1.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--num-sources", type=int, default=100)
    p_synth.add_argument("--refs-per-source", type=int, default=4)
    p_synth.set_defaults(func=cmd_synth)

    p_decode = sub.add_parser("decode", help="greedy or beam search over a dataset")
    p_decode.add_argument("--model", required=True)
    p_decode.add_argument("--dataset", required=True)
    p_decode.add_argument("--out", required=True)
    p_decode.add_argument("--method", choices=("greedy", "beam"), default="greedy")
    p_decode.add_argument("--beam-size", type=int, default=1)
    p_decode.add_argument("--renormalize", action="store_true")
    p_decode.add_argument("--jobs", type=int, default=1)
    p_decode.set_defaults(func=cmd_decode)

    p_exact = sub.add_parser("exact", help="exact n-best search over a dataset")
    p_exact.add_argument("--model", required=True)
    p_exact.add_argument("--dataset", required=True)
    p_exact.add_argument("--out", required=True)
    p_exact.add_argument("--nbest", type=int, default=1)
    p_exact.add_argument("--max-states", type=int, default=1_000_000)
    p_exact.add_argument(
        "--seed-with-beam",
        type=int,
        default=0,
        metavar="B",
        help="pre-fill the queue with beam search of this size (0 disables)",
    )
    p_exact.add_argument("--renormalize", action="store_true")
    p_exact.add_argument("--jobs", type=int, default=1)
    p_exact.set_defaults(func=cmd_exact)

    p_unc = sub.add_parser("uncertainty", help="reference uncertainty per item")
    p_unc.add_argument("--dataset", required=True)
    p_unc.add_argument("--out", required=True, help="per-item CSV; buckets land beside it")
    p_unc.add_argument("--buckets", default="10,20,30,40", help="comma-separated length boundaries")
    p_unc.set_defaults(func=cmd_uncertainty)

    p_an = sub.add_parser("analyze", help="compare result files")
    an_sub = p_an.add_subparsers(dest="mode", required=True)

    an_errors = an_sub.add_parser("errors", help="approximate vs exact top-1")
    an_errors.add_argument("--approx", required=True)
    an_errors.add_argument("--exact", required=True)
    an_errors.add_argument("--out", required=True)
    an_errors.set_defaults(func=cmd_analyze)

    an_mass = an_sub.add_parser("mass", help="cumulative top-n probability mass")
    an_mass.add_argument("--results", required=True)
    an_mass.add_argument("--nbest", type=int, default=1)
    an_mass.add_argument("--out", required=True)
    an_mass.set_defaults(func=cmd_analyze)

    an_gap = an_sub.add_parser("gap", help="exact minus approximate mass")
    an_gap.add_argument("--approx", required=True)
    an_gap.add_argument("--exact", required=True)
    an_gap.add_argument("--nbest", type=int, default=1)
    an_gap.add_argument("--out", required=True)
    an_gap.set_defaults(func=cmd_analyze)

    an_corr = an_sub.add_parser("correlate", help="uncertainty vs a search quantity")
    an_corr.add_argument("--uncertainty", required=True)
    an_corr.add_argument("--which", choices=("errors", "states", "mass"), required=True)
    an_corr.add_argument("--approx", help="approximate results (which=errors)")
    an_corr.add_argument("--exact", help="exact results (which=errors)")
    an_corr.add_argument("--results", help="results file (which=states or mass)")
    an_corr.add_argument("--nbest", type=int, default=1)
    an_corr.add_argument("--out", required=True)
    an_corr.set_defaults(func=cmd_analyze)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "analyze" and args.mode == "correlate":
        if args.which == "errors" and not (args.approx and args.exact):
            parser.error("--which errors requires --approx and --exact")
        if args.which in ("states", "mass") and not args.results:
            parser.error(f"--which {args.which} requires --results")
    try:
        return args.func(args)
    except USER_ERRORS as exc:
        log.error("%s", exc)
        return 2
    except Exception:
        log.exception("internal error")
        return 1


if __name__ == "__main__":
    sys.exit(main())
