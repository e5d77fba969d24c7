"""Comparisons between search runs: errors, probability mass, correlations."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence as Seq

from .core import Vocabulary
from .metrics import DegenerateInput, UncertaintyRecord, spearman_rho
from .search import SearchResult

MASS_BANDS = 10


class IdMismatch(Exception):
    """Two result lists do not cover the same item ids in the same order."""


class UnterminatedExact(Exception):
    """An exact-search result that hit its budget was passed where exactness is required."""


@dataclass(frozen=True)
class ItemResult:
    """One decoded result row: what a search produced for one item.

    Hypotheses are (token tuple, logprob) pairs ordered best first, exactly
    as the producing search ranked them.
    """

    item_id: str
    method: str
    terminated: bool
    explored_states: int
    hypotheses: tuple[tuple[tuple[str, ...], float], ...]

    @classmethod
    def from_search(cls, item_id: str, result: SearchResult, vocab: Vocabulary) -> "ItemResult":
        return cls(
            item_id=item_id,
            method=result.method,
            terminated=result.terminated,
            explored_states=result.explored_states,
            hypotheses=tuple(
                (tuple(vocab.decode(h.sequence)), h.logprob) for h in result.hypotheses
            ),
        )


def read_results(path: str | Path) -> list[ItemResult]:
    """Read a results JSONL file, trusting its stored hypothesis order."""
    rows: list[ItemResult] = []
    path = Path(path)
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
            try:
                rows.append(
                    ItemResult(
                        item_id=str(obj["id"]),
                        method=str(obj["method"]),
                        terminated=bool(obj["terminated"]),
                        explored_states=int(obj["explored_states"]),
                        hypotheses=tuple(
                            (tuple(h["tokens"]), float(h["logprob"])) for h in obj["hypotheses"]
                        ),
                    )
                )
            except (KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: missing or malformed field ({exc})") from exc
    return rows


def split_terminated(results: Iterable[ItemResult]) -> tuple[list[ItemResult], list[str]]:
    """Partition results into terminated rows and the ids that hit budget."""
    kept: list[ItemResult] = []
    dropped: list[str] = []
    for res in results:
        if res.terminated:
            kept.append(res)
        else:
            dropped.append(res.item_id)
    return kept, dropped


def _check_aligned(approx: Seq[ItemResult], exact: Seq[ItemResult]) -> None:
    if len(approx) != len(exact):
        raise IdMismatch(f"result lists differ in length: {len(approx)} vs {len(exact)}")
    for a, e in zip(approx, exact):
        if a.item_id != e.item_id:
            raise IdMismatch(f"id mismatch at {a.item_id!r} vs {e.item_id!r}")


def _top1(result: ItemResult) -> tuple[tuple[str, ...], float]:
    if not result.hypotheses:
        raise ValueError(f"result for {result.item_id!r} has no hypotheses")
    return result.hypotheses[0]


@dataclass(frozen=True)
class ErrorItem:
    item_id: str
    is_error: bool
    approx_logprob: float
    exact_logprob: float


@dataclass
class ErrorReport:
    total_items: int
    search_errors: int
    error_rate: float
    per_item: list[ErrorItem]


def count_search_errors(approx: Seq[ItemResult], exact: Seq[ItemResult]) -> ErrorReport:
    """Count items whose approximate top hypothesis differs from the exact mode.

    Inputs must cover the same ids in the same order and the exact results
    must all have terminated. An item is an error iff the top-ranked
    sequences differ; matching sequences always carry matching scores, and an
    approximate score above the exact one signals inconsistent inputs.
    """
    if not approx:
        raise ValueError("no results to compare")
    _check_aligned(approx, exact)
    per_item: list[ErrorItem] = []
    errors = 0
    for a, e in zip(approx, exact):
        if not e.terminated:
            raise UnterminatedExact(f"exact result for {e.item_id!r} hit its budget")
        a_tokens, a_lp = _top1(a)
        e_tokens, e_lp = _top1(e)
        if a_lp > e_lp + 1e-12:
            raise ValueError(
                f"approximate logprob {a_lp!r} exceeds exact {e_lp!r} for {a.item_id!r}; "
                "results do not come from the same model"
            )
        is_error = a_tokens != e_tokens
        errors += is_error
        per_item.append(ErrorItem(a.item_id, is_error, a_lp, e_lp))
    total = len(per_item)
    return ErrorReport(total, errors, errors / total if total else 0.0, per_item)


@dataclass(frozen=True)
class MassItem:
    item_id: str
    n_used: int
    cumulative_mass: float


@dataclass
class MassReport:
    per_item: list[MassItem]
    mean_mass: float
    mass_histogram: list[int]


def _mass(result: ItemResult, n: int) -> tuple[int, float]:
    if not result.hypotheses:
        raise ValueError(f"result for {result.item_id!r} has no hypotheses")
    used = min(n, len(result.hypotheses))
    return used, sum(math.exp(lp) for _, lp in result.hypotheses[:used])


def mass_coverage(results: Seq[ItemResult], n: int) -> MassReport:
    """Cumulative linear-domain probability of each item's top n hypotheses.

    Uses min(n, available) hypotheses per item. The histogram counts items
    in ten equal mass bands [0.0, 0.1) .. [0.9, 1.0].
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not results:
        raise ValueError("no results to aggregate")
    per_item: list[MassItem] = []
    histogram = [0] * MASS_BANDS
    for res in results:
        used, mass = _mass(res, n)
        per_item.append(MassItem(res.item_id, used, mass))
        histogram[min(int(mass * MASS_BANDS), MASS_BANDS - 1)] += 1
    mean = sum(it.cumulative_mass for it in per_item) / len(per_item)
    return MassReport(per_item, mean, histogram)


@dataclass(frozen=True)
class GapItem:
    item_id: str
    approx_mass: float
    exact_mass: float
    gap: float


@dataclass
class GapReport:
    per_item: list[GapItem]
    mean_gap: float


def mass_gap(approx: Seq[ItemResult], exact: Seq[ItemResult], n: int) -> GapReport:
    """Per-item exact-minus-approximate cumulative mass over the top n.

    Exact results must all have terminated. Gaps below -1e-12 mean the
    inputs cannot describe the same model and raise ValueError.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not approx:
        raise ValueError("no results to compare")
    _check_aligned(approx, exact)
    per_item: list[GapItem] = []
    for a, e in zip(approx, exact):
        if not e.terminated:
            raise UnterminatedExact(f"exact result for {e.item_id!r} hit its budget")
        _, a_mass = _mass(a, n)
        _, e_mass = _mass(e, n)
        gap = e_mass - a_mass
        if gap < -1e-12:
            raise ValueError(
                f"exact mass {e_mass!r} below approximate {a_mass!r} for {a.item_id!r}; "
                "results do not come from the same model"
            )
        per_item.append(GapItem(a.item_id, a_mass, e_mass, gap))
    mean = sum(it.gap for it in per_item) / len(per_item) if per_item else 0.0
    return GapReport(per_item, mean)


@dataclass(frozen=True)
class CorrelationPair:
    item_id: str
    u: float
    value: float


@dataclass
class CorrelationReport:
    which: str
    rho: float
    pairs: list[CorrelationPair]


def correlate(
    u_records: Seq[UncertaintyRecord],
    values: Iterable[tuple[str, float]],
    which: str,
) -> CorrelationReport:
    """Spearman correlation between per-item uncertainty and a search quantity.

    `values` is joined to `u_records` by item id; unmatched ids on either
    side are dropped. `which` labels the quantity (errors, states, or mass)
    in the report. DegenerateInput propagates from the rank correlation.
    """
    if which not in ("errors", "states", "mass"):
        raise ValueError(f"which must be one of errors, states, mass; got {which!r}")
    by_id = dict(values)
    pairs = [
        CorrelationPair(rec.item_id, rec.u, float(by_id[rec.item_id]))
        for rec in u_records
        if rec.item_id in by_id
    ]
    if len(pairs) < 2:
        raise DegenerateInput(f"only {len(pairs)} matched items; need at least 2")
    rho = spearman_rho([p.u for p in pairs], [p.value for p in pairs])
    return CorrelationReport(which, rho, pairs)


def write_error_csv(path: str | Path, report: ErrorReport) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["item_id", "is_error", "approx_logprob", "exact_logprob"])
        for item in report.per_item:
            writer.writerow([item.item_id, int(item.is_error), item.approx_logprob, item.exact_logprob])


def write_mass_csv(path: str | Path, report: MassReport) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["item_id", "n_used", "cumulative_mass"])
        for item in report.per_item:
            writer.writerow([item.item_id, item.n_used, item.cumulative_mass])


def write_mass_hist_csv(path: str | Path, report: MassReport) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["band_lo", "band_hi", "count"])
        for i, count in enumerate(report.mass_histogram):
            writer.writerow([i / MASS_BANDS, (i + 1) / MASS_BANDS, count])


def write_gap_csv(path: str | Path, report: GapReport) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["item_id", "approx_mass", "exact_mass", "gap"])
        for item in report.per_item:
            writer.writerow([item.item_id, item.approx_mass, item.exact_mass, item.gap])


def write_pairs_csv(path: str | Path, report: CorrelationReport) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["item_id", "u", report.which])
        for pair in report.pairs:
            writer.writerow([pair.item_id, pair.u, pair.value])
