"""Reference-set uncertainty and the small statistics used to analyze it."""

from __future__ import annotations

import csv
import math
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence as Seq

from .core import DatasetItem


class TooFewReferences(Exception):
    """Uncertainty needs at least two references."""


class AllEmptyReferences(Exception):
    """Uncertainty is undefined when every reference is empty."""


class DegenerateInput(Exception):
    """Rank correlation is undefined for constant or too-short inputs."""


def levenshtein(a: Seq, b: Seq) -> int:
    """Token-level edit distance: unit-cost insert, delete, substitute."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, tok_a in enumerate(a, start=1):
        current = [i]
        for j, tok_b in enumerate(b, start=1):
            cost = 0 if tok_a == tok_b else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def uncertainty_u(references: Seq[Seq[str]]) -> float:
    """Length-normalized mean pairwise edit distance over a reference set.

    With n references y_1..y_n this is
    2 / ((n - 1) * sum(len(y_i))) * sum over i < j of levenshtein(y_i, y_j),
    zero exactly when all references are identical.
    """
    refs = [list(r) for r in references]
    n = len(refs)
    if n < 2:
        raise TooFewReferences(f"need at least 2 references, got {n}")
    total_len = sum(len(r) for r in refs)
    if total_len == 0:
        raise AllEmptyReferences("all references are empty")
    pair_sum = 0
    for i in range(n):
        for j in range(i + 1, n):
            pair_sum += levenshtein(refs[i], refs[j])
    return 2.0 * pair_sum / ((n - 1) * total_len)


@dataclass(frozen=True)
class UncertaintyRecord:
    """Per-item uncertainty with the reference statistics used to bucket it."""

    item_id: str
    n_refs: int
    avg_ref_len: float
    u: float


def uncertainty_records(
    items: Iterable[DatasetItem],
) -> tuple[list[UncertaintyRecord], list[str]]:
    """Uncertainty for every item that supports it.

    Items with fewer than two references, or with only empty references, are
    skipped and reported in the second return value instead of failing the
    whole batch.
    """
    records: list[UncertaintyRecord] = []
    skipped: list[str] = []
    for item in items:
        try:
            u = uncertainty_u(item.references)
        except (TooFewReferences, AllEmptyReferences):
            skipped.append(item.item_id)
            continue
        total_len = sum(len(r) for r in item.references)
        records.append(
            UncertaintyRecord(
                item_id=item.item_id,
                n_refs=len(item.references),
                avg_ref_len=total_len / len(item.references),
                u=u,
            )
        )
    return records, skipped


@dataclass(frozen=True)
class BucketStat:
    """Aggregate of values whose length fell in [lo, hi)."""

    lo: float
    hi: float
    count: int
    mean: float
    sem: float


def bucketize(
    values: Iterable[tuple[float, float]],
    boundaries: Seq[float],
) -> list[BucketStat]:
    """Group (length, value) pairs into half-open length buckets.

    Boundaries b1 < b2 < ... define buckets [0, b1), [b1, b2), ...,
    [b_last, inf). Every bucket is emitted even when empty (count 0, nan
    stats). `sem` is the sample standard deviation (n - 1 denominator)
    divided by sqrt(count), 0.0 for singleton buckets.
    """
    bounds = [float(b) for b in boundaries]
    if not bounds:
        raise ValueError("at least one bucket boundary is required")
    if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
        raise ValueError(f"boundaries must be strictly increasing, got {bounds}")
    if bounds[0] <= 0:
        raise ValueError(f"boundaries must be positive, got {bounds}")
    grouped: list[list[float]] = [[] for _ in range(len(bounds) + 1)]
    for length, value in values:
        if length < 0:
            raise ValueError(f"negative length {length!r}")
        grouped[bisect_right(bounds, length)].append(float(value))
    edges = [0.0] + bounds + [math.inf]
    stats = []
    for i, group in enumerate(grouped):
        count = len(group)
        if count == 0:
            mean = sem = math.nan
        else:
            mean = sum(group) / count
            if count == 1:
                sem = 0.0
            else:
                var = sum((v - mean) ** 2 for v in group) / (count - 1)
                sem = math.sqrt(var) / math.sqrt(count)
        stats.append(BucketStat(edges[i], edges[i + 1], count, mean, sem))
    return stats


def _midranks(values: Seq[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        midrank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = midrank
        i = j + 1
    return ranks


def spearman_rho(x: Seq[float], y: Seq[float]) -> float:
    """Spearman rank correlation with average ranks for ties.

    Raises DegenerateInput when either vector is constant or shorter than
    two; raises ValueError on length mismatch.
    """
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise DegenerateInput(f"need at least 2 observations, got {len(x)}")
    if all(v == x[0] for v in x) or all(v == y[0] for v in y):
        raise DegenerateInput("constant input has no rank ordering")
    rx = _midranks(x)
    ry = _midranks(y)
    mx = sum(rx) / len(rx)
    my = sum(ry) / len(ry)
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = math.sqrt(sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry))
    if den == 0.0:
        raise DegenerateInput("zero rank variance")
    return num / den


def write_uncertainty_csv(path: str | Path, records: Iterable[UncertaintyRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["item_id", "n_refs", "avg_ref_len", "u"])
        for rec in records:
            writer.writerow([rec.item_id, rec.n_refs, rec.avg_ref_len, rec.u])


def read_uncertainty_csv(path: str | Path) -> list[UncertaintyRecord]:
    records = []
    with open(path, encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            records.append(
                UncertaintyRecord(
                    item_id=row["item_id"],
                    n_refs=int(row["n_refs"]),
                    avg_ref_len=float(row["avg_ref_len"]),
                    u=float(row["u"]),
                )
            )
    return records


def write_bucket_csv(path: str | Path, stats: Iterable[BucketStat]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["bucket_lo", "bucket_hi", "count", "mean", "sem"])
        for stat in stats:
            writer.writerow([stat.lo, stat.hi, stat.count, stat.mean, stat.sem])
