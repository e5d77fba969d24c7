"""Decoders over the finite sequence space of a locally normalized model.

All searches share one total order on scored hypotheses: higher log
probability first, then shorter sequences, then lexicographically smaller
token ids. Because every step multiplies the prefix probability by a factor
of at most one, a prefix score is an upper bound on the score of all of its
completions; the depth-first searches use that bound to prune exactly.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .core import Hypothesis, Sequence, Vocabulary
from .models import ConditionalModel, logprob_sequence

SEED_SCORE_TOL = 1e-9


class SpaceTooLarge(Exception):
    """Exhaustive enumeration was requested for a space beyond its guard rails."""


class InvalidSeed(Exception):
    """A seed hypothesis is incomplete or does not re-score to its logprob."""


def _best_first_key(logprob: float, ids: tuple[int, ...]) -> tuple:
    return (-logprob, len(ids), ids)


def _worst_first_key(logprob: float, ids: tuple[int, ...]) -> tuple:
    # exact reverse of _best_first_key over distinct id tuples
    return (logprob, -len(ids), tuple(-t for t in ids))


def hypothesis_sort_key(hyp: Hypothesis) -> tuple:
    """Sort key realizing the shared total order, best hypothesis first."""
    return _best_first_key(hyp.logprob, hyp.sequence.token_ids)


@dataclass
class SearchBudget:
    """Cap on explored states; searches report rather than raise on exhaustion."""

    max_states: int = 1_000_000

    def __post_init__(self) -> None:
        if self.max_states < 1:
            raise ValueError(f"max_states must be >= 1, got {self.max_states}")


@dataclass
class SearchResult:
    """Outcome of one search run on one source.

    `hypotheses` holds complete sequences sorted best first under the shared
    total order. `explored_states` counts model scoring work as defined by
    each method. `terminated` is False only when the state budget ran out.
    """

    hypotheses: list[Hypothesis]
    explored_states: int
    terminated: bool
    method: str
    settings: dict = field(default_factory=dict)


class NBestState:
    """Bounded queue of the best complete hypotheses seen, plus the prune bound.

    Holds at most `n` entries in a min-heap ordered worst first. When a push
    overflows the queue, the displaced entry's score becomes `gamma`, the
    bound below which no prefix can still contribute. `gamma` never
    decreases. Re-offered sequences (possible only via seeding) are ignored
    so the queue always holds distinct sequences.
    """

    def __init__(self, n: int, on_gamma: Callable[[float], None] | None = None):
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        self.n = n
        self.gamma = -math.inf
        self._heap: list[tuple[tuple, float, tuple[int, ...]]] = []
        self._members: set[tuple[int, ...]] = set()
        self._on_gamma = on_gamma

    def __len__(self) -> int:
        return len(self._heap)

    def offer(self, ids: tuple[int, ...], logprob: float) -> None:
        if ids in self._members:
            return
        heapq.heappush(self._heap, (_worst_first_key(logprob, ids), logprob, ids))
        self._members.add(ids)
        if len(self._heap) > self.n:
            _, displaced_lp, displaced_ids = heapq.heappop(self._heap)
            self._members.discard(displaced_ids)
            self.gamma = displaced_lp
            if self._on_gamma is not None:
                self._on_gamma(displaced_lp)

    def ranked(self) -> list[Hypothesis]:
        entries = sorted(self._heap, key=lambda e: _best_first_key(e[1], e[2]))
        return [Hypothesis(Sequence(ids), lp) for _, lp, ids in entries]


def greedy(model: ConditionalModel, source: str) -> SearchResult:
    """Follow the locally most probable token until end-of-sentence.

    Ties go to the lowest token id. `explored_states` equals the number of
    generated tokens, one scoring call per step.
    """
    eos = model.vocab.eos_index
    ids: tuple[int, ...] = ()
    logprob = 0.0
    explored = 0
    while True:
        row = model.row_for(source, ids)
        explored += 1
        w = int(np.argmax(row))
        logprob += float(row[w])
        ids = ids + (w,)
        if w == eos:
            break
    hyp = Hypothesis(Sequence(ids), logprob)
    return SearchResult([hyp], explored, True, "greedy", {})


def beam(model: ConditionalModel, source: str, beam_size: int) -> SearchResult:
    """Breadth-wise search keeping the `beam_size` best prefixes per step.

    No length normalization is applied. Every live prefix is expanded over
    the full vocabulary; of the pooled candidates the `beam_size` best under
    the total order survive, complete ones leaving the beam for the
    collected pool. The run stops once the beam is empty or every live
    prefix scores strictly below the `beam_size`-th best collected
    hypothesis, which no completion can then overtake. `explored_states`
    counts prefix expansions, one scoring call each.
    """
    if beam_size < 1:
        raise ValueError(f"beam_size must be >= 1, got {beam_size}")
    eos = model.vocab.eos_index
    vocab_size = len(model.vocab)
    live: list[tuple[float, tuple[int, ...]]] = [(0.0, ())]
    collected: list[tuple[float, tuple[int, ...]]] = []
    explored = 0
    while live:
        candidates: list[tuple[float, tuple[int, ...]]] = []
        for lp, ids in live:
            row = model.row_for(source, ids)
            explored += 1
            for w in range(vocab_size):
                child_lp = lp + float(row[w])
                # zero-probability steps can never reach a reportable hypothesis
                if child_lp == -math.inf:
                    continue
                candidates.append((child_lp, ids + (w,)))
        keep = heapq.nsmallest(beam_size, candidates, key=lambda c: _best_first_key(c[0], c[1]))
        live = []
        for lp, ids in keep:
            if ids[-1] == eos:
                collected.append((lp, ids))
            else:
                live.append((lp, ids))
        if live and len(collected) >= beam_size:
            bound = heapq.nsmallest(
                beam_size, collected, key=lambda c: _best_first_key(c[0], c[1])
            )[-1][0]
            if all(lp < bound for lp, _ in live):
                break
    top = heapq.nsmallest(beam_size, collected, key=lambda c: _best_first_key(c[0], c[1]))
    hyps = [Hypothesis(Sequence(ids), lp) for lp, ids in top]
    return SearchResult(hyps, explored, True, "beam", {"beam_size": beam_size})


def _child_order(row: np.ndarray) -> np.ndarray:
    # children best step first, ties toward lower token ids
    return np.argsort(-row, kind="stable")


def dfs(model: ConditionalModel, source: str, budget: SearchBudget | None = None) -> SearchResult:
    """Exact single-best depth-first search with best-score pruning.

    The bound is the score of the best complete hypothesis found so far; a
    prefix is expanded only while its score strictly exceeds the bound, so
    zero-probability continuations are never entered and the first-ranked
    hypothesis under the total order is exact whenever the run terminates.
    `explored_states` counts prefix visits including the empty root and
    complete sequences.
    """
    budget = budget if budget is not None else SearchBudget()
    eos = model.vocab.eos_index
    best: tuple[float, tuple[int, ...]] | None = None
    gamma = -math.inf
    stack: list[tuple[tuple[int, ...], float]] = [((), 0.0)]
    explored = 0
    terminated = True
    while stack:
        ids, lp = stack.pop()
        if ids and lp <= gamma:
            continue
        if explored >= budget.max_states:
            terminated = False
            break
        explored += 1
        if ids and ids[-1] == eos:
            if best is None or _best_first_key(lp, ids) < _best_first_key(best[0], best[1]):
                best = (lp, ids)
            gamma = max(gamma, lp)
            continue
        row = model.row_for(source, ids)
        for w in _child_order(row)[::-1]:
            child_lp = lp + float(row[w])
            if child_lp > gamma:
                stack.append((ids + (int(w),), child_lp))
    hyps = [Hypothesis(Sequence(best[1]), best[0])] if best is not None else []
    return SearchResult(hyps, explored, terminated, "dfs", {"max_states": budget.max_states})


def _validate_seed(model: ConditionalModel, source: str, seed: Hypothesis) -> None:
    if not seed.sequence.is_complete(model.vocab.eos_index):
        raise InvalidSeed(f"seed sequence {seed.sequence.token_ids} is not complete")
    rescored = logprob_sequence(model, source, seed.sequence)
    if rescored == seed.logprob:
        return
    if not abs(rescored - seed.logprob) <= SEED_SCORE_TOL:
        raise InvalidSeed(
            f"seed logprob {seed.logprob!r} does not match re-scored {rescored!r}"
        )


def nbest_dfs(
    model: ConditionalModel,
    source: str,
    n: int,
    budget: SearchBudget | None = None,
    seeds: Iterable[Hypothesis] | None = None,
    on_gamma: Callable[[float], None] | None = None,
) -> SearchResult:
    """Exact n-best depth-first search with displaced-score pruning.

    The n best complete hypotheses found so far live in a bounded queue;
    `gamma`, the score of the hypothesis most recently displaced from it,
    starts at negative infinity and never decreases. A child prefix is
    entered only while its score strictly exceeds `gamma`, so candidates
    scoring exactly `gamma` are cut, which can only affect which member of
    an exact score tie occupies the last queue slot. On termination within
    budget the queue holds exactly the n best positive-probability
    sequences; on exhaustion the partial queue is returned sorted with
    `terminated` False.

    `explored_states` counts every prefix visit including the empty root and
    complete sequences. Optional `seeds` must be valid complete hypotheses
    under the model (else `InvalidSeed`); they pre-fill the queue and can
    only tighten the bound, never change a terminated result. `on_gamma` is
    called with each new bound, mainly for instrumentation.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    budget = budget if budget is not None else SearchBudget()
    eos = model.vocab.eos_index
    queue = NBestState(n, on_gamma=on_gamma)
    seeded = False
    for seed in seeds or ():
        _validate_seed(model, source, seed)
        queue.offer(seed.sequence.token_ids, seed.logprob)
        seeded = True
    stack: list[tuple[tuple[int, ...], float]] = [((), 0.0)]
    explored = 0
    terminated = True
    while stack:
        ids, lp = stack.pop()
        if ids and lp <= queue.gamma:
            continue
        if explored >= budget.max_states:
            terminated = False
            break
        explored += 1
        if ids and ids[-1] == eos:
            queue.offer(ids, lp)
            continue
        row = model.row_for(source, ids)
        gamma = queue.gamma
        for w in _child_order(row)[::-1]:
            child_lp = lp + float(row[w])
            if child_lp > gamma:
                stack.append((ids + (int(w),), child_lp))
    return SearchResult(
        queue.ranked(),
        explored,
        terminated,
        "nbest_dfs",
        {"n": n, "max_states": budget.max_states, "seeded": seeded},
    )


def enumerate_all(model: ConditionalModel, source: str) -> list[Hypothesis]:
    """Every positive-probability complete sequence, scored exactly and sorted.

    Exhaustive oracle for small spaces only: requires at most 6 ordinary
    tokens and max_len at most 8, else `SpaceTooLarge`. Total probability
    over the returned hypotheses sums to one for a normalized model.
    """
    ordinary = len(model.vocab) - 1
    if ordinary > 6 or model.max_len > 8:
        raise SpaceTooLarge(
            f"{ordinary} ordinary tokens at max_len {model.max_len} exceeds the "
            "enumeration guard (6 tokens, max_len 8)"
        )
    eos = model.vocab.eos_index
    vocab_size = len(model.vocab)
    out: list[Hypothesis] = []

    def walk(ids: tuple[int, ...], lp: float) -> None:
        row = model.row_for(source, ids)
        for w in range(vocab_size):
            step = float(row[w])
            if step == -math.inf:
                continue
            if w == eos:
                out.append(Hypothesis(Sequence(ids + (w,)), lp + step))
            else:
                walk(ids + (w,), lp + step)

    walk((), 0.0)
    out.sort(key=hypothesis_sort_key)
    return out


def write_results(
    path: str | Path,
    records: Iterable[tuple[str, SearchResult]],
    vocab: Vocabulary,
) -> None:
    """Write (item id, result) pairs as JSONL, hypotheses decoded best first."""
    with open(path, "w", encoding="utf-8") as handle:
        for item_id, result in records:
            obj = {
                "id": item_id,
                "method": result.method,
                "settings": result.settings,
                "terminated": result.terminated,
                "explored_states": result.explored_states,
                "hypotheses": [
                    {"tokens": vocab.decode(h.sequence), "logprob": h.logprob}
                    for h in result.hypotheses
                ],
            }
            handle.write(json.dumps(obj, ensure_ascii=False) + "\n")
