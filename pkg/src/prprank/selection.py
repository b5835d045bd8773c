"""
Selection strategies that turn pairwise outcomes into a reranked list.

Sliding-window passes are sequential: every comparison depends on the swap
before it. Tournament rounds and all-pair batches are sets of independent
comparisons; they may run on a thread pool, and results are always collected
in bracket order so the output matches a sequential run.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

from prprank.base import (
    ComparatorError,
    DegradedSelectionWarning,
    IssueAction,
    SelectionError,
    handle_issue,
)
from prprank.comparator import (
    ComparisonRecord,
    OrderPolicy,
    PairResolution,
    PairResult,
    PairwiseComparator,
)
from prprank.core import Candidate, Provenance, Query, RankedList
from prprank.utils import setup_logger

_logger = setup_logger(__name__)


class SelectionStrategy(str, Enum):
    SLIDING_WINDOW = "sliding_window"
    TOURNAMENT = "tournament"
    ALL_PAIR = "all_pair"
    NONE = "none"


class StopReason(str, Enum):
    COMPLETE = "complete"
    BUDGET = "budget"
    ERROR = "error"


@dataclass
class SelectionConfig:
    """Which strategy settles how many positions, and under which slot policy."""

    strategy: SelectionStrategy = field(
        default=SelectionStrategy.SLIDING_WINDOW,
        metadata={"description": "sliding_window, tournament, all_pair or none (retriever order)"},
    )
    goal_m: int = field(
        default=1, metadata={"description": "Number of leading positions to settle"}
    )
    order_policy: OrderPolicy = field(
        default=OrderPolicy.LOWER_RANK_FIRST,
        metadata={"description": "lower_rank_first, as_given or both_directions"},
    )
    max_comparisons: Optional[int] = field(
        default=None,
        metadata={"description": "Per-query cap on pair comparisons (unlimited when unset)"},
    )
    round_workers: int = field(
        default=1,
        metadata={"description": "Threads for independent comparisons within a round"},
    )
    degraded_action: IssueAction = field(
        default=IssueAction.LOG,
        metadata={"description": "warn, log or raise when the budget stops a strategy"},
    )

    def __post_init__(self):
        self.strategy = SelectionStrategy(self.strategy)
        self.order_policy = OrderPolicy(self.order_policy)
        self.degraded_action = IssueAction(self.degraded_action)
        if self.goal_m < 1:
            raise ValueError(f"goal_m must be >= 1, got {self.goal_m}")
        if self.max_comparisons is not None and self.max_comparisons < 0:
            raise ValueError("max_comparisons must be >= 0")
        if self.round_workers < 1:
            raise ValueError("round_workers must be >= 1")


@dataclass
class SelectionTrace:
    """What a strategy did for one query.

    ``comparisons_used`` counts pairs; ``records`` holds every backend call,
    so both_directions logs two records per pair.
    """

    comparisons_used: int = 0
    swaps: int = 0
    round_sizes: List[int] = field(default_factory=list)
    records: List[ComparisonRecord] = field(default_factory=list)
    sequential: bool = True
    stop_reason: StopReason = StopReason.COMPLETE
    error: Optional[str] = None
    failure: Optional[BaseException] = field(default=None, repr=False, compare=False)

    @property
    def rounds(self) -> int:
        return len(self.round_sizes)

    @property
    def backend_calls(self) -> int:
        return len(self.records)

    @property
    def degraded(self) -> bool:
        return self.stop_reason != StopReason.COMPLETE

    def add(self, result: PairResult) -> None:
        self.comparisons_used += 1
        self.records.extend(result.records)

    def fail(self, error: BaseException, *others: BaseException) -> None:
        """Stop on ``error``; calls made for any of the failed pairs stay on the record."""
        for failed in (error, *others):
            self.records.extend(getattr(failed, "partial_records", ()))
        self.stop_reason = StopReason.ERROR
        self.error = str(error)
        self.failure = error

    def summary(self) -> Dict[str, Any]:
        return {
            "comparisons_used": self.comparisons_used,
            "backend_calls": self.backend_calls,
            "swaps": self.swaps,
            "rounds": self.rounds,
            "round_sizes": list(self.round_sizes),
            "sequential": self.sequential,
            "stop_reason": self.stop_reason.value,
            "error": self.error,
        }


def _remaining(trace: SelectionTrace, budget: Optional[int]) -> Optional[int]:
    if budget is None:
        return None
    return max(0, budget - trace.comparisons_used)


def _compare_all(
    pairs: Sequence[Tuple[Candidate, Candidate]],
    query: Query,
    comparator: PairwiseComparator,
    workers: int,
) -> Tuple[List[PairResult], List[ComparatorError]]:
    """Run independent pairs, returning successes and failures in pair order.

    Sequential execution stops at the first failure; a pool lets the whole round
    finish, so every call it made is returned.
    """

    def attempt(pair: Tuple[Candidate, Candidate]):
        try:
            return comparator.compare(query, *pair)
        except ComparatorError as e:
            return e

    if workers <= 1 or len(pairs) <= 1:
        outcomes = []
        for pair in pairs:
            outcomes.append(attempt(pair))
            if isinstance(outcomes[-1], ComparatorError):
                break
    else:
        with ThreadPoolExecutor(max_workers=min(workers, len(pairs))) as pool:
            outcomes = list(pool.map(attempt, pairs))

    results = [o for o in outcomes if isinstance(o, PairResult)]
    errors = [o for o in outcomes if isinstance(o, ComparatorError)]
    return results, errors


def _reranked(ranked: RankedList, candidates: Sequence[Candidate]) -> RankedList:
    return ranked.with_candidates(candidates, Provenance.RERANKED)


def sliding_window_top_m(
    ranked: RankedList,
    query: Query,
    comparator: PairwiseComparator,
    m: int,
    *,
    max_comparisons: Optional[int] = None,
    logger: Optional[logging.Logger] = _logger,
) -> Tuple[RankedList, SelectionTrace]:
    """m backward-to-front bubble passes; pass j leaves positions 1..j settled.

    Uses exactly sum(n - j for j in 1..m) comparisons when not stopped early.
    """
    n = len(ranked)
    if not 1 <= m <= max(n, 1):
        raise SelectionError(f"goal m={m} must be between 1 and the list length {n}")
    items = list(ranked.candidates)
    trace = SelectionTrace(sequential=True)

    for settled in range(m):
        pass_size = 0
        for i in range(n - 1, settled, -1):
            if _remaining(trace, max_comparisons) == 0:
                trace.stop_reason = StopReason.BUDGET
                break
            upper, lower = items[i - 1], items[i]
            try:
                result = comparator.compare(query, upper, lower)
            except ComparatorError as e:
                trace.fail(e)
                break
            trace.add(result)
            pass_size += 1
            if result.winner.doc_id == lower.doc_id:
                items[i - 1], items[i] = lower, upper
                trace.swaps += 1
        if pass_size:
            trace.round_sizes.append(pass_size)
        if trace.degraded:
            break

    logger.debug(
        f"Sliding window on {ranked.query_id}: {trace.comparisons_used} comparisons, "
        f"{trace.swaps} swaps, stop={trace.stop_reason.value}"
    )
    return _reranked(ranked, items), trace


def sliding_window_pass(
    ranked: RankedList,
    query: Query,
    comparator: PairwiseComparator,
    *,
    max_comparisons: Optional[int] = None,
) -> Tuple[RankedList, SelectionTrace]:
    """One bubble pass carrying the best candidate to position 1 in n-1 comparisons."""
    if len(ranked) == 0:
        raise SelectionError("cannot select from an empty list")
    return sliding_window_top_m(ranked, query, comparator, 1, max_comparisons=max_comparisons)


def _knockout(
    participants: List[Candidate],
    query: Query,
    comparator: PairwiseComparator,
    trace: SelectionTrace,
    max_comparisons: Optional[int],
    workers: int,
) -> Candidate:
    """Play rounds until one participant is left; an odd last participant gets a bye."""
    while len(participants) > 1:
        pairs = [
            (participants[i], participants[i + 1])
            for i in range(0, len(participants) - 1, 2)
        ]
        bye = participants[-1] if len(participants) % 2 else None

        remaining = _remaining(trace, max_comparisons)
        playable = pairs if remaining is None else pairs[:remaining]
        if not playable:
            trace.stop_reason = StopReason.BUDGET
            return participants[0]
        results, errors = _compare_all(playable, query, comparator, workers)
        for result in results:
            trace.add(result)
        if results:
            trace.round_sizes.append(len(results))
        if errors:
            trace.fail(*errors)
            return participants[0]

        survivors = [result.winner for result in results]
        for first, second in pairs[len(playable):]:
            survivors.extend((first, second))
        if bye is not None:
            survivors.append(bye)
        participants = survivors
        if len(playable) < len(pairs):
            trace.stop_reason = StopReason.BUDGET
            return participants[0]
    return participants[0]


def tournament_top_m(
    ranked: RankedList,
    query: Query,
    comparator: PairwiseComparator,
    m: int = 1,
    *,
    max_comparisons: Optional[int] = None,
    workers: int = 1,
    logger: Optional[logging.Logger] = _logger,
) -> Tuple[RankedList, SelectionTrace]:
    """Repeated knockouts: each one moves the winner of the unsettled rest to the next position."""
    n = len(ranked)
    if not 1 <= m <= max(n, 1):
        raise SelectionError(f"goal m={m} must be between 1 and the list length {n}")
    settled: List[Candidate] = []
    rest = list(ranked.candidates)
    trace = SelectionTrace(sequential=False)

    for _ in range(m):
        if not rest:
            break
        winner = _knockout(list(rest), query, comparator, trace, max_comparisons, workers)
        if winner.doc_id != rest[0].doc_id:
            trace.swaps += 1
        settled.append(winner)
        rest = [c for c in rest if c.doc_id != winner.doc_id]
        if trace.degraded:
            break

    logger.debug(
        f"Tournament on {ranked.query_id}: {trace.comparisons_used} comparisons in "
        f"{trace.rounds} rounds, stop={trace.stop_reason.value}"
    )
    return _reranked(ranked, settled + rest), trace


def tournament_select(
    ranked: RankedList,
    query: Query,
    comparator: PairwiseComparator,
    *,
    max_comparisons: Optional[int] = None,
    workers: int = 1,
) -> Tuple[Candidate, SelectionTrace]:
    """Knockout over the whole list: n-1 comparisons in ceil(log2 n) rounds."""
    if len(ranked) == 0:
        raise SelectionError("cannot select from an empty list")
    reranked, trace = tournament_top_m(
        ranked, query, comparator, 1, max_comparisons=max_comparisons, workers=workers
    )
    return reranked.candidates[0], trace


def expected_tournament_rounds(n: int) -> int:
    return math.ceil(math.log2(n)) if n >= 2 else 0


def all_pair_scores(
    ranked: RankedList,
    query: Query,
    comparator: PairwiseComparator,
    *,
    max_comparisons: Optional[int] = None,
    workers: int = 1,
    logger: Optional[logging.Logger] = _logger,
) -> Tuple[RankedList, SelectionTrace]:
    """Round-robin baseline: a win scores 1, a tie 0.5 to each side."""
    candidates = list(ranked.candidates)
    trace = SelectionTrace(sequential=False)
    scores: Dict[str, float] = {c.doc_id: 0.0 for c in candidates}
    pairs = [
        (candidates[i], candidates[j])
        for i in range(len(candidates))
        for j in range(i + 1, len(candidates))
    ]
    remaining = _remaining(trace, max_comparisons)
    playable = pairs if remaining is None else pairs[:remaining]

    results, errors = _compare_all(playable, query, comparator, workers)
    for result in results:
        trace.add(result)
        if result.resolution == PairResolution.TIE:
            scores[result.winner.doc_id] += 0.5
            scores[result.loser.doc_id] += 0.5
        else:
            scores[result.winner.doc_id] += 1.0
    if results:
        trace.round_sizes.append(len(results))
    if errors:
        trace.fail(*errors)
        return _reranked(ranked, candidates), trace
    if len(playable) < len(pairs):
        trace.stop_reason = StopReason.BUDGET

    ordered = sorted(candidates, key=lambda c: (-scores[c.doc_id], c.initial_rank))
    trace.swaps = sum(1 for before, after in zip(candidates, ordered) if before is not after)
    logger.debug(f"All-pair on {ranked.query_id}: {trace.comparisons_used} comparisons")
    return _reranked(ranked, ordered), trace


def run_selection(
    ranked: RankedList,
    query: Query,
    comparator: PairwiseComparator,
    config: SelectionConfig,
    logger: Optional[logging.Logger] = _logger,
) -> Tuple[RankedList, SelectionTrace]:
    """Dispatch to the configured strategy.

    goal_m is clamped to the list length for short lists. Budget stops are
    surfaced through ``config.degraded_action``; comparator errors are left
    on the trace for the caller.
    """
    if len(ranked) == 0:
        raise SelectionError(f"query {ranked.query_id!r} has no candidates")
    m = min(config.goal_m, len(ranked))
    if m < config.goal_m:
        logger.debug(f"Clamping goal_m {config.goal_m} to list length {m} for {ranked.query_id}")

    if config.strategy == SelectionStrategy.NONE:
        result = (ranked, SelectionTrace(sequential=True))
    elif config.strategy == SelectionStrategy.SLIDING_WINDOW:
        result = sliding_window_top_m(
            ranked, query, comparator, m, max_comparisons=config.max_comparisons, logger=logger
        )
    elif config.strategy == SelectionStrategy.TOURNAMENT:
        result = tournament_top_m(
            ranked,
            query,
            comparator,
            m,
            max_comparisons=config.max_comparisons,
            workers=config.round_workers,
            logger=logger,
        )
    else:
        result = all_pair_scores(
            ranked,
            query,
            comparator,
            max_comparisons=config.max_comparisons,
            workers=config.round_workers,
            logger=logger,
        )

    trace = result[1]
    if trace.stop_reason == StopReason.BUDGET:
        handle_issue(
            config.degraded_action,
            f"Selection for {ranked.query_id} stopped after {trace.comparisons_used} "
            f"comparisons (budget {config.max_comparisons})",
            category=DegradedSelectionWarning,
            error_class=SelectionError,
            logger=logger,
        )
    return result
