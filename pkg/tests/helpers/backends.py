import re
import threading
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from prprank.base import ComparatorTransportError
from prprank.comparator import (
    ComparisonBackend,
    ComparisonOutcome,
    PairResolution,
    PairResult,
    SlotAssignment,
)
from prprank.core import Candidate, Query, RankedList
from prprank.prompt_select import LabeledPair
from prprank.prompts import PromptTemplate, Slot
from prprank.remote import Completion


def ranked_from_relevance(
    relevances: Sequence[float], query_id: str = "q1"
) -> Tuple[RankedList, Dict[str, Dict[str, float]]]:
    """Ranked list d1..dn in retriever order plus hidden relevance keyed by query."""
    n = len(relevances)
    candidates = tuple(
        Candidate(doc_id=f"d{i}", retriever_score=float(n - i), initial_rank=i)
        for i in range(1, n + 1)
    )
    relevance = {f"d{i}": float(r) for i, r in enumerate(relevances, start=1)}
    return RankedList(query_id=query_id, candidates=candidates), {query_id: relevance}


def relevances_of(ranked: RankedList, relevance: Mapping[str, Mapping[str, float]]) -> List[float]:
    return [relevance[ranked.query_id][doc_id] for doc_id in ranked.doc_ids]


class ScriptedBackend(ComparisonBackend):
    """Answers every call with whatever ``answer(assignment, direction)`` returns."""

    def __init__(self, answer: Callable[[SlotAssignment, int], str], latency: float = 0.0):
        self.answer = answer
        self.latency = latency

    @property
    def prompt_name(self) -> str:
        return "scripted"

    def invoke(self, query: Query, assignment: SlotAssignment, direction: int) -> ComparisonOutcome:
        raw = self.answer(assignment, direction)
        winner = {"A": Slot.A, "B": Slot.B}.get(raw, Slot.UNDECIDED)
        return ComparisonOutcome(winner=winner, raw_response=raw, latency_seconds=self.latency)


class CountingBackend(ComparisonBackend):
    """Wraps a backend and records every call."""

    def __init__(self, inner: ComparisonBackend):
        self.inner = inner
        self.calls: List[Tuple[str, str, str, int]] = []
        self._lock = threading.Lock()

    @property
    def prompt_name(self) -> str:
        return self.inner.prompt_name

    def invoke(self, query: Query, assignment: SlotAssignment, direction: int) -> ComparisonOutcome:
        with self._lock:
            self.calls.append((query.id, assignment.slot_a, assignment.slot_b, direction))
        return self.inner.invoke(query, assignment, direction)


class FailingBackend(ComparisonBackend):
    """Raises on the n-th call (1-based), on every call for the listed queries,
    or whenever ``fail_when(assignment, direction)`` is true."""

    def __init__(
        self,
        inner: ComparisonBackend,
        fail_on_call: Optional[int] = None,
        fail_queries: Sequence[str] = (),
        fail_when: Optional[Callable[[SlotAssignment, int], bool]] = None,
    ):
        self.inner = inner
        self.fail_on_call = fail_on_call
        self.fail_queries = set(fail_queries)
        self.fail_when = fail_when
        self.calls = 0
        self._lock = threading.Lock()

    @property
    def prompt_name(self) -> str:
        return self.inner.prompt_name

    def invoke(self, query: Query, assignment: SlotAssignment, direction: int) -> ComparisonOutcome:
        with self._lock:
            self.calls += 1
            call = self.calls
        failing = self.fail_when is not None and self.fail_when(assignment, direction)
        if failing or call == self.fail_on_call or query.id in self.fail_queries:
            raise ComparatorTransportError(f"backend down on call {call}", attempts=3)
        return self.inner.invoke(query, assignment, direction)


_PAIR_RE = re.compile(r"alpha-(\d{3})")


def labeled_pairs(count: int) -> List[LabeledPair]:
    """Pairs alpha-NNN / beta-NNN with gold alternating A, B, A, B..."""
    return [
        LabeledPair(
            query_text="which passage?",
            passage_a=f"alpha-{i:03d}",
            passage_b=f"beta-{i:03d}",
            gold=Slot.A if i % 2 == 0 else Slot.B,
        )
        for i in range(count)
    ]


class ScriptedCompletions:
    """Completion backend answering correctly for the first ``correct[name]`` pairs of each template."""

    def __init__(
        self,
        templates: Sequence[PromptTemplate],
        correct: Mapping[str, int],
        pairs: Sequence[LabeledPair],
        failing: Sequence[str] = (),
    ):
        self.templates = list(templates)
        self.correct = dict(correct)
        self.gold = [pair.gold for pair in pairs]
        self.failing = set(failing)
        self.calls = 0
        self._lock = threading.Lock()

    def _template_for(self, prompt: str) -> PromptTemplate:
        for template in self.templates:
            if prompt.endswith(template.body.rsplit("}", 1)[-1]):
                return template
        raise AssertionError(f"prompt matches no template: {prompt!r}")

    def complete(self, prompt: str) -> Completion:
        with self._lock:
            self.calls += 1
        template = self._template_for(prompt)
        if template.name in self.failing:
            raise ComparatorTransportError("connection refused", attempts=3)
        index = int(_PAIR_RE.search(prompt).group(1))
        gold = self.gold[index]
        if index < self.correct.get(template.name, 0):
            answer = gold
        else:
            answer = Slot.B if gold == Slot.A else Slot.A
        return Completion(text=template.label_for(answer), output_tokens=1, latency_seconds=0.01)


class ConstantCompletions:
    """Completion backend that always returns the same text."""

    def __init__(self, text: str):
        self.text = text

    def complete(self, prompt: str) -> Completion:
        return Completion(text=self.text, output_tokens=1, latency_seconds=0.0)


class RankOracle:
    """Lightweight stand-in for PairwiseComparator over distinct relevances.

    Pair results are built once per candidate set and logged nowhere, so
    permutation sweeps only pay for the strategy itself. ``winners`` lists
    the winner of every comparison since the last ``reset``.
    """

    def __init__(self, candidates: Sequence[Candidate]):
        self.relevance: Mapping[str, float] = {}
        self.winners: List[Candidate] = []
        self._results: Dict[Tuple[str, str, bool], PairResult] = {}
        for first in candidates:
            for second in candidates:
                if first.doc_id == second.doc_id:
                    continue
                self._results[first.doc_id, second.doc_id, True] = PairResult(
                    first, second, PairResolution.FIRST_WINS, ()
                )
                self._results[first.doc_id, second.doc_id, False] = PairResult(
                    second, first, PairResolution.SECOND_WINS, ()
                )

    def reset(self, relevance: Mapping[str, float]) -> None:
        self.relevance = relevance
        self.winners = []

    def compare(self, query: Query, first: Candidate, second: Candidate) -> PairResult:
        first_wins = self.relevance[first.doc_id] > self.relevance[second.doc_id]
        result = self._results[first.doc_id, second.doc_id, first_wins]
        self.winners.append(result.winner)
        return result
