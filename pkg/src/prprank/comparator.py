"""
Pairwise comparator

Decides which of two candidates better answers a query. The atomic step is a
single backend call on a slot assignment (which document is rendered as
passage A); order policies decide how many calls a pair costs and how their
answers combine.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import TYPE_CHECKING, Any, Dict, List, Mapping, Optional, Tuple

import numpy as np

from prprank.base import (
    ComparatorError,
    IdenticalDocumentError,
    MissingRelevanceError,
)
from prprank.core import Candidate, Corpus, Query
from prprank.prompts import PromptTemplate, Slot
from prprank.remote import CompletionClient
from prprank.utils import derive_seed, setup_logger

if TYPE_CHECKING:
    from prprank.evaluation import CostModel

_logger = setup_logger(__name__)

SIMULATED_PROMPT_NAME = "simulated"


class OrderPolicy(str, Enum):
    """How the two documents of a pair are placed into prompt slots."""

    LOWER_RANK_FIRST = "lower_rank_first"
    AS_GIVEN = "as_given"
    BOTH_DIRECTIONS = "both_directions"

    @property
    def calls_per_pair(self) -> int:
        return 2 if self == OrderPolicy.BOTH_DIRECTIONS else 1


class PairResolution(str, Enum):
    FIRST_WINS = "first_wins"
    SECOND_WINS = "second_wins"
    TIE = "tie"


@dataclass(frozen=True)
class SlotAssignment:
    slot_a: str
    slot_b: str
    policy: OrderPolicy
    rank_a: Optional[int] = None
    rank_b: Optional[int] = None

    def __post_init__(self):
        if self.slot_a == self.slot_b:
            raise IdenticalDocumentError(f"cannot compare {self.slot_a!r} with itself")

    def mirror(self) -> "SlotAssignment":
        return SlotAssignment(
            slot_a=self.slot_b,
            slot_b=self.slot_a,
            policy=self.policy,
            rank_a=self.rank_b,
            rank_b=self.rank_a,
        )

    def doc_in(self, slot: Slot) -> Optional[str]:
        if slot == Slot.A:
            return self.slot_a
        if slot == Slot.B:
            return self.slot_b
        return None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "slot_a": self.slot_a,
            "slot_b": self.slot_b,
            "policy": self.policy.value,
            "rank_a": self.rank_a,
            "rank_b": self.rank_b,
        }


@dataclass(frozen=True)
class ComparisonOutcome:
    winner: Slot
    raw_response: str
    latency_seconds: float = 0.0
    output_tokens: int = 1

    def __post_init__(self):
        if self.latency_seconds < 0:
            raise ValueError("latency_seconds must be >= 0")
        if self.output_tokens < 0:
            raise ValueError("output_tokens must be >= 0")


@dataclass(frozen=True)
class ComparisonRecord:
    """One logged backend invocation. Never mutated after creation."""

    query_id: str
    assignment: SlotAssignment
    outcome: ComparisonOutcome
    prompt_name: str
    direction: int = 0
    timestamp: datetime = field(default_factory=lambda: datetime.now(timezone.utc))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "query_id": self.query_id,
            **self.assignment.to_dict(),
            "direction": self.direction,
            "winner": self.outcome.winner.value,
            "raw_response": self.outcome.raw_response,
            "latency_seconds": self.outcome.latency_seconds,
            "output_tokens": self.outcome.output_tokens,
            "prompt_name": self.prompt_name,
            "timestamp": self.timestamp.isoformat(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ComparisonRecord":
        return cls(
            query_id=data["query_id"],
            assignment=SlotAssignment(
                slot_a=data["slot_a"],
                slot_b=data["slot_b"],
                policy=OrderPolicy(data.get("policy", OrderPolicy.AS_GIVEN.value)),
                rank_a=data.get("rank_a"),
                rank_b=data.get("rank_b"),
            ),
            outcome=ComparisonOutcome(
                winner=Slot(data["winner"]),
                raw_response=data.get("raw_response", ""),
                latency_seconds=float(data["latency_seconds"]),
                output_tokens=int(data["output_tokens"]),
            ),
            prompt_name=data.get("prompt_name", ""),
            direction=int(data.get("direction", 0)),
            timestamp=datetime.fromisoformat(data["timestamp"])
            if data.get("timestamp")
            else datetime.now(timezone.utc),
        )


@dataclass(frozen=True)
class BiasModel:
    """Noise and positional-bias parameters of the simulated comparator."""

    epsilon: float = field(
        default=0.0,
        metadata={"description": "Probability of a relevance-independent wrong answer"},
    )
    beta: float = field(
        default=0.0,
        metadata={"description": "Probability of answering slot A regardless of content"},
    )
    seed: int = field(default=0, metadata={"description": "Seed for per-call randomness"})

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")

    @property
    def is_oracle(self) -> bool:
        return self.epsilon == 0.0 and self.beta == 0.0


def assign_slots(
    cand_x: Candidate, cand_y: Candidate, policy: OrderPolicy
) -> SlotAssignment:
    """Place a pair into slots.

    Under lower_rank_first the document with the larger initial_rank goes to
    slot A. both_directions returns the as-given assignment; its second call
    uses ``assignment.mirror()``.
    """
    if cand_x.doc_id == cand_y.doc_id:
        raise IdenticalDocumentError(f"cannot compare {cand_x.doc_id!r} with itself")
    first, second = cand_x, cand_y
    if policy == OrderPolicy.LOWER_RANK_FIRST and cand_y.initial_rank > cand_x.initial_rank:
        first, second = cand_y, cand_x
    return SlotAssignment(
        slot_a=first.doc_id,
        slot_b=second.doc_id,
        policy=OrderPolicy(policy),
        rank_a=first.initial_rank,
        rank_b=second.initial_rank,
    )


def compare_remote(
    query: Query,
    assignment: SlotAssignment,
    template: PromptTemplate,
    client: CompletionClient,
    corpus: Corpus,
    logger: Optional[logging.Logger] = _logger,
) -> ComparisonOutcome:
    """Ask the remote backend for one token and parse it under the template's labels."""
    try:
        doc_a = corpus[assignment.slot_a]
        doc_b = corpus[assignment.slot_b]
    except KeyError as e:
        raise ComparatorError(f"document {e} is not in the corpus") from e
    prompt = template.render(query.text, doc_a.text, doc_b.text)
    completion = client.complete(prompt)
    if completion.attempts > 1:
        logger.debug(
            f"Comparison {assignment.slot_a} vs {assignment.slot_b} for {query.id} "
            f"succeeded after {completion.attempts} attempts"
        )
    return ComparisonOutcome(
        winner=template.parse(completion.text),
        raw_response=completion.text,
        latency_seconds=completion.latency_seconds,
        output_tokens=completion.output_tokens,
    )


def compare_simulated(
    query: Query,
    assignment: SlotAssignment,
    relevance: Mapping[str, float],
    bias: BiasModel,
    rng: Optional[np.random.Generator],
    cost_model: Optional["CostModel"] = None,
) -> ComparisonOutcome:
    """Answer from hidden relevance, with positional bias drawn before noise.

    Equal relevance is won by the better initial rank (then the smaller doc id).
    ``rng`` may be None only for the oracle (epsilon = beta = 0).
    """
    try:
        rel_a = relevance[assignment.slot_a]
        rel_b = relevance[assignment.slot_b]
    except KeyError as e:
        raise MissingRelevanceError(
            f"no relevance for document {e} under query {query.id!r}"
        ) from e

    if rel_a != rel_b:
        correct = Slot.A if rel_a > rel_b else Slot.B
    elif assignment.rank_a is not None and assignment.rank_b is not None:
        correct = Slot.A if assignment.rank_a < assignment.rank_b else Slot.B
    else:
        correct = Slot.A if assignment.slot_a < assignment.slot_b else Slot.B

    if bias.is_oracle:
        winner = correct
    else:
        if rng is None:
            raise ValueError("a noisy bias model needs a random generator")
        if rng.random() < bias.beta:
            winner = Slot.A
        elif rng.random() < bias.epsilon:
            winner = Slot.B if correct == Slot.A else Slot.A
        else:
            winner = correct

    latency = cost_model.per_call_seconds() if cost_model is not None else 0.0
    tokens = cost_model.tokens_out if cost_model is not None else 1
    return ComparisonOutcome(
        winner=winner,
        raw_response=winner.value,
        latency_seconds=latency,
        output_tokens=tokens,
    )


def resolve_pair(
    outcome_forward: ComparisonOutcome,
    outcome_backward: Optional[ComparisonOutcome],
    policy: OrderPolicy,
    assignment: SlotAssignment,
    first_doc_id: str,
) -> PairResolution:
    """Map slot answers back to the original (first, second) pair.

    ``assignment`` is the forward assignment; the backward call is assumed to
    have used its mirror. Disagreement and undecided answers give a tie.
    """
    if (outcome_backward is not None) != (policy == OrderPolicy.BOTH_DIRECTIONS):
        raise ValueError("a backward outcome is required exactly for both_directions")

    winner = assignment.doc_in(outcome_forward.winner)
    if outcome_backward is not None:
        backward_winner = assignment.mirror().doc_in(outcome_backward.winner)
        if backward_winner != winner:
            winner = None

    if winner is None:
        return PairResolution.TIE
    return PairResolution.FIRST_WINS if winner == first_doc_id else PairResolution.SECOND_WINS


class ComparisonBackend(ABC):
    """Something that answers one slot assignment for one query."""

    @abstractmethod
    def invoke(
        self, query: Query, assignment: SlotAssignment, direction: int
    ) -> ComparisonOutcome:
        """Run a single comparison call."""
        pass

    @property
    @abstractmethod
    def prompt_name(self) -> str:
        """Name logged on every record."""
        pass

    @property
    def metadata(self) -> Dict[str, Optional[str]]:
        """Opaque backend descriptors carried into reports."""
        return {}


class SimulatedBackend(ComparisonBackend):
    """Deterministic comparator over hidden relevance.

    Per-call randomness comes from (seed, query_id, slot_a, slot_b, direction)
    so results do not depend on call order or parallelism.
    """

    def __init__(
        self,
        relevance: Mapping[str, Mapping[str, float]],
        bias: BiasModel = BiasModel(),
        cost_model: Optional["CostModel"] = None,
    ):
        self.relevance = relevance
        self.bias = bias
        self.cost_model = cost_model

    @property
    def prompt_name(self) -> str:
        return SIMULATED_PROMPT_NAME

    @property
    def metadata(self) -> Dict[str, Optional[str]]:
        return {"backend": "simulated", "model_name": None, "precision": None}

    def rng_for(
        self, query_id: str, assignment: SlotAssignment, direction: int
    ) -> Optional[np.random.Generator]:
        if self.bias.is_oracle:
            return None
        return np.random.default_rng(
            derive_seed(self.bias.seed, query_id, assignment.slot_a, assignment.slot_b, direction)
        )

    def invoke(
        self, query: Query, assignment: SlotAssignment, direction: int
    ) -> ComparisonOutcome:
        relevance = self.relevance.get(query.id)
        if relevance is None:
            raise MissingRelevanceError(f"no relevance for query {query.id!r}")
        return compare_simulated(
            query,
            assignment,
            relevance,
            self.bias,
            self.rng_for(query.id, assignment, direction),
            self.cost_model,
        )


class RemoteBackend(ComparisonBackend):
    """LLM comparator behind a completion endpoint."""

    def __init__(self, client: CompletionClient, template: PromptTemplate, corpus: Corpus):
        self.client = client
        self.template = template
        self.corpus = corpus

    @property
    def prompt_name(self) -> str:
        return self.template.name

    @property
    def metadata(self) -> Dict[str, Optional[str]]:
        return {
            "backend": "remote",
            "model_name": self.client.config.model_name,
            "precision": self.client.config.precision,
        }

    def invoke(
        self, query: Query, assignment: SlotAssignment, direction: int
    ) -> ComparisonOutcome:
        return compare_remote(query, assignment, self.template, self.client, self.corpus)


@dataclass(frozen=True)
class PairResult:
    winner: Candidate
    loser: Candidate
    resolution: PairResolution
    records: Tuple[ComparisonRecord, ...]

    def first_won(self, first: Candidate) -> bool:
        return self.winner.doc_id == first.doc_id


class PairwiseComparator:
    """Compares candidate pairs under an order policy, logging every backend call."""

    def __init__(
        self,
        backend: ComparisonBackend,
        policy: OrderPolicy = OrderPolicy.LOWER_RANK_FIRST,
        logger: Optional[logging.Logger] = _logger,
    ):
        self.backend = backend
        self.policy = OrderPolicy(policy)
        self.logger = logger

    def compare(self, query: Query, first: Candidate, second: Candidate) -> PairResult:
        """Decide a pair; ties keep the better retriever rank."""
        assignment = assign_slots(first, second, self.policy)
        records: List[ComparisonRecord] = []

        forward = self.backend.invoke(query, assignment, 0)
        records.append(self._record(query, assignment, forward, 0))
        backward = None
        if self.policy == OrderPolicy.BOTH_DIRECTIONS:
            mirrored = assignment.mirror()
            try:
                backward = self.backend.invoke(query, mirrored, 1)
            except ComparatorError as e:
                # the forward call still happened
                e.partial_records = tuple(records)
                raise
            records.append(self._record(query, mirrored, backward, 1))

        resolution = resolve_pair(forward, backward, self.policy, assignment, first.doc_id)
        if resolution == PairResolution.FIRST_WINS:
            winner, loser = first, second
        elif resolution == PairResolution.SECOND_WINS:
            winner, loser = second, first
        elif first.initial_rank <= second.initial_rank:
            winner, loser = first, second
        else:
            winner, loser = second, first
        return PairResult(winner=winner, loser=loser, resolution=resolution, records=tuple(records))

    def _record(
        self,
        query: Query,
        assignment: SlotAssignment,
        outcome: ComparisonOutcome,
        direction: int,
    ) -> ComparisonRecord:
        if outcome.winner == Slot.UNDECIDED:
            self.logger.debug(
                f"Undecided response {outcome.raw_response!r} for {query.id}: "
                f"{assignment.slot_a} vs {assignment.slot_b}"
            )
        return ComparisonRecord(
            query_id=query.id,
            assignment=assignment,
            outcome=outcome,
            prompt_name=self.backend.prompt_name,
            direction=direction,
        )
