"""
Domain data model and line-delimited JSON ingestion.

Corpus, query, run and relevance files are UTF-8, one JSON object per line.
Unknown fields are ignored. Everything returned here is immutable and safe
to share between worker threads.
"""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Tuple, Union

from prprank.base import (
    ConfigError,
    DuplicateIdError,
    IngestError,
    IssueAction,
    LongDocumentWarning,
    UnresolvedReferenceError,
    handle_issue,
)
from prprank.utils import setup_logger

_logger = setup_logger(__name__)

DEFAULT_TOKEN_BUDGET = 512

PathLike = Union[str, Path]


class Provenance(str, Enum):
    """Where a ranked list came from."""

    RETRIEVER = "retriever"
    TRUNCATED = "truncated"
    RERANKED = "reranked"


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    token_count: Optional[int] = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("document id must be non-empty")
        if not self.text:
            raise ValueError(f"document {self.id!r} has empty text")
        if self.token_count is not None and self.token_count < 0:
            raise ValueError(f"document {self.id!r} has negative token_count")

    @property
    def approx_tokens(self) -> int:
        """Declared token count, or a whitespace word count when absent."""
        if self.token_count is not None:
            return self.token_count
        return len(self.text.split())


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    gold_doc_id: Optional[str] = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("query id must be non-empty")
        if not self.text:
            raise ValueError(f"query {self.id!r} has empty text")


@dataclass(frozen=True)
class Candidate:
    doc_id: str
    retriever_score: float
    initial_rank: int

    def __post_init__(self):
        if self.initial_rank < 1:
            raise ValueError(f"initial_rank must be >= 1, got {self.initial_rank}")


@dataclass(frozen=True)
class RankedList:
    query_id: str
    candidates: Tuple[Candidate, ...]
    provenance: Provenance = Provenance.RETRIEVER

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        seen = set()
        for candidate in self.candidates:
            if candidate.doc_id in seen:
                raise ValueError(
                    f"duplicate doc_id {candidate.doc_id!r} in ranked list for {self.query_id!r}"
                )
            seen.add(candidate.doc_id)

    def __len__(self) -> int:
        return len(self.candidates)

    @property
    def doc_ids(self) -> List[str]:
        return [c.doc_id for c in self.candidates]

    def position_of(self, doc_id: str) -> Optional[int]:
        """1-based position of a document, or None when absent."""
        for position, candidate in enumerate(self.candidates, start=1):
            if candidate.doc_id == doc_id:
                return position
        return None

    def with_candidates(
        self, candidates: Iterable[Candidate], provenance: Provenance
    ) -> "RankedList":
        return replace(self, candidates=tuple(candidates), provenance=provenance)


Corpus = Mapping[str, Document]
Relevance = Mapping[str, Mapping[str, float]]


@dataclass(frozen=True)
class Dataset:
    """Everything a pipeline run ingests."""

    corpus: Corpus
    queries: Mapping[str, Query]
    runs: Tuple[RankedList, ...]
    relevance: Optional[Relevance] = field(default=None)

    def relevance_map(self) -> Dict[str, Dict[str, float]]:
        """Hidden relevance for the simulated comparator, per query.

        Queries without relevance rows fall back to gold labels (gold 1.0,
        everything else 0.0).
        """
        relevance: Dict[str, Dict[str, float]] = {}
        for ranked in self.runs:
            if self.relevance is not None and ranked.query_id in self.relevance:
                relevance[ranked.query_id] = dict(self.relevance[ranked.query_id])
                continue
            query = self.queries.get(ranked.query_id)
            gold = query.gold_doc_id if query else None
            relevance[ranked.query_id] = {
                doc_id: 1.0 if doc_id == gold else 0.0 for doc_id in ranked.doc_ids
            }
        return relevance


def iter_jsonl(path: PathLike) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """Yield (line_number, object) for each non-blank line."""
    path = Path(path)
    try:
        handle = path.open("r", encoding="utf-8")
    except OSError as e:
        raise IngestError(f"cannot open file: {e}", str(path)) from e
    with handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise IngestError(f"invalid JSON: {e.msg}", str(path), line_number) from e
            if not isinstance(row, dict):
                raise IngestError("expected a JSON object", str(path), line_number)
            yield line_number, row


def write_jsonl(path: PathLike, rows: Iterable[Mapping[str, Any]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False, sort_keys=True))
            handle.write("\n")


def _require_str(row: Dict[str, Any], key: str, path: PathLike, line_number: int) -> str:
    value = row.get(key)
    if not isinstance(value, str):
        raise IngestError(f"field {key!r} must be a string", str(path), line_number)
    if not value:
        raise IngestError(f"field {key!r} must be non-empty", str(path), line_number)
    return value


def load_corpus(
    path: PathLike,
    *,
    token_budget: int = DEFAULT_TOKEN_BUDGET,
    long_document_action: Union[IssueAction, str] = IssueAction.WARN,
    logger: Optional[logging.Logger] = _logger,
) -> Dict[str, Document]:
    """Load a corpus file into a map of doc_id to Document."""
    corpus: Dict[str, Document] = {}
    overlong: List[str] = []
    for line_number, row in iter_jsonl(path):
        doc_id = _require_str(row, "id", path, line_number)
        text = _require_str(row, "text", path, line_number)
        token_count = row.get("token_count")
        if token_count is not None and (
            isinstance(token_count, bool)
            or not isinstance(token_count, int)
            or token_count < 0
        ):
            raise IngestError(
                "field 'token_count' must be a non-negative integer",
                str(path),
                line_number,
            )
        if doc_id in corpus:
            raise DuplicateIdError(f"duplicate document id {doc_id!r}", str(path), line_number)
        document = Document(id=doc_id, text=text, token_count=token_count)
        if document.approx_tokens > token_budget:
            overlong.append(doc_id)
        corpus[doc_id] = document

    if overlong:
        handle_issue(
            long_document_action,
            f"{len(overlong)} documents exceed the {token_budget}-token budget: {overlong[:10]}",
            category=LongDocumentWarning,
            error_class=IngestError,
            logger=logger,
        )
    logger.debug(f"Loaded {len(corpus)} documents from {path}")
    return corpus


def load_queries(
    path: PathLike,
    corpus: Optional[Corpus] = None,
    logger: Optional[logging.Logger] = _logger,
) -> Dict[str, Query]:
    """Load a query file; gold labels are checked against the corpus when given."""
    queries: Dict[str, Query] = {}
    for line_number, row in iter_jsonl(path):
        query_id = _require_str(row, "id", path, line_number)
        text = _require_str(row, "text", path, line_number)
        gold = row.get("gold_doc_id")
        if gold is not None:
            gold = _require_str(row, "gold_doc_id", path, line_number)
            if corpus is not None and gold not in corpus:
                raise UnresolvedReferenceError(
                    f"gold_doc_id {gold!r} of query {query_id!r} is not in the corpus",
                    str(path),
                    line_number,
                )
        if query_id in queries:
            raise DuplicateIdError(f"duplicate query id {query_id!r}", str(path), line_number)
        queries[query_id] = Query(id=query_id, text=text, gold_doc_id=gold)
    logger.debug(f"Loaded {len(queries)} queries from {path}")
    return queries


def rank_rows(query_id: str, scored: Iterable[Tuple[str, float]]) -> RankedList:
    """Order (doc_id, score) rows by descending score, ties by doc_id, and assign ranks."""
    ordered = sorted(scored, key=lambda item: (-item[1], item[0]))
    return RankedList(
        query_id=query_id,
        candidates=tuple(
            Candidate(doc_id=doc_id, retriever_score=score, initial_rank=rank)
            for rank, (doc_id, score) in enumerate(ordered, start=1)
        ),
        provenance=Provenance.RETRIEVER,
    )


def load_run(
    path: PathLike,
    corpus: Corpus,
    logger: Optional[logging.Logger] = _logger,
) -> List[RankedList]:
    """Load a retriever run, grouped per query and sorted by query id."""
    grouped: Dict[str, Dict[str, float]] = defaultdict(dict)
    for line_number, row in iter_jsonl(path):
        query_id = _require_str(row, "query_id", path, line_number)
        doc_id = _require_str(row, "doc_id", path, line_number)
        score = row.get("score")
        if isinstance(score, bool) or not isinstance(score, (int, float)):
            raise IngestError("field 'score' must be a number", str(path), line_number)
        if not math.isfinite(score):
            raise IngestError(f"field 'score' must be finite, got {score}", str(path), line_number)
        if doc_id not in corpus:
            raise UnresolvedReferenceError(
                f"doc_id {doc_id!r} is not in the corpus", str(path), line_number
            )
        if doc_id in grouped[query_id]:
            raise DuplicateIdError(
                f"duplicate pair ({query_id!r}, {doc_id!r})", str(path), line_number
            )
        grouped[query_id][doc_id] = float(score)

    runs = [rank_rows(query_id, rows.items()) for query_id, rows in sorted(grouped.items())]
    logger.debug(f"Loaded run with {len(runs)} queries from {path}")
    return runs


def load_relevance(path: PathLike) -> Dict[str, Dict[str, float]]:
    """Load hidden per-query relevance used by the simulated comparator."""
    relevance: Dict[str, Dict[str, float]] = defaultdict(dict)
    for line_number, row in iter_jsonl(path):
        query_id = _require_str(row, "query_id", path, line_number)
        doc_id = _require_str(row, "doc_id", path, line_number)
        value = row.get("relevance")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise IngestError("field 'relevance' must be a number", str(path), line_number)
        relevance[query_id][doc_id] = float(value)
    return dict(relevance)


def truncate_top_k(ranked: RankedList, k: int) -> RankedList:
    """Keep the first min(k, n) candidates in retriever order."""
    if k < 1:
        raise ConfigError(f"top-k must be >= 1, got {k}")
    return ranked.with_candidates(ranked.candidates[:k], Provenance.TRUNCATED)


def run_rows(ranked_lists: Iterable[RankedList]) -> Iterator[Dict[str, Any]]:
    """Rows of a run file; reranked lists get score 1/position so re-ingestion keeps their order."""
    for ranked in ranked_lists:
        for position, candidate in enumerate(ranked.candidates, start=1):
            score = (
                candidate.retriever_score
                if ranked.provenance != Provenance.RERANKED
                else 1.0 / position
            )
            yield {"query_id": ranked.query_id, "doc_id": candidate.doc_id, "score": score}
