"""
Seeded synthetic corpus, queries, retriever run and hidden relevance.

Every query has exactly one gold document in its shortlist. Its retriever
rank is drawn uniformly from 1..gold_top_k, except for a fixed share of
queries (``gold_outside_fraction``) where it is drawn from the ranks after
gold_top_k. The gold document is always the most relevant one, by at least
``relevance_margin``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from prprank.base import ConfigError
from prprank.core import Dataset, Document, Query, rank_rows, run_rows, write_jsonl
from prprank.utils import setup_logger

_logger = setup_logger(__name__)

_VOCABULARY = (
    "account billing policy refund invoice network router outage password reset "
    "license renewal warranty shipping delivery tracking order payment card bank "
    "transfer limit balance statement tax report audit contract clause term notice "
    "employee payroll leave benefit claim insurance premium coverage deductible "
    "server backup restore storage quota upgrade migration release patch security"
).split()


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape of a generated dataset."""

    num_docs: int = field(default=5000, metadata={"description": "Corpus size"})
    num_queries: int = field(default=500, metadata={"description": "Number of queries"})
    shortlist_size: int = field(default=25, metadata={"description": "Retriever candidates per query"})
    gold_top_k: int = field(
        default=5, metadata={"description": "Gold is placed within this many leading ranks"}
    )
    gold_outside_fraction: float = field(
        default=0.0,
        metadata={"description": "Share of queries whose gold is ranked after gold_top_k"},
    )
    relevance_margin: float = field(
        default=0.5, metadata={"description": "Minimum relevance gap between gold and the rest"}
    )
    doc_words: int = field(default=40, metadata={"description": "Words per generated document"})
    seed: int = field(default=0, metadata={"description": "Generator seed"})

    def __post_init__(self):
        if self.num_docs < self.shortlist_size:
            raise ConfigError("num_docs must be >= shortlist_size")
        if self.num_queries < 1 or self.shortlist_size < 1:
            raise ConfigError("num_queries and shortlist_size must be >= 1")
        if not 1 <= self.gold_top_k <= self.shortlist_size:
            raise ConfigError("gold_top_k must be between 1 and shortlist_size")
        if not 0.0 <= self.gold_outside_fraction <= 1.0:
            raise ConfigError("gold_outside_fraction must be in [0, 1]")
        if self.gold_outside_fraction > 0 and self.gold_top_k == self.shortlist_size:
            raise ConfigError("gold cannot be placed outside a top-k equal to the shortlist")
        if self.relevance_margin <= 0:
            raise ConfigError("relevance_margin must be > 0")

    @property
    def outside_count(self) -> int:
        return int(round(self.gold_outside_fraction * self.num_queries))


def generate_synthetic(
    spec: SyntheticSpec = SyntheticSpec(),
    logger: Optional[logging.Logger] = _logger,
) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    vocabulary = np.array(_VOCABULARY)

    doc_ids = [f"d{i:06d}" for i in range(spec.num_docs)]
    corpus: Dict[str, Document] = {}
    for doc_id in doc_ids:
        words = rng.choice(vocabulary, size=spec.doc_words)
        corpus[doc_id] = Document(id=doc_id, text=" ".join(words), token_count=spec.doc_words)

    outside = set(rng.permutation(spec.num_queries)[: spec.outside_count].tolist())
    queries: Dict[str, Query] = {}
    runs = []
    relevance: Dict[str, Dict[str, float]] = {}
    for index in range(spec.num_queries):
        query_id = f"q{index:06d}"
        shortlist = [doc_ids[i] for i in rng.choice(spec.num_docs, size=spec.shortlist_size, replace=False)]
        if index in outside:
            gold_rank = int(rng.integers(spec.gold_top_k + 1, spec.shortlist_size + 1))
        else:
            gold_rank = int(rng.integers(1, spec.gold_top_k + 1))
        gold = shortlist[gold_rank - 1]

        scores = np.sort(rng.random(spec.shortlist_size))[::-1]
        runs.append(rank_rows(query_id, zip(shortlist, scores.tolist())))

        hidden = rng.random(spec.shortlist_size)
        relevance[query_id] = {
            doc_id: float(value) for doc_id, value in zip(shortlist, hidden.tolist())
        }
        relevance[query_id][gold] = 1.0 + spec.relevance_margin

        gold_words = corpus[gold].text.split()[:6]
        queries[query_id] = Query(
            id=query_id, text="how do I " + " ".join(gold_words), gold_doc_id=gold
        )

    logger.debug(
        f"Generated {spec.num_docs} documents, {spec.num_queries} queries "
        f"({len(outside)} with gold outside top-{spec.gold_top_k})"
    )
    return Dataset(corpus=corpus, queries=queries, runs=tuple(runs), relevance=relevance)


def write_synthetic(
    dataset: Dataset, out_dir: Union[str, Path]
) -> Dict[str, Path]:
    """Write corpus, queries, run, relevance and a starter config; returns the paths."""
    out_dir = Path(out_dir)
    paths = {
        "corpus": out_dir / "corpus.jsonl",
        "queries": out_dir / "queries.jsonl",
        "run": out_dir / "run.jsonl",
        "relevance": out_dir / "relevance.jsonl",
        "config": out_dir / "config.json",
    }
    write_jsonl(
        paths["corpus"],
        (
            {"id": d.id, "text": d.text, "token_count": d.token_count}
            for d in dataset.corpus.values()
        ),
    )
    write_jsonl(
        paths["queries"],
        (
            {"id": q.id, "text": q.text, "gold_doc_id": q.gold_doc_id}
            for q in dataset.queries.values()
        ),
    )
    write_jsonl(paths["run"], run_rows(dataset.runs))
    rows: List[dict] = []
    for query_id, values in sorted((dataset.relevance or {}).items()):
        rows.extend(
            {"query_id": query_id, "doc_id": doc_id, "relevance": value}
            for doc_id, value in sorted(values.items())
        )
    write_jsonl(paths["relevance"], rows)
    starter = {
        "corpus_path": paths["corpus"].name,
        "queries_path": paths["queries"].name,
        "run_path": paths["run"].name,
        "relevance_path": paths["relevance"].name,
        "top_k": 5,
        "selection": {"strategy": "sliding_window", "goal_m": 1},
    }
    paths["config"].write_text(json.dumps(starter, indent=2) + "\n", encoding="utf-8")
    return paths
