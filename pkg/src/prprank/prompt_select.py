"""
Prompt selection for single-token decoding.

Each candidate template is scored on a labeled pair set; the first template
whose accuracy strictly beats the running best is kept, so ties go to the
earlier template.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Protocol, Sequence

import numpy as np

from prprank.base import ComparatorError, EvaluationError
from prprank.core import Dataset
from prprank.prompts import PromptTemplate, Slot
from prprank.remote import Completion
from prprank.utils import derive_seed, setup_logger

_logger = setup_logger(__name__)


class CompletionBackend(Protocol):
    def complete(self, prompt: str) -> Completion: ...


@dataclass(frozen=True)
class LabeledPair:
    query_text: str
    passage_a: str
    passage_b: str
    gold: Slot

    def __post_init__(self):
        if self.passage_a == self.passage_b:
            raise ValueError("labeled pair passages must differ")
        if self.gold not in (Slot.A, Slot.B):
            raise ValueError("gold must be A or B")


@dataclass(frozen=True)
class TemplateScore:
    name: str
    accuracy: Optional[float]
    error: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "accuracy": self.accuracy, "error": self.error}


@dataclass(frozen=True)
class PromptSelection:
    best_template: Optional[PromptTemplate]
    best_accuracy: Optional[float]
    report: List[TemplateScore]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "best_template": self.best_template.name if self.best_template else None,
            "best_accuracy": self.best_accuracy,
            "templates": [score.to_dict() for score in self.report],
        }


def evaluate_prompt(
    template: PromptTemplate,
    pairs: Sequence[LabeledPair],
    backend: CompletionBackend,
    *,
    workers: int = 1,
) -> float:
    """Share of pairs whose parsed single-token answer equals the gold slot."""
    if not pairs:
        raise EvaluationError("cannot evaluate a prompt on an empty pair set")

    def is_correct(pair: LabeledPair) -> bool:
        prompt = template.render(pair.query_text, pair.passage_a, pair.passage_b)
        return template.parse(backend.complete(prompt).text) == pair.gold

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(is_correct, pairs))
    else:
        outcomes = [is_correct(pair) for pair in pairs]
    return sum(outcomes) / len(pairs)


def select_prompt(
    templates: Sequence[PromptTemplate],
    pairs: Sequence[LabeledPair],
    backend: CompletionBackend,
    *,
    workers: int = 1,
    logger: Optional[logging.Logger] = _logger,
) -> PromptSelection:
    if not templates:
        raise EvaluationError("at least one prompt template is required")

    best: Optional[PromptTemplate] = None
    best_accuracy: Optional[float] = None
    report: List[TemplateScore] = []
    for template in templates:
        try:
            accuracy = evaluate_prompt(template, pairs, backend, workers=workers)
        except ComparatorError as e:
            logger.warning(f"Template {template.name!r} failed: {e}")
            report.append(TemplateScore(template.name, None, str(e)))
            continue
        logger.debug(f"Template {template.name!r}: accuracy {accuracy:.4f}")
        report.append(TemplateScore(template.name, accuracy))
        if best_accuracy is None or accuracy > best_accuracy:
            best, best_accuracy = template, accuracy

    if best is None:
        logger.warning("No prompt template could be evaluated")
    return PromptSelection(best_template=best, best_accuracy=best_accuracy, report=report)


def build_labeled_pairs(
    dataset: Dataset,
    *,
    seed: int = 0,
    pairs_per_query: int = 1,
    top_k: Optional[int] = None,
) -> List[LabeledPair]:
    """Gold passage against sampled non-gold passages from the same shortlist.

    The gold side goes to slot A or B by a seeded fair coin per pair.
    """
    pairs: List[LabeledPair] = []
    for ranked in sorted(dataset.runs, key=lambda r: r.query_id):
        query = dataset.queries.get(ranked.query_id)
        if query is None or query.gold_doc_id is None:
            continue
        gold_text = dataset.corpus[query.gold_doc_id].text
        negatives = [
            doc_id
            for doc_id in ranked.doc_ids[:top_k]
            if doc_id != query.gold_doc_id and dataset.corpus[doc_id].text != gold_text
        ]
        if not negatives:
            continue
        rng = np.random.default_rng(derive_seed(seed, query.id))
        count = min(pairs_per_query, len(negatives))
        for index in rng.choice(len(negatives), size=count, replace=False).tolist():
            negative_text = dataset.corpus[negatives[index]].text
            if rng.random() < 0.5:
                pairs.append(LabeledPair(query.text, gold_text, negative_text, Slot.A))
            else:
                pairs.append(LabeledPair(query.text, negative_text, gold_text, Slot.B))
    return pairs
