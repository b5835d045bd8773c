"""
Recall@k, latency statistics, the analytic cost model and the speedup ledger.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import (
    TYPE_CHECKING,
    Any,
    Dict,
    Iterable,
    Mapping,
    Optional,
    Sequence,
    Union,
)

import numpy as np

from prprank.base import CalibrationError, EvaluationError, QuerySetMismatchError
from prprank.core import Query, RankedList
from prprank.prompts import Slot
from prprank.utils import nearest_rank, setup_logger

if TYPE_CHECKING:
    from prprank.comparator import ComparisonRecord
    from prprank.config import RunConfig
    from prprank.selection import SelectionTrace

_logger = setup_logger(__name__)

DEFAULT_RECALL_KS = (1, 3, 5, 10, 25)


@dataclass(frozen=True)
class CostModel:
    """Per-call latency model: prefill plus generated tokens."""

    t_prefill_s: float = field(
        default=0.02, metadata={"description": "Seconds of prompt processing per call"}
    )
    t_token_s: float = field(
        default=0.015, metadata={"description": "Seconds per generated token"}
    )
    tokens_out: int = field(
        default=1, metadata={"description": "Generated tokens per call"}
    )
    parallel_width: int = field(
        default=1, metadata={"description": "Calls the backend sustains simultaneously"}
    )

    def __post_init__(self):
        if self.t_prefill_s < 0 or self.t_token_s < 0:
            raise ValueError("cost model times must be >= 0")
        if self.tokens_out < 1:
            raise ValueError("tokens_out must be >= 1")
        if self.parallel_width < 1:
            raise ValueError("parallel_width must be >= 1")

    def per_call_seconds(self) -> float:
        return self.t_prefill_s + self.tokens_out * self.t_token_s


@dataclass(frozen=True)
class EvalReport:
    recall_at: Dict[int, float]
    query_count: int
    labeled_query_count: int
    mean_latency_s: float
    p50_latency_s: float
    p95_latency_s: float
    modeled_latency_mean_s: float
    comparisons_per_query_mean: float
    backend_calls_per_query_mean: float
    undecided_rate: float
    degraded_count: int
    config_fingerprint: str
    setup: str = ""
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "setup": self.setup,
            "config_fingerprint": self.config_fingerprint,
            "query_count": self.query_count,
            "labeled_query_count": self.labeled_query_count,
            "recall_at": {str(k): v for k, v in sorted(self.recall_at.items())},
            "latency": {
                "mean_s": self.mean_latency_s,
                "median_s": self.p50_latency_s,
                "p95_s": self.p95_latency_s,
                "modeled_mean_s": self.modeled_latency_mean_s,
            },
            "comparisons_per_query_mean": self.comparisons_per_query_mean,
            "backend_calls_per_query_mean": self.backend_calls_per_query_mean,
            "undecided_rate": self.undecided_rate,
            "degraded_count": self.degraded_count,
            "metadata": dict(sorted(self.metadata.items())),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def recall_at_k(
    reranked: Sequence[RankedList], queries: Mapping[str, Query], k: int
) -> float:
    """Fraction of queries whose gold document is within the first k positions."""
    if k < 1:
        raise EvaluationError(f"k must be >= 1, got {k}")
    if not reranked:
        return 0.0
    hits = 0
    for ranked in reranked:
        query = queries.get(ranked.query_id)
        if query is None:
            raise QuerySetMismatchError(f"query {ranked.query_id!r} has no query record")
        if query.gold_doc_id is None:
            raise EvaluationError(f"query {ranked.query_id!r} has no gold label")
        position = ranked.position_of(query.gold_doc_id)
        if position is not None and position <= k:
            hits += 1
    return hits / len(reranked)


def speedup_factor(latency_before_s: float, latency_after_s: float) -> float:
    if latency_before_s <= 0 or latency_after_s <= 0:
        raise EvaluationError(
            f"latencies must be > 0, got {latency_before_s} and {latency_after_s}"
        )
    return latency_before_s / latency_after_s


def modeled_query_latency(
    trace: "SelectionTrace", model: CostModel, bidirectional: bool
) -> float:
    """Analytic latency of one query's selection.

    Sequential strategies pay for every call in turn. Round-based strategies
    pay ceil(calls_in_round / parallel_width) call slots per round.
    """
    calls_per_pair = 2 if bidirectional else 1
    if trace.sequential:
        depth = trace.comparisons_used * calls_per_pair
    else:
        depth = sum(
            math.ceil(size * calls_per_pair / model.parallel_width)
            for size in trace.round_sizes
        )
    return depth * model.per_call_seconds()


def _mean(values: Sequence[float]) -> float:
    return float(sum(values) / len(values)) if values else 0.0


def build_report(
    reranked: Sequence[RankedList],
    traces: Optional[Mapping[str, "SelectionTrace"]],
    latencies: Optional[Mapping[str, float]],
    config: "RunConfig",
    *,
    queries: Mapping[str, Query],
    setup: str = "",
    metadata: Optional[Mapping[str, Any]] = None,
    logger: Optional[logging.Logger] = _logger,
) -> EvalReport:
    """Aggregate one configuration's run into a report.

    ``traces`` and ``latencies`` may be None for a retriever-only baseline.
    """
    query_ids = [r.query_id for r in reranked]
    id_set = set(query_ids)
    if len(id_set) != len(query_ids):
        raise QuerySetMismatchError("reranked lists contain duplicate query ids")
    if traces is not None and set(traces) != id_set:
        raise QuerySetMismatchError(
            f"traces cover {len(traces)} queries, reranked lists cover {len(id_set)}"
        )
    if latencies is not None and set(latencies) != id_set:
        raise QuerySetMismatchError(
            f"latencies cover {len(latencies)} queries, reranked lists cover {len(id_set)}"
        )
    unknown = sorted(id_set - set(queries))
    if unknown:
        raise QuerySetMismatchError(f"queries missing from the query set: {unknown[:5]}")

    labeled = [r for r in reranked if queries[r.query_id].gold_doc_id is not None]
    if len(labeled) < len(reranked):
        logger.warning(
            f"{len(reranked) - len(labeled)} unlabeled queries excluded from recall"
        )
    recall = (
        {k: recall_at_k(labeled, queries, k) for k in sorted(set(config.recall_ks))}
        if labeled
        else {}
    )

    trace_list = [traces[qid] for qid in sorted(id_set)] if traces is not None else []
    latency_list = [latencies[qid] for qid in sorted(id_set)] if latencies is not None else []
    records = [record for trace in trace_list for record in trace.records]
    undecided = sum(1 for record in records if record.outcome.winner == Slot.UNDECIDED)
    bidirectional = config.selection.order_policy == "both_directions"

    return EvalReport(
        recall_at=recall,
        query_count=len(reranked),
        labeled_query_count=len(labeled),
        mean_latency_s=_mean(latency_list),
        p50_latency_s=nearest_rank(latency_list, 50),
        p95_latency_s=nearest_rank(latency_list, 95),
        modeled_latency_mean_s=_mean(
            [modeled_query_latency(t, config.cost_model, bidirectional) for t in trace_list]
        ),
        comparisons_per_query_mean=_mean([t.comparisons_used for t in trace_list]),
        backend_calls_per_query_mean=_mean([t.backend_calls for t in trace_list]),
        undecided_rate=undecided / len(records) if records else 0.0,
        degraded_count=sum(1 for t in trace_list if t.degraded),
        config_fingerprint=config.fingerprint(),
        setup=setup or config.setup,
        metadata=dict(metadata or {}),
    )


def calibrate_cost_model(
    records: Iterable["ComparisonRecord"],
    base: CostModel = CostModel(),
    logger: Optional[logging.Logger] = _logger,
) -> CostModel:
    """Least-squares fit of latency = t_prefill_s + output_tokens * t_token_s.

    Negative coefficients are clipped to zero. With a single distinct token
    count the intercept is not identifiable and all latency goes to t_token_s.
    """
    rows = [(r.outcome.output_tokens, r.outcome.latency_seconds) for r in records]
    if not rows:
        raise CalibrationError("no comparison records to calibrate from")
    tokens = np.array([t for t, _ in rows], dtype=float)
    latency = np.array([s for _, s in rows], dtype=float)

    if len(np.unique(tokens)) < 2:
        logger.warning(
            "All records share one output-token count; attributing latency to t_token_s"
        )
        t_prefill = 0.0
        t_token = float(latency.mean() / max(tokens[0], 1.0))
    else:
        design = np.column_stack([np.ones_like(tokens), tokens])
        (t_prefill, t_token), *_ = np.linalg.lstsq(design, latency, rcond=None)
        t_prefill, t_token = float(max(t_prefill, 0.0)), float(max(t_token, 0.0))

    logger.debug(f"Calibrated t_prefill_s={t_prefill:.6f} t_token_s={t_token:.6f} from {len(rows)} records")
    return CostModel(
        t_prefill_s=t_prefill,
        t_token_s=t_token,
        tokens_out=base.tokens_out,
        parallel_width=base.parallel_width,
    )


LEDGER_TAIL = (
    "latency_s",
    "latency_median_s",
    "modeled_latency_s",
    "comparisons_per_query",
    "speedup_factor",
    "cumulative_speedup",
)


def ledger_row(
    report: EvalReport,
    recall_ks: Sequence[int],
    speedup: Optional[float] = None,
    cumulative: Optional[float] = None,
) -> Dict[str, Any]:
    """One CSV row shaped like the optimization ledger; missing factors stay blank."""
    row: Dict[str, Any] = {"setup": report.setup}
    for k in recall_ks:
        value = report.recall_at.get(k)
        row[f"recall@{k}"] = "" if value is None else f"{value:.4f}"
    row["latency_s"] = f"{report.mean_latency_s:.6f}"
    row["latency_median_s"] = f"{report.p50_latency_s:.6f}"
    row["modeled_latency_s"] = f"{report.modeled_latency_mean_s:.6f}"
    row["comparisons_per_query"] = f"{report.comparisons_per_query_mean:.4f}"
    row["speedup_factor"] = "" if speedup is None else f"{speedup:.4f}"
    row["cumulative_speedup"] = "" if cumulative is None else f"{cumulative:.4f}"
    return row


def write_ledger_csv(
    rows: Sequence[Mapping[str, Any]], recall_ks: Sequence[int], path: Union[str, Path]
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = ["setup", *(f"recall@{k}" for k in recall_ks), *LEDGER_TAIL]
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def write_report_json(reports: Union[EvalReport, Sequence[EvalReport]], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(reports, EvalReport):
        text = reports.to_json()
    else:
        text = json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True)
    path.write_text(text + "\n", encoding="utf-8")
