"""
Experiment pipelines: rerank every query of a run, the Top-K sweep and the
cumulative optimization ladder.

Queries are independent and processed by a worker pool; results are ordered
by query id before reporting so output never depends on scheduling. Only
the reranking stage is timed, ingestion is not.
"""

from __future__ import annotations

import contextlib
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

from prprank.base import (
    ConfigError,
    IngestError,
    QueryFailedError,
    RerankError,
    RerankExceptionGroup,
)
from prprank.comparator import (
    ComparisonBackend,
    PairwiseComparator,
    RemoteBackend,
    SimulatedBackend,
)
from prprank.config import ComparatorKind, LatencySource, RunConfig
from prprank.core import (
    Dataset,
    Provenance,
    Query,
    RankedList,
    load_corpus,
    load_queries,
    load_relevance,
    load_run,
    run_rows,
    truncate_top_k,
    write_jsonl,
)
from prprank.evaluation import (
    EvalReport,
    build_report,
    ledger_row,
    write_ledger_csv,
    write_report_json,
)
from prprank.prompts import get_template, load_templates
from prprank.remote import CompletionClient
from prprank.selection import SelectionStrategy, SelectionTrace, StopReason, run_selection
from prprank.utils import setup_logger

_logger = setup_logger(__name__)


@dataclass(frozen=True)
class QueryOutcome:
    query_id: str
    reranked: RankedList
    trace: SelectionTrace
    latency_s: float


@dataclass(frozen=True)
class PipelineResult:
    report: EvalReport
    outcomes: List[QueryOutcome]


@dataclass(frozen=True)
class LadderStep:
    """A named set of dotted-path config changes applied on top of the previous stage."""

    name: str
    changes: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "LadderStep":
        if "name" not in data:
            raise ConfigError("ladder step needs a name")
        changes = data.get("changes", {})
        if not isinstance(changes, Mapping):
            raise ConfigError(f"changes of ladder step {data['name']!r} must be an object")
        return cls(name=str(data["name"]), changes=dict(changes))


@dataclass(frozen=True)
class Ledger:
    reports: List[EvalReport]
    rows: List[Dict[str, Any]]
    recall_ks: List[int]
    step_factors: List[Optional[float]]
    cumulative_factors: List[Optional[float]]

    def write_csv(self, path: Union[str, Path]) -> None:
        write_ledger_csv(self.rows, self.recall_ks, path)


def load_dataset(config: RunConfig, logger: Optional[logging.Logger] = _logger) -> Dataset:
    """Load every input file named by the config."""
    missing = [
        name
        for name in ("corpus_path", "queries_path", "run_path")
        if getattr(config, name) is None
    ]
    if missing:
        raise ConfigError(f"config is missing input paths: {missing}")
    corpus = load_corpus(
        config.corpus_path,
        token_budget=config.token_budget,
        long_document_action=config.long_document_action,
        logger=logger,
    )
    queries = load_queries(config.queries_path, corpus, logger=logger)
    runs = load_run(config.run_path, corpus, logger=logger)
    unknown = [r.query_id for r in runs if r.query_id not in queries]
    if unknown:
        raise IngestError(
            f"run references {len(unknown)} unknown queries: {unknown[:5]}", config.run_path
        )
    unranked = len(queries) - len(runs)
    if unranked:
        logger.warning(f"{unranked} queries have no retriever candidates and are skipped")
    relevance = load_relevance(config.relevance_path) if config.relevance_path else None
    return Dataset(corpus=corpus, queries=queries, runs=tuple(runs), relevance=relevance)


@contextlib.contextmanager
def open_backend(config: RunConfig, dataset: Dataset) -> Iterator[ComparisonBackend]:
    """Build the configured backend; a remote client is closed on exit."""
    if config.comparator.kind == ComparatorKind.SIMULATED:
        yield SimulatedBackend(
            dataset.relevance_map(),
            config.comparator.bias_model(config.seed),
            config.cost_model if config.comparator.synthesize_latency else None,
        )
        return
    template = get_template(config.prompt, load_templates(config.templates_path))
    with CompletionClient(config.comparator.remote.with_env_overrides()) as client:
        yield RemoteBackend(client, template, dataset.corpus)


def _rerank_query(
    ranked: RankedList,
    query: Query,
    comparator: PairwiseComparator,
    config: RunConfig,
    logger: Optional[logging.Logger],
) -> QueryOutcome:
    truncated = truncate_top_k(ranked, config.top_k)
    start = time.perf_counter()
    prefix, trace = run_selection(truncated, query, comparator, config.selection, logger=logger)
    wall_clock = time.perf_counter() - start
    if trace.stop_reason == StopReason.ERROR:
        raise QueryFailedError(query.id, trace.failure or RerankError(trace.error))

    if config.selection.strategy == SelectionStrategy.NONE:
        latency = 0.0
    elif config.comparator.effective_latency_source == LatencySource.WALL_CLOCK:
        latency = wall_clock
    else:
        latency = sum(record.outcome.latency_seconds for record in trace.records)

    reranked = ranked.with_candidates(
        prefix.candidates + ranked.candidates[len(truncated):], Provenance.RERANKED
    )
    return QueryOutcome(query.id, reranked, trace, latency)


def rerank_queries(
    config: RunConfig,
    dataset: Dataset,
    backend: ComparisonBackend,
    logger: Optional[logging.Logger] = _logger,
) -> List[QueryOutcome]:
    """Rerank every query of the run; failures are raised together once all queries ran."""
    comparator = PairwiseComparator(backend, config.selection.order_policy, logger=logger)
    runs = sorted(dataset.runs, key=lambda r: r.query_id)

    def attempt(ranked: RankedList) -> Union[QueryOutcome, QueryFailedError]:
        try:
            return _rerank_query(ranked, dataset.queries[ranked.query_id], comparator, config, logger)
        except QueryFailedError as e:
            return e
        except RerankError as e:
            return QueryFailedError(ranked.query_id, e)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(attempt, runs))
    else:
        results = []
        for ranked in runs:
            results.append(attempt(ranked))
            if isinstance(results[-1], QueryFailedError):
                break

    failures = [r for r in results if isinstance(r, QueryFailedError)]
    if failures:
        failures.sort(key=lambda e: e.query_id)
        raise RerankExceptionGroup(
            f"Reranking failed for {len(failures)} queries: {[e.query_id for e in failures[:5]]}",
            failures,
        )
    outcomes = [r for r in results if isinstance(r, QueryOutcome)]
    logger.debug(f"Reranked {len(outcomes)} queries")
    return outcomes


def _report_metadata(config: RunConfig, backend: ComparisonBackend) -> Dict[str, Any]:
    metadata: Dict[str, Any] = dict(backend.metadata)
    metadata.update(
        {
            "strategy": config.selection.strategy.value,
            "goal_m": config.selection.goal_m,
            "order_policy": config.selection.order_policy.value,
            "top_k": config.top_k,
            "prompt": backend.prompt_name,
            "latency_source": config.comparator.effective_latency_source.value,
        }
    )
    return metadata


def execute(
    config: RunConfig,
    dataset: Optional[Dataset] = None,
    backend: Optional[ComparisonBackend] = None,
    logger: Optional[logging.Logger] = _logger,
) -> PipelineResult:
    """Run the pipeline and keep per-query outcomes alongside the report."""
    if config.comparator.kind == ComparatorKind.REMOTE and backend is None:
        config.validate_prompt()
    dataset = dataset if dataset is not None else load_dataset(config, logger=logger)

    with contextlib.ExitStack() as stack:
        if backend is None:
            backend = stack.enter_context(open_backend(config, dataset))
        outcomes = rerank_queries(config, dataset, backend, logger=logger)
        passthrough = config.selection.strategy == SelectionStrategy.NONE
        report = build_report(
            [o.reranked for o in outcomes],
            None if passthrough else {o.query_id: o.trace for o in outcomes},
            None if passthrough else {o.query_id: o.latency_s for o in outcomes},
            config,
            queries=dataset.queries,
            setup=config.setup,
            metadata=_report_metadata(config, backend),
            logger=logger,
        )
    return PipelineResult(report=report, outcomes=outcomes)


def write_outputs(result: PipelineResult, output_dir: Union[str, Path]) -> None:
    output_dir = Path(output_dir)
    write_report_json(result.report, output_dir / "report.json")
    write_jsonl(output_dir / "reranked.jsonl", run_rows(o.reranked for o in result.outcomes))
    write_jsonl(
        output_dir / "traces.jsonl",
        (record.to_dict() for o in result.outcomes for record in o.trace.records),
    )


def run_pipeline(
    config: RunConfig,
    dataset: Optional[Dataset] = None,
    backend: Optional[ComparisonBackend] = None,
    logger: Optional[logging.Logger] = _logger,
) -> EvalReport:
    """Truncate, rerank and evaluate every query; writes artifacts when output_dir is set."""
    result = execute(config, dataset, backend, logger=logger)
    if config.output_dir:
        write_outputs(result, config.output_dir)
    return result.report


class _DatasetCache:
    """Reuses loaded inputs across stages that do not change input paths."""

    def __init__(self, dataset: Optional[Dataset], logger: Optional[logging.Logger]):
        self.fixed = dataset
        self.logger = logger
        self._cache: Dict[Tuple[Optional[str], ...], Dataset] = {}

    def get(self, config: RunConfig) -> Dataset:
        if self.fixed is not None:
            return self.fixed
        key = (
            config.corpus_path,
            config.queries_path,
            config.run_path,
            config.relevance_path,
            str(config.token_budget),
        )
        if key not in self._cache:
            self._cache[key] = load_dataset(config, logger=self.logger)
        return self._cache[key]


def _ratio(before: float, after: float) -> Optional[float]:
    if before <= 0 or after <= 0:
        return None
    return before / after


def sweep_top_k(
    config: RunConfig,
    k_values: Sequence[int],
    dataset: Optional[Dataset] = None,
    backend: Optional[ComparisonBackend] = None,
    logger: Optional[logging.Logger] = _logger,
) -> List[EvalReport]:
    """One pipeline run per K with a shared seed; writes a combined CSV when output_dir is set."""
    if not k_values:
        raise ConfigError("sweep needs at least one k value")
    for k in k_values:
        if k < config.selection.goal_m:
            raise ConfigError(f"k={k} is below goal_m={config.selection.goal_m}")

    datasets = _DatasetCache(dataset, logger)
    reports = []
    for k in k_values:
        stage = config.with_changes({"top_k": k, "setup": f"TopK={k}"})
        reports.append(execute(stage, datasets.get(stage), backend, logger=logger).report)

    if config.output_dir:
        base = reports[0].modeled_latency_mean_s
        rows = [
            ledger_row(r, config.recall_ks, _ratio(base, r.modeled_latency_mean_s))
            for r in reports
        ]
        write_ledger_csv(rows, config.recall_ks, Path(config.output_dir) / "sweep_topk.csv")
        write_report_json(reports, Path(config.output_dir) / "sweep_topk.json")
    return reports


def ladder(
    config: RunConfig,
    steps: Sequence[LadderStep],
    dataset: Optional[Dataset] = None,
    backend: Optional[ComparisonBackend] = None,
    logger: Optional[logging.Logger] = _logger,
) -> Ledger:
    """Apply steps cumulatively and report per-step and cumulative modeled speedups.

    The cumulative factor of a stage equals the product of the step factors
    up to it, since both are ratios of the same modeled latencies.
    """
    datasets = _DatasetCache(dataset, logger)
    stage = config.with_changes({"setup": config.setup or "baseline"})
    reports = [execute(stage, datasets.get(stage), backend, logger=logger).report]
    for step in steps:
        stage = stage.with_changes({**step.changes, "setup": step.name})
        reports.append(execute(stage, datasets.get(stage), backend, logger=logger).report)

    base = reports[0].modeled_latency_mean_s
    step_factors: List[Optional[float]] = [None]
    cumulative: List[Optional[float]] = [None]
    for previous, current in zip(reports, reports[1:]):
        step_factors.append(_ratio(previous.modeled_latency_mean_s, current.modeled_latency_mean_s))
        cumulative.append(_ratio(base, current.modeled_latency_mean_s))
    rows = [
        ledger_row(report, config.recall_ks, factor, total)
        for report, factor, total in zip(reports, step_factors, cumulative)
    ]
    ledger_result = Ledger(
        reports=reports,
        rows=rows,
        recall_ks=list(config.recall_ks),
        step_factors=step_factors,
        cumulative_factors=cumulative,
    )
    if config.output_dir:
        ledger_result.write_csv(Path(config.output_dir) / "ladder.csv")
        write_report_json(reports, Path(config.output_dir) / "ladder.json")
    return ledger_result
