from .base import (
    ComparatorError,
    ConfigError,
    IngestError,
    IssueAction,
    QueryFailedError,
    RerankError,
    RerankExceptionGroup,
    SelectionError,
)
from .bench import ladder, run_pipeline, sweep_top_k
from .comparator import BiasModel, OrderPolicy, PairwiseComparator, SimulatedBackend
from .config import RunConfig
from .core import load_corpus, load_queries, load_run, truncate_top_k
from .evaluation import CostModel, EvalReport, recall_at_k, speedup_factor
from .prompt_select import evaluate_prompt, select_prompt
from .selection import (
    SelectionConfig,
    SelectionStrategy,
    all_pair_scores,
    sliding_window_pass,
    sliding_window_top_m,
    tournament_select,
)

__all__ = [
    "run_pipeline",
    "sweep_top_k",
    "ladder",
    "RunConfig",
    "SelectionConfig",
    "SelectionStrategy",
    "sliding_window_pass",
    "sliding_window_top_m",
    "tournament_select",
    "all_pair_scores",
    "PairwiseComparator",
    "SimulatedBackend",
    "BiasModel",
    "OrderPolicy",
    "CostModel",
    "EvalReport",
    "recall_at_k",
    "speedup_factor",
    "evaluate_prompt",
    "select_prompt",
    "load_corpus",
    "load_queries",
    "load_run",
    "truncate_top_k",
    "IssueAction",
    "RerankError",
    "RerankExceptionGroup",
    "IngestError",
    "ComparatorError",
    "SelectionError",
    "ConfigError",
    "QueryFailedError",
]
