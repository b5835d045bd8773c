from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from prprank.base import ConfigError, IssueAction, PromptTemplateError
from prprank.comparator import BiasModel
from prprank.core import DEFAULT_TOKEN_BUDGET
from prprank.evaluation import DEFAULT_RECALL_KS, CostModel
from prprank.prompts import DEFAULT_TEMPLATE_NAME, get_template, load_templates
from prprank.remote import RemoteConfig
from prprank.selection import SelectionConfig
from prprank.utils import fingerprint


class ComparatorKind(str, Enum):
    SIMULATED = "simulated"
    REMOTE = "remote"


class LatencySource(str, Enum):
    """Where per-query latency in reports comes from."""

    AUTO = "auto"
    WALL_CLOCK = "wall_clock"
    COMPARATOR = "comparator"


@dataclass
class ComparatorConfig:
    """Configuration for the pairwise comparator"""

    kind: ComparatorKind = field(
        default=ComparatorKind.SIMULATED,
        metadata={"description": "simulated (offline oracle with bias model) or remote (HTTP LLM)"},
    )
    epsilon: float = field(
        default=0.0,
        metadata={"description": "Simulator: probability of a relevance-independent wrong answer"},
    )
    beta: float = field(
        default=0.0,
        metadata={"description": "Simulator: probability of answering slot A regardless of content"},
    )
    synthesize_latency: bool = field(
        default=True,
        metadata={"description": "Simulator: attach cost-model latency to every call"},
    )
    latency_source: LatencySource = field(
        default=LatencySource.AUTO,
        metadata={
            "description": "auto (comparator for simulated, wall_clock for remote), wall_clock or comparator"
        },
    )
    remote: RemoteConfig = field(
        default_factory=RemoteConfig,
        metadata={"description": "HTTP completion adapter settings"},
    )

    def __post_init__(self):
        self.kind = ComparatorKind(self.kind)
        self.latency_source = LatencySource(self.latency_source)
        BiasModel(epsilon=self.epsilon, beta=self.beta)

    def bias_model(self, seed: int) -> BiasModel:
        return BiasModel(epsilon=self.epsilon, beta=self.beta, seed=seed)

    @property
    def effective_latency_source(self) -> LatencySource:
        if self.latency_source != LatencySource.AUTO:
            return self.latency_source
        if self.kind == ComparatorKind.SIMULATED:
            return LatencySource.COMPARATOR
        return LatencySource.WALL_CLOCK


@dataclass
class RunConfig:
    """One reproducible reranking experiment"""

    corpus_path: Optional[str] = field(
        default=None, metadata={"description": "Corpus file (line-delimited JSON)"}
    )
    queries_path: Optional[str] = field(
        default=None, metadata={"description": "Query file (line-delimited JSON)"}
    )
    run_path: Optional[str] = field(
        default=None, metadata={"description": "Retriever run file (line-delimited JSON)"}
    )
    relevance_path: Optional[str] = field(
        default=None,
        metadata={"description": "Hidden relevance for the simulator (gold labels when unset)"},
    )
    templates_path: Optional[str] = field(
        default=None, metadata={"description": "Prompt template file (bundled set when unset)"}
    )
    prompt: str = field(
        default=DEFAULT_TEMPLATE_NAME, metadata={"description": "Prompt template name"}
    )
    top_k: int = field(
        default=5, metadata={"description": "Retriever results passed to the reranker"}
    )
    selection: SelectionConfig = field(
        default_factory=SelectionConfig, metadata={"description": "Selection strategy"}
    )
    comparator: ComparatorConfig = field(
        default_factory=ComparatorConfig, metadata={"description": "Comparator backend"}
    )
    cost_model: CostModel = field(
        default_factory=CostModel, metadata={"description": "Analytic latency model"}
    )
    seed: int = field(default=0, metadata={"description": "Master seed"})
    recall_ks: List[int] = field(
        default_factory=lambda: list(DEFAULT_RECALL_KS),
        metadata={"description": "Cutoffs reported as recall@k"},
    )
    token_budget: int = field(
        default=DEFAULT_TOKEN_BUDGET,
        metadata={"description": "Documents above this many tokens trigger long_document_action"},
    )
    long_document_action: IssueAction = field(
        default=IssueAction.WARN,
        metadata={"description": "warn, log or raise for documents over the token budget"},
    )
    workers: int = field(
        default=1, metadata={"description": "Queries reranked concurrently"}
    )
    output_dir: Optional[str] = field(
        default=None, metadata={"description": "Directory for report, ledger and traces"}
    )
    setup: str = field(default="", metadata={"description": "Label used in report rows"})

    def __post_init__(self):
        self.long_document_action = IssueAction(self.long_document_action)
        self.recall_ks = [int(k) for k in self.recall_ks]
        if self.top_k < 1:
            raise ConfigError(f"top_k must be >= 1, got {self.top_k}")
        if self.top_k < self.selection.goal_m:
            raise ConfigError(
                f"top_k ({self.top_k}) must be >= goal_m ({self.selection.goal_m})"
            )
        if not self.recall_ks or any(k < 1 for k in self.recall_ks):
            raise ConfigError(f"recall_ks must be positive integers, got {self.recall_ks}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        return _build(cls, data, "")

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a JSON object")
        config = cls.from_dict(data)
        base = Path(path).parent
        for name in ("corpus_path", "queries_path", "run_path", "relevance_path", "templates_path"):
            value = getattr(config, name)
            if value is not None and not Path(value).is_absolute():
                setattr(config, name, str(base / value))
        return config

    def to_dict(self) -> Dict[str, Any]:
        return json.loads(json.dumps(asdict(self)))

    def fingerprint(self) -> str:
        """Hash of everything that determines results; paths for outputs, worker counts and headers excluded."""
        data = self.to_dict()
        data.pop("output_dir", None)
        data.pop("workers", None)
        data["selection"].pop("round_workers", None)
        data["comparator"]["remote"].pop("headers", None)
        return fingerprint(data)

    def with_changes(self, changes: Mapping[str, Any]) -> "RunConfig":
        """Apply dotted-path changes such as ``{"selection.order_policy": "as_given"}``."""
        data = self.to_dict()
        for dotted, value in changes.items():
            target = data
            parts = dotted.split(".")
            for part in parts[:-1]:
                if not isinstance(target.get(part), dict):
                    raise ConfigError(f"unknown config path {dotted!r}")
                target = target[part]
            if parts[-1] not in target:
                raise ConfigError(f"unknown config path {dotted!r}")
            target[parts[-1]] = copy.deepcopy(value)
        return RunConfig.from_dict(data)

    def validate_prompt(self) -> None:
        try:
            get_template(self.prompt, load_templates(self.templates_path))
        except PromptTemplateError as e:
            raise ConfigError(str(e)) from e

    def to_markdown_table(self) -> str:
        """Generate markdown table from the config fields including names and default values"""
        markdown = "| Name | Default | Description |\n"
        markdown += "|:------|:------|:------|\n"
        for name, default, description in _describe(self, ""):
            markdown += f"| {name} | {default} | {description} |\n"
        markdown += "\n"
        return markdown


_NESTED = {
    RunConfig: {
        "selection": SelectionConfig,
        "comparator": ComparatorConfig,
        "cost_model": CostModel,
    },
    ComparatorConfig: {"remote": RemoteConfig},
}


def _build(cls: type, data: Mapping[str, Any], prefix: str):
    if not isinstance(data, Mapping):
        raise ConfigError(f"{prefix or 'config'} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys {[prefix + k for k in unknown]}")
    kwargs = {}
    for name, value in data.items():
        nested = _NESTED.get(cls, {}).get(name)
        kwargs[name] = _build(nested, value, f"{prefix}{name}.") if nested else value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {prefix.rstrip('.') or 'config'}: {e}") from e


def _describe(instance: Any, prefix: str):
    for f in fields(instance):
        value = getattr(instance, f.name)
        if is_dataclass(value):
            yield from _describe(value, f"{prefix}{f.name}.")
            continue
        default = value.value if isinstance(value, Enum) else value
        yield f"{prefix}{f.name}", default, f.metadata.get("description", "")
