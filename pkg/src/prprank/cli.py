"""
Command line entry point.

    prprank rerank --config run.json
    prprank sweep-topk --config run.json --k 25 10 5
    prprank ladder --config run.json --steps ladder.json
    prprank select-prompt --config run.json
    prprank calibrate-cost --records out/traces.jsonl
    prprank gen-synthetic --output data/ --num-docs 5000 --num-queries 500
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from prprank.base import ConfigError, RerankError
from prprank.bench import (
    LadderStep,
    execute,
    ladder,
    load_dataset,
    sweep_top_k,
    write_outputs,
)
from prprank.comparator import ComparisonRecord
from prprank.config import ComparatorKind, RunConfig
from prprank.core import iter_jsonl
from prprank.evaluation import CostModel, calibrate_cost_model
from prprank.prompt_select import build_labeled_pairs, select_prompt
from prprank.prompts import load_templates
from prprank.remote import CompletionClient
from prprank.synthetic import SyntheticSpec, generate_synthetic, write_synthetic
from prprank.utils import setup_logger

_logger = setup_logger(__name__)


def _add_common(parser: argparse.ArgumentParser, *, config_required: bool = True) -> None:
    parser.add_argument("--config", type=Path, required=config_required, help="Run config (JSON)")
    parser.add_argument("--seed", type=int, default=None, help="Override the config seed")
    parser.add_argument("--workers", type=int, default=None, help="Queries reranked concurrently")
    parser.add_argument("--output", type=Path, default=None, help="Output directory")


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prprank", description="Pairwise reranking experiments and latency ledger"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    _add_common(commands.add_parser("rerank", help="Rerank a run and report recall and latency"))

    sweep = commands.add_parser("sweep-topk", help="One run per Top-K value")
    _add_common(sweep)
    sweep.add_argument("--k", type=int, nargs="+", required=True, help="Top-K values to sweep")

    steps = commands.add_parser("ladder", help="Cumulative optimization ladder")
    _add_common(steps)
    steps.add_argument(
        "--steps",
        type=Path,
        required=True,
        help='JSON array of {"name": str, "changes": {"dotted.path": value}}',
    )

    prompt = commands.add_parser("select-prompt", help="Pick the most accurate prompt template")
    _add_common(prompt)
    prompt.add_argument("--templates", type=Path, default=None, help="Template file (bundled set when omitted)")
    prompt.add_argument("--pairs-per-query", type=int, default=1)

    calibrate = commands.add_parser("calibrate-cost", help="Fit the cost model to logged comparisons")
    _add_common(calibrate, config_required=False)
    calibrate.add_argument("--records", type=Path, required=True, help="traces.jsonl from a run")

    synthetic = commands.add_parser("gen-synthetic", help="Write a seeded synthetic dataset")
    synthetic.add_argument("--output", type=Path, required=True, help="Output directory")
    synthetic.add_argument("--seed", type=int, default=0)
    synthetic.add_argument("--num-docs", type=int, default=5000)
    synthetic.add_argument("--num-queries", type=int, default=500)
    synthetic.add_argument("--shortlist", type=int, default=25)
    synthetic.add_argument("--gold-top-k", type=int, default=5)
    synthetic.add_argument("--gold-outside-fraction", type=float, default=0.0)
    synthetic.add_argument("--relevance-margin", type=float, default=0.5)
    return parser


def _load_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_file(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.output is not None:
        changes["output_dir"] = str(args.output)
    return config.with_changes(changes) if changes else config


def _print_json(data) -> None:
    print(json.dumps(data, indent=2, sort_keys=True))


def _cmd_rerank(args: argparse.Namespace) -> None:
    config = _load_config(args)
    result = execute(config)
    if config.output_dir:
        write_outputs(result, config.output_dir)
    _print_json(result.report.to_dict())


def _cmd_sweep(args: argparse.Namespace) -> None:
    reports = sweep_top_k(_load_config(args), args.k)
    _print_json([r.to_dict() for r in reports])


def _cmd_ladder(args: argparse.Namespace) -> None:
    config = _load_config(args)
    try:
        raw = json.loads(args.steps.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read ladder steps {args.steps}: {e}") from e
    if not isinstance(raw, list):
        raise ConfigError("ladder steps must be a JSON array")
    result = ladder(config, [LadderStep.from_dict(step) for step in raw])
    _print_json(result.rows)


def _cmd_select_prompt(args: argparse.Namespace) -> None:
    config = _load_config(args)
    if config.comparator.kind != ComparatorKind.REMOTE:
        raise ConfigError("select-prompt needs a remote comparator")
    dataset = load_dataset(config)
    pairs = build_labeled_pairs(
        dataset, seed=config.seed, pairs_per_query=args.pairs_per_query, top_k=config.top_k
    )
    templates = load_templates(args.templates or config.templates_path)
    with CompletionClient(config.comparator.remote.with_env_overrides()) as client:
        selection = select_prompt(templates, pairs, client, workers=config.workers)
    report = selection.to_dict()
    report["pair_count"] = len(pairs)
    if config.output_dir:
        path = Path(config.output_dir) / "prompt_selection.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _print_json(report)


def _cmd_calibrate(args: argparse.Namespace) -> None:
    base = _load_config(args).cost_model if args.config else CostModel()
    records = [ComparisonRecord.from_dict(row) for _, row in iter_jsonl(args.records)]
    model = calibrate_cost_model(records, base)
    _print_json(
        {
            "t_prefill_s": model.t_prefill_s,
            "t_token_s": model.t_token_s,
            "tokens_out": model.tokens_out,
            "parallel_width": model.parallel_width,
            "records": len(records),
        }
    )


def _cmd_gen_synthetic(args: argparse.Namespace) -> None:
    spec = SyntheticSpec(
        num_docs=args.num_docs,
        num_queries=args.num_queries,
        shortlist_size=args.shortlist,
        gold_top_k=args.gold_top_k,
        gold_outside_fraction=args.gold_outside_fraction,
        relevance_margin=args.relevance_margin,
        seed=args.seed,
    )
    paths = write_synthetic(generate_synthetic(spec), args.output)
    _print_json({name: str(path) for name, path in paths.items()})


_COMMANDS = {
    "rerank": _cmd_rerank,
    "sweep-topk": _cmd_sweep,
    "ladder": _cmd_ladder,
    "select-prompt": _cmd_select_prompt,
    "calibrate-cost": _cmd_calibrate,
    "gen-synthetic": _cmd_gen_synthetic,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_arg_parser().parse_args(argv)
    _logger.debug(f"Running {args.command}")
    try:
        _COMMANDS[args.command](args)
    except RerankError as e:
        print(f"prprank {args.command}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
