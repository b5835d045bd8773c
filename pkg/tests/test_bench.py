import json
import time

import pytest
from helpers.backends import FailingBackend

from prprank.base import ConfigError, IngestError, QueryFailedError, RerankExceptionGroup
from prprank.bench import (
    LadderStep,
    execute,
    ladder,
    load_dataset,
    run_pipeline,
    sweep_top_k,
)
from prprank.comparator import SimulatedBackend
from prprank.config import RunConfig
from prprank.core import load_run
from prprank.synthetic import SyntheticSpec, generate_synthetic, write_synthetic


def make_config(**changes) -> RunConfig:
    return RunConfig().with_changes({"top_k": 5, "selection.goal_m": 1, **changes})


class TestRunPipeline:
    """Test the end-to-end rerank pipeline under the simulated comparator."""

    def test_oracle_finds_gold(self, small_dataset):
        """Test that the oracle puts every top-5 gold document first."""
        report = run_pipeline(make_config(), dataset=small_dataset)
        assert report.recall_at[1] == 1.0
        assert report.query_count == 100
        assert report.comparisons_per_query_mean == 4.0
        assert report.degraded_count == 0

    def test_gold_outside_top_k(self):
        """Test that gold outside the reranked prefix stays outside."""
        dataset = generate_synthetic(
            SyntheticSpec(num_docs=500, num_queries=100, gold_outside_fraction=0.3, seed=11)
        )
        report = run_pipeline(make_config(), dataset=dataset)
        assert report.recall_at[5] == pytest.approx(0.70)
        assert report.recall_at[1] == pytest.approx(0.70)
        assert report.recall_at[25] == 1.0

    def test_desk_scale_run(self):
        """Test 5,000 documents and 500 queries end to end within ten seconds."""
        start = time.perf_counter()
        dataset = generate_synthetic(
            SyntheticSpec(num_docs=5000, num_queries=500, shortlist_size=25, gold_top_k=5, seed=0)
        )
        report = run_pipeline(make_config(), dataset=dataset)
        elapsed = time.perf_counter() - start

        assert report.query_count == 500
        assert report.recall_at[1] == 1.0
        assert report.comparisons_per_query_mean == 4.0
        assert elapsed < 10.0

    def test_deterministic_across_workers(self, small_dataset):
        """Test byte-identical reports for repeated runs and any worker count."""
        config = make_config(**{"comparator.epsilon": 0.2, "comparator.beta": 0.1, "seed": 9})
        reports = [
            run_pipeline(config.with_changes({"workers": workers}), dataset=small_dataset).to_json()
            for workers in (1, 1, 4)
        ]
        assert reports[0] == reports[1] == reports[2]

    def test_reranks_only_prefix(self, small_dataset):
        """Test that candidates after top_k keep retriever order."""
        result = execute(make_config(), dataset=small_dataset)
        runs = {r.query_id: r for r in small_dataset.runs}
        for outcome in result.outcomes:
            original = runs[outcome.query_id]
            assert len(outcome.reranked) == len(original)
            assert outcome.reranked.doc_ids[5:] == original.doc_ids[5:]
            assert sorted(outcome.reranked.doc_ids[:5]) == sorted(original.doc_ids[:5])

    def test_comparator_latency(self, small_dataset):
        """Test that simulated latency is the cost model per call."""
        report = run_pipeline(make_config(), dataset=small_dataset)
        assert report.mean_latency_s == pytest.approx(4 * 0.035)
        assert report.modeled_latency_mean_s == pytest.approx(4 * 0.035)
        assert report.metadata["latency_source"] == "comparator"
        assert report.metadata["backend"] == "simulated"

    def test_retriever_only(self, small_dataset):
        """Test the passthrough baseline."""
        report = run_pipeline(make_config(**{"selection.strategy": "none"}), dataset=small_dataset)
        assert report.comparisons_per_query_mean == 0.0
        assert report.mean_latency_s == 0.0
        assert report.recall_at[5] == 1.0

    def test_outputs_written(self, small_dataset, tmp_path):
        """Test report, reranked run and trace files."""
        config = make_config(output_dir=str(tmp_path / "out"))
        result = execute(config, dataset=small_dataset)
        run_pipeline(config, dataset=small_dataset)

        report = json.loads((tmp_path / "out" / "report.json").read_text(encoding="utf-8"))
        assert report["recall_at"]["1"] == 1.0
        traces = (tmp_path / "out" / "traces.jsonl").read_text(encoding="utf-8").splitlines()
        assert len(traces) == sum(len(o.trace.records) for o in result.outcomes)

        reloaded = load_run(tmp_path / "out" / "reranked.jsonl", small_dataset.corpus)
        assert [r.doc_ids for r in reloaded] == [o.reranked.doc_ids for o in result.outcomes]

    def test_failures_grouped(self, small_dataset):
        """Test that per-query failures are raised together, sorted by query id."""
        config = make_config(workers=4)
        backend = FailingBackend(
            SimulatedBackend(small_dataset.relevance_map()),
            fail_queries=["q000042", "q000007"],
        )
        with pytest.raises(RerankExceptionGroup) as exc_info:
            execute(config, dataset=small_dataset, backend=backend)

        errors = exc_info.value.exceptions
        assert all(isinstance(e, QueryFailedError) for e in errors)
        assert [e.query_id for e in errors] == ["q000007", "q000042"]

    def test_sequential_stops_at_first_failure(self, small_dataset):
        """Test that a single worker aborts on the first failing query."""
        backend = FailingBackend(SimulatedBackend(small_dataset.relevance_map()), fail_on_call=1)
        with pytest.raises(RerankExceptionGroup) as exc_info:
            execute(make_config(), dataset=small_dataset, backend=backend)
        assert [e.query_id for e in exc_info.value.exceptions] == ["q000000"]
        assert backend.calls == 1


class TestLoadDataset:
    """Test loading every input a config names."""

    def test_unknown_query_in_run(self, tmp_path):
        """Test that run rows for unknown queries are rejected."""
        paths = write_synthetic(
            generate_synthetic(SyntheticSpec(num_docs=60, num_queries=3, seed=0)), tmp_path
        )
        with paths["run"].open("a", encoding="utf-8") as handle:
            handle.write(json.dumps({"query_id": "ghost", "doc_id": "d000001", "score": 1.0}) + "\n")
        with pytest.raises(IngestError, match="unknown queries"):
            load_dataset(RunConfig.from_file(paths["config"]))

    def test_missing_paths(self):
        """Test that inputs must be configured."""
        with pytest.raises(ConfigError, match="corpus_path"):
            load_dataset(RunConfig())


class TestSweepTopK:
    """Test the Top-K sweep."""

    def test_comparison_ratio(self, small_dataset, tmp_path):
        """Test 24 against 4 comparisons per query for K = 25 and 5."""
        config = make_config(output_dir=str(tmp_path))
        reports = sweep_top_k(config, [25, 5], dataset=small_dataset)
        assert [r.setup for r in reports] == ["TopK=25", "TopK=5"]
        assert [r.comparisons_per_query_mean for r in reports] == [24.0, 4.0]
        assert reports[0].comparisons_per_query_mean / reports[1].comparisons_per_query_mean == 6.0
        assert (tmp_path / "sweep_topk.csv").exists()

    def test_single_value(self, small_dataset):
        """Test a one-point sweep."""
        assert len(sweep_top_k(make_config(), [5], dataset=small_dataset)) == 1

    def test_k_below_goal(self, small_dataset):
        """Test that every K must cover goal_m."""
        config = make_config(**{"selection.goal_m": 2})
        with pytest.raises(ConfigError, match="goal_m"):
            sweep_top_k(config, [5, 1], dataset=small_dataset)


class TestLadder:
    """Test the cumulative optimization ladder."""

    def test_step_factors(self, small_dataset, tmp_path):
        """Test exact 2x for one-directional order and 3x for single-token decoding."""
        config = make_config(
            **{
                "selection.order_policy": "both_directions",
                "cost_model.t_prefill_s": 0.0,
                "cost_model.tokens_out": 3,
                "output_dir": str(tmp_path),
            }
        )
        steps = [
            LadderStep("+ One-directional Order", {"selection.order_policy": "lower_rank_first"}),
            LadderStep("+ Constrained Decoding", {"cost_model.tokens_out": 1}),
        ]
        ledger = ladder(config, steps, dataset=small_dataset)

        assert [r.setup for r in ledger.reports] == ["baseline", *[s.name for s in steps]]
        assert ledger.step_factors[0] is None
        assert ledger.step_factors[1] == pytest.approx(2.0, abs=1e-9)
        assert ledger.step_factors[2] == pytest.approx(3.0, abs=1e-9)
        assert ledger.cumulative_factors[2] == pytest.approx(
            ledger.step_factors[1] * ledger.step_factors[2], abs=1e-9
        )
        assert (tmp_path / "ladder.csv").exists()
        assert ledger.rows[2]["speedup_factor"] == "3.0000"

    def test_top_k_step(self, small_dataset):
        """Test that Top-K 25 to 5 is a 6x cut in comparisons."""
        ledger = ladder(
            make_config(top_k=25), [LadderStep("+ TopK", {"top_k": 5})], dataset=small_dataset
        )
        assert ledger.step_factors[1] == pytest.approx(6.0, abs=1e-9)

    def test_empty_steps(self, small_dataset):
        """Test that no steps gives the baseline row only."""
        ledger = ladder(make_config(), [], dataset=small_dataset)
        assert len(ledger.rows) == 1
        assert ledger.rows[0]["setup"] == "baseline"
        assert ledger.rows[0]["cumulative_speedup"] == ""

    def test_step_from_dict(self):
        """Test parsing ladder steps."""
        step = LadderStep.from_dict({"name": "+ bfloat16", "changes": {"comparator.remote.precision": "bfloat16"}})
        assert step.changes == {"comparator.remote.precision": "bfloat16"}
        with pytest.raises(ConfigError):
            LadderStep.from_dict({"changes": {}})
