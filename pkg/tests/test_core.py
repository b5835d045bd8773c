import json
import warnings
from unittest.mock import Mock

import pytest

from prprank.base import (
    ConfigError,
    DuplicateIdError,
    IngestError,
    LongDocumentWarning,
    UnresolvedReferenceError,
)
from prprank.core import (
    Candidate,
    Dataset,
    Document,
    Provenance,
    Query,
    RankedList,
    load_corpus,
    load_queries,
    load_relevance,
    load_run,
    rank_rows,
    run_rows,
    truncate_top_k,
    write_jsonl,
)


def write_lines(path, rows):
    path.write_text("\n".join(json.dumps(row) for row in rows) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def corpus():
    return {
        doc_id: Document(id=doc_id, text=f"text of {doc_id}")
        for doc_id in ("d1", "d2", "d3", "d4")
    }


def ranked_of(n: int) -> RankedList:
    return RankedList(
        query_id="q1",
        candidates=[Candidate(f"d{i}", float(n - i), i) for i in range(1, n + 1)],
    )


class TestLoadCorpus:
    """Test corpus ingestion."""

    def test_well_formed_lines(self, tmp_path):
        """Test that every well-formed line becomes a document."""
        path = write_lines(
            tmp_path / "corpus.jsonl",
            [{"id": "d1", "text": "alpha", "token_count": 1}, {"id": "d2", "text": "beta"}],
        )
        corpus = load_corpus(path)
        assert len(corpus) == 2
        assert corpus["d1"].token_count == 1

    def test_missing_token_count_left_unset(self, tmp_path):
        """Test that token_count is optional."""
        path = write_lines(tmp_path / "corpus.jsonl", [{"id": "d1", "text": "alpha beta"}])
        document = load_corpus(path)["d1"]
        assert document.token_count is None
        assert document.approx_tokens == 2

    def test_duplicate_id_names_line(self, tmp_path):
        """Test that a repeated id is rejected with the line of the repeat."""
        path = write_lines(
            tmp_path / "corpus.jsonl",
            [
                {"id": "d1", "text": "alpha"},
                {"id": "d2", "text": "beta"},
                {"id": "d1", "text": "gamma"},
            ],
        )
        with pytest.raises(DuplicateIdError) as exc_info:
            load_corpus(path)
        assert exc_info.value.line_number == 3
        assert ":3:" in str(exc_info.value)

    def test_empty_text_rejected(self, tmp_path):
        """Test that empty text is an ingestion error."""
        path = write_lines(tmp_path / "corpus.jsonl", [{"id": "d1", "text": ""}])
        with pytest.raises(IngestError, match="non-empty"):
            load_corpus(path)

    def test_invalid_json_reports_line(self, tmp_path):
        """Test that malformed JSON names its line."""
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "d1", "text": "alpha"}\n{"id": \n', encoding="utf-8")
        with pytest.raises(IngestError) as exc_info:
            load_corpus(path)
        assert exc_info.value.line_number == 2

    def test_blank_lines_and_unknown_fields_ignored(self, tmp_path):
        """Test that blank lines and extra fields do not matter."""
        path = tmp_path / "corpus.jsonl"
        path.write_text('\n{"id": "d1", "text": "alpha", "source": "kb"}\n\n', encoding="utf-8")
        assert list(load_corpus(path)) == ["d1"]

    def test_long_document_warns(self, tmp_path):
        """Test that documents over the token budget issue a warning by default."""
        path = write_lines(tmp_path / "corpus.jsonl", [{"id": "d1", "text": "one two three four five"}])
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always")
            corpus = load_corpus(path, token_budget=3)

        assert "d1" in corpus
        assert len(w) == 1
        assert issubclass(w[0].category, LongDocumentWarning)
        assert "3-token budget" in str(w[0].message)

    def test_long_document_log_action(self, tmp_path):
        """Test that the log action goes through the logger."""
        path = write_lines(tmp_path / "corpus.jsonl", [{"id": "d1", "text": "one two three four five"}])
        mock_logger = Mock()
        load_corpus(path, token_budget=3, long_document_action="log", logger=mock_logger)

        mock_logger.warning.assert_called_once()
        assert "d1" in mock_logger.warning.call_args[0][0]

    def test_long_document_raise_action(self, tmp_path):
        """Test that the raise action aborts ingestion."""
        path = write_lines(tmp_path / "corpus.jsonl", [{"id": "d1", "text": "one two three four five"}])
        with pytest.raises(IngestError, match="token budget"):
            load_corpus(path, token_budget=3, long_document_action="raise")

    def test_missing_file(self, tmp_path):
        """Test that a missing file is an ingestion error."""
        with pytest.raises(IngestError, match="cannot open"):
            load_corpus(tmp_path / "absent.jsonl")


class TestLoadQueries:
    """Test query ingestion."""

    def test_gold_labels_optional(self, tmp_path, corpus):
        """Test that unlabeled queries load with no gold."""
        path = write_lines(
            tmp_path / "queries.jsonl",
            [{"id": "q1", "text": "reset", "gold_doc_id": "d2"}, {"id": "q2", "text": "refund"}],
        )
        queries = load_queries(path, corpus)
        assert queries["q1"].gold_doc_id == "d2"
        assert queries["q2"].gold_doc_id is None

    def test_unresolved_gold(self, tmp_path, corpus):
        """Test that a gold label outside the corpus is rejected."""
        path = write_lines(tmp_path / "queries.jsonl", [{"id": "q1", "text": "x", "gold_doc_id": "d9"}])
        with pytest.raises(UnresolvedReferenceError, match="d9"):
            load_queries(path, corpus)

    def test_duplicate_query(self, tmp_path):
        """Test that repeated query ids are rejected."""
        path = write_lines(
            tmp_path / "queries.jsonl", [{"id": "q1", "text": "a"}, {"id": "q1", "text": "b"}]
        )
        with pytest.raises(DuplicateIdError):
            load_queries(path)


class TestLoadRun:
    """Test retriever run ingestion."""

    def test_sorted_by_score(self, tmp_path, corpus):
        """Test that candidates are ordered by descending score with ranks 1..n."""
        path = write_lines(
            tmp_path / "run.jsonl",
            [
                {"query_id": "q1", "doc_id": "d1", "score": 0.9},
                {"query_id": "q1", "doc_id": "d2", "score": 0.7},
                {"query_id": "q1", "doc_id": "d3", "score": 0.8},
            ],
        )
        (ranked,) = load_run(path, corpus)
        assert ranked.doc_ids == ["d1", "d3", "d2"]
        assert [c.initial_rank for c in ranked.candidates] == [1, 2, 3]
        assert ranked.provenance == Provenance.RETRIEVER

    def test_equal_scores_break_by_doc_id(self, tmp_path, corpus):
        """Test that ties are ordered lexicographically by doc_id."""
        path = write_lines(
            tmp_path / "run.jsonl",
            [
                {"query_id": "q1", "doc_id": "d2", "score": 0.5},
                {"query_id": "q1", "doc_id": "d1", "score": 0.5},
            ],
        )
        (ranked,) = load_run(path, corpus)
        assert ranked.doc_ids == ["d1", "d2"]

    def test_unresolved_doc(self, tmp_path, corpus):
        """Test that run rows must reference corpus documents."""
        path = write_lines(tmp_path / "run.jsonl", [{"query_id": "q1", "doc_id": "missing", "score": 1}])
        with pytest.raises(UnresolvedReferenceError, match="missing"):
            load_run(path, corpus)

    def test_duplicate_pair(self, tmp_path, corpus):
        """Test that a (query, doc) pair may appear once."""
        path = write_lines(
            tmp_path / "run.jsonl",
            [
                {"query_id": "q1", "doc_id": "d1", "score": 0.5},
                {"query_id": "q1", "doc_id": "d1", "score": 0.4},
            ],
        )
        with pytest.raises(DuplicateIdError):
            load_run(path, corpus)

    def test_non_numeric_score(self, tmp_path, corpus):
        """Test that scores must be numbers."""
        path = write_lines(tmp_path / "run.jsonl", [{"query_id": "q1", "doc_id": "d1", "score": "high"}])
        with pytest.raises(IngestError, match="score"):
            load_run(path, corpus)

    @pytest.mark.parametrize("literal", ["NaN", "Infinity", "-Infinity"])
    def test_non_finite_score(self, tmp_path, corpus, literal):
        """Test that NaN and infinite scores are rejected with their line."""
        path = tmp_path / "run.jsonl"
        path.write_text(
            '{"query_id": "q1", "doc_id": "d1", "score": 0.5}\n'
            f'{{"query_id": "q1", "doc_id": "d2", "score": {literal}}}\n',
            encoding="utf-8",
        )
        with pytest.raises(IngestError, match="finite") as exc_info:
            load_run(path, corpus)
        assert exc_info.value.line_number == 2

    def test_independent_of_line_order(self, tmp_path, corpus):
        """Test that shuffling run lines gives identical lists."""
        rows = [
            {"query_id": q, "doc_id": d, "score": s}
            for q, d, s in [
                ("q2", "d1", 0.1),
                ("q1", "d4", 0.4),
                ("q1", "d2", 0.9),
                ("q2", "d3", 0.8),
                ("q1", "d3", 0.4),
            ]
        ]
        forward = load_run(write_lines(tmp_path / "a.jsonl", rows), corpus)
        backward = load_run(write_lines(tmp_path / "b.jsonl", rows[::-1]), corpus)
        assert forward == backward
        assert [r.query_id for r in forward] == ["q1", "q2"]
        for ranked in forward:
            scores = [c.retriever_score for c in ranked.candidates]
            assert scores == sorted(scores, reverse=True)


class TestTruncateTopK:
    """Test Top-K truncation."""

    def test_keeps_leading_candidates(self):
        """Test that K=5 of 25 keeps initial ranks 1..5."""
        truncated = truncate_top_k(ranked_of(25), 5)
        assert [c.initial_rank for c in truncated.candidates] == [1, 2, 3, 4, 5]
        assert truncated.provenance == Provenance.TRUNCATED

    def test_k_above_length(self):
        """Test that K larger than the list keeps everything."""
        assert truncate_top_k(ranked_of(3), 10).doc_ids == ["d1", "d2", "d3"]

    def test_single_candidate(self):
        """Test the single-candidate identity."""
        assert truncate_top_k(ranked_of(1), 1).doc_ids == ["d1"]

    def test_idempotent(self):
        """Test that truncating twice equals truncating once."""
        once = truncate_top_k(ranked_of(12), 4)
        assert truncate_top_k(once, 4) == once

    def test_k_must_be_positive(self):
        """Test that K=0 is a configuration error."""
        with pytest.raises(ConfigError):
            truncate_top_k(ranked_of(3), 0)


class TestDomainTypes:
    """Test invariants of the data model."""

    def test_duplicate_candidates_rejected(self):
        """Test that a ranked list cannot repeat a document."""
        with pytest.raises(ValueError, match="duplicate"):
            RankedList("q1", [Candidate("d1", 1.0, 1), Candidate("d1", 0.5, 2)])

    def test_initial_rank_positive(self):
        """Test that ranks are 1-based."""
        with pytest.raises(ValueError):
            Candidate("d1", 1.0, 0)

    def test_position_of(self):
        """Test 1-based lookups."""
        ranked = ranked_of(4)
        assert ranked.position_of("d3") == 3
        assert ranked.position_of("d9") is None

    def test_relevance_falls_back_to_gold(self, corpus):
        """Test that missing relevance rows are derived from gold labels."""
        dataset = Dataset(
            corpus=corpus,
            queries={"q1": Query("q1", "x", gold_doc_id="d2"), "q2": Query("q2", "y", "d1")},
            runs=(rank_rows("q1", [("d1", 0.9), ("d2", 0.5)]), rank_rows("q2", [("d1", 0.3)])),
            relevance={"q2": {"d1": 7.0}},
        )
        relevance = dataset.relevance_map()
        assert relevance["q1"] == {"d1": 0.0, "d2": 1.0}
        assert relevance["q2"] == {"d1": 7.0}

    def test_relevance_file(self, tmp_path):
        """Test relevance ingestion grouped by query."""
        path = write_lines(
            tmp_path / "relevance.jsonl",
            [
                {"query_id": "q1", "doc_id": "d1", "relevance": 2},
                {"query_id": "q1", "doc_id": "d2", "relevance": 0.5},
            ],
        )
        assert load_relevance(path) == {"q1": {"d1": 2.0, "d2": 0.5}}


class TestRunExport:
    """Test exporting reranked lists as a run file."""

    def test_reranked_order_survives_reingestion(self, tmp_path, corpus):
        """Test that exported scores reproduce the reranked order."""
        ranked = ranked_of(4)
        reordered = ranked.with_candidates(
            [ranked.candidates[i] for i in (2, 0, 3, 1)], Provenance.RERANKED
        )
        path = tmp_path / "reranked.jsonl"
        write_jsonl(path, run_rows([reordered]))

        (reloaded,) = load_run(path, corpus)
        assert reloaded.doc_ids == ["d3", "d1", "d4", "d2"]
