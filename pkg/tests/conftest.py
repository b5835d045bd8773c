import pytest

from prprank.comparator import BiasModel, OrderPolicy, PairwiseComparator, SimulatedBackend
from prprank.core import Query
from prprank.synthetic import SyntheticSpec, generate_synthetic


@pytest.fixture
def query():
    return Query(id="q1", text="how do I reset my password")


@pytest.fixture
def oracle():
    """Factory for an oracle comparator over the given relevance map."""

    def make(relevance, policy=OrderPolicy.LOWER_RANK_FIRST):
        return PairwiseComparator(SimulatedBackend(relevance, BiasModel()), policy)

    return make


@pytest.fixture(scope="session")
def small_dataset():
    """100 queries, shortlist 25, gold always within the retriever top-5."""
    return generate_synthetic(
        SyntheticSpec(num_docs=500, num_queries=100, shortlist_size=25, gold_top_k=5, seed=7)
    )
