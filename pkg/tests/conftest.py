import numpy as np
import pytest

from aspectmf.data import RatingDataset, TrustNetwork


@pytest.fixture
def tiny_dataset():
    """3 users x 4 items, 8 ratings over a 60-day span."""
    day = 86_400
    rows = [
        (0, 0, 4.0, 0 * day),
        (0, 1, 3.0, 10 * day),
        (0, 2, 5.0, 40 * day),
        (1, 0, 2.0, 5 * day),
        (1, 3, 4.0, 60 * day),
        (2, 1, 1.0, 20 * day),
        (2, 2, 3.0, 30 * day),
        (2, 3, 5.0, 50 * day),
    ]
    users, items, ratings, stamps = zip(*rows)
    return RatingDataset(users, items, ratings, stamps, 3, 4, (1.0, 5.0))


@pytest.fixture
def tiny_trust():
    return TrustNetwork([(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)], 3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
