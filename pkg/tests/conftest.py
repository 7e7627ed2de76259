import numpy as np
import pytest

from multirem.model import EventDataset, Message, potential_receivers


def make_dataset(rng, n_actors=5, n_messages=8, n_covariates=2):
    """Small random dataset with valid receiver sets."""
    messages = []
    for _ in range(n_messages):
        sender = int(rng.integers(n_actors))
        slots = potential_receivers(sender, n_actors)
        size = int(rng.integers(1, n_actors - 1))
        receivers = frozenset(int(r) for r in rng.choice(slots, size, replace=False))
        covariates = rng.standard_normal((n_actors - 1, n_covariates))
        messages.append(Message(sender, receivers, covariates))
    return EventDataset(n_actors, tuple(messages), n_covariates)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
