import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import numpy as np
import pytest

from lpreward.mdp import TabularMdp


def make_random_mdp(rng, n_states=3, n_actions=2, gamma=0.9, with_reward=True):
    P = rng.random((n_states, n_actions, n_states))
    P /= P.sum(axis=2, keepdims=True)
    mu0 = rng.random(n_states)
    mu0 /= mu0.sum()
    r = rng.uniform(-1, 1, n_states * n_actions) if with_reward else None
    return TabularMdp(P, gamma, mu0, r)


def make_random_policy(rng, n_states, n_actions):
    pi = rng.random((n_states, n_actions)) + 0.05
    return pi / pi.sum(axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
