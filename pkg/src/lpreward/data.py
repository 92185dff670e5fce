"""Offline datasets: trajectory rollouts, empirical occupancies and simulated feedback."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .mdp import TabularMdp, validate_policy


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox stream for a 64-bit seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def derive_rng(*key: int) -> np.random.Generator:
    """Independent Philox stream for a tuple of nonnegative integers."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray  # H + 1
    actions: np.ndarray  # H

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.int64)
        actions = np.asarray(self.actions, dtype=np.int64)
        if states.ndim != 1 or actions.ndim != 1 or states.shape[0] != actions.shape[0] + 1:
            raise ValueError("a trajectory has H + 1 states and H actions")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]


@dataclass(frozen=True)
class TrajectoryDataset:
    """``N`` trajectories of a common horizon, stored as index arrays."""

    states: np.ndarray  # (N, H + 1)
    actions: np.ndarray  # (N, H)
    n_states: int
    n_actions: int

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.int64)
        actions = np.asarray(self.actions, dtype=np.int64)
        if states.ndim != 2 or actions.ndim != 2:
            raise ValueError("states and actions must be 2-d index arrays")
        if states.shape[0] != actions.shape[0] or states.shape[1] != actions.shape[1] + 1:
            raise ValueError("need (N, H + 1) states and (N, H) actions")
        if states.size and (states.min() < 0 or states.max() >= self.n_states):
            raise ValueError("state index out of range")
        if actions.size and (actions.min() < 0 or actions.max() >= self.n_actions):
            raise ValueError("action index out of range")
        object.__setattr__(self, "states", np.ascontiguousarray(states))
        object.__setattr__(self, "actions", np.ascontiguousarray(actions))

    @classmethod
    def from_trajectories(cls, trajs, n_states, n_actions) -> "TrajectoryDataset":
        trajs = list(trajs)
        if not trajs:
            raise ValueError("empty trajectory list; use TrajectoryDataset.empty")
        if len({t.horizon for t in trajs}) != 1:
            raise ValueError("all trajectories must share the horizon")
        return cls(np.stack([t.states for t in trajs]), np.stack([t.actions for t in trajs]),
                   n_states, n_actions)

    @classmethod
    def empty(cls, horizon, n_states, n_actions) -> "TrajectoryDataset":
        return cls(np.zeros((0, horizon + 1), np.int64), np.zeros((0, horizon), np.int64),
                   n_states, n_actions)

    def __len__(self) -> int:
        return self.states.shape[0]

    def __getitem__(self, i) -> Trajectory:
        return Trajectory(self.states[i], self.actions[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def horizon(self) -> int:
        return self.actions.shape[1]

    def take(self, idx) -> "TrajectoryDataset":
        return TrajectoryDataset(self.states[idx], self.actions[idx], self.n_states, self.n_actions)


class FeedbackMode(str, enum.Enum):
    DISCRETE = "discrete"
    CONTINUOUS = "continuous"


@dataclass(frozen=True)
class FeedbackDataset:
    """Queries ``(first[n], second[n], y[n])``.

    Discrete labels are 1 (first preferred) or 2; continuous labels lie in
    [-1, 1] with positive values favouring the first trajectory.
    """

    first: TrajectoryDataset
    second: TrajectoryDataset
    y: np.ndarray
    mode: FeedbackMode = FeedbackMode.DISCRETE

    def __post_init__(self):
        mode = FeedbackMode(self.mode)
        y = np.asarray(self.y, dtype=float).ravel()
        if len(self.first) != len(self.second) or len(self.first) != y.shape[0]:
            raise ValueError("first, second and y must have the same length")
        if self.first.horizon != self.second.horizon:
            raise ValueError("paired trajectories must share the horizon")
        if mode is FeedbackMode.DISCRETE and not np.all(np.isin(y, (1.0, 2.0))):
            raise ValueError("discrete labels must be 1 or 2")
        if mode is FeedbackMode.CONTINUOUS and np.any(np.abs(y) > 1.0):
            raise ValueError("continuous labels must lie in [-1, 1]")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "mode", mode)

    def __len__(self) -> int:
        return self.y.shape[0]

    def take(self, idx) -> "FeedbackDataset":
        return FeedbackDataset(self.first.take(idx), self.second.take(idx), self.y[idx], self.mode)


@dataclass(frozen=True)
class EmpiricalEstimates:
    d_hat: np.ndarray  # (S*A,)
    d_prime_hat: np.ndarray  # (S, A, S)
    K_D: np.ndarray  # (S, S*A)
    gamma: float
    n_trajectories: int
    horizon: int


# --------------------------------------------------------------------------
# sampling


def _cumulative(p):
    c = np.cumsum(p, axis=-1)
    c[..., -1] = np.inf
    return np.ascontiguousarray(c)


def sample_trajectories(mdp: TabularMdp, pi, horizon: int, n: int, rng) -> TrajectoryDataset:
    """``n`` independent rollouts of ``pi`` from ``mu0``."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    pi = validate_policy(pi, mdp.n_states, mdp.n_actions)
    u = rng.random((n, 2 * horizon + 1))
    states, actions = kernels.rollout(_cumulative(mdp.mu0), _cumulative(pi), _cumulative(mdp.P), u)
    return TrajectoryDataset(states, actions, mdp.n_states, mdp.n_actions)


def sample_trajectory(mdp: TabularMdp, pi, horizon: int, rng) -> Trajectory:
    return sample_trajectories(mdp, pi, horizon, 1, rng)[0]


def uniform_policy(n_states: int, n_actions: int) -> np.ndarray:
    return np.full((n_states, n_actions), 1.0 / n_actions)


def sample_query_pairs(mdp: TabularMdp, pi, horizon: int, n_queries: int, rng):
    """``2 * n_queries`` independent rollouts, paired as (0, 1), (2, 3), ..."""
    ds = sample_trajectories(mdp, pi, horizon, 2 * n_queries, rng)
    return ds.take(slice(0, None, 2)), ds.take(slice(1, None, 2))


# --------------------------------------------------------------------------
# estimators


def _counts(ds: TrajectoryDataset, gamma: float):
    return kernels.discounted_counts(ds.states, ds.actions, float(gamma), ds.n_states, ds.n_actions)


def estimate_occupancy(ds: TrajectoryDataset, gamma: float) -> np.ndarray:
    """``(1-gamma)/N * sum_h gamma^h N_h(s,a)``; sums to ``1 - gamma^H``."""
    if len(ds) == 0:
        raise ValueError("empty dataset")
    sa, _ = _counts(ds, gamma)
    return (1 - gamma) * sa / len(ds)


def estimate_transition_occupancy(ds: TrajectoryDataset, gamma: float) -> np.ndarray:
    """``(1-gamma)/N * sum_h gamma^h N_h(s,a,s')`` with shape (S, A, S)."""
    if len(ds) == 0:
        raise ValueError("empty dataset")
    _, sas = _counts(ds, gamma)
    return ((1 - gamma) * sas / len(ds)).reshape(ds.n_states, ds.n_actions, ds.n_states)


def build_K_D(d_hat, d_prime_hat, gamma: float) -> np.ndarray:
    """``K_D[s', (s,a)] = d_hat(s,a) 1{s=s'} - gamma d'_hat(s,a,s')``."""
    S, A, _ = d_prime_hat.shape
    K = -gamma * d_prime_hat.reshape(S * A, S).T
    K[np.repeat(np.arange(S), A), np.arange(S * A)] += np.asarray(d_hat, dtype=float)
    return K


def estimate(ds: TrajectoryDataset, gamma: float) -> EmpiricalEstimates:
    if len(ds) == 0:
        raise ValueError("empty dataset")
    sa, sas = _counts(ds, gamma)
    scale = (1 - gamma) / len(ds)
    d_hat = scale * sa
    d_prime = (scale * sas).reshape(ds.n_states, ds.n_actions, ds.n_states)
    return EmpiricalEstimates(d_hat, d_prime, build_K_D(d_hat, d_prime, gamma), float(gamma),
                              len(ds), ds.horizon)


def truncated_occupancy(mdp: TabularMdp, pi, horizon: int) -> np.ndarray:
    """Exact ``(1-gamma) sum_{h<H} gamma^h P(s_h=s, a_h=a)`` by forward recursion."""
    pi = validate_policy(pi, mdp.n_states, mdp.n_actions)
    rho = mdp.mu0.copy()
    out = np.zeros((mdp.n_states, mdp.n_actions))
    w = 1.0
    for _ in range(horizon):
        joint = rho[:, None] * pi
        out += w * joint
        rho = np.einsum("sa,sat->t", joint, mdp.P)
        w *= mdp.gamma
    return (1 - mdp.gamma) * out.ravel()


# --------------------------------------------------------------------------
# trajectory features and feedback


def vectorize_trajectory(tau: Trajectory, gamma: float, n_states: int, n_actions: int) -> np.ndarray:
    """``psi(s,a) = sum_h gamma^h 1{(s_h, a_h) = (s, a)}``."""
    psi = np.zeros(n_states * n_actions)
    w = 1.0
    for s, a in zip(tau.states[:-1], tau.actions):
        psi[s * n_actions + a] += w
        w *= gamma
    return psi


def psi_matrix(ds: TrajectoryDataset, gamma: float) -> np.ndarray:
    """Row ``n`` is the discounted visitation vector of trajectory ``n``."""
    return kernels.psi_batch(ds.states, ds.actions, float(gamma), ds.n_states, ds.n_actions)


def psi_differences(fb: FeedbackDataset, gamma: float) -> np.ndarray:
    """``psi^1 - psi^2`` per query."""
    return psi_matrix(fb.first, gamma) - psi_matrix(fb.second, gamma)


class EvaluatorModel(str, enum.Enum):
    BTL = "btl"
    GREEDY = "greedy"
    CONTINUOUS = "continuous"


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def generate_feedback(pairs, r_true, model, rng, *, gamma: float, scale: float = 0.2) -> FeedbackDataset:
    """Label trajectory pairs with a simulated evaluator.

    * ``btl``: ``P(y=1) = sigmoid(r_true @ (psi1 - psi2))``
    * ``greedy``: ``y = 1`` iff ``r_true @ psi1 >= r_true @ psi2``
    * ``continuous``: ``y ~ U[0, scale * r_true @ (psi1 - psi2)]`` (endpoints
      swapped for negative gaps), clamped to [-1, 1]
    """
    first, second = pairs
    model = EvaluatorModel(model)
    gap = (psi_matrix(first, gamma) - psi_matrix(second, gamma)) @ np.asarray(r_true, dtype=float)
    if model is EvaluatorModel.BTL:
        u = rng.random(gap.shape[0])
        y = np.where(u < sigmoid(gap), 1.0, 2.0)
        mode = FeedbackMode.DISCRETE
    elif model is EvaluatorModel.GREEDY:
        y = np.where(gap >= 0, 1.0, 2.0)
        mode = FeedbackMode.DISCRETE
    else:
        y = np.clip(rng.random(gap.shape[0]) * scale * gap, -1.0, 1.0)
        mode = FeedbackMode.CONTINUOUS
    return FeedbackDataset(first, second, y, mode)


# --------------------------------------------------------------------------
# JSON lines


def _meta_line(**meta) -> str:
    return json.dumps({"meta": {k: v for k, v in meta.items() if v is not None}})


def write_trajectories(path, ds: TrajectoryDataset, *, gamma=None, seed=None) -> None:
    lines = [_meta_line(n_states=ds.n_states, n_actions=ds.n_actions, horizon=ds.horizon,
                        gamma=gamma, seed=seed)]
    for s, a in zip(ds.states, ds.actions):
        lines.append(json.dumps({"states": s.tolist(), "actions": a.tolist()}))
    Path(path).write_text("\n".join(lines) + "\n")


def _read_lines(path):
    meta, rows = {}, []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        if "meta" in rec:
            meta = rec["meta"]
        else:
            rows.append(rec)
    return meta, rows


def read_trajectories(path, n_states=None, n_actions=None):
    """Returns ``(dataset, meta)``."""
    meta, rows = _read_lines(path)
    n_states = n_states or meta["n_states"]
    n_actions = n_actions or meta["n_actions"]
    if not rows:
        return TrajectoryDataset.empty(meta.get("horizon", 1), n_states, n_actions), meta
    ds = TrajectoryDataset(np.array([r["states"] for r in rows]), np.array([r["actions"] for r in rows]),
                           n_states, n_actions)
    return ds, meta


def write_feedback(path, fb: FeedbackDataset, *, gamma=None, seed=None) -> None:
    lines = [_meta_line(n_states=fb.first.n_states, n_actions=fb.first.n_actions,
                        horizon=fb.first.horizon, mode=fb.mode.value, gamma=gamma, seed=seed)]
    for k in range(len(fb)):
        y = fb.y[k]
        lines.append(json.dumps({
            "states": [fb.first.states[k].tolist(), fb.second.states[k].tolist()],
            "actions": [fb.first.actions[k].tolist(), fb.second.actions[k].tolist()],
            "y": int(y) if fb.mode is FeedbackMode.DISCRETE else float(y),
        }))
    Path(path).write_text("\n".join(lines) + "\n")


def read_feedback(path, n_states=None, n_actions=None):
    """Returns ``(feedback, meta)``."""
    meta, rows = _read_lines(path)
    n_states = n_states or meta["n_states"]
    n_actions = n_actions or meta["n_actions"]
    mode = FeedbackMode(meta.get("mode", "discrete"))
    if not rows:
        e = TrajectoryDataset.empty(meta.get("horizon", 1), n_states, n_actions)
        return FeedbackDataset(e, e, np.zeros(0), mode), meta
    first = TrajectoryDataset(np.array([r["states"][0] for r in rows]),
                              np.array([r["actions"][0] for r in rows]), n_states, n_actions)
    second = TrajectoryDataset(np.array([r["states"][1] for r in rows]),
                               np.array([r["actions"][1] for r in rows]), n_states, n_actions)
    return FeedbackDataset(first, second, np.array([r["y"] for r in rows], dtype=float), mode), meta
