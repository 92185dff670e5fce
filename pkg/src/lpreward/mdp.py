"""Tabular discounted MDPs, their LPs, and occupancy measures.

State-action vectors are flat with index ``s * n_actions + a``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .lp import LpError, LpProblem, LpStatus, solve_lp

_PROB_TOL = 1e-12


@dataclass(frozen=True)
class TabularMdp:
    P: np.ndarray  # (S, A, S)
    gamma: float
    mu0: np.ndarray
    r: np.ndarray | None = None

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        mu0 = np.asarray(self.mu0, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError("P must have shape (S, A, S)")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=2) - 1.0) > _PROB_TOL):
            raise ValueError("each P(.|s,a) must be a probability vector")
        if mu0.shape != (P.shape[0],) or np.any(mu0 < 0) or abs(mu0.sum() - 1.0) > _PROB_TOL:
            raise ValueError("mu0 must be a probability vector over states")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "gamma", float(self.gamma))
        if self.r is not None:
            r = np.asarray(self.r, dtype=float).ravel()
            if r.shape != (P.shape[0] * P.shape[1],):
                raise ValueError("r must have one entry per state-action pair")
            if np.any(np.abs(r) > 1.0):
                raise ValueError("rewards must lie in [-1, 1]")
            object.__setattr__(self, "r", r)

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]

    @property
    def n_sa(self) -> int:
        return self.P.shape[0] * self.P.shape[1]

    def with_reward(self, r) -> "TabularMdp":
        return TabularMdp(self.P, self.gamma, self.mu0, r)

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "mu0": self.mu0.tolist(),
            "P": self.P.tolist(),
            "r": None if self.r is None else self.r.tolist(),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, data: dict) -> "TabularMdp":
        P = np.asarray(data["P"], dtype=float)
        if P.shape[:2] != (data["n_states"], data["n_actions"]):
            raise ValueError("P does not match n_states / n_actions")
        r = data.get("r")
        return cls(P, data["gamma"], np.asarray(data["mu0"], dtype=float),
                   None if r is None else np.asarray(r, dtype=float))

    @classmethod
    def from_json(cls, text: str) -> "TabularMdp":
        return cls.from_dict(json.loads(text))


def validate_policy(pi, n_states, n_actions) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (n_states, n_actions):
        raise ValueError(f"policy must have shape ({n_states}, {n_actions})")
    if np.any(pi < 0) or np.any(np.abs(pi.sum(axis=1) - 1.0) > _PROB_TOL):
        raise ValueError("policy rows must be probability vectors")
    return pi


def build_M(mdp: TabularMdp) -> np.ndarray:
    """``M[s', (s,a)] = 1{s'=s} - gamma P(s'|s,a)``, shape (S, S*A)."""
    S, A = mdp.n_states, mdp.n_actions
    M = -mdp.gamma * mdp.P.reshape(S * A, S).T
    M[np.repeat(np.arange(S), A), np.arange(S * A)] += 1.0
    return M


def _reward(mdp, r):
    r = mdp.r if r is None else np.asarray(r, dtype=float).ravel()
    if r is None or r.shape != (mdp.n_sa,):
        raise ValueError("a reward vector over state-action pairs is required")
    return r


def solve_mdp_dual(mdp: TabularMdp, r=None) -> np.ndarray:
    """Vertex optimum of ``max r@d s.t. M d = (1-gamma) mu0, d >= 0``."""
    r = _reward(mdp, r)
    sol = solve_lp(LpProblem(r, A_eq=build_M(mdp), b_eq=(1 - mdp.gamma) * mdp.mu0))
    if not sol.ok:
        raise LpError(sol.status, f"MDP dual LP ended with status {sol.status.value}")
    return sol.x


def solve_mdp_primal(mdp: TabularMdp, r=None) -> np.ndarray:
    """Optimal values from ``min (1-gamma) mu0@v s.t. M^T v >= r``."""
    r = _reward(mdp, r)
    S = mdp.n_states
    sol = solve_lp(LpProblem(-(1 - mdp.gamma) * mdp.mu0, A_ineq=-build_M(mdp).T, b_ineq=-r,
                             lower=np.full(S, -np.inf), upper=np.full(S, np.inf)))
    if not sol.ok:
        raise LpError(sol.status, f"MDP primal LP ended with status {sol.status.value}")
    return sol.x


def state_transition(mdp: TabularMdp, pi) -> np.ndarray:
    return np.einsum("sa,sat->st", pi, mdp.P)


def occupancy_of_policy(mdp: TabularMdp, pi) -> np.ndarray:
    """Discounted state-action occupancy of ``pi`` via a dense linear solve."""
    pi = validate_policy(pi, mdp.n_states, mdp.n_actions)
    P_pi = state_transition(mdp, pi)
    try:
        rho = np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * P_pi.T, (1 - mdp.gamma) * mdp.mu0)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - impossible for gamma < 1
        raise LpError(LpStatus.NUMERIC_FAILURE, "singular occupancy system") from exc
    return (rho[:, None] * pi).ravel()


def deterministic_occupancies(mdp: TabularMdp) -> tuple[np.ndarray, np.ndarray]:
    """Occupancies of all ``A**S`` deterministic policies, batched.

    Returns ``(actions, D)`` where ``actions[k]`` lists the action per state of
    policy ``k`` and ``D[k]`` is its occupancy vector.
    """
    S, A = mdp.n_states, mdp.n_actions
    grids = np.indices((A,) * S).reshape(S, -1).T[:, ::-1] if S else np.zeros((1, 0), int)
    grids = np.ascontiguousarray(grids)
    P_pi = mdp.P[np.arange(S)[None, :], grids]  # (K, S, S)
    lhs = np.eye(S)[None] - mdp.gamma * np.transpose(P_pi, (0, 2, 1))
    rhs = np.broadcast_to((1 - mdp.gamma) * mdp.mu0, (grids.shape[0], S))[..., None]
    rho = np.linalg.solve(lhs, rhs)[..., 0]
    D = np.zeros((grids.shape[0], S, A))
    np.put_along_axis(D, grids[..., None], rho[..., None], axis=2)
    return grids, D.reshape(grids.shape[0], S * A)


def greedy_policy_from_occupancy(d, n_states: int, n_actions: int) -> np.ndarray:
    """``pi(a|s) ∝ d(s,a)``; uniform where the state marginal vanishes."""
    d = np.asarray(d, dtype=float).reshape(n_states, n_actions)
    if np.any(d < 0):
        raise ValueError("occupancy must be nonnegative")
    rho = d.sum(axis=1, keepdims=True)
    pi = np.full_like(d, 1.0 / n_actions)
    np.divide(d, rho, out=pi, where=rho > 0)
    return pi


def weight_ratio(d, d_ref) -> np.ndarray:
    """``d / d_ref`` with 0 wherever ``d_ref`` is 0."""
    d = np.asarray(d, dtype=float)
    d_ref = np.asarray(d_ref, dtype=float)
    if np.any(d < 0) or np.any(d_ref < 0):
        raise ValueError("occupancies must be nonnegative")
    w = np.zeros_like(d)
    np.divide(d, d_ref, out=w, where=d_ref > 0)
    return w


def build_K(mdp: TabularMdp, d_ref) -> np.ndarray:
    """``K[s', (s,a)] = d_ref(s,a) 1{s=s'} - gamma d_ref(s,a) P(s'|s,a)``."""
    return build_M(mdp) * np.asarray(d_ref, dtype=float)[None, :]


def optimal_occupancy(mdp: TabularMdp, r) -> np.ndarray:
    """Vertex optimum of the dual LP after rescaling ``r`` to unit max-norm.

    The argmax is invariant under positive scaling; rescaling keeps the
    reduced-cost tolerance meaningful for tiny rewards.
    """
    r = np.asarray(r, dtype=float).ravel()
    scale = np.abs(r).max(initial=0.0)
    return solve_mdp_dual(mdp, r / scale if scale > 0 else r)


def l1_occupancy_error(mdp: TabularMdp, r_true, r_hat) -> float:
    """``||d*(r_true) - d*(r_hat)||_1`` using the solver's deterministic vertex."""
    return float(np.abs(optimal_occupancy(mdp, r_true) - optimal_occupancy(mdp, r_hat)).sum())


def pi_min(pi) -> float:
    """Smallest nonzero action probability; reported as a diagnostic only."""
    pi = np.asarray(pi, dtype=float)
    return float(pi[pi > 0].min())


def d_min(d) -> float:
    d = np.asarray(d, dtype=float)
    return float(d[d > 0].min())
