"""Offline inverse RL: the empirical feasible-reward polyhedron and reward selection.

The polyhedron lives over stacked variables ``(u, v)`` where ``u = d_e * r``
is the expert-weighted reward and ``v >= 0`` mixes the columns of a fixed
direction matrix ``X`` (the relaxed value function is ``X v``).
"""
from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import EmpiricalEstimates
from .lp import ConstraintSystem, LpError, LpProblem, solve_lp

MAX_SIGN_STATES = 20
AUTO_SIGN_STATES = 12


class XMode(str, enum.Enum):
    SIGN_VECTORS = "sign_vectors"
    PLUS_MINUS_IDENTITY = "plus_minus_identity"


@dataclass(frozen=True)
class RelaxationConfig:
    B: float = 100.0
    delta: float = 0.1
    eps_g: float = 0.0
    x_mode: XMode | None = None  # None picks by state count
    eps_x_override: float | None = None

    def __post_init__(self):
        if not self.B >= 1:
            raise ValueError("B must be at least 1")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not self.eps_g >= 0:
            raise ValueError("eps_g must be nonnegative")
        if self.x_mode is not None:
            object.__setattr__(self, "x_mode", XMode(self.x_mode))
        if self.eps_x_override is not None and self.eps_x_override < 0:
            raise ValueError("eps_x override must be nonnegative")

    def resolved_mode(self, n_states: int) -> XMode:
        if self.x_mode is not None:
            return self.x_mode
        return XMode.SIGN_VECTORS if n_states <= AUTO_SIGN_STATES else XMode.PLUS_MINUS_IDENTITY


def build_X(n_states: int, mode) -> np.ndarray:
    """Direction matrix with one column per direction, shape ``(S, N_x)``."""
    mode = XMode(mode)
    if mode is XMode.SIGN_VECTORS:
        if n_states > MAX_SIGN_STATES:
            raise ValueError(f"sign vectors need n_states <= {MAX_SIGN_STATES}, got {n_states}")
        cols = itertools.product((1.0, -1.0), repeat=n_states)
        return np.array(list(cols), dtype=float).T.reshape(n_states, 2**n_states)
    eye = np.eye(n_states)
    return np.hstack([eye, -eye])


def compute_epsilon_x(B, gamma, H, N, n_sa, N_x, delta) -> float:
    """Per-direction slack covering truncation and sampling error of ``K_D``."""
    gh = gamma**H
    return (B * (1 + gamma) * gh
            + B * (1 + gamma) * (1 - gh) * math.sqrt(2 * n_sa / N * math.log(2 * N_x / delta)))


def suboptimality_epsilon(eps_g, B, gamma, H, N, n_sa, delta) -> float:
    """Suboptimality level guaranteed for rewards extracted from the set."""
    gh = gamma**H
    return (eps_g + (1 + B) * gh
            + (1 - gh) * math.sqrt(2 / N * math.log(1 / delta))
            + B * (1 - gh) * math.sqrt(2 * n_sa / N * math.log(2 / delta)))


@dataclass
class IrlRewardSet:
    cs: ConstraintSystem
    est: EmpiricalEstimates
    X: np.ndarray
    eps_x: np.ndarray
    eps_g: float
    mu0: np.ndarray = field(repr=False, default=None)

    @property
    def n_sa(self) -> int:
        return self.est.d_hat.shape[0]

    @property
    def n_x(self) -> int:
        return self.X.shape[1]

    def split(self, x):
        x = np.asarray(x, dtype=float)
        return x[: self.n_sa], x[self.n_sa:]

    def to_dict(self) -> dict:
        return {
            "eps_g": self.eps_g,
            "eps_x": self.eps_x.tolist(),
            "d_hat": self.est.d_hat.tolist(),
            "X": self.X.tolist(),
            "system": self.cs.to_dict(),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def build_irl_set(est: EmpiricalEstimates, mu0, gamma: float, cfg: RelaxationConfig,
                  N: int | None = None, H: int | None = None) -> IrlRewardSet:
    """Rows, over ``(u, v)``:

    * ``(1-gamma) mu0' X v + eps_x' v - 1'u <= eps_g``
    * ``-K_D' X v + u <= 0``
    * ``v >= 0`` and ``-d_hat <= u <= d_hat``
    """
    mu0 = np.asarray(mu0, dtype=float)
    S = mu0.shape[0]
    n_sa = est.d_hat.shape[0]
    N = est.n_trajectories if N is None else N
    H = est.horizon if H is None else H
    X = build_X(S, cfg.resolved_mode(S))
    n_x = X.shape[1]
    if cfg.eps_x_override is not None:
        eps = float(cfg.eps_x_override)
    else:
        eps = compute_epsilon_x(cfg.B, gamma, H, N, n_sa, n_x, cfg.delta)
    eps_x = np.full(n_x, eps)

    gap_row = np.concatenate([-np.ones(n_sa), (1 - gamma) * (mu0 @ X) + eps_x])
    feas_rows = np.hstack([np.eye(n_sa), -est.K_D.T @ X])
    A = np.vstack([gap_row, feas_rows])
    b = np.concatenate([[cfg.eps_g], np.zeros(n_sa)])
    lower = np.concatenate([-est.d_hat, np.zeros(n_x)])
    upper = np.concatenate([est.d_hat, np.full(n_x, np.inf)])
    names = [f"u{j}" for j in range(n_sa)] + [f"v{k}" for k in range(n_x)]
    cs = ConstraintSystem(A, b, None, None, lower, upper, names)
    return IrlRewardSet(cs, est, X, eps_x, float(cfg.eps_g), mu0)


def extract_reward(u, d_hat) -> np.ndarray:
    """``u / d_hat`` with 0/0 = 0, clipped against rounding to [-1, 1]."""
    u = np.asarray(u, dtype=float)
    d_hat = np.asarray(d_hat, dtype=float)
    r = np.zeros_like(u)
    np.divide(u, d_hat, out=r, where=d_hat > 0)
    return np.clip(r, -1.0, 1.0)


def coupled_system(irl: IrlRewardSet) -> ConstraintSystem:
    """The set lifted to ``(r, u, v)`` with ``u = d_hat * r``.

    Rewards on pairs the expert never visited are pinned to zero.
    """
    cs = irl.cs
    n_sa = irl.n_sa
    n = cs.n_vars
    d_hat = irl.est.d_hat
    pad = np.zeros((cs.A_ineq.shape[0], n_sa))
    A_ineq = np.hstack([pad, cs.A_ineq])
    A_eq = np.hstack([-np.diag(d_hat), np.eye(n_sa), np.zeros((n_sa, n - n_sa))])
    seen = d_hat > 0
    lower = np.concatenate([np.where(seen, -1.0, 0.0), cs.lower])
    upper = np.concatenate([np.where(seen, 1.0, 0.0), cs.upper])
    names = [f"r{j}" for j in range(n_sa)] + list(cs.names)
    return ConstraintSystem(A_ineq, cs.b_ineq, A_eq, np.zeros(n_sa), lower, upper, names)


def solve_reward_gap_lp(irl: IrlRewardSet, d_hat_e, d_hat_sub):
    """Maximize ``r @ (d_hat_e - d_hat_sub)`` over the coupled set.

    Returns ``(r, u, v)``; raises :class:`LpError` on any non-optimal status.
    """
    cs = coupled_system(irl)
    n_sa = irl.n_sa
    obj = np.zeros(cs.n_vars)
    obj[:n_sa] = np.asarray(d_hat_e, dtype=float) - np.asarray(d_hat_sub, dtype=float)
    sol = solve_lp(LpProblem.over(cs, obj))
    if not sol.ok:
        raise LpError(sol.status, f"reward-gap LP ended with status {sol.status.value}")
    x = sol.x
    return x[:n_sa], x[n_sa:2 * n_sa], x[2 * n_sa:]
