"""Preference constraints on tabular rewards and their combination with the IRL set.

Each compared trajectory pair contributes one linear row in ``r``. With
discrete labels (``y = 1`` means the first trajectory wins) the row is the
margin violation ``r @ (psi_loser - psi_winner) <= eps_r``. Continuous labels
``y`` in [-1, 1] additionally demand a gap of ``scale * |y|``.
"""
from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass

import numpy as np

from .data import FeedbackDataset, FeedbackMode, Trajectory, psi_differences, vectorize_trajectory
from .irl import IrlRewardSet, coupled_system
from .lp import ConstraintSystem, LpError, LpProblem, LpSolution, solve_lp

log = logging.getLogger(__name__)


@dataclass
class HfRewardSet:
    cs: ConstraintSystem  # over r only
    eps_r: float
    mode: FeedbackMode
    scale: float = 1.0

    @property
    def n_queries(self) -> int:
        return self.cs.A_ineq.shape[0]

    def to_json(self, **kw) -> str:
        return json.dumps({"eps_r": self.eps_r, "mode": self.mode.value, "scale": self.scale,
                           "system": self.cs.to_dict()}, **kw)


def _signed_rows(diff, y, mode, scale):
    """Rows ``a`` and offsets ``c`` so that the error is ``a @ r + c``.

    ``diff`` holds ``psi1 - psi2``. Zero continuous labels get a zero row.
    """
    y = np.asarray(y, dtype=float)
    if FeedbackMode(mode) is FeedbackMode.DISCRETE:
        sign = np.where(y == 1, 1.0, -1.0)
        offset = np.zeros_like(y)
    else:
        sign = np.sign(y)
        offset = scale * np.abs(y)
    return -sign[:, None] * diff, offset


def feedback_error(tau1: Trajectory, tau2: Trajectory, y, r, gamma: float, *,
                   n_actions: int | None = None, mode=FeedbackMode.DISCRETE,
                   scale: float = 1.0) -> float:
    """Margin violation of one labelled pair under reward ``r``.

    ``r`` is an (S, A) table, or flat with ``n_actions`` given.
    """
    r = np.asarray(r, dtype=float)
    if r.ndim == 2:
        n_actions = r.shape[1]
    elif n_actions is None:
        raise ValueError("n_actions is required for a flat reward vector")
    r = r.ravel()
    if tau1.horizon != tau2.horizon:
        raise ValueError("compared trajectories must share a horizon")
    n_states = r.shape[0] // n_actions
    diff = vectorize_trajectory(tau1, gamma, n_states, n_actions) - \
        vectorize_trajectory(tau2, gamma, n_states, n_actions)
    rows, offset = _signed_rows(diff[None, :], [y], mode, scale)
    return float(rows[0] @ r + offset[0])


def feedback_errors(fb: FeedbackDataset, r, gamma: float, scale: float = 1.0) -> np.ndarray:
    """Margin violation of every query in ``fb``."""
    rows, offset = _signed_rows(psi_differences(fb, gamma), fb.y, fb.mode, scale)
    return rows @ np.asarray(r, dtype=float) + offset


def build_hf_set(fb: FeedbackDataset, eps_r: float, gamma: float, scale: float = 1.0) -> HfRewardSet:
    """One row ``error(r) <= eps_r`` per query plus the box ``-1 <= r <= 1``."""
    n_sa = fb.first.n_states * fb.first.n_actions
    rows, offset = _signed_rows(psi_differences(fb, gamma), fb.y, fb.mode, scale)
    if fb.mode is FeedbackMode.CONTINUOUS:
        zero = fb.y == 0
        if np.any(zero):
            if eps_r < 0:
                log.error("%d continuous labels equal 0; unsatisfiable with eps_r=%g", zero.sum(), eps_r)
                raise ValueError("zero continuous labels cannot meet a negative eps_r")
            log.info("dropping %d vacuous rows with zero continuous label", zero.sum())
            rows, offset = rows[~zero], offset[~zero]
    names = [f"r{j}" for j in range(n_sa)]
    cs = ConstraintSystem(rows, eps_r - offset, None, None, -np.ones(n_sa), np.ones(n_sa), names)
    return HfRewardSet(cs, float(eps_r), fb.mode, float(scale))


def generalization_check(r, unseen: FeedbackDataset, eps_r: float, gamma: float,
                         scale: float = 1.0) -> float:
    """Fraction of held-out queries whose error reaches ``eps_r``."""
    if len(unseen) == 0:
        return 0.0
    return float(np.mean(feedback_errors(unseen, r, gamma, scale) >= eps_r))


def preference_violation_bound(n_queries: int, delta: float) -> float:
    return float(np.sqrt(np.log(1 / delta) / (2 * n_queries)))


def build_integrated_set(irl: IrlRewardSet, hf: HfRewardSet) -> ConstraintSystem:
    """Intersection over ``(r, u, v)`` with the coupling ``u = d_hat * r``."""
    cs = coupled_system(irl)
    rows = hf.cs.A_ineq
    if rows.shape[1] != irl.n_sa:
        raise ValueError("preference and IRL sets index different state-action spaces")
    pad = np.zeros((rows.shape[0], cs.n_vars - irl.n_sa))
    return cs.with_rows(np.hstack([rows, pad]), hf.cs.b_ineq)


class ObjectiveKind(str, enum.Enum):
    REWARD_GAP = "reward_gap"
    DUMMY = "dummy"


def select_reward(cs: ConstraintSystem, n_sa: int, kind=ObjectiveKind.DUMMY,
                  d_hat_e=None, d_hat_sub=None) -> np.ndarray:
    """Reward part of an optimal vertex of ``cs``.

    ``cs`` is over ``r`` alone or over ``(r, u, v)``; the first ``n_sa``
    variables are the reward. Raises :class:`LpError` if no optimum exists.
    """
    sol = select_vertex(cs, n_sa, kind, d_hat_e, d_hat_sub)
    if not sol.ok:
        raise LpError(sol.status, f"reward selection ended with status {sol.status.value}")
    return sol.x[:n_sa]


def select_vertex(cs, n_sa, kind=ObjectiveKind.DUMMY, d_hat_e=None, d_hat_sub=None) -> LpSolution:
    obj = np.zeros(cs.n_vars)
    if ObjectiveKind(kind) is ObjectiveKind.REWARD_GAP:
        if d_hat_e is None or d_hat_sub is None:
            raise ValueError("the reward-gap objective needs both occupancy estimates")
        obj[:n_sa] = np.asarray(d_hat_e, dtype=float) - np.asarray(d_hat_sub, dtype=float)
    return solve_lp(LpProblem.over(cs, obj))


def max_margin_reward(fb: FeedbackDataset, eps_r: float, gamma: float, scale: float = 1.0):
    """Reward in the preference set with the largest uniform slack.

    Solves ``max t`` s.t. ``error_n(r) + t <= eps_r`` for all queries,
    ``r`` in the box and ``0 <= t <= 1``. Returns ``(r, t)``.
    """
    hf = build_hf_set(fb, eps_r, gamma, scale)
    n_sa = hf.cs.n_vars
    A = np.hstack([hf.cs.A_ineq, np.ones((hf.n_queries, 1))])
    obj = np.zeros(n_sa + 1)
    obj[-1] = 1.0
    p = LpProblem(obj, A_ineq=A, b_ineq=hf.cs.b_ineq,
                  lower=np.append(hf.cs.lower, 0.0), upper=np.append(hf.cs.upper, 1.0))
    sol = solve_lp(p)
    if not sol.ok:
        raise LpError(sol.status, f"max-margin LP ended with status {sol.status.value}")
    return sol.x[:n_sa], float(sol.x[-1])


def sweep_eps_r(fb: FeedbackDataset, gamma: float, grid, scale: float = 1.0):
    """Feasibility of the preference set along a grid of ``eps_r`` values.

    Returns ``[(eps_r, status, is_trivial)]`` where ``is_trivial`` means the
    zero reward is feasible. Scanning from large to small values shows where
    the set becomes trivial or empty.
    """
    out = []
    for eps in sorted(grid, reverse=True):
        hf = build_hf_set(fb, eps, gamma, scale)
        sol = select_vertex(hf.cs, hf.cs.n_vars)
        trivial = bool(np.all(hf.cs.b_ineq >= 0))
        out.append((float(eps), sol.status, trivial))
    return out
