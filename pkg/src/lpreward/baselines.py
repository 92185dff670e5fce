"""Maximum-likelihood preference baselines and the three-arm bandit comparison.

The MLE fits a reward ``theta`` under the Bradley-Terry-Luce model by
projected gradient ascent. The pessimistic variant scores each candidate
occupancy ``d`` by ``theta @ d - c * ||d||_{(Sigma + lambda I)^-1}`` where
``Sigma`` is the empirical covariance of feature differences.
"""
from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import FeedbackDataset, FeedbackMode, TrajectoryDataset, psi_differences
from .lp import LpStatus
from .mdp import deterministic_occupancies, optimal_occupancy
from .rlhf import ObjectiveKind, build_hf_set, select_vertex

log = logging.getLogger(__name__)


class ParamSpace(str, enum.Enum):
    SIMPLEX_BALL = "simplex_ball"  # 1'theta = 0, ||theta||_2 <= 1
    BOX = "box"  # ||theta||_inf <= bound


@dataclass(frozen=True)
class MleConfig:
    step_size: float = 0.01
    max_iters: int = 100_000
    param_space: ParamSpace = ParamSpace.BOX
    bound: float = 1.0
    lam: float = 0.1
    c_pess: float = 1.0
    tol: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "param_space", ParamSpace(self.param_space))
        if not self.step_size > 0:
            raise ValueError("step size must be positive")
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")
        if not self.c_pess > 0:
            raise ValueError("pessimism constant must be positive")
        if not self.bound > 0:
            raise ValueError("parameter bound must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")


@dataclass
class MleFit:
    theta: np.ndarray
    iterations: int
    step_norm: float  # projected-gradient step norm over step size
    log_likelihood: float

    @property
    def converged(self) -> bool:
        return bool(self.step_norm <= 1e-6)


def _mode(cfg: MleConfig) -> int:
    return kernels.PROJ_BOX if cfg.param_space is ParamSpace.BOX else kernels.PROJ_SIMPLEX_BALL


def project(theta, space, bound: float = 1.0) -> np.ndarray:
    """Euclidean projection onto the parameter space.

    For the simplex ball, removing the mean and then rescaling is exact: the
    hyperplane passes through the ball's centre.
    """
    theta = np.asarray(theta, dtype=float)
    if ParamSpace(space) is ParamSpace.BOX:
        return np.clip(theta, -bound, bound)
    out = theta - theta.mean()
    norm = np.linalg.norm(out)
    return out / norm if norm > 1.0 else out


def btl_log_likelihood(Z, theta) -> float:
    """Mean ``log sigmoid(Z @ theta)``; rows of ``Z`` are winner minus loser."""
    Z = np.asarray(Z, dtype=float)
    if Z.shape[0] == 0:
        return 0.0
    return float(np.mean(-np.logaddexp(0.0, -(Z @ np.asarray(theta, dtype=float)))))


def winner_minus_loser(fb: FeedbackDataset, gamma: float) -> np.ndarray:
    if fb.mode is not FeedbackMode.DISCRETE:
        raise ValueError("the BTL likelihood needs discrete labels")
    diff = psi_differences(fb, gamma)
    return np.where((fb.y == 1)[:, None], diff, -diff)


def mle_fit_features(Z, cfg: MleConfig, theta0=None) -> MleFit:
    """Projected gradient ascent on the BTL log-likelihood of comparisons ``Z``."""
    Z = np.ascontiguousarray(Z, dtype=float)
    k = Z.shape[1]
    theta0 = np.zeros(k) if theta0 is None else np.asarray(theta0, dtype=float).copy()
    theta, it, gap, ll = kernels.pga_btl(Z, theta0, float(cfg.step_size), int(cfg.max_iters),
                                         float(cfg.tol), _mode(cfg), float(cfg.bound))
    fit = MleFit(np.asarray(theta), int(it), float(gap), float(ll))
    if not fit.converged and Z.shape[0] > 0:
        log.info("MLE stopped after %d iterations with step norm %.3g", fit.iterations, fit.step_norm)
    return fit


def mle_btl_fit(fb: FeedbackDataset, gamma: float, cfg: MleConfig) -> MleFit:
    return mle_fit_features(winner_minus_loser(fb, gamma), cfg)


def feature_covariance(features) -> np.ndarray:
    """``(1/N) sum_n z_n z_n'`` over comparison feature differences."""
    Z = np.asarray(features, dtype=float)
    if Z.shape[0] == 0:
        return np.zeros((Z.shape[1], Z.shape[1]))
    return Z.T @ Z / Z.shape[0]


def pessimistic_penalty(features, lam: float, direction) -> np.ndarray:
    """``d' (Sigma + lam I)^-1 d`` for one direction or a stack of rows."""
    direction = np.asarray(direction, dtype=float)
    Z = np.asarray(features, dtype=float)
    k = direction.shape[-1]
    if Z.shape[0] == 0:
        Z = np.zeros((0, k))
    W = feature_covariance(Z) + lam * np.eye(k)
    D = np.atleast_2d(direction)
    try:
        sol = np.linalg.solve(W, D.T)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance plus ridge is singular; use lambda > 0") from exc
    out = np.einsum("ij,ji->i", D, sol)
    return out if direction.ndim == 2 else float(out[0])


def pessimistic_scores(theta, features, lam: float, c_pess: float, candidates) -> np.ndarray:
    """``theta @ d - c_pess * sqrt(penalty(d))`` for each candidate row ``d``."""
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    pen = np.maximum(pessimistic_penalty(features, lam, candidates), 0.0)
    return candidates @ np.asarray(theta, dtype=float) - c_pess * np.sqrt(pen)


def pessimistic_policy(theta, features, lam: float, c_pess: float, candidates) -> int:
    """Index of the best candidate; ties go to the lowest index."""
    return int(np.argmax(pessimistic_scores(theta, features, lam, c_pess, candidates)))


def pessimistic_occupancy(mdp, theta, features, lam: float, c_pess: float,
                          max_iters: int = 300, tol: float = 1e-9):
    """Maximize ``theta @ d - c_pess * ||d||_W`` over all valid occupancies.

    The objective is concave, so Frank-Wolfe with the MDP dual LP as linear
    oracle converges to the global optimum; it starts from the best
    deterministic policy. Returns ``(d, iterations, duality_gap)``.
    """
    theta = np.asarray(theta, dtype=float)
    Z = np.asarray(features, dtype=float).reshape(-1, theta.shape[0])
    W = np.linalg.inv(feature_covariance(Z) + lam * np.eye(theta.shape[0]))
    _, D = deterministic_occupancies(mdp)
    d = D[int(np.argmax(pessimistic_scores(theta, Z, lam, c_pess, D)))]
    gap = np.inf
    it = 0
    for it in range(max_iters):
        norm = np.sqrt(d @ W @ d)
        grad = theta - c_pess * (W @ d) / norm
        step_dir = optimal_occupancy(mdp, grad) - d
        gap = float(grad @ step_dir)
        if gap <= tol:
            break
        d = d + _line_search(theta, W, c_pess, d, step_dir) * step_dir
    return d, it, gap


def _line_search(theta, W, c, d, step_dir, n_bisect: int = 60) -> float:
    """Maximizer in [0, 1] of the concave objective along ``step_dir``."""
    def slope(t):
        x = d + t * step_dir
        return theta @ step_dir - c * (x @ W @ step_dir) / np.sqrt(x @ W @ x)

    if slope(1.0) >= 0:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        if slope(mid) > 0:
            lo = mid
        else:
            hi = mid
    return lo


# --------------------------------------------------------------------------
# three-arm bandit

ARM_NAMES = ("a1", "a2", "a3")


@dataclass(frozen=True)
class BanditInstance:
    """Single state, three arms, true preference ``a3 > a2 > a1``."""

    p12: float = 0.995
    p23: float = 0.005
    p31: float = 0.0
    eps_r: float = -0.01
    utilities: tuple = (0.0, 0.5, 1.0)

    def __post_init__(self):
        probs = np.array([self.p12, self.p23, self.p31])
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("query probabilities must form a distribution")


def _bandit_dataset(counts):
    """Queries as length-one trajectories; the first arm of each pair comes first."""
    pairs = [(0, 1)] * counts[0] + [(1, 2)] * counts[1] + [(2, 0)] * counts[2]
    first = np.array([p[0] for p in pairs], dtype=np.int64).reshape(-1, 1)
    second = np.array([p[1] for p in pairs], dtype=np.int64).reshape(-1, 1)
    zeros = np.zeros((len(pairs), 2), dtype=np.int64)
    return TrajectoryDataset(zeros, first, 1, 3), TrajectoryDataset(zeros, second, 1, 3)


def run_bandit_counterexample(n_queries: int, rng, inst: BanditInstance | None = None,
                              cfg: MleConfig | None = None, seed=None) -> dict:
    """Fit LP, MLE and pessimistic MLE on greedy comparisons of three arms."""
    inst = inst or BanditInstance()
    cfg = cfg or MleConfig(param_space=ParamSpace.SIMPLEX_BALL)
    counts = rng.multinomial(n_queries, [inst.p12, inst.p23, inst.p31])
    first, second = _bandit_dataset(counts)
    util = np.asarray(inst.utilities, dtype=float)
    # greedy evaluator: y = 1 iff the first arm is at least as good
    y = np.where(util[first.actions[:, 0]] >= util[second.actions[:, 0]], 1.0, 2.0)
    fb = FeedbackDataset(first, second, y, FeedbackMode.DISCRETE)
    gamma = 0.5  # irrelevant for length-one trajectories

    hf = build_hf_set(fb, inst.eps_r, gamma)
    sol = select_vertex(hf.cs, 3, ObjectiveKind.DUMMY)
    pi_lp = ARM_NAMES[int(np.argmax(sol.x))] if sol.status is LpStatus.OPTIMAL else None

    Z = winner_minus_loser(fb, gamma)
    fit = mle_fit_features(Z, cfg)
    pi_mle = ARM_NAMES[int(np.argmax(fit.theta))]
    pi_pe = ARM_NAMES[pessimistic_policy(fit.theta, Z, cfg.lam, cfg.c_pess, np.eye(3))]
    return {
        "pi_star": ARM_NAMES[int(np.argmax(util))],
        "pi_lp": pi_lp,
        "pi_mle": pi_mle,
        "pi_pe": pi_pe,
        "counts": {"N12": int(counts[0]), "N23": int(counts[1]), "N31": int(counts[2])},
        "seed": seed,
        "lp_status": sol.status.value,
        "theta_mle": fit.theta.tolist(),
        "resample": bool(counts[1] == 0),
    }


def bandit_report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True)

