"""Sweeps over random MDPs comparing reward-learning algorithms.

Every run draws its own MDP from the run seed, so all algorithms and sample
sizes with the same run id face the same environment. Data streams are keyed
by ``(seed, N, stream)``: algorithms that consume the same kind of data at
the same ``N`` see identical samples.
"""
from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .baselines import MleConfig, mle_fit_features, pessimistic_occupancy, winner_minus_loser
from .config import HF_ALGORITHMS, IRL_ALGORITHMS, ExperimentConfig
from .data import (
    derive_rng,
    estimate,
    generate_feedback,
    sample_query_pairs,
    sample_trajectories,
    uniform_policy,
)
from .irl import RelaxationConfig, build_irl_set, solve_reward_gap_lp
from .lp import LpError, LpStatus
from .mdp import TabularMdp, greedy_policy_from_occupancy, l1_occupancy_error, optimal_occupancy
from .rlhf import ObjectiveKind, build_hf_set, build_integrated_set, select_reward

log = logging.getLogger(__name__)

CSV_HEADER = ("algorithm", "N", "run_id", "seed", "l1_error", "status", "wall_time_ms")

# data stream ids
_MDP, _EXPERT, _SUBOPT, _LABELS, _QUERIES, _HF_LABELS = range(6)


@dataclass(frozen=True)
class RunResult:
    algorithm: str
    N: int
    run_id: int
    seed: int
    l1_error: float | None
    status: str  # ok | infeasible | numeric_failure
    wall_time_ms: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def true_reward(n_states: int, n_actions: int) -> np.ndarray:
    """1.0 for the first action, 0.9 for the second, 0.1 less per further action."""
    per_state = np.maximum(1.0 - 0.1 * np.arange(n_actions), -1.0)
    return np.tile(per_state, n_states)


def random_mdp(cfg: ExperimentConfig, rng) -> TabularMdp:
    S, A = cfg.n_states, cfg.n_actions
    P = rng.random((S, A, S))
    P /= P.sum(axis=2, keepdims=True)
    mu0 = rng.random(S)
    mu0 /= mu0.sum()
    return TabularMdp(P, cfg.gamma, mu0, true_reward(S, A))


def build_expert(mdp: TabularMdp, weight: float = 0.52) -> np.ndarray:
    """Mix the optimal deterministic policy with one that always deviates.

    The deviating policy takes action ``(a* + 1) mod |A|`` in every state.
    """
    S, A = mdp.n_states, mdp.n_actions
    pi_star = greedy_policy_from_occupancy(optimal_occupancy(mdp, mdp.r), S, A)
    if not np.all(np.isclose(pi_star.max(axis=1), 1.0)):
        raise ValueError("optimal policy is not deterministic")
    best = pi_star.argmax(axis=1)
    pi_r = np.zeros_like(pi_star)
    pi_r[np.arange(S), (best + 1) % A] = 1.0
    pi_star = np.zeros_like(pi_star)
    pi_star[np.arange(S), best] = 1.0
    return weight * pi_star + (1 - weight) * pi_r


def _status_of(err: LpError) -> str:
    return "infeasible" if err.status is LpStatus.INFEASIBLE else "numeric_failure"


def _irl_run(cfg, name, N, seed, mdp):
    p = cfg.algorithm_params(name, N)
    S, A, g, H = cfg.n_states, cfg.n_actions, cfg.gamma, cfg.horizon
    n_e = int(round(cfg.expert_fraction * N))
    n_rest = N - n_e
    expert = sample_trajectories(mdp, build_expert(mdp, cfg.expert_weight), H, n_e,
                                 derive_rng(seed, N, _EXPERT))
    est = estimate(expert, g)
    uni = sample_trajectories(mdp, uniform_policy(S, A), H, n_rest, derive_rng(seed, N, _SUBOPT))
    d_sub = estimate(uni, g).d_hat if n_rest else np.zeros(S * A)
    rcfg = RelaxationConfig(B=p["B"], delta=p["delta"], eps_g=p["eps_g"], x_mode=p["x_mode"],
                            eps_x_override=p["eps_x"])
    irl = build_irl_set(est, mdp.mu0, g, rcfg)
    if name in ("LP-IRL-1", "LP-IRL-2"):
        return solve_reward_gap_lp(irl, est.d_hat, d_sub)[0]
    # the uniform trajectories, paired in order, become the compared queries
    n_q = n_rest // 2
    pairs = (uni.take(np.arange(0, 2 * n_q, 2)), uni.take(np.arange(1, 2 * n_q, 2)))
    fb = generate_feedback(pairs, mdp.r, p["evaluator"], derive_rng(seed, N, _LABELS), gamma=g,
                           scale=p.get("feedback_range", 0.2))
    hf = build_hf_set(fb, p["eps_r"], g, scale=p.get("scale", 1.0))
    cs = build_integrated_set(irl, hf)
    return select_reward(cs, S * A, ObjectiveKind.REWARD_GAP, est.d_hat, d_sub)


def _hf_pairs(cfg, N, seed, mdp, evaluator):
    S, A, g = cfg.n_states, cfg.n_actions, cfg.gamma
    pairs = sample_query_pairs(mdp, uniform_policy(S, A), cfg.horizon, N, derive_rng(seed, N, _QUERIES))
    return generate_feedback(pairs, mdp.r, evaluator, derive_rng(seed, N, _HF_LABELS), gamma=g)


def run_single(cfg: ExperimentConfig, name: str, N: int, run_id: int) -> RunResult:
    seed = cfg.base_seed + run_id
    t0 = time.perf_counter()
    mdp = random_mdp(cfg, derive_rng(seed, _MDP))
    d_true = optimal_occupancy(mdp, mdp.r)
    try:
        if name in IRL_ALGORITHMS:
            err = l1_occupancy_error(mdp, mdp.r, _irl_run(cfg, name, N, seed, mdp))
        elif name == "LP-HF":
            p = cfg.algorithm_params(name, N)
            fb = _hf_pairs(cfg, N, seed, mdp, p["evaluator"])
            r_hat = select_reward(build_hf_set(fb, p["eps_r"], cfg.gamma).cs, mdp.n_sa)
            err = l1_occupancy_error(mdp, mdp.r, r_hat)
        elif name == "MLE-HF":
            p = cfg.algorithm_params(name, N)
            fb = _hf_pairs(cfg, N, seed, mdp, p["evaluator"])
            mcfg = MleConfig(step_size=p["step_size"], max_iters=int(p["max_iters"]),
                             param_space=p["param_space"], bound=p["B"], lam=p["lam"], c_pess=p["c_pess"])
            Z = winner_minus_loser(fb, cfg.gamma)
            fit = mle_fit_features(Z, mcfg)
            d_pe, _, _ = pessimistic_occupancy(mdp, fit.theta, Z, mcfg.lam, mcfg.c_pess)
            err = float(np.abs(d_true - d_pe).sum())
        else:  # pragma: no cover - rejected by config validation
            raise ValueError(f"unknown algorithm {name}")
        status, value = "ok", float(np.clip(err, 0.0, 2.0))
    except LpError as exc:
        log.info("%s N=%d run=%d: %s", name, N, run_id, exc)
        status, value = _status_of(exc), None
    ms = (time.perf_counter() - t0) * 1000.0 if cfg.record_wall_time else 0.0
    return RunResult(name, N, run_id, seed, value, status, round(ms, 3))


def _run_task(args):
    cfg, name, N, run_id = args
    return run_single(cfg, name, N, run_id)


def run_experiment(cfg: ExperimentConfig, algorithms=None, jobs: int | None = None) -> list[RunResult]:
    """All runs in (algorithm, N, run_id) order regardless of completion order."""
    algorithms = tuple(algorithms or cfg.algorithms)
    tasks = [(cfg, a, N, k) for a in algorithms for N in cfg.N_grid for k in range(cfg.runs)]
    jobs = jobs or cfg.jobs
    if jobs <= 1:
        results = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * jobs))))
    order = {a: i for i, a in enumerate(algorithms)}
    return sorted(results, key=lambda r: (order[r.algorithm], r.N, r.run_id))


def run_irl_experiment(cfg: ExperimentConfig, jobs: int | None = None) -> list[RunResult]:
    return run_experiment(cfg, [a for a in cfg.algorithms if a in IRL_ALGORITHMS], jobs)


def run_rlhf_experiment(cfg: ExperimentConfig, jobs: int | None = None) -> list[RunResult]:
    return run_experiment(cfg, [a for a in cfg.algorithms if a in HF_ALGORITHMS], jobs)


def summarize(results) -> list[dict]:
    """Mean and population standard deviation of successful runs per (algorithm, N)."""
    groups: dict = {}
    for r in results:
        groups.setdefault((r.algorithm, r.N), []).append(r)
    out = []
    for (alg, N), rs in groups.items():
        vals = np.array([r.l1_error for r in rs if r.ok], dtype=float)
        out.append({
            "algorithm": alg,
            "N": N,
            "mean": float(vals.mean()) if vals.size else float("nan"),
            "std": float(vals.std()) if vals.size else float("nan"),
            "n_ok": int(vals.size),
            "n_failed": len(rs) - int(vals.size),
        })
    return out


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def results_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in results:
        w.writerow([r.algorithm, r.N, r.run_id, r.seed, _fmt(r.l1_error), r.status, _fmt(r.wall_time_ms)])
    return buf.getvalue()


def summary_csv(summary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["algorithm", "N", "mean", "std", "n_ok", "n_failed"])
    for s in summary:
        w.writerow([s["algorithm"], s["N"], _fmt(s["mean"]), _fmt(s["std"]), s["n_ok"], s["n_failed"]])
    return buf.getvalue()


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def error_curve_svg(summary, title: str = "L1 occupancy error") -> str:
    """Static SVG of mean error against N (log axis) with one-std bars."""
    W, H, L, R, T, B = 640, 420, 60, 150, 40, 50
    pts = [s for s in summary if s["n_ok"]]
    Ns = sorted({s["N"] for s in summary}) or [1]
    lo, hi = np.log10(min(Ns)), np.log10(max(Ns))
    span = hi - lo or 1.0

    def sx(n):
        return L + (np.log10(n) - lo) / span * (W - L - R)

    def sy(e):
        return T + (1 - min(max(e, 0.0), 2.0) / 2.0) * (H - T - B)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" '
             f'font-size="12">',
             f'<rect width="{W}" height="{H}" fill="white"/>',
             f'<text x="{W / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
             f'<line x1="{L}" y1="{H - B}" x2="{W - R}" y2="{H - B}" stroke="black"/>',
             f'<line x1="{L}" y1="{T}" x2="{L}" y2="{H - B}" stroke="black"/>']
    for e in (0.0, 0.5, 1.0, 1.5, 2.0):
        parts.append(f'<text x="{L - 6}" y="{sy(e) + 4:.1f}" text-anchor="end">{e:.1f}</text>')
    for n in Ns:
        parts.append(f'<text x="{sx(n):.1f}" y="{H - B + 16}" text-anchor="middle">{n}</text>')
    parts.append(f'<text x="{(W - R + L) / 2:.1f}" y="{H - 12}" text-anchor="middle">N</text>')
    algs = list(dict.fromkeys(s["algorithm"] for s in summary))
    for i, alg in enumerate(algs):
        color = _COLORS[i % len(_COLORS)]
        mine = sorted((s for s in pts if s["algorithm"] == alg), key=lambda s: s["N"])
        if mine:
            path = " ".join(f"{sx(s['N']):.1f},{sy(s['mean']):.1f}" for s in mine)
            parts.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
        for s in mine:
            x = sx(s["N"])
            parts.append(f'<line x1="{x:.1f}" y1="{sy(s["mean"] - s["std"]):.1f}" x2="{x:.1f}" '
                         f'y2="{sy(s["mean"] + s["std"]):.1f}" stroke="{color}"/>')
            parts.append(f'<circle cx="{x:.1f}" cy="{sy(s["mean"]):.1f}" r="3" fill="{color}"/>')
        y = T + 18 * i
        parts.append(f'<line x1="{W - R + 10}" y1="{y}" x2="{W - R + 30}" y2="{y}" stroke="{color}" '
                     f'stroke-width="2"/>')
        parts.append(f'<text x="{W - R + 36}" y="{y + 4}">{alg}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
