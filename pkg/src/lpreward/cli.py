"""Command-line interface.

Exit codes: 0 success, 1 configuration or input error, 2 a run failed
(infeasible LP or numeric failure), 3 unexpected internal error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .baselines import run_bandit_counterexample
from .config import ConfigError, ExperimentConfig, load_config
from .data import (
    derive_rng,
    estimate,
    generate_feedback,
    read_feedback,
    read_trajectories,
    sample_query_pairs,
    sample_trajectories,
    uniform_policy,
    write_feedback,
    write_trajectories,
)
from .experiments import (
    build_expert,
    error_curve_svg,
    random_mdp,
    results_csv,
    run_experiment,
    summarize,
    summary_csv,
)
from .irl import RelaxationConfig, build_irl_set, solve_reward_gap_lp
from .lp import LpError
from .mdp import TabularMdp, l1_occupancy_error
from .rlhf import ObjectiveKind, build_hf_set, build_integrated_set, select_reward

log = logging.getLogger("lpreward")

EXIT_OK, EXIT_CONFIG, EXIT_RUN_FAILED, EXIT_INTERNAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1), not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _emit(payload: dict, out) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_mdp(path) -> TabularMdp:
    try:
        return TabularMdp.from_json(Path(path).read_text())
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load MDP from {path}: {exc}") from exc


def _report(mdp, r, **extra) -> dict:
    out = {"status": "ok", "reward": np.asarray(r).tolist(), **extra}
    if mdp.r is not None:
        out["l1_error"] = l1_occupancy_error(mdp, mdp.r, r)
    return out


def _trajectories(args, mdp, path, policy, n, stream):
    if path:
        try:
            ds, _ = read_trajectories(path, mdp.n_states, mdp.n_actions)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read trajectories from {path}: {exc}") from exc
        return ds
    return sample_trajectories(mdp, policy, args.horizon, n, derive_rng(args.seed, stream))


def _feedback(args, mdp, evaluator):
    if args.feedback:
        try:
            fb, _ = read_feedback(args.feedback, mdp.n_states, mdp.n_actions)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read feedback from {args.feedback}: {exc}") from exc
        return fb
    if mdp.r is None:
        raise ConfigError("simulating feedback needs an MDP with a true reward")
    pairs = sample_query_pairs(mdp, uniform_policy(mdp.n_states, mdp.n_actions), args.horizon,
                               args.n_queries, derive_rng(args.seed, 4))
    return generate_feedback(pairs, mdp.r, evaluator, derive_rng(args.seed, 5), gamma=mdp.gamma)


def _irl_set(args, mdp):
    if not args.expert and mdp.r is None:
        raise ConfigError("simulating an expert needs an MDP with a true reward")
    pi_e = None if args.expert else build_expert(mdp)
    expert = _trajectories(args, mdp, args.expert, pi_e, args.n_expert, 1)
    sub = _trajectories(args, mdp, args.suboptimal, uniform_policy(mdp.n_states, mdp.n_actions),
                        args.n_suboptimal, 2)
    est = estimate(expert, mdp.gamma)
    d_sub = estimate(sub, mdp.gamma).d_hat if len(sub) else np.zeros(mdp.n_sa)
    try:
        rcfg = RelaxationConfig(B=args.B, delta=args.delta, eps_g=args.eps_g, x_mode=args.x_mode,
                                eps_x_override=args.eps_x)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return build_irl_set(est, mdp.mu0, mdp.gamma, rcfg), est, d_sub


def cmd_mdp_gen(args) -> int:
    cfg = ExperimentConfig(n_states=args.states, n_actions=args.actions, gamma=args.gamma, runs=1)
    mdp = random_mdp(cfg, derive_rng(args.seed, 0))
    if args.out:
        Path(args.out).write_text(mdp.to_json() + "\n")
    else:
        sys.stdout.write(mdp.to_json() + "\n")
    if args.write_expert:
        ds = sample_trajectories(mdp, build_expert(mdp), args.horizon, args.n_expert, derive_rng(args.seed, 1))
        write_trajectories(args.write_expert, ds, gamma=mdp.gamma, seed=args.seed)
    if args.write_feedback:
        pairs = sample_query_pairs(mdp, uniform_policy(mdp.n_states, mdp.n_actions), args.horizon,
                                   args.n_queries, derive_rng(args.seed, 4))
        fb = generate_feedback(pairs, mdp.r, args.evaluator, derive_rng(args.seed, 5), gamma=mdp.gamma)
        write_feedback(args.write_feedback, fb, gamma=mdp.gamma, seed=args.seed)
    return EXIT_OK


def cmd_irl_run(args) -> int:
    mdp = _load_mdp(args.mdp)
    irl, est, d_sub = _irl_set(args, mdp)
    r, _, _ = solve_reward_gap_lp(irl, est.d_hat, d_sub)
    _emit(_report(mdp, r, eps_x=float(irl.eps_x[0]), n_expert=est.n_trajectories), args.out)
    return EXIT_OK


def cmd_rlhf_run(args) -> int:
    mdp = _load_mdp(args.mdp)
    fb = _feedback(args, mdp, args.evaluator)
    try:
        hf = build_hf_set(fb, args.eps_r, mdp.gamma, scale=args.scale)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    r = select_reward(hf.cs, mdp.n_sa, ObjectiveKind.DUMMY)
    _emit(_report(mdp, r, n_queries=hf.n_queries), args.out)
    return EXIT_OK


def cmd_integrate_run(args) -> int:
    mdp = _load_mdp(args.mdp)
    irl, est, d_sub = _irl_set(args, mdp)
    fb = _feedback(args, mdp, args.evaluator)
    try:
        hf = build_hf_set(fb, args.eps_r, mdp.gamma, scale=args.scale)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cs = build_integrated_set(irl, hf)
    r = select_reward(cs, mdp.n_sa, ObjectiveKind.REWARD_GAP, est.d_hat, d_sub)
    _emit(_report(mdp, r, n_queries=hf.n_queries, n_expert=est.n_trajectories), args.out)
    return EXIT_OK


def cmd_bandit(args) -> int:
    reports = []
    for k in range(args.seeds):
        seed = args.seed + k
        reports.append(run_bandit_counterexample(args.n, derive_rng(seed), seed=seed))
    ok = sum(r["pi_lp"] == "a3" and r["pi_mle"] == "a2" and r["pi_pe"] == "a2" for r in reports)
    payload = reports[0] if args.seeds == 1 else {"reports": reports, "pattern_count": ok}
    _emit(payload, args.out)
    return EXIT_OK if all(r["pi_lp"] is not None for r in reports) else EXIT_RUN_FAILED


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    try:
        cfg = cfg.with_overrides(base_seed=args.seed, jobs=args.jobs, runs=args.runs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = run_experiment(cfg)
    summary = summarize(results)
    (out / "results.csv").write_text(results_csv(results))
    (out / "summary.csv").write_text(summary_csv(summary))
    (out / "error_curve.svg").write_text(error_curve_svg(summary))
    failed = sum(not r.ok for r in results)
    log.info("%d runs, %d failed; results in %s", len(results), failed, out)
    return EXIT_RUN_FAILED if failed else EXIT_OK


def _add_irl_args(p):
    p.add_argument("--expert", help="expert trajectories (JSON lines); simulated if omitted")
    p.add_argument("--suboptimal", help="non-expert trajectories for the reward-gap objective")
    p.add_argument("--n-expert", type=int, default=200)
    p.add_argument("--n-suboptimal", type=int, default=100)
    p.add_argument("--eps-g", type=float, default=0.0)
    p.add_argument("--eps-x", type=float, default=None, help="override the per-direction slack")
    p.add_argument("--B", type=float, default=100.0)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--x-mode", choices=["sign_vectors", "plus_minus_identity"], default=None)


def _add_hf_args(p, evaluator="greedy"):
    p.add_argument("--feedback", help="labelled pairs (JSON lines); simulated if omitted")
    p.add_argument("--n-queries", type=int, default=200)
    p.add_argument("--evaluator", choices=["btl", "greedy", "continuous"], default=evaluator)
    p.add_argument("--eps-r", type=float, default=-0.01)
    p.add_argument("--scale", type=float, default=1.0, help="gap per unit of continuous label")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lpreward", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    mdp = sub.add_parser("mdp").add_subparsers(dest="action", required=True, parser_class=_Parser)
    gen = mdp.add_parser("gen", help="random MDP with the default true reward")
    gen.add_argument("--states", type=int, default=10)
    gen.add_argument("--actions", type=int, default=2)
    gen.add_argument("--gamma", type=float, default=0.95)
    gen.add_argument("--horizon", type=int, default=20)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out")
    gen.add_argument("--write-expert", metavar="PATH", help="also sample expert trajectories")
    gen.add_argument("--n-expert", type=int, default=200)
    gen.add_argument("--write-feedback", metavar="PATH", help="also sample labelled query pairs")
    gen.add_argument("--n-queries", type=int, default=200)
    gen.add_argument("--evaluator", choices=["btl", "greedy", "continuous"], default="greedy")
    gen.set_defaults(func=cmd_mdp_gen)

    for name, func, irl, hf in (("irl", cmd_irl_run, True, False),
                                ("rlhf", cmd_rlhf_run, False, True),
                                ("integrate", cmd_integrate_run, True, True)):
        grp = sub.add_parser(name).add_subparsers(dest="action", required=True, parser_class=_Parser)
        p = grp.add_parser("run")
        p.add_argument("--mdp", required=True, help="MDP JSON from 'mdp gen'")
        p.add_argument("--horizon", type=int, default=20)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="write the JSON report here instead of stdout")
        if irl:
            _add_irl_args(p)
        if hf:
            _add_hf_args(p, "btl" if irl else "greedy")
        p.set_defaults(func=func)

    b = sub.add_parser("bandit", help="three-arm comparison of LP, MLE and pessimistic MLE")
    b.add_argument("--n", type=int, default=2000, help="number of queries")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--seeds", type=int, default=1, help="repeat over consecutive seeds")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bandit)

    e = sub.add_parser("experiment", help="sweep algorithms over sample sizes")
    e.add_argument("--config", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--seed", type=int, default=None, help="override base_seed")
    e.add_argument("--jobs", type=int, default=None)
    e.add_argument("--runs", type=int, default=None)
    e.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except LpError as exc:
        log.error("run failed: %s", exc)
        _emit({"status": "infeasible" if exc.status.value == "infeasible" else "numeric_failure",
               "message": str(exc)}, getattr(args, "out", None))
        return EXIT_RUN_FAILED
    except Exception:  # noqa: BLE001
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
