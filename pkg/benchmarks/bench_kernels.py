"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Kernel rows call both implementations in one process. The end-to-end rows
run one experiment cell in a subprocess per backend, since the backend is
fixed at import time by LPREWARD_NUMBA.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from lpreward import kernels
from lpreward.data import _cumulative, derive_rng, uniform_policy
from lpreward.experiments import random_mdp
from lpreward.config import ExperimentConfig


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases():
    cfg = ExperimentConfig()
    mdp = random_mdp(cfg, derive_rng(0, 0))
    H, n = 20, 2000
    pi = uniform_policy(cfg.n_states, cfg.n_actions)
    u = derive_rng(1).random((n, 2 * H + 1))
    args = (_cumulative(mdp.mu0), _cumulative(pi), _cumulative(mdp.P), u)
    states, actions = kernels.NUMPY_KERNELS["rollout"](*args)
    Z = derive_rng(2).normal(size=(1000, 20)) * 0.3
    return {
        "rollout": args,
        "discounted_counts": (states, actions, 0.95, cfg.n_states, cfg.n_actions),
        "psi_batch": (states, actions, 0.95, cfg.n_states, cfg.n_actions),
        "pga_btl": (Z, np.zeros(20), 0.01, 2000, 0.0, kernels.PROJ_BOX, 1.0),
    }


CELL = """
import time
from lpreward.config import ExperimentConfig
from lpreward.experiments import run_single
cfg = ExperimentConfig(N_grid=(1000,), runs=1)
run_single(cfg, "{alg}", 200, 0)  # compile / warm caches
t0 = time.perf_counter()
for k in range(3):
    run_single(cfg, "{alg}", 1000, k)
print((time.perf_counter() - t0) / 3)
"""


def end_to_end(alg, flag):
    env = dict(os.environ, LPREWARD_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", CELL.format(alg=alg)], env=env,
                         capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-end-to-end", action="store_true")
    args = ap.parse_args()
    if not kernels.NUMBA_KERNELS:
        sys.exit("numba is not installed")

    print(f"{'kernel':<22}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, a in kernel_cases().items():
        kernels.NUMBA_KERNELS[name](*a)  # compile
        t_np = best_of(lambda: kernels.NUMPY_KERNELS[name](*a), args.repeat)
        t_nb = best_of(lambda: kernels.NUMBA_KERNELS[name](*a), args.repeat)
        print(f"{name:<22}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>10.1f}")

    if args.skip_end_to_end:
        return
    print(f"\n{'run at N=1000':<22}{'numpy s':>12}{'numba s':>12}{'speedup':>10}")
    for alg in ("LP-IRL-1", "LP-IRL-C", "LP-HF", "MLE-HF"):
        t_np, t_nb = end_to_end(alg, "0"), end_to_end(alg, "1")
        print(f"{alg:<22}{t_np:>12.3f}{t_nb:>12.3f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
