import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lpreward import kernels
from lpreward.baselines import (
    BanditInstance,
    MleConfig,
    ParamSpace,
    bandit_report_json,
    btl_log_likelihood,
    feature_covariance,
    mle_btl_fit,
    mle_fit_features,
    pessimistic_occupancy,
    pessimistic_penalty,
    pessimistic_policy,
    pessimistic_scores,
    project,
    run_bandit_counterexample,
)
from lpreward.data import FeedbackDataset, TrajectoryDataset, make_rng
from lpreward.mdp import build_M, deterministic_occupancies, occupancy_of_policy

from conftest import make_random_mdp, make_random_policy

BALL = MleConfig(param_space=ParamSpace.SIMPLEX_BALL)


def _comparisons(n12, n23, n31=0):
    e = np.eye(3)
    rows = [e[1] - e[0]] * n12 + [e[2] - e[1]] * n23 + [e[0] - e[2]] * n31
    return np.array(rows).reshape(-1, 3)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_simplex_ball_projection_against_grid(theta):
    theta = np.array(theta)
    p = project(theta, ParamSpace.SIMPLEX_BALL)
    assert abs(p.sum()) <= 1e-12 and np.linalg.norm(p) <= 1 + 1e-12
    b1 = np.array([1.0, -1.0, 0.0]) / np.sqrt(2)
    b2 = np.array([1.0, 1.0, -2.0]) / np.sqrt(6)
    rad, ang = np.meshgrid(np.linspace(0, 1, 201), np.linspace(0, 2 * np.pi, 721))
    grid = (rad * np.cos(ang)).ravel()[:, None] * b1 + (rad * np.sin(ang)).ravel()[:, None] * b2
    best = np.min(np.linalg.norm(grid - theta, axis=1))
    assert np.linalg.norm(p - theta) <= best + 1e-12


def test_box_projection():
    assert project([2.0, -3.0, 0.5], ParamSpace.BOX, 1.0).tolist() == [1.0, -1.0, 0.5]


def test_kernel_projections_agree():
    rng = np.random.default_rng(0)
    for _ in range(50):
        t = rng.normal(scale=2, size=5)
        for mode, space in ((kernels.PROJ_BOX, ParamSpace.BOX), (kernels.PROJ_SIMPLEX_BALL, ParamSpace.SIMPLEX_BALL)):
            a = kernels.NUMPY_KERNELS["project"](t, mode, 1.0)
            assert a == pytest.approx(project(t, space), abs=1e-14)
            if kernels.NUMBA_KERNELS:
                assert kernels.NUMBA_KERNELS["project"](t, mode, 1.0) == pytest.approx(a, abs=1e-14)


def test_mle_simple_cases():
    fit = mle_fit_features(_comparisons(1, 0), BALL)
    assert fit.theta[1] > fit.theta[0]
    empty = mle_fit_features(np.zeros((0, 3)), BALL)
    assert empty.theta.tolist() == [0.0, 0.0, 0.0] and empty.iterations == 0


@pytest.mark.parametrize("n12,n23", [(995, 5), (990, 10), (900, 2)])
def test_mle_prefers_middle_arm_when_skewed(n12, n23):
    n = n12 + n23
    assert n12 / n > 2 * np.e**3 * n23 / n
    fit = mle_fit_features(_comparisons(n12, n23), BALL)
    assert fit.theta[1] > fit.theta[2]
    assert abs(fit.theta.sum()) <= 1e-12 and np.linalg.norm(fit.theta) <= 1 + 1e-12


def test_mle_converges_on_balanced_data():
    fit = mle_fit_features(_comparisons(10, 10, 3), BALL)
    assert fit.converged and fit.step_norm <= 1e-6
    assert fit.theta[2] > fit.theta[1] > fit.theta[0]


def test_log_likelihood_non_decreasing():
    rng = np.random.default_rng(4)
    Z = rng.normal(size=(40, 4))
    lls = [mle_fit_features(Z, MleConfig(max_iters=k, step_size=0.5)).log_likelihood for k in range(60)]
    assert np.all(np.diff(lls) >= -1e-15)
    assert lls[0] == pytest.approx(btl_log_likelihood(Z, np.zeros(4)))


def test_kernel_backends_agree_on_fit():
    if not kernels.NUMBA_KERNELS:
        pytest.skip("numba unavailable")
    rng = np.random.default_rng(5)
    Z = rng.normal(size=(30, 4))
    for mode in (kernels.PROJ_BOX, kernels.PROJ_SIMPLEX_BALL):
        a = kernels.NUMPY_KERNELS["pga_btl"](Z, np.zeros(4), 0.1, 500, 1e-8, mode, 1.0)
        b = kernels.NUMBA_KERNELS["pga_btl"](Z, np.zeros(4), 0.1, 500, 1e-8, mode, 1.0)
        assert a[1] == b[1]
        assert np.asarray(a[0]) == pytest.approx(np.asarray(b[0]), abs=1e-10)


def test_mle_on_dataset_requires_discrete():
    z = np.zeros((1, 2), dtype=np.int64)
    first = TrajectoryDataset(z, np.array([[0]]), 1, 2)
    second = TrajectoryDataset(z, np.array([[1]]), 1, 2)
    fit = mle_btl_fit(FeedbackDataset(first, second, [2.0]), 0.9, MleConfig())
    assert fit.theta[1] > fit.theta[0]
    with pytest.raises(ValueError):
        mle_btl_fit(FeedbackDataset(first, second, [0.5], "continuous"), 0.9, MleConfig())


def test_config_validation():
    with pytest.raises(ValueError):
        MleConfig(step_size=0)
    with pytest.raises(ValueError):
        MleConfig(lam=-1)
    with pytest.raises(ValueError):
        MleConfig(c_pess=0)


def _frac_inverse(m):
    a, b, c = m[0]
    d, e, f = m[1]
    g, h, i = m[2]
    det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)
    adj = [[e * i - f * h, c * h - b * i, b * f - c * e],
           [f * g - d * i, a * i - c * g, c * d - a * f],
           [d * h - e * g, b * g - a * h, a * e - b * d]]
    return [[x / det for x in row] for row in adj]


def test_penalty_examples():
    assert pessimistic_penalty(np.zeros((0, 3)), 1.0, [0, 1, 0]) == pytest.approx(1.0)
    half = Fraction(1, 2)
    sigma = [[half, -half, 0], [-half, 2 * half, -half], [0, -half, half]]
    W = [[sigma[i][j] + (1 if i == j else 0) for j in range(3)] for i in range(3)]
    inv = _frac_inverse(W)
    Z = _comparisons(1, 1)
    assert feature_covariance(Z) == pytest.approx(np.array(sigma, dtype=float))
    assert pessimistic_penalty(Z, 1.0, [0, 1, 0]) == pytest.approx(float(inv[1][1]), abs=1e-15)
    assert pessimistic_penalty(Z, 1.0, [0, 0, 1]) == pytest.approx(float(inv[2][2]), abs=1e-15)
    both = pessimistic_penalty(Z, 1.0, np.eye(3))
    assert both == pytest.approx([float(inv[k][k]) for k in range(3)], abs=1e-15)
    with pytest.raises(ValueError):
        pessimistic_penalty(Z, 0.0, [1, 0, 0])


def test_third_arm_penalty_dominates():
    rng = np.random.default_rng(6)
    for _ in range(50):
        n12, n23 = (int(x) for x in rng.integers(1, 500, size=2))
        Z = _comparisons(n12, n23)
        for lam in (0.01, 0.1, 1.0, 10.0):
            phi2, phi3 = pessimistic_penalty(Z, lam, np.eye(3)[1:])
            assert phi3 >= phi2 - 1e-12


def test_pessimistic_policy_examples():
    theta = np.array([0.1, 0.7, 0.2])
    assert pessimistic_policy(theta, np.zeros((0, 3)), 1.0, 1e-12, np.eye(3)) == 1
    Z = _comparisons(995, 5)
    fit = mle_fit_features(Z, BALL)
    assert pessimistic_policy(fit.theta, Z, 0.1, 1.0, np.eye(3)) == 1
    assert pessimistic_policy(fit.theta, Z, 0.1, 1e-9, np.eye(3)) == int(np.argmax(fit.theta))
    tie = pessimistic_policy(np.zeros(3), np.zeros((0, 3)), 1.0, 1.0, np.eye(3))
    assert tie == 0


def test_pessimistic_occupancy_is_optimal(rng):
    mdp = make_random_mdp(rng, 3, 2)
    Z = rng.normal(size=(25, 6))
    theta = rng.uniform(-1, 1, 6)
    d, it, gap = pessimistic_occupancy(mdp, theta, Z, 0.1, 2.0, max_iters=2000)
    assert np.all(d >= -1e-12)
    assert build_M(mdp) @ d == pytest.approx((1 - mdp.gamma) * mdp.mu0, abs=1e-10)
    best = pessimistic_scores(theta, Z, 0.1, 2.0, d)[0]
    _, D = deterministic_occupancies(mdp)
    assert best >= pessimistic_scores(theta, Z, 0.1, 2.0, D).max() - 1e-12
    for _ in range(200):
        d_rand = occupancy_of_policy(mdp, make_random_policy(rng, 3, 2))
        assert best >= pessimistic_scores(theta, Z, 0.1, 2.0, d_rand)[0] - 1e-4


def test_bandit_report():
    rep = run_bandit_counterexample(2000, make_rng(0), seed=0)
    assert (rep["pi_star"], rep["pi_lp"], rep["pi_mle"], rep["pi_pe"]) == ("a3", "a3", "a2", "a2")
    assert sum(rep["counts"].values()) == 2000 and rep["counts"]["N31"] == 0
    data = json.loads(bandit_report_json(rep))
    assert {"pi_star", "pi_lp", "pi_mle", "pi_pe", "counts", "seed"} <= set(data)


def test_bandit_loose_slack_is_documented_only():
    rep = run_bandit_counterexample(500, make_rng(1), BanditInstance(eps_r=5.0))
    assert rep["pi_lp"] in ("a1", "a2", "a3")


def test_bandit_degenerate_draw_flag():
    rep = run_bandit_counterexample(50, make_rng(2), BanditInstance(p12=1.0, p23=0.0))
    assert rep["resample"] and rep["counts"]["N23"] == 0
    with pytest.raises(ValueError):
        BanditInstance(p12=0.5, p23=0.2)
