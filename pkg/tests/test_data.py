import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lpreward.data import (
    EvaluatorModel,
    FeedbackDataset,
    FeedbackMode,
    Trajectory,
    TrajectoryDataset,
    build_K_D,
    estimate,
    estimate_occupancy,
    estimate_transition_occupancy,
    generate_feedback,
    make_rng,
    psi_matrix,
    read_feedback,
    read_trajectories,
    sample_query_pairs,
    sample_trajectories,
    sample_trajectory,
    truncated_occupancy,
    uniform_policy,
    vectorize_trajectory,
    write_feedback,
    write_trajectories,
)
from lpreward.mdp import TabularMdp, build_K, build_M, occupancy_of_policy, weight_ratio

from conftest import make_random_mdp, make_random_policy

HAND = TrajectoryDataset(np.array([[0, 1, 0]]), np.array([[0, 1]]), 2, 2)


def _deterministic_mdp():
    P = np.zeros((3, 2, 3))
    for s in range(3):
        P[s, 0, (s + 1) % 3] = 1.0
        P[s, 1, s] = 1.0
    return TabularMdp(P, 0.5, [1.0, 0.0, 0.0])


def test_single_state_rollout():
    mdp = TabularMdp(np.ones((1, 1, 1)), 0.9, [1.0])
    tau = sample_trajectory(mdp, [[1.0]], 5, make_rng(0))
    assert tau.states.tolist() == [0] * 6
    assert tau.actions.tolist() == [0] * 5


def test_deterministic_rollout():
    mdp = _deterministic_mdp()
    ds = sample_trajectories(mdp, np.array([[1.0, 0.0]] * 3), 4, 3, make_rng(1))
    assert ds.states.tolist() == [[0, 1, 2, 0, 1]] * 3
    assert ds.actions.tolist() == [[0, 0, 0, 0]] * 3


def test_state_marginals_match_chain(rng):
    mdp = make_random_mdp(rng, 3, 2)
    pi = make_random_policy(rng, 3, 2)
    H, n = 4, 100_000
    ds = sample_trajectories(mdp, pi, H, n, make_rng(7))
    P_pi = np.einsum("sa,sat->st", pi, mdp.P)
    rho = mdp.mu0.copy()
    for h in range(H + 1):
        freq = np.bincount(ds.states[:, h], minlength=3) / n
        sigma = np.sqrt(rho * (1 - rho) / n)
        assert np.all(np.abs(freq - rho) <= 3 * sigma + 1e-12)
        rho = rho @ P_pi


def test_hand_computed_occupancy():
    d = estimate_occupancy(HAND, 0.5)
    assert d == pytest.approx([0.5, 0.0, 0.0, 0.25])
    assert d.sum() == pytest.approx(1 - 0.5**2)


def test_identical_trajectories_average():
    many = TrajectoryDataset(np.repeat(HAND.states, 5, axis=0), np.repeat(HAND.actions, 5, axis=0), 2, 2)
    assert estimate_occupancy(many, 0.5) == pytest.approx(estimate_occupancy(HAND, 0.5))


def test_occupancy_converges_to_truncation(rng):
    mdp = make_random_mdp(rng, 3, 2, gamma=0.8)
    pi = make_random_policy(rng, 3, 2)
    ds = sample_trajectories(mdp, pi, 10, 100_000, make_rng(3))
    assert np.max(np.abs(estimate_occupancy(ds, 0.8) - truncated_occupancy(mdp, pi, 10))) <= 0.01


def test_truncated_occupancy_limit(rng):
    mdp = make_random_mdp(rng, 3, 2, gamma=0.7)
    pi = make_random_policy(rng, 3, 2)
    assert truncated_occupancy(mdp, pi, 200) == pytest.approx(occupancy_of_policy(mdp, pi), abs=1e-12)


def test_transition_occupancy_hand():
    dp = estimate_transition_occupancy(HAND, 0.5)
    assert dp[0, 0, 1] == 0.5
    assert dp[1, 1, 0] == 0.25
    assert dp.sum() == pytest.approx(0.75)


def test_transition_occupancy_deterministic_support():
    mdp = _deterministic_mdp()
    ds = sample_trajectories(mdp, uniform_policy(3, 2), 6, 50, make_rng(2))
    dp = estimate_transition_occupancy(ds, 0.5)
    for s in range(3):
        for a in range(2):
            nxt = int(np.argmax(mdp.P[s, a]))
            mask = np.ones(3, bool)
            mask[nxt] = False
            assert np.all(dp[s, a, mask] == 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 25), st.floats(0.1, 0.99))
def test_marginalization_and_normalization(seed, H, gamma):
    rng = np.random.default_rng(seed)
    mdp = make_random_mdp(rng, 4, 3, gamma=0.9)
    ds = sample_trajectories(mdp, make_random_policy(rng, 4, 3), H, 20, make_rng(seed))
    est = estimate(ds, gamma)
    assert est.d_hat.sum() == pytest.approx(1 - gamma**H, abs=1e-12)
    assert est.d_prime_hat.sum(axis=2).ravel() == pytest.approx(est.d_hat, abs=1e-15)
    psi = psi_matrix(ds, gamma)
    assert psi.sum(axis=1) == pytest.approx(np.full(20, (1 - gamma**H) / (1 - gamma)), abs=1e-12)


def test_K_D_hand():
    d_hat = np.array([0.5, 0.0, 0.0, 0.0])
    dp = np.zeros((2, 2, 2))
    dp[0, 0, 1] = 0.5
    K = build_K_D(d_hat, dp, 0.5)
    assert K[:, 0] == pytest.approx([0.5, -0.25])
    assert np.all(K[:, 1:] == 0)
    assert np.all(build_K_D(np.zeros(4), np.zeros((2, 2, 2)), 0.5) == 0)


def test_K_D_with_exact_estimates_matches_M(rng):
    mdp = make_random_mdp(rng, 3, 2)
    d_e = occupancy_of_policy(mdp, make_random_policy(rng, 3, 2))
    d_prime = d_e.reshape(3, 2)[..., None] * mdp.P
    K = build_K_D(d_e, d_prime, mdp.gamma)
    assert K == pytest.approx(build_K(mdp, d_e), abs=1e-15)
    d = occupancy_of_policy(mdp, make_random_policy(rng, 3, 2))
    assert K @ weight_ratio(d, d_e) == pytest.approx(build_M(mdp) @ d, abs=1e-12)


def test_vectorize_examples():
    tau = Trajectory([0, 1, 0], [0, 1])
    assert vectorize_trajectory(tau, 0.5, 2, 2) == pytest.approx([1.0, 0.0, 0.0, 0.5])
    g, H = 0.8, 7
    rep = Trajectory([0] * (H + 1), [0] * H)
    assert vectorize_trajectory(rep, g, 1, 1)[0] == pytest.approx((1 - g**H) / (1 - g))


def test_vectorize_matches_step_loop(rng):
    mdp = make_random_mdp(rng, 3, 2)
    ds = sample_trajectories(mdp, uniform_policy(3, 2), 12, 30, make_rng(4))
    psi = psi_matrix(ds, 0.9)
    for k, tau in enumerate(ds):
        total, w = 0.0, 1.0
        for s, a in zip(tau.states[:-1], tau.actions):
            total += w * mdp.r[s * 2 + a]
            w *= 0.9
        assert abs(mdp.r @ psi[k] - total) <= 1e-12
        assert psi[k] == pytest.approx(vectorize_trajectory(tau, 0.9, 3, 2), abs=1e-15)


def _pairs(n, gap_sign=1):
    # single-state bandit, H = 1: psi = e_a
    first = TrajectoryDataset(np.zeros((n, 2), int), np.full((n, 1), 1 if gap_sign > 0 else 0), 1, 2)
    second = TrajectoryDataset(np.zeros((n, 2), int), np.full((n, 1), 0 if gap_sign > 0 else 1), 1, 2)
    return first, second


def test_greedy_feedback():
    fb = generate_feedback(_pairs(20), [0.0, 1.0], "greedy", make_rng(0), gamma=0.9)
    assert np.all(fb.y == 1)
    fb = generate_feedback(_pairs(20, -1), [0.0, 1.0], "greedy", make_rng(0), gamma=0.9)
    assert np.all(fb.y == 2)
    ties = generate_feedback(_pairs(5), [0.3, 0.3], "greedy", make_rng(0), gamma=0.9)
    assert np.all(ties.y == 1)


def test_btl_zero_gap_is_fair():
    n = 10_000
    fb = generate_feedback(_pairs(n), [0.5, 0.5], "btl", make_rng(1), gamma=0.9)
    p = np.mean(fb.y == 1)
    assert abs(p - 0.5) <= 3 * np.sqrt(0.25 / n)


@pytest.mark.parametrize("gap", [0.3, 1.0, -0.8])
def test_btl_matches_sigmoid(gap):
    n = 10_000
    fb = generate_feedback(_pairs(n), [0.0, gap], "btl", make_rng(2), gamma=0.9)
    p_true = 1 / (1 + np.exp(-gap))
    p = np.mean(fb.y == 1)
    assert abs(p - p_true) <= 3 * np.sqrt(p_true * (1 - p_true) / n)


def test_continuous_feedback_range():
    fb = generate_feedback(_pairs(500), [0.0, 1.0], "continuous", make_rng(3), gamma=0.9, scale=0.2)
    assert fb.mode is FeedbackMode.CONTINUOUS
    assert np.all((fb.y >= 0) & (fb.y <= 0.2))
    neg = generate_feedback(_pairs(500, -1), [0.0, 1.0], "continuous", make_rng(3), gamma=0.9)
    assert np.all((neg.y <= 0) & (neg.y >= -0.2))
    big = generate_feedback(_pairs(50), [0.0, 1.0], "continuous", make_rng(3), gamma=0.9, scale=50.0)
    assert np.all(np.abs(big.y) <= 1.0)


def test_query_pairs_examples(rng):
    mdp = _deterministic_mdp()
    first, second = sample_query_pairs(mdp, np.array([[1.0, 0.0]] * 3), 5, 4, make_rng(0))
    assert np.array_equal(first.states, second.states)
    empty = sample_query_pairs(mdp, uniform_policy(3, 2), 5, 0, make_rng(0))
    assert len(empty[0]) == 0 and len(empty[1]) == 0


def test_query_pair_marginals_chi_square(rng):
    scipy_stats = pytest.importorskip("scipy.stats")
    mdp = make_random_mdp(rng, 3, 2)
    pi = uniform_policy(3, 2)
    n = 20_000
    first, second = sample_query_pairs(mdp, pi, 1, n, make_rng(5))
    p = (mdp.mu0[:, None] * pi).ravel()
    for ds in (first, second):
        counts = np.bincount(ds.states[:, 0] * 2 + ds.actions[:, 0], minlength=6)
        assert scipy_stats.chisquare(counts, n * p).pvalue > 0.001


def test_dataset_validation():
    with pytest.raises(ValueError):
        TrajectoryDataset(np.zeros((1, 3), int), np.zeros((1, 3), int), 2, 2)
    with pytest.raises(ValueError):
        TrajectoryDataset(np.full((1, 2), 5), np.zeros((1, 1), int), 2, 2)
    e = TrajectoryDataset.empty(1, 1, 2)
    with pytest.raises(ValueError):
        FeedbackDataset(*_pairs(2), [1, 3])
    with pytest.raises(ValueError):
        FeedbackDataset(*_pairs(2), [0.5, 1.5], FeedbackMode.CONTINUOUS)
    with pytest.raises(ValueError):
        estimate_occupancy(e, 0.9)


def test_jsonl_round_trip(tmp_path, rng):
    mdp = make_random_mdp(rng, 3, 2)
    ds = sample_trajectories(mdp, uniform_policy(3, 2), 6, 5, make_rng(0))
    write_trajectories(tmp_path / "t.jsonl", ds, gamma=0.9, seed=42)
    back, meta = read_trajectories(tmp_path / "t.jsonl")
    assert np.array_equal(back.states, ds.states) and np.array_equal(back.actions, ds.actions)
    assert meta["seed"] == 42
    pairs = sample_query_pairs(mdp, uniform_policy(3, 2), 6, 4, make_rng(1))
    for model in EvaluatorModel:
        fb = generate_feedback(pairs, mdp.r, model, make_rng(2), gamma=0.9)
        write_feedback(tmp_path / "f.jsonl", fb, seed=7)
        fb2, _ = read_feedback(tmp_path / "f.jsonl")
        assert np.array_equal(fb2.y, fb.y) and fb2.mode is fb.mode
        assert np.array_equal(fb2.second.states, fb.second.states)
    line = (tmp_path / "f.jsonl").read_text().splitlines()[1]
    assert {"states", "actions", "y"} == set(__import__("json").loads(line))
