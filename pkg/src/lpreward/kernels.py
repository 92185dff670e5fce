"""Hot inner loops, each in two flavours.

``*_loop`` functions are written element-by-element and compiled with numba;
``*_numpy`` functions are vectorised equivalents. The public names at the
bottom of the module bind to one flavour according to :mod:`lpreward._accel`.
Both flavours consume identical inputs and make identical discrete choices
(pivot rows/columns, sampled indices); floating sums may differ in the last ulp.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import USE_NUMBA, HAVE_NUMBA, njit

SIMPLEX_OPTIMAL = 0
SIMPLEX_UNBOUNDED = 1
SIMPLEX_ITER_LIMIT = 2

PROJ_SIMPLEX_BALL = 0
PROJ_BOX = 1

_RATIO_TIE = 1e-12


# --------------------------------------------------------------------------
# simplex tableau


def _pivot_loop(T, row, col):
    m, n = T.shape
    inv = 1.0 / T[row, col]
    for j in range(n):
        T[row, j] *= inv
    T[row, col] = 1.0
    for i in range(m):
        if i == row:
            continue
        f = T[i, col]
        if f != 0.0:
            for j in range(n):
                T[i, j] -= f * T[row, j]
            T[i, col] = 0.0


def _pivot_numpy(T, row, col):
    T[row] *= 1.0 / T[row, col]
    T[row, col] = 1.0
    f = T[:, col].copy()
    f[row] = 0.0
    nz = np.nonzero(f)[0]
    if nz.size:
        T[nz] -= np.outer(f[nz], T[row])
        T[nz, col] = 0.0


def _simplex_loop(T, basis, n_cols, opt_tol, pivot_tol, max_iter, bland_after):
    m = T.shape[0] - 1
    rhs = T.shape[1] - 1
    streak = 0
    bland = False
    for it in range(max_iter):
        col = -1
        if bland:
            for j in range(n_cols):
                if T[m, j] < -opt_tol:
                    col = j
                    break
        else:
            best = -opt_tol
            for j in range(n_cols):
                if T[m, j] < best:
                    best = T[m, j]
                    col = j
        if col < 0:
            return SIMPLEX_OPTIMAL, it
        min_ratio = np.inf
        for i in range(m):
            a = T[i, col]
            if a > pivot_tol:
                ratio = T[i, rhs] / a
                if ratio < min_ratio:
                    min_ratio = ratio
        if min_ratio == np.inf:
            return SIMPLEX_UNBOUNDED, it
        row = -1
        for i in range(m):
            a = T[i, col]
            if a > pivot_tol and T[i, rhs] / a <= min_ratio + _RATIO_TIE:
                if row < 0 or basis[i] < basis[row]:
                    row = i
        if min_ratio <= _RATIO_TIE:
            streak += 1
            if streak > bland_after:
                bland = True
        else:
            streak = 0
        _pivot_loop(T, row, col)
        basis[row] = col
    return SIMPLEX_ITER_LIMIT, max_iter


def _simplex_numpy(T, basis, n_cols, opt_tol, pivot_tol, max_iter, bland_after):
    m = T.shape[0] - 1
    streak = 0
    bland = False
    for it in range(max_iter):
        red = T[m, :n_cols]
        if bland:
            cand = np.nonzero(red < -opt_tol)[0]
            if cand.size == 0:
                return SIMPLEX_OPTIMAL, it
            col = int(cand[0])
        else:
            col = int(np.argmin(red))
            if not red[col] < -opt_tol:
                return SIMPLEX_OPTIMAL, it
        a = T[:m, col]
        ok = np.nonzero(a > pivot_tol)[0]
        if ok.size == 0:
            return SIMPLEX_UNBOUNDED, it
        ratios = T[ok, -1] / a[ok]
        min_ratio = ratios.min()
        tied = ok[ratios <= min_ratio + _RATIO_TIE]
        row = int(tied[np.argmin(basis[tied])])
        if min_ratio <= _RATIO_TIE:
            streak += 1
            if streak > bland_after:
                bland = True
        else:
            streak = 0
        _pivot_numpy(T, row, col)
        basis[row] = col
    return SIMPLEX_ITER_LIMIT, max_iter


# --------------------------------------------------------------------------
# trajectory sampling and counting


def _rollout_loop(cum_mu0, cum_pi, cum_P, u):
    n, width = u.shape
    H = (width - 1) // 2
    states = np.empty((n, H + 1), dtype=np.int64)
    actions = np.empty((n, H), dtype=np.int64)
    for k in range(n):
        s = 0
        while u[k, 0] >= cum_mu0[s]:
            s += 1
        states[k, 0] = s
        for h in range(H):
            a = 0
            while u[k, 1 + 2 * h] >= cum_pi[s, a]:
                a += 1
            actions[k, h] = a
            nxt = 0
            while u[k, 2 + 2 * h] >= cum_P[s, a, nxt]:
                nxt += 1
            s = nxt
            states[k, h + 1] = s
    return states, actions


def _rollout_numpy(cum_mu0, cum_pi, cum_P, u):
    n, width = u.shape
    H = (width - 1) // 2
    states = np.empty((n, H + 1), dtype=np.int64)
    actions = np.empty((n, H), dtype=np.int64)
    s = (u[:, :1] >= cum_mu0[None, :]).sum(axis=1)
    states[:, 0] = s
    for h in range(H):
        a = (u[:, 1 + 2 * h, None] >= cum_pi[s]).sum(axis=1)
        actions[:, h] = a
        s = (u[:, 2 + 2 * h, None] >= cum_P[s, a]).sum(axis=1)
        states[:, h + 1] = s
    return states, actions


def _discounted_counts_loop(states, actions, gamma, n_states, n_actions):
    n, H = actions.shape
    sa = np.zeros(n_states * n_actions)
    sas = np.zeros(n_states * n_actions * n_states)
    for k in range(n):
        w = 1.0
        for h in range(H):
            idx = states[k, h] * n_actions + actions[k, h]
            sa[idx] += w
            sas[idx * n_states + states[k, h + 1]] += w
            w *= gamma
    return sa, sas


def _discounted_counts_numpy(states, actions, gamma, n_states, n_actions):
    n, H = actions.shape
    weights = np.empty(H)
    w = 1.0
    for h in range(H):
        weights[h] = w
        w *= gamma
    idx = (states[:, :H] * n_actions + actions).ravel()
    idx3 = idx * n_states + states[:, 1:].ravel()
    wts = np.broadcast_to(weights, (n, H)).ravel()
    sa = np.zeros(n_states * n_actions)
    sas = np.zeros(n_states * n_actions * n_states)
    np.add.at(sa, idx, wts)
    np.add.at(sas, idx3, wts)
    return sa, sas


def _psi_batch_loop(states, actions, gamma, n_states, n_actions):
    n, H = actions.shape
    out = np.zeros((n, n_states * n_actions))
    for k in range(n):
        w = 1.0
        for h in range(H):
            out[k, states[k, h] * n_actions + actions[k, h]] += w
            w *= gamma
    return out


def _psi_batch_numpy(states, actions, gamma, n_states, n_actions):
    n, H = actions.shape
    out = np.zeros((n, n_states * n_actions))
    w = 1.0
    rows = np.arange(n)
    for h in range(H):
        np.add.at(out, (rows, states[:, h] * n_actions + actions[:, h]), w)
        w *= gamma
    return out


# --------------------------------------------------------------------------
# projected gradient ascent on the BTL log-likelihood


def _log_sigmoid(x):
    if x >= 0.0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


def _project_loop(theta, mode, bound):
    k = theta.shape[0]
    out = theta.copy()
    if mode == PROJ_BOX:
        for i in range(k):
            if out[i] > bound:
                out[i] = bound
            elif out[i] < -bound:
                out[i] = -bound
        return out
    mean = 0.0
    for i in range(k):
        mean += out[i]
    mean /= k
    norm = 0.0
    for i in range(k):
        out[i] -= mean
        norm += out[i] * out[i]
    norm = math.sqrt(norm)
    if norm > 1.0:
        for i in range(k):
            out[i] /= norm
    return out


def _btl_ll_loop(Z, theta):
    n, k = Z.shape
    if n == 0:
        return 0.0
    total = 0.0
    for i in range(n):
        x = 0.0
        for j in range(k):
            x += Z[i, j] * theta[j]
        total += _log_sigmoid(x)
    return total / n


def _btl_grad_loop(Z, theta):
    n, k = Z.shape
    g = np.zeros(k)
    if n == 0:
        return g
    for i in range(n):
        x = 0.0
        for j in range(k):
            x += Z[i, j] * theta[j]
        p = 1.0 / (1.0 + math.exp(x))
        for j in range(k):
            g[j] += p * Z[i, j]
    for j in range(k):
        g[j] /= n
    return g


def _pga_btl_loop(Z, theta0, step, max_iters, tol, mode, bound):
    k = theta0.shape[0]
    theta = _project_loop(theta0, mode, bound)
    ll = _btl_ll_loop(Z, theta)
    eta = step
    gap = np.inf
    it = 0
    while it < max_iters:
        g = _btl_grad_loop(Z, theta)
        trial = np.empty(k)
        for j in range(k):
            trial[j] = theta[j] + eta * g[j]
        cand = _project_loop(trial, mode, bound)
        gap = 0.0
        for j in range(k):
            gap += (cand[j] - theta[j]) ** 2
        gap = math.sqrt(gap) / eta
        if gap <= tol:
            break
        ll_new = _btl_ll_loop(Z, cand)
        while ll_new < ll and eta > 1e-14:
            eta *= 0.5
            for j in range(k):
                trial[j] = theta[j] + eta * g[j]
            cand = _project_loop(trial, mode, bound)
            ll_new = _btl_ll_loop(Z, cand)
        if ll_new < ll:
            break
        theta = cand
        ll = ll_new
        it += 1
    return theta, it, gap, ll


def _project_numpy(theta, mode, bound):
    if mode == PROJ_BOX:
        return np.clip(theta, -bound, bound)
    out = theta - theta.mean()
    norm = np.linalg.norm(out)
    if norm > 1.0:
        out = out / norm
    return out


def _btl_ll_numpy(Z, theta):
    if Z.shape[0] == 0:
        return 0.0
    x = Z @ theta
    return float(np.mean(-np.logaddexp(0.0, -x)))


def _btl_grad_numpy(Z, theta):
    if Z.shape[0] == 0:
        return np.zeros(Z.shape[1])
    p = 0.5 * (1.0 - np.tanh(0.5 * (Z @ theta)))
    return (p @ Z) / Z.shape[0]


def _pga_btl_numpy(Z, theta0, step, max_iters, tol, mode, bound):
    theta = _project_numpy(theta0, mode, bound)
    ll = _btl_ll_numpy(Z, theta)
    eta = step
    gap = np.inf
    it = 0
    while it < max_iters:
        g = _btl_grad_numpy(Z, theta)
        cand = _project_numpy(theta + eta * g, mode, bound)
        gap = float(np.linalg.norm(cand - theta)) / eta
        if gap <= tol:
            break
        ll_new = _btl_ll_numpy(Z, cand)
        while ll_new < ll and eta > 1e-14:
            eta *= 0.5
            cand = _project_numpy(theta + eta * g, mode, bound)
            ll_new = _btl_ll_numpy(Z, cand)
        if ll_new < ll:
            break
        theta = cand
        ll = ll_new
        it += 1
    return theta, it, gap, ll


# --------------------------------------------------------------------------
# dispatch

NUMPY_KERNELS = {
    "pivot": _pivot_numpy,
    "simplex": _simplex_numpy,
    "rollout": _rollout_numpy,
    "discounted_counts": _discounted_counts_numpy,
    "psi_batch": _psi_batch_numpy,
    "pga_btl": _pga_btl_numpy,
    "project": _project_numpy,
}

if HAVE_NUMBA:
    _log_sigmoid = njit(_log_sigmoid)
    _project_loop = njit(_project_loop)
    _btl_ll_loop = njit(_btl_ll_loop)
    _btl_grad_loop = njit(_btl_grad_loop)
    _pivot_loop = njit(_pivot_loop)
    NUMBA_KERNELS = {
        "pivot": _pivot_loop,
        "simplex": njit(_simplex_loop),
        "rollout": njit(_rollout_loop),
        "discounted_counts": njit(_discounted_counts_loop),
        "psi_batch": njit(_psi_batch_loop),
        "pga_btl": njit(_pga_btl_loop),
        "project": _project_loop,
    }
else:  # pragma: no cover
    NUMBA_KERNELS = {}

_ACTIVE = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS

pivot = _ACTIVE["pivot"]
simplex_iterate = _ACTIVE["simplex"]
rollout = _ACTIVE["rollout"]
discounted_counts = _ACTIVE["discounted_counts"]
psi_batch = _ACTIVE["psi_batch"]
pga_btl = _ACTIVE["pga_btl"]
