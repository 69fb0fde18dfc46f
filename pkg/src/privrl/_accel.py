"""Hot kernels: numba-compiled versions with a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``PRIVRL_DISABLE_NUMBA`` is not set to a truthy value. Both paths
compute the same quantities; they agree to rounding, not bit-for-bit, so a
single process should stick to one backend (which it does, the choice is
made once at import time).
"""

import os
from types import SimpleNamespace

import numpy as np
from scipy.linalg import solve_triangular


def _flag_set(name):
    return os.environ.get(name, "").strip().lower() in {"1", "true", "yes", "on"}


try:
    if _flag_set("PRIVRL_DISABLE_NUMBA"):
        raise ImportError("numba disabled by PRIVRL_DISABLE_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

BACKEND = "numba" if HAS_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy path
# ---------------------------------------------------------------------------


def np_cholesky(a):
    """Lower Cholesky factor of ``a`` or None when ``a`` is not PD."""
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(low)):
        return None
    return low


def np_chol_solve(low, b):
    y = solve_triangular(low, b, lower=True, check_finite=False)
    return solve_triangular(low, y, lower=True, trans="T", check_finite=False)


def np_inv_norms(low, x):
    """Row-wise sqrt(x_i^T A^{-1} x_i) given the factor of A."""
    y = solve_triangular(low, x.T, lower=True, check_finite=False)
    return np.sqrt(np.sum(y * y, axis=0))


def _block_features(vn, rho, n_sa):
    # phi_v for every (s, a) pair in the mixture layout: block (s, a) holds rho * v
    s = vn.shape[0]
    x = np.zeros((n_sa, n_sa, s))
    idx = np.arange(n_sa)
    x[idx, idx, :] = rho * vn
    return x.reshape(n_sa, n_sa * s)


def np_mixture_plan(rewards, lam, w, beta, rho, cap):
    """Optimistic backward induction for the linear-mixture encoding.

    Returns ``(q, v, failed_stage)``; ``failed_stage`` is -1 on success or
    the 0-based stage whose design matrix could not be factored.
    """
    n_h, n_s, n_a = rewards.shape
    q = np.zeros((n_h, n_s, n_a))
    v = np.zeros((n_h + 1, n_s))
    for h in range(n_h - 1, -1, -1):
        low = np_cholesky(lam[h])
        if low is None:
            return q, v, h
        x = _block_features(v[h + 1], rho, n_s * n_a)
        mean = x @ w[h]
        bonus = beta * np_inv_norms(low, x)
        q[h] = np.clip(rewards[h].reshape(-1) + mean + bonus, 0.0, cap).reshape(n_s, n_a)
        v[h] = q[h].max(axis=1)
    return q, v, -1


def np_linear_q_table(phi, lam, w, beta, cap):
    """Clipped optimistic scores for every (s, a); None if ``lam`` is not PD."""
    n_s, n_a, d = phi.shape
    low = np_cholesky(lam)
    if low is None:
        return None
    feats = phi.reshape(n_s * n_a, d)
    score = feats @ w + beta * np_inv_norms(low, feats)
    return np.clip(score, 0.0, cap).reshape(n_s, n_a)


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _nb_cholesky(a):
        n = a.shape[0]
        low = np.zeros((n, n))
        for j in range(n):
            s = a[j, j]
            for k in range(j):
                s -= low[j, k] * low[j, k]
            if not (s > 0.0) or not np.isfinite(s):
                return low, False
            ljj = np.sqrt(s)
            low[j, j] = ljj
            for i in range(j + 1, n):
                t = a[i, j]
                for k in range(j):
                    t -= low[i, k] * low[j, k]
                low[i, j] = t / ljj
        return low, True

    @njit(cache=True)
    def _nb_chol_solve(low, b):
        n = b.shape[0]
        y = np.empty(n)
        for i in range(n):
            t = b[i]
            for k in range(i):
                t -= low[i, k] * y[k]
            y[i] = t / low[i, i]
        x = np.empty(n)
        for i in range(n - 1, -1, -1):
            t = y[i]
            for k in range(i + 1, n):
                t -= low[k, i] * x[k]
            x[i] = t / low[i, i]
        return x

    @njit(cache=True)
    def _nb_inv_norms(low, x):
        m, n = x.shape
        out = np.empty(m)
        y = np.empty(n)
        for r in range(m):
            # skip the leading zeros of x: forward substitution keeps them zero
            first = n
            for i in range(n):
                if x[r, i] != 0.0:
                    first = i
                    break
            acc = 0.0
            for i in range(first, n):
                t = x[r, i]
                for k in range(first, i):
                    t -= low[i, k] * y[k]
                y[i] = t / low[i, i]
                acc += y[i] * y[i]
            out[r] = np.sqrt(acc)
        return out

    @njit(cache=True)
    def _nb_mixture_plan(rewards, lam, w, beta, rho, cap):
        n_h, n_s, n_a = rewards.shape
        d = n_s * n_s * n_a
        q = np.zeros((n_h, n_s, n_a))
        v = np.zeros((n_h + 1, n_s))
        y = np.empty(d)
        for h in range(n_h - 1, -1, -1):
            low, ok = _nb_cholesky(lam[h])
            if not ok:
                return q, v, h
            for s in range(n_s):
                best = -np.inf
                for a in range(n_a):
                    off = (s * n_a + a) * n_s
                    mean = 0.0
                    for j in range(n_s):
                        mean += rho * v[h + 1, j] * w[h, off + j]
                    acc = 0.0
                    for i in range(off, d):
                        t = rho * v[h + 1, i - off] if i < off + n_s else 0.0
                        for k in range(off, i):
                            t -= low[i, k] * y[k]
                        y[i] = t / low[i, i]
                        acc += y[i] * y[i]
                    val = rewards[h, s, a] + mean + beta * np.sqrt(acc)
                    if val > cap:
                        val = cap
                    if val < 0.0:
                        val = 0.0
                    q[h, s, a] = val
                    if val > best:
                        best = val
                v[h, s] = best
        return q, v, -1

    @njit(cache=True)
    def _nb_linear_q_table(phi, lam, w, beta, cap):
        n_s, n_a, d = phi.shape
        low, ok = _nb_cholesky(lam)
        q = np.zeros((n_s, n_a))
        if not ok:
            return q, False
        norms = _nb_inv_norms(low, phi.reshape(n_s * n_a, d))
        for s in range(n_s):
            for a in range(n_a):
                val = beta * norms[s * n_a + a]
                for j in range(d):
                    val += phi[s, a, j] * w[j]
                if val > cap:
                    val = cap
                if val < 0.0:
                    val = 0.0
                q[s, a] = val
        return q, True

    def nb_cholesky(a):
        low, ok = _nb_cholesky(np.ascontiguousarray(a, dtype=np.float64))
        return low if ok else None

    def nb_chol_solve(low, b):
        return _nb_chol_solve(low, np.ascontiguousarray(b, dtype=np.float64))

    def nb_inv_norms(low, x):
        return _nb_inv_norms(low, np.ascontiguousarray(x, dtype=np.float64))

    def nb_mixture_plan(rewards, lam, w, beta, rho, cap):
        return _nb_mixture_plan(
            np.ascontiguousarray(rewards, dtype=np.float64),
            np.ascontiguousarray(lam, dtype=np.float64),
            np.ascontiguousarray(w, dtype=np.float64),
            float(beta), float(rho), float(cap),
        )

    def nb_linear_q_table(phi, lam, w, beta, cap):
        q, ok = _nb_linear_q_table(
            np.ascontiguousarray(phi, dtype=np.float64),
            np.ascontiguousarray(lam, dtype=np.float64),
            np.ascontiguousarray(w, dtype=np.float64),
            float(beta), float(cap),
        )
        return q if ok else None


numpy_impl = SimpleNamespace(
    cholesky=np_cholesky,
    chol_solve=np_chol_solve,
    inv_norms=np_inv_norms,
    mixture_plan=np_mixture_plan,
    linear_q_table=np_linear_q_table,
)

if HAS_NUMBA:
    numba_impl = SimpleNamespace(
        cholesky=nb_cholesky,
        chol_solve=nb_chol_solve,
        inv_norms=nb_inv_norms,
        mixture_plan=nb_mixture_plan,
        linear_q_table=nb_linear_q_table,
    )
    active = numba_impl
else:
    numba_impl = None
    active = numpy_impl

cholesky = active.cholesky
chol_solve = active.chol_solve
inv_norms = active.inv_norms
mixture_plan = active.mixture_plan
linear_q_table = active.linear_q_table
