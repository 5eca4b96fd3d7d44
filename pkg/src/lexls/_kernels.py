"""Dense numeric kernels behind the sparse front-ends.

Hot inner loops live here: rank-revealing LU with complete pivoting,
triangular substitutions, a column Cholesky, and the ADMM level iteration.
Kernels are numba-compiled when numba is available; setting
``LEXLS_DISABLE_NUMBA=1`` selects the pure-numpy fallback path.
``benchmarks/kernel_benchmark.py`` compares the two paths.
"""

import os

import numpy as np

_env = os.environ.get("LEXLS_DISABLE_NUMBA", "").strip().lower()
NUMBA_ENABLED = _env not in ("1", "true", "yes")
if NUMBA_ENABLED:
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False

if NUMBA_ENABLED:
    def _compile(f):
        return _njit(cache=True)(f)
else:
    def _compile(f):
        return f


def backend():
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return "numba" if NUMBA_ENABLED else "numpy"


# ---------------------------------------------------------------------------
# rank-revealing LU, complete pivoting
# ---------------------------------------------------------------------------

def _lu_complete_loops(A, pivot_tol):
    """In-place complete-pivoting LU; returns (p, q, rank).

    A pivot is accepted while its magnitude is >= pivot_tol * max|A|.
    The pivot search scans row-major and keeps the first maximal entry,
    which pins down P and Q deterministically.
    """
    m, n = A.shape
    p = np.arange(m)
    q = np.arange(n)
    scale = 0.0
    for i in range(m):
        for j in range(n):
            v = abs(A[i, j])
            if v > scale:
                scale = v
    if scale == 0.0:
        return p, q, 0
    thresh = pivot_tol * scale
    r = 0
    for k in range(min(m, n)):
        big = 0.0
        bi = k
        bj = k
        for i in range(k, m):
            for j in range(k, n):
                v = abs(A[i, j])
                if v > big:
                    big = v
                    bi = i
                    bj = j
        if big < thresh:
            break
        if bi != k:
            for j in range(n):
                tmp = A[k, j]
                A[k, j] = A[bi, j]
                A[bi, j] = tmp
            tmpi = p[k]
            p[k] = p[bi]
            p[bi] = tmpi
        if bj != k:
            for i in range(m):
                tmp = A[i, k]
                A[i, k] = A[i, bj]
                A[i, bj] = tmp
            tmpi = q[k]
            q[k] = q[bj]
            q[bj] = tmpi
        r += 1
        piv = A[k, k]
        for i in range(k + 1, m):
            lik = A[i, k] / piv
            A[i, k] = lik
            for j in range(k + 1, n):
                A[i, j] -= lik * A[k, j]
    return p, q, r


def _lu_complete_numpy(A, pivot_tol):
    """Vectorized twin of :func:`_lu_complete_loops` (same pivot choices)."""
    m, n = A.shape
    p = np.arange(m)
    q = np.arange(n)
    scale = np.abs(A).max() if A.size else 0.0
    if scale == 0.0:
        return p, q, 0
    thresh = pivot_tol * scale
    r = 0
    for k in range(min(m, n)):
        sub = np.abs(A[k:, k:])
        bi, bj = divmod(int(sub.argmax()), n - k)
        if sub[bi, bj] < thresh:
            break
        bi += k
        bj += k
        if bi != k:
            A[[k, bi], :] = A[[bi, k], :]
            p[[k, bi]] = p[[bi, k]]
        if bj != k:
            A[:, [k, bj]] = A[:, [bj, k]]
            q[[k, bj]] = q[[bj, k]]
        r += 1
        A[k + 1:, k] /= A[k, k]
        A[k + 1:, k + 1:] -= np.outer(A[k + 1:, k], A[k, k + 1:])
    return p, q, r


lu_complete = _compile(_lu_complete_loops) if NUMBA_ENABLED else _lu_complete_numpy


# ---------------------------------------------------------------------------
# triangular substitutions
# ---------------------------------------------------------------------------

def _forward_eliminate_loops(lu, p, rank, b):
    """Apply L^{-1} P to b using packed LU factors; returns full-length y."""
    m = lu.shape[0]
    y = np.empty(m)
    for i in range(m):
        y[i] = b[p[i]]
    for k in range(rank):
        yk = y[k]
        if yk != 0.0:
            for i in range(k + 1, m):
                y[i] -= lu[i, k] * yk
    return y


def _forward_eliminate_numpy(lu, p, rank, b):
    y = b[p].astype(float)
    for k in range(rank):
        y[k + 1:] -= lu[k + 1:, k] * y[k]
    return y


forward_eliminate = _compile(_forward_eliminate_loops) if NUMBA_ENABLED else _forward_eliminate_numpy


def _back_substitute_loops(U, b):
    n = U.shape[0]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = b[i]
        for j in range(i + 1, n):
            s -= U[i, j] * x[j]
        x[i] = s / U[i, i]
    return x


def _back_substitute_numpy(U, b):
    n = U.shape[0]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        x[i] = (b[i] - U[i, i + 1:] @ x[i + 1:]) / U[i, i]
    return x


back_substitute = _compile(_back_substitute_loops) if NUMBA_ENABLED else _back_substitute_numpy


# ---------------------------------------------------------------------------
# Cholesky (row variant so every slice is contiguous)
# ---------------------------------------------------------------------------

def _chol_factor_loops(C):
    """Lower Cholesky factor of C; returns (L, ok).  ok=False on a
    nonpositive (or NaN) pivot, with L left partially filled."""
    n = C.shape[0]
    L = np.zeros((n, n))
    for i in range(n):
        for j in range(i):
            s = C[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
        d = C[i, i]
        for k in range(i):
            d -= L[i, k] * L[i, k]
        if not d > 0.0:
            return L, False
        L[i, i] = np.sqrt(d)
    return L, True


def _chol_factor_numpy(C):
    n = C.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        d = C[j, j] - L[j, :j] @ L[j, :j]
        if not d > 0.0:
            return L, False
        L[j, j] = np.sqrt(d)
        if j + 1 < n:
            L[j + 1:, j] = (C[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L, True


chol_factor = _compile(_chol_factor_loops) if NUMBA_ENABLED else _chol_factor_numpy


def _chol_solve_loops(L, b):
    n = L.shape[0]
    y = np.empty(n)
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * y[k]
        y[i] = s / L[i, i]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return x


def _chol_solve_numpy(L, b):
    n = L.shape[0]
    y = np.empty(n)
    for i in range(n):
        y[i] = (b[i] - L[i, :i] @ y[:i]) / L[i, i]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - L[i + 1:, i] @ x[i + 1:]) / L[i, i]
    return x


chol_solve = _compile(_chol_solve_loops) if NUMBA_ENABLED else _chol_solve_numpy


# ---------------------------------------------------------------------------
# ADMM level iteration
# ---------------------------------------------------------------------------
#
# Level problem in the projected variable z (n_r unknowns):
#
#   min 0.5||v_E||^2 + 0.5||v_I||^2
#   s.t. AE z - bE = v_E
#        AI z - bI <= v_I
#        AN z - bN <= 0
#
# Slack convention (margins): wI = bI + vI - AI z >= 0, wN = bN - AN z >= 0,
# with scaled duals uI, uN >= 0; unscaled multipliers are rho*u and the
# equality multiplier equals v_E (infinite-penalty elimination, no dual
# stored).  The normal matrix per step-size pair (rho, sigma) is
#   C = AE^T AE + rho/(1+rho) AI^T AI + rho AN^T AN + sigma I
# and is refactorized only when rho or sigma changes.

def _stationarity_impl(AET, AIT, ANT, vE, uI, uN, rho):
    g = AET @ vE
    if uI.shape[0] > 0:
        g = g + AIT @ (rho * uI)
    if uN.shape[0] > 0:
        g = g + ANT @ (rho * uN)
    return g


def _kkt_norm_impl(AET, AI, AIT, AN, ANT, bI, bN, vE, vI, wI, uI, wN, uN, z, rho):
    g = _stationarity(AET, AIT, ANT, vE, uI, uN, rho)
    kkt = np.max(np.abs(g)) if g.shape[0] > 0 else 0.0
    if bI.shape[0] > 0:
        kkt = max(kkt, np.max(np.abs(AI @ z - bI - vI + wI)))
    if bN.shape[0] > 0:
        kkt = max(kkt, np.max(np.abs(AN @ z - bN + wN)))
    return kkt


_stationarity = _compile(_stationarity_impl)
_kkt_from_state = _compile(_kkt_norm_impl)


def _admm_level_loop_impl(AE, AET, bE, AI, AIT, bI, AN, ANT, bN, GE, cE, GI, GN,
                          z, wI, uI, wN, uN,
                          rho, sigma, alpha, eta, max_iter,
                          rho0, check_every, rho_min, rho_max, sigma_max):
    n = z.shape[0]
    mI = bI.shape[0]
    mN = bN.shape[0]

    # entry test enables zero-iteration warm-started re-solves
    vE = AE @ z - bE
    vI = (rho / (1.0 + rho)) * (AI @ z - bI + wI + uI)
    kkt = _kkt_from_state(AET, AI, AIT, AN, ANT, bI, bN, vE, vI, wI, uI, wN, uN, z, rho)
    if kkt < eta:
        return 0, kkt, rho, sigma, 0, True, vE, vI, z, wI, uI, wN, uN

    L = np.zeros((n, n))
    need_factor = True
    nfact = 0
    kkt_at_check = kkt
    rho_changed = False
    it = 0
    while it < max_iter:
        if need_factor:
            C = GE + (rho / (1.0 + rho)) * GI + rho * GN + sigma * np.eye(n)
            L, ok = chol_factor(C)
            if not ok:
                sigma = min(sigma * 10.0, sigma_max)
                C = GE + (rho / (1.0 + rho)) * GI + rho * GN + sigma * np.eye(n)
                L, ok = chol_factor(C)
            nfact += 1
            need_factor = False

        r = cE + sigma * z
        if mI > 0:
            r = r + (rho / (1.0 + rho)) * (AIT @ (bI - wI - uI))
        if mN > 0:
            r = r + rho * (ANT @ (bN - wN - uN))
        zh = chol_solve(L, r)
        z = alpha * zh + (1.0 - alpha) * z
        vE = AE @ z - bE
        vI = (rho / (1.0 + rho)) * (AI @ z - bI + wI + uI)
        if mI > 0:
            mix = alpha * (bI + vI - AI @ zh) + (1.0 - alpha) * wI
            wI_new = np.maximum(0.0, mix - uI)
            uI = uI - mix + wI_new
            wI = wI_new
        if mN > 0:
            mix = alpha * (bN - AN @ zh) + (1.0 - alpha) * wN
            wN_new = np.maximum(0.0, mix - uN)
            uN = uN - mix + wN_new
            wN = wN_new
        it += 1

        kkt = _kkt_from_state(AET, AI, AIT, AN, ANT, bI, bN, vE, vI, wI, uI, wN, uN, z, rho)
        if kkt < eta:
            return it, kkt, rho, sigma, nfact, True, vE, vI, z, wI, uI, wN, uN

        if it % check_every == 0:
            if kkt > kkt_at_check and not rho_changed:
                # divergence guard: raise regularization, reset step size
                sigma = min(sigma * 10.0, sigma_max)
                rho = rho0
                need_factor = True
                rho_changed = True
            else:
                prim = 0.0
                if mI > 0:
                    prim = max(prim, np.max(np.abs(AI @ z - bI - vI + wI)))
                if mN > 0:
                    prim = max(prim, np.max(np.abs(AN @ z - bN + wN)))
                g = _stationarity(AET, AIT, ANT, vE, uI, uN, rho)
                dual = np.max(np.abs(g)) if g.shape[0] > 0 else 0.0
                if prim > 10.0 * dual or dual > 10.0 * prim:
                    new_rho = rho * np.sqrt((prim + 1e-16) / (dual + 1e-16))
                    new_rho = min(max(new_rho, rho_min), rho_max)
                    if new_rho != rho:
                        rho = new_rho
                        need_factor = True
                        rho_changed = True
                    else:
                        rho_changed = False
                else:
                    rho_changed = False
            kkt_at_check = kkt

    return it, kkt, rho, sigma, nfact, False, vE, vI, z, wI, uI, wN, uN


_admm_level_loop = _compile(_admm_level_loop_impl)


def admm_level_loop(AE, bE, AI, bI, AN, bN, z, wI, uI, wN, uN,
                    rho, sigma, alpha, eta, max_iter,
                    rho0=0.1, check_every=25, rho_min=1e-4, rho_max=1e4,
                    sigma_max=1e2):
    """Run the ADMM alternating updates for one priority level.

    All matrices are dense float64.  The warm-start vectors are copied, not
    mutated.  Returns (iterations, kkt, rho, sigma, factorizations,
    converged, vE, vI, z, wI, uI, wN, uN).
    """
    AE = np.ascontiguousarray(AE, dtype=float)
    AI = np.ascontiguousarray(AI, dtype=float)
    AN = np.ascontiguousarray(AN, dtype=float)
    AET = np.ascontiguousarray(AE.T)
    AIT = np.ascontiguousarray(AI.T)
    ANT = np.ascontiguousarray(AN.T)
    bE = np.ascontiguousarray(bE, dtype=float)
    bI = np.ascontiguousarray(bI, dtype=float)
    bN = np.ascontiguousarray(bN, dtype=float)
    z = np.array(z, dtype=float)
    wI = np.array(wI, dtype=float)
    uI = np.array(uI, dtype=float)
    wN = np.array(wN, dtype=float)
    uN = np.array(uN, dtype=float)
    n = z.shape[0]
    GE = AET @ AE
    cE = AET @ bE
    GI = AIT @ AI if bI.shape[0] else np.zeros((n, n))
    GN = ANT @ AN if bN.shape[0] else np.zeros((n, n))
    return _admm_level_loop(AE, AET, bE, AI, AIT, bI, AN, ANT, bN, GE, cE, GI, GN,
                            z, wI, uI, wN, uN,
                            float(rho), float(sigma), float(alpha), float(eta),
                            int(max_iter), float(rho0), int(check_every),
                            float(rho_min), float(rho_max), float(sigma_max))
