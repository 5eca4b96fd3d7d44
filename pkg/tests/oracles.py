"""Independent reference implementations used to freeze expected values.

These stay deliberately naive: exact-fraction Gaussian elimination for
ranks, SVD nullspaces, dense sequential least squares for lexicographic
solves, central differences for derivatives.  None of them share code with
the solver paths they check.
"""

from fractions import Fraction

import numpy as np


def exact_rank(A):
    """Rank over the rationals by fraction-exact Gaussian elimination."""
    M = [[Fraction(x).limit_denominator(10**12) for x in row] for row in np.asarray(A).tolist()]
    m = len(M)
    n = len(M[0]) if m else 0
    rank = 0
    row = 0
    for col in range(n):
        piv = None
        for i in range(row, m):
            if M[i][col] != 0:
                piv = i
                break
        if piv is None:
            continue
        M[row], M[piv] = M[piv], M[row]
        pv = M[row][col]
        for i in range(row + 1, m):
            if M[i][col] != 0:
                f = M[i][col] / pv
                for j in range(col, n):
                    M[i][j] -= f * M[row][j]
        rank += 1
        row += 1
        if row == m:
            break
    return rank


def svd_nullspace(A, rcond=1e-10):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] == 0:
        return np.eye(A.shape[1])
    u, s, vt = np.linalg.svd(A)
    tol = rcond * (s[0] if s.size else 1.0)
    r = int((s > tol).sum())
    return vt[r:].T


def nullspace_dimension(A, rcond=1e-8):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    s = np.linalg.svd(A, compute_uv=False)
    tol = rcond * max(A.shape) * (s[0] if s.size else 1.0)
    return A.shape[1] - int((s > tol).sum())


def lexicographic_lsq(levels, n):
    """Sequential dense solve of equality-only lexicographic least squares.

    ``levels`` is a list of (A, b); returns (x, [v_l]).  Each level is
    solved in the nullspace of all previous level matrices restricted to
    directions that keep earlier residuals at their optimum.
    """
    x = np.zeros(n)
    N = np.eye(n)
    slacks = []
    for A, b in levels:
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float)
        if N.shape[1] > 0:
            At = A @ N
            z, *_ = np.linalg.lstsq(At, b - A @ x, rcond=None)
            x = x + N @ z
            Z = svd_nullspace(At)
            N = N @ Z
        slacks.append(A @ x - b)
    return x, slacks


def fd_jacobian(fun, x, h=1e-6):
    """Central-difference Jacobian of a vector function."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x), dtype=float)
    J = np.zeros((f0.size, x.size))
    for j in range(x.size):
        step = h * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += step
        xm[j] -= step
        J[:, j] = (np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2 * step)
    return J


def fd_hessian(fun_scalar, x, h=1e-5):
    """Central-difference Hessian of a scalar function."""
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            xpp = x.copy(); xpp[i] += h; xpp[j] += h
            xpm = x.copy(); xpm[i] += h; xpm[j] -= h
            xmp = x.copy(); xmp[i] -= h; xmp[j] += h
            xmm = x.copy(); xmm[i] -= h; xmm[j] -= h
            H[i, j] = (fun_scalar(xpp) - fun_scalar(xpm)
                       - fun_scalar(xmp) + fun_scalar(xmm)) / (4 * h * h)
    return 0.5 * (H + H.T)


def mccormick(x, y):
    return np.sin(x + y) + (x - y) ** 2 - 1.5 * x + 2.5 * y + 1.0


def grid_local_minima(fun, lo, hi, step):
    """Grid-detected strict local minima of a scalar function of two variables."""
    xs = np.arange(lo[0], hi[0] + step / 2, step)
    ys = np.arange(lo[1], hi[1] + step / 2, step)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    F = fun(X, Y)
    minima = []
    for i in range(1, len(xs) - 1):
        for j in range(1, len(ys) - 1):
            patch = F[i - 1:i + 2, j - 1:j + 2]
            if F[i, j] == patch.min() and (patch > F[i, j]).sum() == 8:
                minima.append((xs[i], ys[j]))
    return minima
