"""Sparse nullspace bases by the turnback method.

Two drivers: a general driver that starts from a full rank-revealing LU,
and a specialized driver for Euler-integrated dynamics whose column
subsets come from the bandwidth bound, so no initial factorization of the
full matrix is needed.  Stage subsets are independent; the serial schedule
used here is bitwise equivalent to any parallel one.
"""

from dataclasses import dataclass
from math import ceil

import numpy as np
import scipy.sparse as sp

from . import _kernels as K
from .errors import BasisVerificationFailed, DimensionMismatch, FullUnderactuation
from .numerics import as_csc, lu_rank_revealing

DEPENDENCE_TOL = 1e-8


@dataclass(frozen=True)
class DynamicsDims:
    """Stage layout of Euler-integrated dynamics.

    Per stage t the columns are [tau_t (n_tau) | gamma_t (n_gamma) |
    q_{t+1} (n_q) | qdot_{t+1} (n_qdot)]; under-actuated coordinates come
    first inside the q/qdot blocks.
    """

    T: int
    n_q: int
    n_qdot: int
    n_tau: int
    n_gamma: int
    n_ua: int = 0
    integrator: str = "explicit"

    def __post_init__(self):
        if self.n_q != self.n_qdot:
            raise DimensionMismatch("n_q == n_qdot is assumed by the stage layout")
        if self.n_tau + self.n_ua != self.n_qdot:
            raise DimensionMismatch("n_tau + n_ua must equal n_qdot")
        if not 0 <= self.n_ua <= self.n_q:
            raise DimensionMismatch("n_ua out of range")
        if self.integrator not in ("explicit", "implicit"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.T < 1:
            raise DimensionMismatch("need at least one stage")

    @property
    def n_s(self):
        return self.n_q + self.n_qdot

    @property
    def stage_width(self):
        return self.n_tau + self.n_gamma + self.n_s

    @property
    def n(self):
        return self.T * self.stage_width

    @property
    def n_rows(self):
        return self.T * self.n_s


def mu_factor(dims):
    """Subset augmentation factor ceil(2 n_ua / (n_q - n_ua))."""
    if dims.n_ua >= dims.n_q:
        raise FullUnderactuation("n_ua == n_q: dense basis, banded mode unavailable")
    if dims.n_ua == 0:
        return 0
    return ceil(2 * dims.n_ua / (dims.n_q - dims.n_ua))


def bandwidth(dims):
    """Width of the linearly independent column subsets:
    (2+mu) n_s + (3+mu)(n_tau + n_gamma)."""
    mu = mu_factor(dims)
    return (2 + mu) * dims.n_s + (3 + mu) * (dims.n_tau + dims.n_gamma)


@dataclass
class TurnbackParams:
    r_A: int
    r_Z: int
    b: np.ndarray        # first column index per stage
    b_plus: np.ndarray   # exclusive last column index per stage
    pi: np.ndarray       # pivot column per null vector, strictly increasing
    pivot_stage: np.ndarray  # stage owning each pivot


def turnback_param(dims):
    """Stage windows and pivot columns for the Euler-dynamics turnback."""
    beta = bandwidth(dims)
    n = dims.n
    r_Z = dims.T * (dims.n_tau + dims.n_gamma)
    b = np.zeros(dims.T, dtype=np.int64)
    b_plus = np.zeros(dims.T, dtype=np.int64)
    pi = np.zeros(r_Z, dtype=np.int64)
    stage = np.zeros(r_Z, dtype=np.int64)
    n_pi = 0
    n_b = 0
    for t in range(dims.T):
        b[t] = n_b
        b_plus[t] = min(n_b + beta, n)
        for j in range(dims.n_gamma):
            pi[n_pi] = n_b + dims.n_tau + j
            stage[n_pi] = t
            n_pi += 1
        for j in range(dims.n_qdot - dims.n_ua):
            if dims.integrator == "explicit":
                pi[n_pi] = n_b + dims.n_tau + dims.n_gamma + dims.n_q + dims.n_ua + j
            else:
                pi[n_pi] = n_b + dims.n_tau + dims.n_gamma + dims.n_ua + j
            stage[n_pi] = t
            n_pi += 1
        n_b += dims.stage_width
    return TurnbackParams(r_A=dims.T * dims.n_s, r_Z=r_Z, b=b, b_plus=b_plus,
                          pi=pi, pivot_stage=stage)


@dataclass
class NullspaceBasis:
    """Nullspace basis with the pivot-row full-rank certificate.

    ``pivot_rows`` lists, per column, its unit-entry row; the pivot-row
    submatrix is unit lower triangular, which certifies full column rank.
    Composed bases (see :func:`nested_basis`) carry no certificate.
    """

    Z: sp.csc_matrix
    pivot_rows: np.ndarray = None
    verified_residual: float = 0.0

    @property
    def shape(self):
        return self.Z.shape

    def nnz(self):
        return int(self.Z.nnz)

    def toarray(self):
        return self.Z.toarray()

    def certificate_ok(self):
        if self.pivot_rows is None:
            return False
        P = self.Z[self.pivot_rows, :].toarray()
        return (np.allclose(np.diag(P), 1.0)
                and np.abs(np.triu(P, 1)).max(initial=0.0) == 0.0)

    def save_matrix_market(self, path):
        from scipy.io import mmwrite
        mmwrite(str(path), self.Z.tocoo())


@dataclass
class SubsetState:
    """One stage's candidate column window during the Euler turnback."""

    t: int
    level: int
    lo: int
    hi: int
    cols: np.ndarray


def stage_subset(dims, params, t, level=0):
    """Column subset for stage t at the given augmentation level: the base
    window grown by ``level`` stages on each side, minus pivot columns of
    stages <= t."""
    stride = dims.stage_width
    n = dims.n
    lo = max(0, int(params.b[t]) - level * stride)
    hi = min(n, int(params.b_plus[t]) + level * stride)
    forbidden = params.pi[(params.pivot_stage <= t)
                          & (params.pi >= lo) & (params.pi < hi)]
    cols = np.setdiff1d(np.arange(lo, hi), forbidden, assume_unique=True)
    return SubsetState(t=t, level=level, lo=lo, hi=hi, cols=cols)


def augment_subset(state, dims, params):
    """Widen a failed subset by one stage on each side, never re-admitting
    pivot columns of stages at or below t."""
    if state.lo == 0 and state.hi == dims.n:
        raise BasisVerificationFailed(
            f"stage {state.t}: column subset exhausted the matrix")
    return stage_subset(dims, params, state.t, state.level + 1)


def _window_rows(A, lo, hi):
    """Rows of csc A with a structural entry in columns [lo, hi)."""
    idx = A.indices[A.indptr[lo]:A.indptr[hi]]
    return np.unique(idx)


def _dense_subset(A, rows, cols):
    return A[:, cols].tocsr()[rows, :].toarray()


def _null_vector(fac, a_vec, tol):
    """Solve G x = -a on the factorized subset; returns (x_on_cols, resid)
    with resid the dependence defect |u2_hat| of the appended column."""
    r = fac.numerical_rank
    y = fac.apply_forward(a_vec)
    resid = float(np.abs(y[r:]).max()) if y.size > r else 0.0
    if r == 0:
        return np.zeros(0), resid
    w = K.back_substitute(np.ascontiguousarray(fac.lu[:r, :r]), y[:r])
    return -w, resid


def turnback_euler(A, dims, pivot_tol=1e-10, dep_tol=DEPENDENCE_TOL):
    """Banded nullspace basis of an Euler-dynamics Jacobian.

    Factorizes one bandwidth-limited column subset per stage and builds the
    stage's null vectors against its pivot columns; subsets that turn out
    rank deficient are widened stage by stage.
    """
    A = as_csc(A)
    params = turnback_param(dims)
    if A.shape != (params.r_A, dims.n):
        raise DimensionMismatch(
            f"expected {params.r_A}x{dims.n} dynamics Jacobian, got {A.shape}")
    col_scale = np.maximum(1.0, np.abs(A).max(axis=0).toarray().ravel() if A.nnz else np.ones(dims.n))

    rows_out, cols_out, vals_out = [], [], []
    worst = 0.0
    pivot_idx_by_stage = [np.flatnonzero(params.pivot_stage == t) for t in range(dims.T)]
    for t in range(dims.T):
        state = stage_subset(dims, params, t)
        while True:
            rows = _window_rows(A, state.lo, state.hi)
            G = _dense_subset(A, rows, state.cols)
            fac = lu_rank_revealing(G, pivot_tol)
            ok = True
            stage_entries = []
            for k in pivot_idx_by_stage[t]:
                c = int(params.pi[k])
                a_vec = np.zeros(rows.size)
                seg = A[:, [c]].tocoo()
                pos = np.searchsorted(rows, seg.row)
                a_vec[pos] = seg.data
                x, resid = _null_vector(fac, a_vec, dep_tol)
                tol_c = dep_tol * col_scale[c]
                if resid > tol_c:
                    ok = False
                    break
                # defect of the assembled null vector on the window rows
                z_resid = float(np.abs(G[:, fac.col_perm[:fac.numerical_rank]] @ x + a_vec).max()) \
                    if x.size else float(np.abs(a_vec).max())
                if z_resid > tol_c:
                    ok = False
                    break
                stage_entries.append((k, c, fac.col_perm[:fac.numerical_rank].copy(), x, z_resid))
            if ok:
                for k, c, perm, x, z_resid in stage_entries:
                    support = state.cols[perm]
                    keep = x != 0.0
                    rows_out.append(support[keep])
                    cols_out.append(np.full(int(keep.sum()), k))
                    vals_out.append(x[keep])
                    rows_out.append(np.array([c]))
                    cols_out.append(np.array([k]))
                    vals_out.append(np.array([1.0]))
                    worst = max(worst, z_resid)
                break
            state = augment_subset(state, dims, params)

    Z = sp.csc_matrix(
        (np.concatenate(vals_out),
         (np.concatenate(rows_out), np.concatenate(cols_out))),
        shape=(dims.n, params.r_Z))
    scale = 1.0 + (np.abs(A).max() if A.nnz else 0.0)
    if worst > dep_tol * scale:
        raise BasisVerificationFailed(
            f"nullspace residual {worst:g} exceeds {dep_tol * scale:g}")
    return NullspaceBasis(Z=Z, pivot_rows=params.pi.copy(), verified_residual=worst)


def turnback_general(A, pivot_tol=1e-10, dep_tol=DEPENDENCE_TOL):
    """Five-step turnback for an arbitrary sparse matrix: full
    rank-revealing LU, first-nonzero indices of the LU nullspace, pivot
    columns, rightward (then leftward) column growth until dependence, and
    one solve per null vector."""
    A = as_csc(A)
    m, n = A.shape
    if m == 0:
        return NullspaceBasis(Z=sp.identity(n, format="csc"),
                              pivot_rows=np.arange(n), verified_residual=0.0)
    fac = lu_rank_revealing(A, pivot_tol)
    r = fac.numerical_rank
    r_Z = n - r
    if r_Z == 0:
        return NullspaceBasis(Z=sp.csc_matrix((n, 0)),
                              pivot_rows=np.zeros(0, dtype=np.int64),
                              verified_residual=0.0)

    # LU-nullspace columns give the start indices b
    U1 = np.ascontiguousarray(fac.lu[:r, :r])
    U2 = fac.lu[:r, r:]
    ZLU = np.zeros((n, r_Z))
    for j in range(r_Z):
        if r:
            ZLU[fac.col_perm[:r], j] = -K.back_substitute(U1, np.ascontiguousarray(U2[:, j]))
        ZLU[fac.col_perm[r + j], j] = 1.0
    pivots = fac.col_perm[r:].astype(np.int64)
    b_start = np.zeros(r_Z, dtype=np.int64)
    for j in range(r_Z):
        col = np.abs(ZLU[:, j])
        nz = np.flatnonzero(col > 1e-12 * (1.0 + col.max()))
        b_start[j] = nz[0] if nz.size else pivots[j]

    order = np.argsort(pivots, kind="stable")
    col_scale = np.maximum(1.0, np.abs(A).max(axis=0).toarray().ravel() if A.nnz else np.ones(n))
    pivot_set = set(int(c) for c in pivots)

    rows_out, cols_out, vals_out = [], [], []
    worst = 0.0
    for j in order:
        c = int(pivots[j])
        lo = int(b_start[j])
        hi = lo
        width = max(4, r // max(1, r_Z))
        entry = None
        while True:
            hi = min(n, max(hi + width, lo + width))
            if hi == lo:
                hi = min(n, lo + 1)
            cols = np.array([k for k in range(lo, hi) if k not in pivot_set],
                            dtype=np.int64)
            entry = _try_subset(A, cols, c, pivot_tol, dep_tol * col_scale[c])
            if entry is not None:
                break
            if hi >= n:
                if lo == 0:
                    raise BasisVerificationFailed(
                        f"pivot column {c}: no dependent subset found")
                lo = max(0, lo - width)
            width *= 2
        support, x, z_resid = entry
        keep = x != 0.0
        rows_out.append(support[keep])
        cols_out.append(np.full(int(keep.sum()), j))
        vals_out.append(x[keep])
        rows_out.append(np.array([c]))
        cols_out.append(np.array([j]))
        vals_out.append(np.array([1.0]))
        worst = max(worst, z_resid)

    Z = sp.csc_matrix(
        (np.concatenate(vals_out),
         (np.concatenate(rows_out), np.concatenate(cols_out))),
        shape=(n, r_Z))
    return NullspaceBasis(Z=Z, pivot_rows=pivots[order].copy(), verified_residual=worst)


def _try_subset(A, cols, c, pivot_tol, tol_c):
    """Factorize A[:, cols] and test whether column c is dependent on it;
    returns (support_cols, coefficients, residual) or None."""
    if cols.size == 0:
        seg = A[:, [c]]
        resid = float(np.abs(seg.toarray()).max()) if seg.nnz else 0.0
        return (cols, np.zeros(0), resid) if resid <= tol_c else None
    probe = np.concatenate([cols, [c]])
    rows = np.unique(A[:, probe].tocoo().row)
    G = _dense_subset(A, rows, cols)
    fac = lu_rank_revealing(G, pivot_tol)
    a_vec = np.zeros(rows.size)
    seg = A[:, [c]].tocoo()
    a_vec[np.searchsorted(rows, seg.row)] = seg.data
    x, resid = _null_vector(fac, a_vec, tol_c)
    if resid > tol_c:
        return None
    z_resid = float(np.abs(G[:, fac.col_perm[:fac.numerical_rank]] @ x + a_vec).max()) \
        if x.size else float(np.abs(a_vec).max())
    if z_resid > tol_c:
        return None
    return cols[fac.col_perm[:fac.numerical_rank]], x, z_resid


def nested_basis(R, Z_dyn, pivot_tol=1e-10):
    """Second-stage basis for appended rows: N2 with (R Z_dyn) N2 = 0, so the
    composite Z_dyn N2 annihilates both the dynamics rows and R."""
    Zd = Z_dyn.Z if isinstance(Z_dyn, NullspaceBasis) else as_csc(Z_dyn)
    if R is None or (hasattr(R, "shape") and R.shape[0] == 0):
        return NullspaceBasis(Z=Zd.copy(), pivot_rows=None, verified_residual=0.0)
    Rc = as_csc(R)
    M = Rc @ Zd
    inner = turnback_general(M, pivot_tol=pivot_tol)
    Z = (Zd @ inner.Z).tocsc()
    resid = float(np.abs(M @ inner.Z).max()) if inner.Z.shape[1] else 0.0
    return NullspaceBasis(Z=Z, pivot_rows=None, verified_residual=resid)


def add_virtual_controls(dims, hierarchy=None):
    """Square up the control matrix of an under-actuated system by adding
    one virtual control per under-actuated coordinate and stage, pinned to
    zero by the inequality pair u* <= 0 and -u* <= 0.

    Returns (dims', bound_blocks, virtual_columns); appends the blocks to
    the hierarchy's top level when one is passed.
    """
    if dims.n_ua == 0:
        return dims, [], np.zeros(0, dtype=np.int64)
    dims2 = DynamicsDims(T=dims.T, n_q=dims.n_q, n_qdot=dims.n_qdot,
                         n_tau=dims.n_qdot, n_gamma=dims.n_gamma, n_ua=0,
                         integrator=dims.integrator)
    stride2 = dims2.stage_width
    virtual = np.concatenate([t * stride2 + np.arange(dims.n_ua)
                              for t in range(dims.T)])
    n2 = dims2.n
    from .hierarchy import ConstraintBlock

    def _sel(sign):
        S = sp.csr_matrix(
            (np.full(virtual.size, sign), (np.arange(virtual.size), virtual)),
            shape=(virtual.size, n2))

        def fun(x):
            return sign * np.asarray(x)[virtual]

        def jac(x):
            return S

        return ConstraintBlock(dim=virtual.size, kind="ineq", fun=fun, jac=jac,
                               hess=None, structure="stagewise-banded",
                               name=f"virtual-controls{'+' if sign > 0 else '-'}")

    blocks = [_sel(1.0), _sel(-1.0)]
    if hierarchy is not None:
        if hierarchy.n != n2:
            raise DimensionMismatch(
                f"hierarchy sized {hierarchy.n}, virtual-control layout needs {n2}")
        hierarchy.levels[0].inequalities.extend(blocks)
    return dims2, blocks, virtual
