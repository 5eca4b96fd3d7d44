"""Problem model: constraint blocks, priority levels, filter measures,
and linearization of the nonlinear hierarchy into per-level linear data."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import NonFiniteEvaluation

EIG_FLOOR = 1e-8
IDENTITY_FALLBACK_WEIGHT = 1e-4


@dataclass
class ConstraintBlock:
    """One block of equality or inequality constraints.

    ``fun`` maps x (n,) to residuals (dim,), ``jac`` to the (dim, n)
    Jacobian (dense or scipy sparse).  ``hess`` is the optional weighted
    second-derivative contraction (x, w) -> (n, n) with one weight per row.
    """

    dim: int
    kind: str  # 'eq' | 'ineq'
    fun: callable
    jac: callable
    hess: callable = None
    structure: str = "dense"  # 'dense' | 'stagewise-banded'
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("eq", "ineq"):
            raise ValueError(f"kind must be 'eq' or 'ineq', got {self.kind!r}")


@dataclass
class Level:
    equalities: list = field(default_factory=list)
    inequalities: list = field(default_factory=list)
    name: str = ""
    dyn: object = None  # DynamicsDims when the equality part is Euler dynamics

    @property
    def n_eq(self):
        return sum(b.dim for b in self.equalities)

    @property
    def n_ineq(self):
        return sum(b.dim for b in self.inequalities)


@dataclass
class Hierarchy:
    n: int
    levels: list

    def __post_init__(self):
        if len(self.levels) < 1:
            raise ValueError("a hierarchy needs at least one level")

    @property
    def p(self):
        return len(self.levels)


def _eval_blocks(blocks, x):
    if not blocks:
        return np.zeros(0)
    parts = [np.atleast_1d(np.asarray(b.fun(x), dtype=float)) for b in blocks]
    out = np.concatenate(parts)
    if not np.all(np.isfinite(out)):
        bad = [b.name or i for i, (b, p) in enumerate(zip(blocks, parts))
               if not np.all(np.isfinite(p))]
        raise NonFiniteEvaluation(f"non-finite residual in block(s) {bad}")
    return out


def evaluate(hierarchy, x):
    """Exact per-level residuals [(f_eq, f_ineq), ...]; no clamping."""
    x = np.asarray(x, dtype=float)
    if x.size != hierarchy.n:
        raise ValueError(f"expected x of length {hierarchy.n}, got {x.size}")
    return [(_eval_blocks(lv.equalities, x), _eval_blocks(lv.inequalities, x))
            for lv in hierarchy.levels]


def f_plus(hierarchy, x, level):
    """[f_eq ; max(0, f_ineq)] for 1-based ``level``."""
    lv = hierarchy.levels[level - 1]
    x = np.asarray(x, dtype=float)
    fe = _eval_blocks(lv.equalities, x)
    fi = _eval_blocks(lv.inequalities, x)
    return np.concatenate([fe, np.maximum(0.0, fi)])


def h_measure(hierarchy, x, level, v_star):
    """l1 feasibility of levels 1..level-1 against their frozen slacks.

    ``v_star`` holds per-level (v_eq, v_ineq) for at least the first
    level-1 levels; inactive inequality entries are zero by construction.
    """
    if level <= 1:
        return 0.0
    x = np.asarray(x, dtype=float)
    total = 0.0
    for k in range(level - 1):
        lv = hierarchy.levels[k]
        ve, vi = v_star[k]
        fe = _eval_blocks(lv.equalities, x)
        fi = np.maximum(0.0, _eval_blocks(lv.inequalities, x))
        total += np.abs(fe - ve).sum() + np.abs(fi - vi).sum()
    return float(total)


def _jac_blocks(blocks, x, n):
    if not blocks:
        return sp.csr_matrix((0, n))
    mats = []
    for b in blocks:
        J = b.jac(x)
        mats.append(J.tocsr() if sp.issparse(J) else sp.csr_matrix(np.atleast_2d(np.asarray(J, dtype=float))))
    return sp.vstack(mats, format="csr")


@dataclass
class SoiState:
    """Per-level second-order-information switches and factors."""

    active: np.ndarray  # bool per level
    factors: list       # R_l (r x n dense) or None per level
    multipliers: list = None  # weights used to form each factor

    @classmethod
    def gauss_newton(cls, p):
        return cls(active=np.zeros(p, dtype=bool), factors=[None] * p,
                   multipliers=[None] * p)


@dataclass
class HlspLevel:
    """Linearized data of one priority level: A dx - b = v-hat semantics
    with b = -f(x)."""

    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_ineq: sp.csr_matrix
    b_ineq: np.ndarray
    soi_rows: np.ndarray = None  # appended equality rows R with zero rhs
    dyn: object = None
    name: str = ""


@dataclass
class HlspData:
    n: int
    trust_radius: float
    levels: list
    active_hint: object = None

    def level(self, l):
        return self.levels[l - 1]


def linearize(hierarchy, x, soi=None, active=None, trust_radius=1.0):
    """Per-level Gauss-Newton data A_l = J_l(x), b_l = -f_l(x); appends the
    SOI factor rows of levels switched to Newton mode; the trust-region
    radius rides along as priority level 0."""
    x = np.asarray(x, dtype=float)
    n = hierarchy.n
    levels = []
    for li, lv in enumerate(hierarchy.levels):
        fe = _eval_blocks(lv.equalities, x)
        fi = _eval_blocks(lv.inequalities, x)
        Ae = _jac_blocks(lv.equalities, x, n)
        Ai = _jac_blocks(lv.inequalities, x, n)
        R = None
        if soi is not None and soi.active[li] and soi.factors[li] is not None:
            R = soi.factors[li]
        levels.append(HlspLevel(A_eq=Ae, b_eq=-fe, A_ineq=Ai, b_ineq=-fi,
                                soi_rows=R, dyn=lv.dyn, name=lv.name))
    return HlspData(n=n, trust_radius=float(trust_radius), levels=levels,
                    active_hint=active)


def build_hierarchical_hessian(hierarchy, x, level, multipliers, eig_floor=EIG_FLOOR):
    """Multiplier-weighted sum of constraint second derivatives of levels
    1..level, symmetrized and eigenvalue-clamped at ``eig_floor``.

    ``multipliers`` is a list of (w_eq, w_ineq) per level.  Returns
    (R, status) with R^T R equal to the clamped Hessian; status is
    'fallback_identity' when a weighted block lacks second derivatives.
    """
    x = np.asarray(x, dtype=float)
    n = hierarchy.n
    H = np.zeros((n, n))
    for k in range(level):
        lv = hierarchy.levels[k]
        w_eq, w_ineq = multipliers[k]
        for blocks, w in ((lv.equalities, w_eq), (lv.inequalities, w_ineq)):
            off = 0
            for b in blocks:
                wb = np.atleast_1d(np.asarray(w, dtype=float))[off:off + b.dim]
                off += b.dim
                if not np.any(wb):
                    continue
                if b.hess is None:
                    R = np.sqrt(IDENTITY_FALLBACK_WEIGHT) * np.eye(n)
                    return R, "fallback_identity"
                H += np.asarray(b.hess(x, wb), dtype=float)
    H = 0.5 * (H + H.T)
    vals, vecs = np.linalg.eigh(H)
    vals = np.maximum(vals, eig_floor)
    R = np.sqrt(vals)[:, None] * vecs.T
    return R, "ok"


def fd_hess_contract(jac, n, h=1e-6):
    """Build a weighted-Hessian contraction by central-differencing J^T w.

    Returns a callable (x, w) -> (n, n); useful for blocks whose analytic
    second derivatives are impractical.
    """
    def hess(x, w):
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        H = np.zeros((n, n))
        for j in range(n):
            step = h * max(1.0, abs(x[j]))
            xp = x.copy(); xp[j] += step
            xm = x.copy(); xm[j] -= step
            Jp = jac(xp)
            Jm = jac(xm)
            gp = (Jp.T if not sp.issparse(Jp) else Jp.T.toarray()) @ w
            gm = (Jm.T if not sp.issparse(Jm) else Jm.T.toarray()) @ w
            H[:, j] = (np.asarray(gp).ravel() - np.asarray(gm).ravel()) / (2 * step)
        return 0.5 * (H + H.T)

    return hess


@dataclass
class LevelActiveRecord:
    """Frozen per-level activity after the level's step filter converged."""

    v_eq: np.ndarray
    v_ineq: np.ndarray
    active_ineq: np.ndarray       # indices into the level's inequality rows
    promoted: list                # (origin_level, row) promoted while solving

    @property
    def inactive_ineq(self):
        mask = np.ones(self.v_ineq.size, dtype=bool)
        mask[self.active_ineq] = False
        return np.flatnonzero(mask)


@dataclass
class ActiveSetState:
    """Outer-loop record of frozen slacks and activity per converged level."""

    records: list = field(default_factory=list)

    def v_star(self):
        return [(r.v_eq, r.v_ineq) for r in self.records]

    def frozen_levels(self):
        return len(self.records)
