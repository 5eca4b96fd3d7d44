"""ADMM solver for hierarchical least-squares programs.

Levels are solved in priority order; after each level converges its active
rows are appended to the accumulated constraint stack and the remaining
levels are projected into the nullspace of that stack, so lower levels can
never disturb higher-priority optima.  The trust region rides along as
priority level 0 and its rows enter the inactive pool like any other
inequality.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels as K
from .numerics import as_csc, cg_least_squares, dense_nullspace
from .turnback import nested_basis, turnback_euler


@dataclass
class AdmmSettings:
    rho0: float = 0.1
    sigma0: float = 1e-6
    alpha: float = 1.6          # over-relaxation, in (0, 2)
    nu: float = 1e-4            # activation threshold
    eta: float = 1e-6           # KKT convergence threshold
    max_iter: int = 1500
    check_every: int = 25
    rho_min: float = 1e-4
    rho_max: float = 1e4
    sigma_max: float = 1e2
    pivot_tol: float = 1e-10

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ValueError("alpha must lie in (0, 2)")
        if min(self.rho0, self.sigma0, self.nu, self.eta) <= 0.0:
            raise ValueError("rho0, sigma0, nu, eta must be positive")


@dataclass
class LevelCarry:
    """Converged per-level state, reusable as a warm start."""

    z: np.ndarray
    wI: np.ndarray
    uI: np.ndarray
    wN: np.ndarray
    uN: np.ndarray
    rho: float
    sigma: float


@dataclass
class LevelReport:
    level: int
    iterations: int
    kkt: float
    rho: float
    sigma: float
    factorizations: int
    converged: bool
    n_reduced: int
    activation: dict = field(default_factory=dict)


@dataclass
class HlspSolution:
    """Primal step, per-level slacks, activity, and warm-start state."""

    dx: np.ndarray
    v_eq: list
    v_ineq: list
    v_soi: list
    active_own: list
    promoted: list
    reports: list
    carries: list
    active_matrix: object
    active_rhs: np.ndarray
    active_origin: list
    nullspace_dim: int
    used_turnback: bool
    status: str
    wall_time: float = 0.0

    def level_slack_norm(self, l):
        """||v-hat_l||_2 over the level's own constraint rows."""
        return float(np.sqrt(np.sum(self.v_eq[l - 1] ** 2)
                             + np.sum(self.v_ineq[l - 1] ** 2)))

    def converged(self):
        return self.status == "converged"

    def trace(self):
        return {
            "levels": [
                {
                    "level": r.level,
                    "iterations": r.iterations,
                    "kkt": r.kkt,
                    "rho": r.rho,
                    "sigma": r.sigma,
                    "factorizations": r.factorizations,
                    "converged": r.converged,
                    "n_reduced": r.n_reduced,
                    "activation": {k: np.asarray(v).tolist()
                                   for k, v in r.activation.items()},
                }
                for r in self.reports
            ],
            "nullspace_dim": self.nullspace_dim,
            "status": self.status,
            "wall_time": self.wall_time,
        }


def update_active_sets(wI, uI, vI, wN, uN, rho, nu):
    """Activation tests after a level converged.

    Promoted rows (inactive pool): margin closed and multiplier engaged.
    Own inequality rows: margin closed and the slack or multiplier
    engaged; both raw tests are recorded since the slack and multiplier
    agree only in the limit.
    """
    lamN = rho * uN
    promoted = np.flatnonzero((wN < nu) & (lamN > nu))
    lamI = rho * uI
    own = np.flatnonzero((wI < nu) & ((np.abs(vI) > nu) | (lamI > nu)))
    tests = {
        "wI": wI.copy(), "vI": vI.copy(), "lamI": lamI,
        "wN": wN.copy(), "lamN": lamN,
        "own_slack_test": np.abs(vI) > nu,
        "own_multiplier_test": lamI > nu,
    }
    return own, promoted, tests


def compute_multipliers(active_matrix, gradient, precond=None, tol=1e-8,
                        max_iter=None):
    """Least-squares multipliers of the active stack: minimize
    ||A_act^T lam + gradient||_2 by conjugate-gradient least squares."""
    return cg_least_squares(active_matrix, -np.asarray(gradient, dtype=float),
                            precond=precond, tol=tol, max_iter=max_iter)


def warm_start_policy(previous, level_count):
    """Across problem instances only the per-level step sizes are carried;
    primal and dual sub-steps restart at zero."""
    if previous is None or len(previous.carries) != level_count:
        return [None] * level_count
    return [(c.rho, c.sigma) if c is not None else None
            for c in previous.carries]


class _InactivePool:
    """Inactive inequality rows accumulated across levels, with origins."""

    def __init__(self, n):
        self.n = n
        self.blocks = []  # [origin_level, A csr, b, original row ids, alive mask]

    def add(self, origin_level, A, b, row_ids=None):
        A = A.tocsr() if sp.issparse(A) else sp.csr_matrix(A)
        if A.shape[0]:
            ids = np.arange(A.shape[0]) if row_ids is None else np.asarray(row_ids)
            self.blocks.append([origin_level, A, np.asarray(b, dtype=float),
                                ids, np.ones(A.shape[0], dtype=bool)])

    def stack(self):
        rows = [blk[1][blk[4]] for blk in self.blocks if blk[4].any()]
        rhs = [blk[2][blk[4]] for blk in self.blocks if blk[4].any()]
        if not rows:
            return sp.csr_matrix((0, self.n)), np.zeros(0)
        return sp.vstack(rows, format="csr"), np.concatenate(rhs)

    def retire(self, flat_indices):
        """Remove rows by their position in the current stack; returns the
        retired rows as (origin_level, original_row, a_row, b)."""
        origin_map = []
        for bi, blk in enumerate(self.blocks):
            origin_map.extend((bi, int(i)) for i in np.flatnonzero(blk[4]))
        retired = []
        for fi in flat_indices:
            bi, li = origin_map[int(fi)]
            origin, A, b, ids, alive = self.blocks[bi]
            alive[li] = False
            retired.append((origin, int(ids[li]), A[li], float(b[li])))
        return retired


def _project(A, N):
    """Dense A @ N with N possibly None (identity) or sparse."""
    if A.shape[0] == 0:
        ncols = A.shape[1] if N is None else (N.shape[1])
        return np.zeros((0, ncols))
    if N is None:
        return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    out = A @ N
    return out.toarray() if sp.issparse(out) else np.asarray(out)


def _apply_basis(N, z):
    if N is None:
        return z
    out = N @ z
    return np.asarray(out).ravel()


def _compose(N, Z):
    if N is None:
        return Z
    out = N @ Z
    return out


def solve_hlsp(data, settings=None, warm=None, reuse_state=False):
    """Solve the linearized hierarchy level by level.

    ``warm`` carries per-level step sizes from a previous instance;
    ``reuse_state=True`` additionally restores the full primal/dual state,
    so re-solving an identical problem terminates in zero iterations.
    Non-convergence of a level is reported in the solution status, never
    raised.
    """
    settings = settings or AdmmSettings()
    t0 = time.perf_counter()
    n = data.n
    pool = _InactivePool(n)

    # priority level 0: the trust-region box, feasible at dx = 0, enters as
    # inactive rows and may promote like any other inequality
    eye = sp.identity(n, format="csr")
    box = sp.vstack([eye, -eye], format="csr")
    pool.add(0, box, np.full(2 * n, data.trust_radius))

    N = None
    n_r = n
    x_part = np.zeros(n)
    act_rows, act_rhs, act_origin = [], [], []
    v_eq, v_ineq, v_soi = [], [], []
    active_own, promoted_all = [], []
    reports, carries = [], []
    used_turnback = False
    all_converged = True
    step_carry = warm_start_policy(warm, len(data.levels)) if not reuse_state \
        else [None] * len(data.levels)

    for li, lev in enumerate(data.levels):
        l = li + 1
        A_eq = lev.A_eq.tocsr()
        m_eq = A_eq.shape[0]
        R = lev.soi_rows
        m_soi = 0 if R is None else R.shape[0]
        if m_soi:
            AE_full = sp.vstack([A_eq, sp.csr_matrix(R)], format="csr")
            bE_full = np.concatenate([lev.b_eq, np.zeros(m_soi)])
        else:
            AE_full = A_eq
            bE_full = lev.b_eq
        A_in = lev.A_ineq.tocsr()
        AN_raw, bN_raw = pool.stack()

        AEp = _project(AE_full, N)
        AIp = _project(A_in, N)
        ANp = _project(AN_raw, N)
        bE = bE_full - (AE_full @ x_part if m_eq + m_soi else np.zeros(0))
        bI = lev.b_ineq - (A_in @ x_part if A_in.shape[0] else np.zeros(0))
        bN = bN_raw - (AN_raw @ x_part if AN_raw.shape[0] else np.zeros(0))
        mI = bI.shape[0]
        mN = bN.shape[0]

        if n_r == 0 or (m_eq + m_soi + mI) == 0:
            # nothing to optimize at this level
            vE_lvl = -bE
            vI_lvl = np.maximum(0.0, -bI)
            v_eq.append(vE_lvl[:m_eq])
            v_soi.append(vE_lvl[m_eq:])
            v_ineq.append(vI_lvl)
            active_own.append(np.zeros(0, dtype=np.int64))
            promoted_all.append([])
            reports.append(LevelReport(level=l, iterations=0, kkt=0.0,
                                       rho=settings.rho0, sigma=settings.sigma0,
                                       factorizations=0, converged=True,
                                       n_reduced=n_r))
            carries.append(None)
            if mI:
                pool.add(l, A_in, lev.b_ineq)
            if n_r and m_eq + m_soi:
                # equalities still project even when untouched by the solve
                Z = _nullspace_for(AE_full, lev, N, settings, x_part)
                N = _compose(N, Z)
                n_r = N.shape[1]
                _extend_active(act_rows, act_rhs, act_origin, AE_full,
                               bE_full + vE_lvl, l, m_eq)
            continue

        if reuse_state and warm is not None and warm.carries[li] is not None:
            c = warm.carries[li]
            z0, wI0, uI0, wN0, uN0 = c.z, c.wI, c.uI, c.wN, c.uN
            rho, sigma = c.rho, c.sigma
        else:
            z0 = np.zeros(n_r)
            wI0 = np.maximum(0.0, bI)
            uI0 = np.zeros(mI)
            wN0 = np.maximum(0.0, bN)
            uN0 = np.zeros(mN)
            if step_carry[li] is not None:
                rho, sigma = step_carry[li]
            else:
                rho, sigma = settings.rho0, settings.sigma0

        (it, kkt, rho, sigma, nfact, converged, vE, vI,
         z, wI, uI, wN, uN) = K.admm_level_loop(
            AEp, bE, AIp, bI, ANp, bN, z0, wI0, uI0, wN0, uN0,
            rho=rho, sigma=sigma, alpha=settings.alpha, eta=settings.eta,
            max_iter=settings.max_iter, rho0=settings.rho0,
            check_every=settings.check_every, rho_min=settings.rho_min,
            rho_max=settings.rho_max, sigma_max=settings.sigma_max)
        all_converged &= bool(converged)

        own, promoted_idx, tests = update_active_sets(
            wI, uI, vI, wN, uN, rho, settings.nu)
        x_part = x_part + _apply_basis(N, z)

        v_eq.append(vE[:m_eq])
        v_soi.append(vE[m_eq:])
        v_ineq.append(vI)
        active_own.append(own)
        carries.append(LevelCarry(z=z, wI=wI, uI=uI, wN=wN, uN=uN,
                                  rho=rho, sigma=sigma))
        reports.append(LevelReport(level=l, iterations=int(it), kkt=float(kkt),
                                   rho=float(rho), sigma=float(sigma),
                                   factorizations=int(nfact),
                                   converged=bool(converged), n_reduced=n_r,
                                   activation=tests))

        # virtual-level rows first, then the level's own active rows
        retired = pool.retire(promoted_idx)
        promoted_all.append([(org, li_row) for org, li_row, _, _ in retired])
        new_rows, new_rhs = [], []
        for org, li_row, a_row, b_row in retired:
            new_rows.append(a_row)
            new_rhs.append(b_row)
            act_origin.append((org, "promoted", li_row))
        if m_eq + m_soi:
            new_rows.append(AE_full)
            new_rhs.append(bE_full + vE)
            act_origin.extend([(l, "eq", i) for i in range(m_eq)]
                              + [(l, "soi", i) for i in range(m_soi)])
        if own.size:
            new_rows.append(A_in[own])
            new_rhs.append(lev.b_ineq[own] + vI[own])
            act_origin.extend([(l, "ineq", int(i)) for i in own])
        if mI:
            inact_mask = np.ones(mI, dtype=bool)
            inact_mask[own] = False
            pool.add(l, A_in[inact_mask], lev.b_ineq[inact_mask])

        if new_rows:
            A_new = sp.vstack([sp.csr_matrix(r) for r in new_rows], format="csr")
            rhs_new = np.concatenate([np.atleast_1d(r) for r in new_rhs])
            act_rows.append(A_new)
            act_rhs.append(rhs_new)
            if lev.dyn is not None and N is None and m_eq and not retired:
                used_turnback = True
            Z = _nullspace_for_stack(A_new, lev, N, settings, m_promoted=len(retired),
                                     m_eq=m_eq, m_soi=m_soi)
            N = _compose(N, Z)
            n_r = N.shape[1]

    A_act = sp.vstack(act_rows, format="csr") if act_rows else sp.csr_matrix((0, n))
    rhs_act = np.concatenate(act_rhs) if act_rhs else np.zeros(0)
    return HlspSolution(
        dx=x_part, v_eq=v_eq, v_ineq=v_ineq, v_soi=v_soi,
        active_own=active_own, promoted=promoted_all, reports=reports,
        carries=carries, active_matrix=A_act, active_rhs=rhs_act,
        active_origin=act_origin, nullspace_dim=n_r,
        used_turnback=used_turnback,
        status="converged" if all_converged else "level_not_converged",
        wall_time=time.perf_counter() - t0)


def _extend_active(act_rows, act_rhs, act_origin, A, rhs, level, m_eq):
    act_rows.append(A.tocsr())
    act_rhs.append(rhs)
    m_soi = A.shape[0] - m_eq
    act_origin.extend([(level, "eq", i) for i in range(m_eq)]
                      + [(level, "soi", i) for i in range(m_soi)])


def _nullspace_for_stack(A_new, lev, N, settings, m_promoted, m_eq, m_soi):
    """Basis of the newly activated rows, projected into the current basis.

    The Euler turnback handles the dynamics block when it is still
    unprojected; appended factor rows go through the nested two-step
    scheme, anything else through the dense SVD nullspace.
    """
    if lev.dyn is not None and N is None and m_promoted == 0 and m_eq:
        A_dyn = A_new[:m_eq]
        basis = turnback_euler(A_dyn, lev.dyn, pivot_tol=settings.pivot_tol)
        if m_soi:
            basis = nested_basis(A_new[m_eq:], basis, pivot_tol=settings.pivot_tol)
        return basis.Z
    return _dense_null(A_new, N)


def _nullspace_for(A, lev, N, settings, x_part):
    if lev.dyn is not None and N is None:
        return turnback_euler(A, lev.dyn, pivot_tol=settings.pivot_tol).Z
    return _dense_null(A, N)


def _dense_null(A, N):
    At = _project(A.tocsr() if sp.issparse(A) else sp.csr_matrix(A), N)
    return dense_nullspace(At)
