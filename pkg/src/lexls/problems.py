"""Problem builders: the nonlinear test-function hierarchy, Euler-dynamics
block assembly, the cart-pole swing-up transcription, and randomized
dynamics instances for benchmarks."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, OffsetTooSmall
from .hierarchy import ConstraintBlock, Hierarchy, Level
from .numerics import SparseMatrix
from .turnback import DynamicsDims, add_virtual_controls


# ---------------------------------------------------------------------------
# scalar test functions
# ---------------------------------------------------------------------------

def _sq_block(n, idx, offset, kind, name):
    """sum_i x_i^2 + offset as a 1-row block on the given coordinates."""
    idx = np.asarray(idx, dtype=int)

    def fun(x):
        return np.array([np.sum(np.asarray(x)[idx] ** 2) + offset])

    def jac(x):
        row = np.zeros(n)
        row[idx] = 2.0 * np.asarray(x)[idx]
        return row.reshape(1, n)

    def hess(x, w):
        H = np.zeros((n, n))
        H[idx, idx] = 2.0 * w[0]
        return H

    return ConstraintBlock(dim=1, kind=kind, fun=fun, jac=jac, hess=hess, name=name)


def _rosenbrock_block(n, i, j, name):
    def fun(x):
        return np.array([(1.0 - x[i]) ** 2 + 100.0 * (x[j] - x[i] ** 2) ** 2])

    def jac(x):
        row = np.zeros(n)
        row[i] = -2.0 * (1.0 - x[i]) - 400.0 * x[i] * (x[j] - x[i] ** 2)
        row[j] = 200.0 * (x[j] - x[i] ** 2)
        return row.reshape(1, n)

    def hess(x, w):
        H = np.zeros((n, n))
        H[i, i] = w[0] * (2.0 - 400.0 * (x[j] - x[i] ** 2) + 800.0 * x[i] ** 2)
        H[i, j] = H[j, i] = w[0] * (-400.0 * x[i])
        H[j, j] = w[0] * 200.0
        return H

    return ConstraintBlock(dim=1, kind="eq", fun=fun, jac=jac, hess=hess, name=name)


def mccormick_value(a, b):
    return np.sin(a + b) + (a - b) ** 2 - 1.5 * a + 2.5 * b + 1.0


def _mccormick_block(n, i, j, offset, name):
    def fun(x):
        return np.array([mccormick_value(x[i], x[j]) + offset])

    def jac(x):
        c = np.cos(x[i] + x[j])
        row = np.zeros(n)
        row[i] = c + 2.0 * (x[i] - x[j]) - 1.5
        row[j] = c - 2.0 * (x[i] - x[j]) + 2.5
        return row.reshape(1, n)

    def hess(x, w):
        s = -np.sin(x[i] + x[j])
        H = np.zeros((n, n))
        H[i, i] = w[0] * (s + 2.0)
        H[i, j] = H[j, i] = w[0] * (s - 2.0)
        H[j, j] = w[0] * (s + 2.0)
        return H

    return ConstraintBlock(dim=1, kind="eq", fun=fun, jac=jac, hess=hess, name=name)


def _regularization_block(n, name):
    eye = sp.identity(n, format="csr")

    def fun(x):
        return np.asarray(x, dtype=float).copy()

    def jac(x):
        return eye

    def hess(x, w):
        return np.zeros((n, n))

    return ConstraintBlock(dim=n, kind="eq", fun=fun, jac=jac, hess=hess, name=name)


@dataclass
class TestHierarchySpec:
    n: int = 10
    offset: float = 20.0  # additive offset keeping the sine-bowl level positive
    x0: np.ndarray = None

    def start_point(self):
        return np.zeros(self.n) if self.x0 is None else np.asarray(self.x0, dtype=float)


def build_test_hierarchy(spec=None):
    """Nine-level benchmark over ten variables mixing feasible and
    infeasible disk, Rosenbrock, shifted-McCormick, and regularization
    constraints."""
    spec = spec or TestHierarchySpec()
    n = spec.n
    levels = [
        Level(inequalities=[_sq_block(n, [0, 1], -1.9, "ineq", "disk-ineq")], name="L1"),
        Level(equalities=[_rosenbrock_block(n, 0, 1, "rosenbrock-12")], name="L2"),
        Level(equalities=[_sq_block(n, [0, 1], -0.9, "eq", "disk-eq-09")], name="L3"),
        Level(equalities=[_sq_block(n, [1, 2], -1.0, "eq", "disk-eq-23")], name="L4"),
        Level(inequalities=[_sq_block(n, [3, 4], 1.0, "ineq", "disk-infeas")], name="L5"),
        Level(equalities=[_sq_block(n, [5, 6, 7], -4.0, "eq", "sphere-678")], name="L6"),
        Level(equalities=[_rosenbrock_block(n, 5, 6, "rosenbrock-67")], name="L7"),
        Level(equalities=[_mccormick_block(n, 8, 9, spec.offset, "mccormick")], name="L8"),
        Level(equalities=[_regularization_block(n, "regularization")], name="L9"),
    ]
    return Hierarchy(n=n, levels=levels)


def mccormick_offset_check(offset, lo=(-5.5, -5.5), hi=(4.0, 4.0), step=0.05):
    """Verify the additive offset keeps the shifted function positive on the
    grid, so squaring introduces no spurious minima at sign crossings."""
    if step > 0.05:
        raise ValueError("grid resolution must be <= 0.05")
    xs = np.arange(lo[0], hi[0] + step / 2, step)
    ys = np.arange(lo[1], hi[1] + step / 2, step)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    F = mccormick_value(X, Y)
    if np.any(F + offset <= 0.0):
        raise OffsetTooSmall(
            f"offset {offset} leaves min {F.min():.4f} + offset <= 0 on the grid")

    def strict_minima(G):
        out = set()
        for i in range(1, G.shape[0] - 1):
            for j in range(1, G.shape[1] - 1):
                patch = G[i - 1:i + 2, j - 1:j + 2]
                if G[i, j] == patch.min() and (patch > G[i, j]).sum() == 8:
                    out.add((i, j))
        return out

    return strict_minima(F) == strict_minima((F + offset) ** 2)


# ---------------------------------------------------------------------------
# Euler-dynamics blocks and Jacobian layout
# ---------------------------------------------------------------------------

@dataclass
class DynamicsBlocks:
    """Per-stage derivative blocks of the Euler-integrated dynamics.

    mode 'inverse' has L = M, G = I; 'forward' has L = I, G = M^{-1}.
    The unit blocks of the integrator rows follow the integrator choice:
    explicit carries E1 = -I, E2 = -I, E3 = I; implicit E1 = -I, E3 = I,
    E4 = -I.
    """

    B: list    # n_qdot x n_tau
    F: list    # n_qdot x n_gamma
    D1: list   # n_qdot x n_q      (explicit only; zero block otherwise)
    D2: list   # n_qdot x n_qdot
    D3: list   # n_qdot x n_q      (implicit only; zero block otherwise)
    D4: list   # n_qdot x n_qdot
    mode: str = "inverse"
    rhs: list = None  # optional per-stage residual constants


def assemble_dynamics_jacobian(blocks, dims):
    """Place the E/B/F/D blocks in the stage-banded layout.

    Row block t holds [integrator rows (n_q); momentum rows (n_qdot)];
    column block t holds [tau_t | gamma_t | q_{t+1} | qdot_{t+1}].  Stage
    t >= 1 also writes into column block t-1 through the E1/E2/D1/D2
    entries on (q_t, qdot_t).
    """
    T, n_q, n_qdot = dims.T, dims.n_q, dims.n_qdot
    n_tau, n_gamma, n_s = dims.n_tau, dims.n_gamma, dims.n_s
    stride = dims.stage_width
    explicit = dims.integrator == "explicit"
    rows, cols, vals = [], [], []

    def put(block, r0, c0):
        B = np.atleast_2d(np.asarray(block, dtype=float))
        if B.size == 0:
            return
        nz = np.nonzero(B)
        rows.append(nz[0] + r0)
        cols.append(nz[1] + c0)
        vals.append(B[nz])

    eye_q = np.eye(n_q)
    for t in range(T):
        r1 = t * n_s               # integrator rows
        r2 = r1 + n_q              # momentum rows
        c_own = t * stride
        c_q = c_own + n_tau + n_gamma
        c_qd = c_q + n_q
        if np.shape(blocks.B[t]) != (n_qdot, n_tau):
            raise DimensionMismatch(f"B[{t}] has shape {np.shape(blocks.B[t])}")
        put(blocks.B[t], r2, c_own)
        if n_gamma:
            put(blocks.F[t], r2, c_own + n_tau)
        put(eye_q, r1, c_q)                    # E3
        if not explicit:
            put(-eye_q, r1, c_qd)              # E4
            put(blocks.D3[t], r2, c_q)
        put(blocks.D4[t], r2, c_qd)
        if t >= 1:
            c_prev_q = (t - 1) * stride + n_tau + n_gamma
            c_prev_qd = c_prev_q + n_q
            put(-eye_q, r1, c_prev_q)          # E1
            if explicit:
                put(-eye_q, r1, c_prev_qd)     # E2
                put(blocks.D1[t], r2, c_prev_q)
            put(blocks.D2[t], r2, c_prev_qd)
    if not rows:
        return SparseMatrix(sp.csc_matrix((dims.n_rows, dims.n)))
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dims.n_rows, dims.n))
    return SparseMatrix(mat)


def random_dynamics_instance(dims, seed, mode="inverse", dt=0.01):
    """Randomized well-conditioned stage blocks for turnback benchmarks."""
    rng = np.random.default_rng(seed)
    n_q, n_qdot, n_tau, n_gamma = dims.n_q, dims.n_qdot, dims.n_tau, dims.n_gamma
    explicit = dims.integrator == "explicit"
    S = np.zeros((n_tau, n_q))
    S[:, dims.n_ua:] = np.eye(n_tau)  # actuated coordinates fill the tail
    B, F, D1, D2, D3, D4 = [], [], [], [], [], []
    for _ in range(dims.T):
        Q, _ = np.linalg.qr(rng.standard_normal((n_q, n_q)))
        eig = np.linspace(1.0, 30.0, n_q)
        M = (Q * eig) @ Q.T
        if mode == "inverse":
            L, Bt = M, -S.T
            Ft = rng.standard_normal((n_q, n_gamma)) if n_gamma else np.zeros((n_q, 0))
        else:
            Minv = np.linalg.inv(M)
            L, Bt = np.eye(n_q), -Minv @ S.T
            Ft = Minv @ rng.standard_normal((n_q, n_gamma)) if n_gamma else np.zeros((n_q, 0))
        B.append(Bt)
        F.append(Ft)
        D1.append(dt * rng.standard_normal((n_qdot, n_q)) if explicit else np.zeros((n_qdot, n_q)))
        D2.append(-L - (dt * rng.standard_normal((n_qdot, n_qdot)) if explicit else 0.0))
        D3.append(dt * rng.standard_normal((n_qdot, n_q)) if not explicit else np.zeros((n_qdot, n_q)))
        D4.append(L + (dt * rng.standard_normal((n_qdot, n_qdot)) if not explicit else 0.0))
    return DynamicsBlocks(B=B, F=F, D1=D1, D2=D2, D3=D3, D4=D4, mode=mode)


# ---------------------------------------------------------------------------
# cart-pole swing-up
# ---------------------------------------------------------------------------

@dataclass
class CartPoleSpec:
    cart_mass: float = 0.1
    pole_mass: float = 0.1
    pole_length: float = 0.25
    force_limit: float = 100.0
    cart_limit: float = 2.4
    horizon: int = 75
    dt: float = 0.0025
    gravity: float = 9.81
    tip_target: tuple = (0.0, 0.5)
    cart0: float = 0.0
    angle0: float = np.pi  # 0 is upright; pi hangs down


def cartpole_dynamics(q, qdot, force, spec=None):
    """Accelerations and first derivatives of the cart-pole.

    Coordinates are (theta, cart) with the un-actuated angle first; theta
    is measured from the upright position.  Returns (qdd, d qdd / d(theta,
    cart, theta_dot, cart_dot, force)) with qdd of shape (2,) and the
    Jacobian of shape (2, 5).
    """
    spec = spec or CartPoleSpec()
    mc, mp, ell, g = spec.cart_mass, spec.pole_mass, spec.pole_length, spec.gravity
    th, thd = q[0], qdot[0]
    s, c = np.sin(th), np.cos(th)
    M = np.array([[mp * ell * ell, mp * ell * c],
                  [mp * ell * c, mc + mp]])
    V = np.array([-mp * g * ell * s, -mp * ell * thd * thd * s])
    rhs = np.array([0.0, force]) - V
    Minv = np.linalg.inv(M)
    qdd = Minv @ rhs

    dM_dth = np.array([[0.0, -mp * ell * s], [-mp * ell * s, 0.0]])
    dV_dth = np.array([-mp * g * ell * c, -mp * ell * thd * thd * c])
    dV_dthd = np.array([0.0, -2.0 * mp * ell * thd * s])
    J = np.zeros((2, 5))
    J[:, 0] = Minv @ (-dV_dth - dM_dth @ qdd)
    J[:, 2] = Minv @ (-dV_dthd)
    J[:, 4] = Minv @ np.array([0.0, 1.0])
    return qdd, J


def cartpole_energy(q, qdot, spec=None):
    spec = spec or CartPoleSpec()
    mc, mp, ell, g = spec.cart_mass, spec.pole_mass, spec.pole_length, spec.gravity
    th, thd = q[0], qdot[0]
    pd = qdot[1]
    ke = 0.5 * mc * pd ** 2 + 0.5 * mp * (pd ** 2 + 2 * ell * np.cos(th) * pd * thd
                                          + ell ** 2 * thd ** 2)
    pe = mp * g * ell * np.cos(th)
    return ke + pe


def cartpole_tip(q, spec=None):
    spec = spec or CartPoleSpec()
    th, p = q[0], q[1]
    return np.array([p + spec.pole_length * np.sin(th),
                     spec.pole_length * np.cos(th)])


class _CartPoleTranscription:
    """Explicit-Euler transcription in scaled variables (states q/dt and
    controls dt*tau), with per-stage columns [virtual tau | real tau |
    q_{t+1} | qdot_{t+1}]."""

    def __init__(self, spec, dims):
        self.spec = spec
        self.dims = dims
        self.dt = spec.dt
        self.q0 = np.array([spec.angle0, spec.cart0])
        self.qd0 = np.zeros(2)

    # -- variable access -------------------------------------------------
    def state_cols(self, t):
        """Columns of (q_{t+1}, qdot_{t+1}), the state produced by stage t."""
        base = t * self.dims.stage_width + self.dims.n_tau
        return np.arange(base, base + 4)

    def control_cols(self, t):
        base = t * self.dims.stage_width
        return np.arange(base, base + self.dims.n_tau)

    def states(self, x):
        """Physical (q_t, qdot_t) for t = 0..T; entry 0 is the start state."""
        T = self.dims.T
        q = np.zeros((T + 1, 2))
        qd = np.zeros((T + 1, 2))
        q[0], qd[0] = self.q0, self.qd0
        for t in range(T):
            cols = self.state_cols(t)
            q[t + 1] = self.dt * x[cols[:2]]
            qd[t + 1] = x[cols[2:]]
        return q, qd

    def forces(self, x):
        T = self.dims.T
        return np.array([x[self.control_cols(t)[1]] / self.dt for t in range(T)])

    # -- dynamics residual and Jacobian ----------------------------------
    def residual(self, x):
        T, dt = self.dims.T, self.dt
        q, qd = self.states(x)
        out = np.zeros(4 * T)
        for t in range(T):
            tau_hat = x[self.control_cols(t)]
            force = tau_hat[1] / dt
            qdd, _ = cartpole_dynamics(q[t], qd[t], force, self.spec)
            # virtual torque enters through the squared-up control matrix
            qdd = qdd + self._minv(q[t]) @ np.array([tau_hat[0] / dt, 0.0])
            out[4 * t:4 * t + 2] = q[t + 1] / dt - q[t] / dt - qd[t]
            out[4 * t + 2:4 * t + 4] = qd[t + 1] - qd[t] - dt * qdd
        return out

    def _minv(self, q):
        mc, mp, ell = self.spec.cart_mass, self.spec.pole_mass, self.spec.pole_length
        c = np.cos(q[0])
        M = np.array([[mp * ell * ell, mp * ell * c], [mp * ell * c, mc + mp]])
        return np.linalg.inv(M)

    def stage_blocks(self, x):
        """DynamicsBlocks at the current iterate (forward mode, explicit)."""
        T, dt = self.dims.T, self.dt
        q, qd = self.states(x)
        B, D1, D2, D4 = [], [], [], []
        for t in range(T):
            force = x[self.control_cols(t)[1]] / dt
            Minv = self._minv(q[t])
            _, J = cartpole_dynamics(q[t], qd[t], force, self.spec)
            # tau-hat columns: virtual on theta, real on cart; dt cancels
            B.append(-np.column_stack([Minv @ np.array([1.0, 0.0]),
                                       Minv @ np.array([0.0, 1.0])]))
            dqdd_dq = np.column_stack([J[:, 0], J[:, 1]])
            dqdd_dq[:, 0] += self._dminv_dth(q[t]) @ np.array(
                [x[self.control_cols(t)[0]] / dt, 0.0])
            dqdd_dqd = np.column_stack([J[:, 2], J[:, 3]])
            D1.append(-dt * dt * dqdd_dq)           # d/d(q/dt)
            D2.append(-np.eye(2) - dt * dqdd_dqd)
            D4.append(np.eye(2))
        zeros = [np.zeros((2, 2))] * T
        return DynamicsBlocks(B=B, F=[np.zeros((2, 0))] * T, D1=D1, D2=D2,
                              D3=zeros, D4=D4, mode="forward")

    def _dminv_dth(self, q):
        mc, mp, ell = self.spec.cart_mass, self.spec.pole_mass, self.spec.pole_length
        s, c = np.sin(q[0]), np.cos(q[0])
        M = np.array([[mp * ell * ell, mp * ell * c], [mp * ell * c, mc + mp]])
        dM = np.array([[0.0, -mp * ell * s], [-mp * ell * s, 0.0]])
        Minv = np.linalg.inv(M)
        return -Minv @ dM @ Minv

    def jacobian(self, x):
        blocks = self.stage_blocks(x)
        # stage 0 has no state columns behind it; assembly skips t-1 blocks
        return assemble_dynamics_jacobian(blocks, self.dims).csc

    def hess_contract(self, x, w):
        """Stage-local central differences of J^T w; curvature lives on the
        six in-stage coordinates (two controls, four previous states)."""
        n = self.dims.n
        H = np.zeros((n, n))
        dt = self.dt
        for t in range(1, self.dims.T):
            idx = np.concatenate([self.control_cols(t), self.state_cols(t - 1)])
            wloc = w[4 * t + 2:4 * t + 4]
            if not np.any(wloc):
                continue

            def grad(v):
                tau_hat, qs = v[:2], v[2:]
                qt, qdt = dt * qs[:2], qs[2:]
                force = tau_hat[1] / dt
                Minv = self._minv_at(qt[0])
                _, J = cartpole_dynamics(qt, qdt, force, self.spec)
                dqdd_dq = np.column_stack([J[:, 0], J[:, 1]])
                dqdd_dq[:, 0] += self._dminv_at(qt[0]) @ np.array([tau_hat[0] / dt, 0.0])
                dqdd_dqd = np.column_stack([J[:, 2], J[:, 3]])
                Bl = -np.column_stack([Minv @ np.array([1.0, 0.0]),
                                       Minv @ np.array([0.0, 1.0])])
                D1l = -dt * dt * dqdd_dq
                D2l = -np.eye(2) - dt * dqdd_dqd
                return np.concatenate([Bl.T @ wloc, D1l.T @ wloc, D2l.T @ wloc])

            v0 = x[idx]
            Hl = np.zeros((6, 6))
            h = 1e-6
            for j in range(6):
                step = h * max(1.0, abs(v0[j]))
                vp = v0.copy(); vp[j] += step
                vm = v0.copy(); vm[j] -= step
                Hl[:, j] = (grad(vp) - grad(vm)) / (2 * step)
            Hl = 0.5 * (Hl + Hl.T)
            H[np.ix_(idx, idx)] += Hl
        return H

    def _minv_at(self, th):
        return self._minv(np.array([th, 0.0]))

    def _dminv_at(self, th):
        return self._dminv_dth(np.array([th, 0.0]))


def build_cartpole_hierarchy(spec=None):
    """Five-level swing-up transcription; returns (hierarchy, dims, helper).

    Levels: bounds on cart position / force / virtual torques; explicit
    Euler dynamics; pole-tip positioning; state regularization; force
    regularization.  The under-actuated angle gets a virtual control, so
    the variable count grows from T*(1+4) to T*(2+4).
    """
    spec = spec or CartPoleSpec()
    raw = DynamicsDims(T=spec.horizon, n_q=2, n_qdot=2, n_tau=1, n_gamma=0,
                       n_ua=1, integrator="explicit")
    dims, virtual_blocks, virtual_cols = add_virtual_controls(raw)
    tr = _CartPoleTranscription(spec, dims)
    n = dims.n
    T, dt = spec.horizon, spec.dt

    cart_cols = np.array([tr.state_cols(t)[1] for t in range(T)])
    force_cols = np.array([tr.control_cols(t)[1] for t in range(T)])

    def bound_block(cols, coeff, limit, name):
        A = sp.csr_matrix((np.full(cols.size, coeff),
                           (np.arange(cols.size), cols)), shape=(cols.size, n))

        def fun(x):
            return A @ np.asarray(x, dtype=float) - limit

        def jac(x):
            return A

        return ConstraintBlock(dim=cols.size, kind="ineq", fun=fun, jac=jac,
                               hess=None, structure="stagewise-banded", name=name)

    level1 = Level(inequalities=[
        bound_block(cart_cols, dt, spec.cart_limit, "cart-upper"),
        bound_block(cart_cols, -dt, spec.cart_limit, "cart-lower"),
        bound_block(force_cols, 1.0 / dt, spec.force_limit, "force-upper"),
        bound_block(force_cols, -1.0 / dt, spec.force_limit, "force-lower"),
        *virtual_blocks,
    ], name="bounds")

    dyn_block = ConstraintBlock(
        dim=4 * T, kind="eq", fun=tr.residual, jac=tr.jacobian,
        hess=tr.hess_contract, structure="stagewise-banded", name="dynamics")
    level2 = Level(equalities=[dyn_block], name="dynamics", dyn=dims)

    target = np.asarray(spec.tip_target, dtype=float)

    def tip_fun(x):
        q, _ = tr.states(x)
        out = np.zeros(2 * T)
        for t in range(T):
            out[2 * t:2 * t + 2] = cartpole_tip(q[t + 1], spec) - target
        return out

    def tip_jac(x):
        rows, cols, vals = [], [], []
        ell = spec.pole_length
        q, _ = tr.states(x)
        for t in range(T):
            sc = tr.state_cols(t)
            th = q[t + 1][0]
            # d tip / d(q/dt) = dt * d tip / d q
            rows += [2 * t, 2 * t, 2 * t + 1]
            cols += [sc[0], sc[1], sc[0]]
            vals += [dt * ell * np.cos(th), dt, -dt * ell * np.sin(th)]
        return sp.csr_matrix((vals, (rows, cols)), shape=(2 * T, n))

    def tip_hess(x, w):
        H = np.zeros((n, n))
        ell = spec.pole_length
        q, _ = tr.states(x)
        for t in range(T):
            sc = tr.state_cols(t)
            th = q[t + 1][0]
            hxx = w[2 * t] * (-dt * dt * ell * np.sin(th)) \
                + w[2 * t + 1] * (-dt * dt * ell * np.cos(th))
            H[sc[0], sc[0]] += hxx
        return H

    level3 = Level(equalities=[ConstraintBlock(
        dim=2 * T, kind="eq", fun=tip_fun, jac=tip_jac, hess=tip_hess,
        structure="stagewise-banded", name="tip-task")], name="tip")

    state_cols_all = np.concatenate([tr.state_cols(t) for t in range(T)])
    state_scale = np.tile([dt, dt, 1.0, 1.0], T)  # report physical state size

    def state_fun(x):
        return state_scale * np.asarray(x, dtype=float)[state_cols_all]

    Astate = sp.csr_matrix((state_scale, (np.arange(4 * T), state_cols_all)),
                           shape=(4 * T, n))

    level4 = Level(equalities=[ConstraintBlock(
        dim=4 * T, kind="eq", fun=state_fun, jac=lambda x: Astate, hess=None,
        structure="stagewise-banded", name="state-reg")], name="state-reg")

    Aforce = sp.csr_matrix((np.full(T, 1.0 / dt), (np.arange(T), force_cols)),
                           shape=(T, n))

    def force_fun(x):
        return Aforce @ np.asarray(x, dtype=float)

    level5 = Level(equalities=[ConstraintBlock(
        dim=T, kind="eq", fun=force_fun, jac=lambda x: Aforce, hess=None,
        structure="stagewise-banded", name="force-reg")], name="force-reg")

    hierarchy = Hierarchy(n=n, levels=[level1, level2, level3, level4, level5])
    return hierarchy, dims, tr


def euler_rollout(spec, forces):
    """Explicit-Euler forward simulation; the transcription's dynamics
    residual vanishes on the trajectory this produces."""
    T, dt = spec.horizon, spec.dt
    q = np.array([spec.angle0, spec.cart0])
    qd = np.zeros(2)
    qs, qds = [q.copy()], [qd.copy()]
    for t in range(T):
        qdd, _ = cartpole_dynamics(q, qd, forces[t], spec)
        q = q + dt * qd
        qd = qd + dt * qdd
        qs.append(q.copy())
        qds.append(qd.copy())
    return np.array(qs), np.array(qds)


def rollout_to_variables(spec, dims, qs, qds, forces):
    """Pack a simulated trajectory into the scaled decision vector."""
    x = np.zeros(dims.n)
    tr = _CartPoleTranscription(spec, dims)
    for t in range(dims.T):
        x[tr.control_cols(t)[1]] = spec.dt * forces[t]
        sc = tr.state_cols(t)
        x[sc[:2]] = qs[t + 1] / spec.dt
        x[sc[2:]] = qds[t + 1]
    return x


# ---------------------------------------------------------------------------
# random HLSP instances (oracle benchmarks)
# ---------------------------------------------------------------------------

def random_hlsp_instance(n, m, seed, levels=1):
    """Random equality-only linear levels [(A, b), ...] for oracle tests."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(levels):
        A = rng.standard_normal((m, n))
        b = rng.standard_normal(m)
        out.append((A, b))
    return out
