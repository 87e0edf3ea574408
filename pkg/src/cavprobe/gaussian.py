"""Gaussian-component integration of the squeezed-probe master equation.

The joint state of atoms and the two cavity modes (``a`` in the atom cavity,
``c`` in the squeezing cavity) is written as ``sum_nm |n><m| (x) rho_nm``.
The field operator ``rho_nm`` is represented by its Wigner function

    W_nm(y) = N_nm / (pi^2 sqrt(det V_nm)) exp(-(y - ybar_nm)^T V_nm^-1 (y - ybar_nm))

over quadratures ``y = (x1, p1, x2, p2)`` with ``x = (a + a^dag)/sqrt 2``,
so the vacuum has ``V = 1`` and ``N_nm = Tr rho_nm``.

Every term of the master equation is a product of at most two mode
operators acting on ``rho_nm`` from the left and/or right.  In the Wigner
picture left and right multiplication by ``u^T y_hat`` become

    L_u = u^T y + (i/2) (Omega^T u)^T d/dy,   R_u = u^T y - (i/2) (Omega^T u)^T d/dy,

so on a Gaussian each term yields a quadratic polynomial times the same
Gaussian.  Summing the term polynomials gives a handful of coefficient
arrays per component (``ComponentTables``), from which the component flows
follow in closed form:

    dV     = (V a~ V - V G~ - G~^T V + 4 d~) dt
    dybar  = [(V a~ - G~^T) ybar + V s1/2 - t1] dt + (V s/2 - t) dy
    dlogN  = [ybar^T a~ ybar + s1^T ybar + k0 - tr G0 + tr(a0 V)/2] dt + (s^T ybar) dy

with ``a~ = a0 - s s^T/2``, ``G~ = G0 - s t^T``, ``d~ = d0 - t t^T/2`` and
``(s, t)`` the Bopp vectors of the measured operator.  These are Ito
equations for the unnormalised (linear) form driven by the measured
increment ``dy``; the covariance flow is a matrix Riccati equation that
does not involve the drive and does not see the record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coherent import AtomicCoefficients, AtomicDensityMatrix, MeasurementRecord, \
    initial_coefficients, n_grid, rng_for
from .core import PhysicalParams
from .sde import pc_step

SQ2 = math.sqrt(2.0)

# quadrature vectors of a, a^dag, c, c^dag in the basis (x1, p1, x2, p2)
U_A = np.array([1, 1j, 0, 0]) / SQ2
U_AD = np.array([1, -1j, 0, 0]) / SQ2
U_C = np.array([0, 0, 1, 1j]) / SQ2
U_CD = np.array([0, 0, 1, -1j]) / SQ2

OMEGA = np.array([[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]], dtype=float)

# reflection of (x1, p1, x2, p2) used by the time-reversal symmetry
S_REFLECT = np.diag([1.0, -1.0, -1.0, 1.0])


class PositivityError(ArithmeticError):
    """A diagonal covariance matrix stopped being positive definite."""


class SymmetryPreconditionError(ValueError):
    """Time-reversal check requested for parameters without the symmetry."""


def _left(u):
    return np.asarray(u, dtype=complex), 0.5j * OMEGA.T @ u


def _right(u):
    return np.asarray(u, dtype=complex), -0.5j * OMEGA.T @ u


def _sym(x):
    return 0.5 * (x + np.swapaxes(x, -1, -2))


@dataclass
class _Generator:
    """Aggregated Bopp coefficients; affine in (n, m)."""

    alpha0: np.ndarray = field(default_factory=lambda: np.zeros((4, 4), complex))
    gamma0: np.ndarray = field(default_factory=lambda: np.zeros((4, 4), complex))
    delta0: np.ndarray = field(default_factory=lambda: np.zeros((4, 4), complex))
    sigma1: np.ndarray = field(default_factory=lambda: np.zeros(4, complex))
    tau1: np.ndarray = field(default_factory=lambda: np.zeros(4, complex))
    kappa0: complex = 0j

    def pair(self, coef, first, second):
        """Add ``coef * T2(T1(W))`` with T1 = ``first`` applied first."""
        s1, t1 = first
        s2, t2 = second
        self.alpha0 = self.alpha0 + coef * _sym(np.outer(s2, s1))
        self.gamma0 = self.gamma0 + coef * (np.outer(s2, t1) + np.outer(s1, t2))
        self.delta0 = self.delta0 + coef * _sym(np.outer(t1, t2))
        self.kappa0 = self.kappa0 + coef * (t2 @ s1)

    def single(self, coef, op):
        s, t = op
        self.sigma1 = self.sigma1 + coef * s
        self.tau1 = self.tau1 + coef * t

    # operator shorthands --------------------------------------------------
    def left2(self, coef, o1, o2):       # o1 o2 rho
        self.pair(coef, _left(o2), _left(o1))

    def right2(self, coef, o1, o2):      # rho o1 o2
        self.pair(coef, _right(o1), _right(o2))

    def sandwich(self, coef, o1, o2):    # o1 rho o2
        self.pair(coef, _left(o1), _right(o2))


def _deterministic_generators(params):
    """Return (base, per-n, per-m) generators of the drift part."""
    base, gen_n, gen_m = _Generator(), _Generator(), _Generator()
    gt = params.g_tilde
    # -i g_tilde Jz a^dag a rho + i g_tilde rho a^dag a Jz
    gen_n.left2(-1j * gt, U_AD, U_A)
    gen_m.right2(1j * gt, U_AD, U_A)
    eps = complex(params.epsilon)
    # -(i/2)[eps c^dag^2 + eps^* c^2, rho]
    base.left2(-0.5j * eps, U_CD, U_CD)
    base.left2(-0.5j * eps.conjugate(), U_C, U_C)
    base.right2(0.5j * eps, U_CD, U_CD)
    base.right2(0.5j * eps.conjugate(), U_C, U_C)
    # damping of both cavities
    for rate, lo, hi in ((params.kappa, U_A, U_AD), (params.kappa2_total, U_C, U_CD)):
        if rate:
            base.left2(-0.5 * rate, hi, lo)
            base.right2(-0.5 * rate, hi, lo)
            base.sandwich(rate, lo, hi)
    # cascaded coupling i sqrt(k1 k2)(a^dag c rho - rho c^dag a + a rho c^dag - c rho a^dag)
    kc = math.sqrt(params.kappa1 * params.kappa2)
    if kc:
        base.left2(1j * kc, U_AD, U_C)
        base.right2(-1j * kc, U_CD, U_A)
        base.sandwich(1j * kc, U_A, U_CD)
        base.sandwich(-1j * kc, U_C, U_AD)
    # drives
    beta = complex(params.beta)
    k1, k2 = math.sqrt(params.kappa1), math.sqrt(params.kappa2)
    for coef, u in ((1j * k1 * beta, U_AD), (1j * k1 * beta.conjugate(), U_A),
                    (-k2 * beta, U_CD), (k2 * beta.conjugate(), U_C)):
        if coef:
            base.single(coef, _left(u))
            base.single(-coef, _right(u))
    return base, gen_n, gen_m


def measured_operator(params):
    """Quadrature vector of X = exp(-i phi)(-sqrt(k1) a + i sqrt(k2) c)."""
    return np.exp(-1j * params.phi) * (-math.sqrt(params.kappa1) * U_A
                                       + 1j * math.sqrt(params.kappa2) * U_C)


@dataclass
class ComponentTables:
    """Per-component coefficients of the Gaussian flows.

    Component ``k`` holds the field operator of atomic pair (n[k], m[k])
    with n >= m.  Arrays have a leading axis of length K.
    """

    params: PhysicalParams
    big_j: float
    n: np.ndarray
    m: np.ndarray
    alpha0: np.ndarray
    gamma0: np.ndarray
    delta0: np.ndarray
    sigma1: np.ndarray
    tau1: np.ndarray
    kappa0: np.ndarray
    s_meas: np.ndarray
    t_meas: np.ndarray
    index: np.ndarray = field(repr=False)
    diag: np.ndarray = field(repr=False)

    @property
    def size(self):
        return self.n.size

    @property
    def alpha_t(self):
        return self.alpha0 - 0.5 * np.outer(self.s_meas, self.s_meas)

    @property
    def gamma_t(self):
        return self.gamma0 - np.outer(self.s_meas, self.t_meas)

    @property
    def delta_t(self):
        return self.delta0 - 0.5 * np.outer(self.t_meas, self.t_meas)

    def k(self, n, m):
        """Storage index of component (n, m); n >= m required."""
        j = self.big_j
        return self.index[int(round(n + j)), int(round(m + j))]

    def subset(self, keep):
        keep = np.asarray(keep)
        return _build_tables(self.params, self.big_j, self.n[keep], self.m[keep])

    # flows ---------------------------------------------------------------
    def covariance_rate(self, v):
        at, gt, dt_ = self.alpha_t, self.gamma_t, self.delta_t
        return v @ at @ v - v @ gt - np.swapaxes(gt, -1, -2) @ v + 4.0 * dt_

    def mean_matrix(self, v):
        return v @ self.alpha_t - np.swapaxes(self.gamma_t, -1, -2)

    def mean_offset(self, v):
        return 0.5 * np.einsum("kij,kj->ki", v, self.sigma1) - self.tau1

    def mean_noise(self, v):
        return 0.5 * v @ self.s_meas - self.t_meas

    def weight_offset(self, v):
        tr_g = np.trace(self.gamma0, axis1=-2, axis2=-1)
        return self.kappa0 - tr_g + 0.5 * np.einsum("kij,kji->k", self.alpha0, v)

    def weight_drift(self, v, ybar):
        quad = np.einsum("...ki,kij,...kj->...k", ybar, self.alpha_t, ybar)
        return quad + np.einsum("ki,...ki->...k", self.sigma1, ybar) + self.weight_offset(v)

    def weight_noise(self, ybar):
        return ybar @ self.s_meas

    def riccati_generator(self):
        """8x8 generator of the linear system whose ratio X Y^-1 is V."""
        at, gt, dt_ = self.alpha_t, self.gamma_t, self.delta_t
        top = np.concatenate([-np.swapaxes(gt, -1, -2), 4.0 * dt_], axis=-1)
        bot = np.concatenate([-at, gt], axis=-1)
        return np.concatenate([top, bot], axis=-2)


def _build_tables(params, big_j, n, m):
    base, gen_n, gen_m = _deterministic_generators(params)
    nn = n[:, None, None]
    mm = m[:, None, None]

    def comb(name):
        b, x, y = (getattr(g, name) for g in (base, gen_n, gen_m))
        b, x, y = np.asarray(b), np.asarray(x), np.asarray(y)
        shape = (-1,) + (1,) * b.ndim
        return b[None] + n.reshape(shape) * x[None] + m.reshape(shape) * y[None]

    u = measured_operator(params)
    root_eta = math.sqrt(params.eta)
    s_meas, t_meas = root_eta * (u + u.conj()), 0.5j * root_eta * OMEGA.T @ (u - u.conj())
    size = int(round(2 * big_j)) + 1
    index = -np.ones((size, size), dtype=int)
    index[np.rint(n + big_j).astype(int), np.rint(m + big_j).astype(int)] = np.arange(n.size)
    diag = np.array([index[i, i] for i in range(size) if index[i, i] >= 0], dtype=int)
    return ComponentTables(
        params=params, big_j=big_j, n=n, m=m,
        alpha0=comb("alpha0"), gamma0=comb("gamma0"), delta0=comb("delta0"),
        sigma1=comb("sigma1"), tau1=comb("tau1"), kappa0=comb("kappa0"),
        s_meas=s_meas, t_meas=t_meas, index=index, diag=diag,
    )


def derive_component_sdes(params, big_j=None):
    """Coefficient tables of the Gaussian flows for every n >= m."""
    j = params.big_j if big_j is None else big_j
    grid = n_grid(j)
    n, m = np.meshgrid(grid, grid, indexing="ij")
    keep = n >= m
    return _build_tables(params, j, n[keep], m[keep])


# ----------------------------------------------------------------------------
# ensemble


@dataclass
class GaussianComponent:
    n: float
    m: float
    v: np.ndarray
    ybar: np.ndarray
    log_weight: complex

    @property
    def weight(self):
        return np.exp(self.log_weight)


@dataclass
class GaussianEnsemble:
    """State of all components, optionally for a batch of trajectories.

    ``v`` has shape (K, 4, 4) and is shared by the batch; ``ybar`` has shape
    batch + (K, 4) and ``logn`` batch + (K,).  ``logn`` stores
    ``log|N| + i arg N``.
    """

    tables: ComponentTables
    v: np.ndarray
    ybar: np.ndarray
    logn: np.ndarray
    time: float = 0.0
    step_index: int = 0
    dy_history: list = field(default_factory=list)
    dt_history: list = field(default_factory=list)

    @property
    def big_j(self):
        return self.tables.big_j

    @property
    def batch_shape(self):
        return self.logn.shape[:-1]

    def component(self, n, m, b=()):
        if n < m:
            c = self.component(m, n, b)
            return GaussianComponent(n, m, c.v.conj(), c.ybar.conj(), np.conj(c.log_weight))
        k = self.tables.k(n, m)
        return GaussianComponent(n, m, self.v[k].copy(), self.ybar[b + (k,)].copy(),
                                 complex(self.logn[b + (k,)]))

    def record(self):
        dts = set(self.dt_history)
        dt = self.dt_history[0] if len(dts) == 1 else float("nan")
        dy = np.array(self.dy_history) if self.dy_history else np.zeros((0,) + self.batch_shape)
        return MeasurementRecord(dt=dt, dy=dy)

    def copy(self):
        return GaussianEnsemble(self.tables, self.v.copy(), self.ybar.copy(), self.logn.copy(),
                                self.time, self.step_index, list(self.dy_history),
                                list(self.dt_history))


def initial_ensemble(params, coeffs=None, batch=(), tables=None):
    """Vacuum fields with atomic coefficients ``coeffs`` (default: x-polarised)."""
    tables = derive_component_sdes(params) if tables is None else tables
    if coeffs is None:
        coeffs = initial_coefficients(tables.big_j)
    batch = tuple(np.atleast_1d(batch)) if batch != () else ()
    K = tables.size
    j = tables.big_j
    c = coeffs.c[np.rint(tables.n + j).astype(int), np.rint(tables.m + j).astype(int)]
    with np.errstate(divide="ignore"):
        logc = np.log(np.abs(c)) + 1j * np.angle(c)
    v = np.broadcast_to(np.eye(4, dtype=complex), (K, 4, 4)).copy()
    ybar = np.zeros(batch + (K, 4), dtype=complex)
    logn = np.broadcast_to(logc, batch + (K,)).copy()
    return GaussianEnsemble(tables=tables, v=v, ybar=ybar, logn=logn)


def max_step(params, big_j=None):
    j = params.big_j if big_j is None else big_j
    return 0.01 / max(params.kappa, params.kappa2_total, abs(params.epsilon), j * abs(params.g_tilde))


def _log_norm(ens_logn, diag):
    d = np.real(ens_logn[..., diag])
    top = np.max(d, axis=-1, keepdims=True)
    return top[..., 0] + np.log(np.sum(np.exp(d - top), axis=-1))


def expected_signal(ens):
    """Mean of the measured increment rate, sqrt(eta) <X + X^dag>."""
    t = ens.tables
    d = np.real(ens.logn[..., t.diag])
    w = np.exp(d - np.max(d, axis=-1, keepdims=True))
    sig = np.real(ens.ybar[..., t.diag, :] @ t.s_meas)
    return np.sum(w * sig, axis=-1) / np.sum(w, axis=-1)


def step(ens, dW=None, dt=None, dy=None, check=True):
    """Advance the ensemble by one predictor-corrector step.

    Exactly one of ``dW`` (simulation: the increment is formed from the
    current expected signal) and ``dy`` (replay of a recorded increment)
    must be given.  Returns a new ensemble; the input is not modified.
    """
    tables = ens.tables
    if dt is None:
        raise ValueError("dt is required")
    limit = max_step(tables.params, tables.big_j)
    if dt > limit * (1 + 1e-12):
        raise ValueError(f"dt={dt:.3e} exceeds the stability limit {limit:.3e}")
    if (dW is None) == (dy is None):
        raise ValueError("give exactly one of dW and dy")
    if dy is None:
        dy = expected_signal(ens) * dt + np.asarray(dW, dtype=float)
    dy = np.asarray(dy, dtype=float)
    batch = ens.batch_shape

    def drift(x):
        v, yb, ln = x
        dv = tables.covariance_rate(v)
        dyb = np.einsum("kij,...kj->...ki", tables.mean_matrix(v), yb) + tables.mean_offset(v)
        return dv, dyb, tables.weight_drift(v, yb)

    def diffusion(x):
        v, yb, ln = x
        return None, np.broadcast_to(tables.mean_noise(v), yb.shape), tables.weight_noise(yb)

    v, yb, ln = pc_step((ens.v, ens.ybar, ens.logn), drift, diffusion, dt, dy)
    ln = ln - _log_norm(ln, tables.diag)[..., None]
    ln = np.real(ln) + 1j * np.angle(np.exp(1j * np.imag(ln)))
    out = GaussianEnsemble(tables, v, yb, ln, ens.time + dt, ens.step_index + 1,
                           ens.dy_history + [dy], ens.dt_history + [dt])
    if check:
        _check_positive(out)
    return out


def _check_positive(ens, tol=1e-9):
    t = ens.tables
    vd = np.real(ens.v[t.diag])
    low = np.linalg.eigvalsh(0.5 * (vd + np.swapaxes(vd, -1, -2)))[:, 0]
    bad = np.nonzero(low < -tol)[0]
    if bad.size:
        n = t.n[t.diag][bad[0]]
        raise PositivityError(f"V_nn lost positive definiteness for n={n:g} at step {ens.step_index}")


def run(ens, steps, dt, rng_seed=None, dy=None):
    """Step ``steps`` times, sampling noise from ``rng_seed`` or replaying ``dy``."""
    if dy is None:
        rng = rng_for(rng_seed)
        noise = rng.standard_normal((steps,) + ens.batch_shape) * math.sqrt(dt)
        for k in range(steps):
            ens = step(ens, dW=noise[k], dt=dt)
    else:
        for k in range(steps):
            ens = step(ens, dy=dy[k], dt=dt)
    return ens


# ----------------------------------------------------------------------------
# symmetry and extraction


def _symmetric_parameters(params, tol=1e-12):
    k = params.phi / math.pi
    ok_phi = abs(k - round(k)) < tol
    b, e = complex(params.beta), complex(params.epsilon)
    ok_beta = abs(b.real) <= tol * max(1.0, abs(b))
    ok_eps = abs(e.real) <= tol * max(1.0, abs(e))
    return ok_phi and ok_beta and ok_eps


@dataclass
class SymmetryReport:
    v_residual: float
    ybar_residual: float
    weight_residual: float

    @property
    def max_residual(self):
        return max(self.v_residual, self.ybar_residual, self.weight_residual)


def check_time_reversal(ens, require_symmetric=True):
    """Residuals of the reflection n -> -n combined with S = diag(1,-1,-1,1).

    Compares component (n, m) with (-m, -n): ``V_{-m,-n} = S V_nm S``,
    ``ybar_{-m,-n} = S ybar_nm``, ``N_{-m,-n} = N_nm``.
    """
    t = ens.tables
    if require_symmetric and not _symmetric_parameters(t.params):
        raise SymmetryPreconditionError("needs phi = k pi and purely imaginary beta and epsilon")
    partner = np.array([t.k(-mi, -ni) for ni, mi in zip(t.n, t.m)])
    sv = S_REFLECT @ ens.v @ S_REFLECT
    v_res = float(np.max(np.abs(ens.v[partner] - sv)))
    y_res = float(np.max(np.abs(ens.ybar[..., partner, :] - ens.ybar @ S_REFLECT)))
    w = np.exp(ens.logn)
    w_res = float(np.max(np.abs(w[..., partner] - w)))
    return SymmetryReport(v_res, y_res, w_res)


def atomic_matrix(ens, b=()):
    """Normalised N_nm arranged as a (2J+1) x (2J+1) matrix."""
    t = ens.tables
    j = t.big_j
    size = int(round(2 * j)) + 1
    ln = ens.logn[b] if b != () else ens.logn
    ln = ln - _log_norm(ln, t.diag)
    w = np.exp(ln)
    rho = np.zeros((size, size), dtype=complex)
    i = np.rint(t.n + j).astype(int)
    k = np.rint(t.m + j).astype(int)
    rho[i, k] = w
    rho[k, i] = w.conj()
    rho[np.diag_indices(size)] = np.real(np.diag(rho))
    return rho


def field_residual(ens, b=()):
    """Largest deviation of any component's field from vacuum."""
    yb = ens.ybar[b] if b != () else ens.ybar
    return max(float(np.max(np.abs(yb))), float(np.max(np.abs(ens.v - np.eye(4)))))


def extract_atomic_state(ens, decay_field=False, b=(), tol=1e-6):
    """Reduced atomic state ``rho_at[n, m] = N_nm / sum_q N_qq``.

    Tracing out the fields integrates each Wigner function, which is the
    weight ``N_nm`` itself.  With ``decay_field`` set, the fields are also
    required to be vacuum (checked to ``tol``).
    """
    if decay_field:
        res = field_residual(ens, b)
        if res > tol:
            raise ValueError(f"fields have not decayed: residual {res:.3e} > {tol:.1e}")
    return AtomicDensityMatrix(big_j=ens.big_j, rho=atomic_matrix(ens, b))


# ----------------------------------------------------------------------------
# steady covariance and ellipses


def steady_covariance(tables, keep=None, tol=1e-10, max_iter=100000):
    """Steady V for the selected components via the exact Riccati propagator."""
    from scipy.linalg import expm

    sub = tables if keep is None else tables.subset(keep)
    h = sub.riccati_generator()
    step_len = 1.0 / max(sub.params.kappa, sub.params.kappa2_total)
    phi = np.array([expm(hk * step_len) for hk in h])
    v = np.broadcast_to(np.eye(4, dtype=complex), (sub.size, 4, 4)).copy()
    for _ in range(max_iter):
        xy = phi @ np.concatenate([v, np.broadcast_to(np.eye(4), v.shape)], axis=-2)
        new = xy[:, :4] @ np.linalg.inv(xy[:, 4:])
        new = _sym(new)
        res = np.max(np.abs(new - v))
        v = new
        if res < tol:
            return v
    raise RuntimeError(f"covariance did not converge (residual {res:.2e})")


@dataclass
class Ellipse:
    center: np.ndarray
    semi_axes: np.ndarray
    angle: float

    @property
    def squeezed_quadrature(self):
        """'x1' or 'p1' for the quadrature along the minor axis, else 'rotated'."""
        c, s = math.cos(self.angle), math.sin(self.angle)
        minor = np.array([-s, c])
        if abs(minor[0]) > 0.99:
            return "x1"
        if abs(minor[1]) > 0.99:
            return "p1"
        return "rotated"


def uncertainty_ellipse(params, n, tables=None):
    """Cavity-1 uncertainty ellipse of the steady state of component (n, n).

    Semi-axes are ``sqrt`` of the eigenvalues of the (x1, p1) block of V so
    that the vacuum is the unit circle; ``angle`` is the direction of the
    major axis measured from x1.  The centre is the unobserved steady mean.
    """
    tables = derive_component_sdes(params.replace(big_j=max(abs(n), params.big_j))) \
        if tables is None else tables
    k = tables.k(n, n)
    v = np.real(steady_covariance(tables, keep=[k])[0])
    block = v[:2, :2]
    w, vec = np.linalg.eigh(block)
    major = vec[:, 1]
    angle = math.atan2(major[1], major[0])
    if angle > math.pi / 2:
        angle -= math.pi
    elif angle <= -math.pi / 2:
        angle += math.pi
    center = np.real(steady_mean(tables, k, v))[:2]
    return Ellipse(center=center, semi_axes=np.sqrt(w[::-1]), angle=angle)


def steady_mean(tables, k, v):
    """Unobserved steady mean of component k for covariance ``v``."""
    sub = tables.subset([k])
    mat = sub.mean_matrix(v[None] if v.ndim == 2 else v)[0]
    off = sub.mean_offset(v[None] if v.ndim == 2 else v)[0]
    # an undriven, undamped mode (no squeezing cavity) is left at zero
    return np.linalg.lstsq(mat, -off, rcond=1e-12)[0]
