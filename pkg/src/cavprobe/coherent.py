"""Closed-form conditional dynamics for a coherent-state probe.

For a coherent input beam every atomic Jz eigenstate |n> drives the cavity
into a coherent state of amplitude alpha_n(t), and the joint state keeps the
form ``sum_nm C_nm(t) |n><m| (x) |alpha_n><alpha_m|``.  Homodyne detection of
the x quadrature multiplies ``C_nm`` by a factor that depends on the record
only through the integrals ``int alpha_n dy``; in the steady regime this is
the integrated current ``Y``.  Everything here is evaluated in log space
because the weights spread over hundreds of decades for kappa t ~ 1e3.

Conventions: ``params.beta`` must be real (x-quadrature detection); the
cavity is driven as ``d alpha/dt = -(kappa/2 + i n g_tilde) alpha +
sqrt(kappa1) beta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special, stats

from .core import PhysicalParams


class NormalizationError(ArithmeticError):
    """All diagonal weights underflowed or were not finite."""


def rng_for(seed):
    """Counter-based generator for a trajectory seed."""
    return np.random.Generator(np.random.Philox(int(seed)))


def n_grid(big_j):
    return -big_j + np.arange(int(round(2 * big_j)) + 1, dtype=float)


# ----------------------------------------------------------------------------
# data types


@dataclass
class AtomicCoefficients:
    """Coefficients C_nm of the atom-field expansion, n, m = -J..J."""

    big_j: float
    c: np.ndarray

    @property
    def n(self):
        return n_grid(self.big_j)

    @property
    def diagonal(self):
        return np.real(np.diag(self.c))

    def log_c(self):
        with np.errstate(divide="ignore"):
            mag = np.log(np.abs(self.c))
        return mag + 1j * np.angle(self.c)


@dataclass
class AmplitudeSet:
    """Cavity amplitudes alpha_n for every n at one time."""

    big_j: float
    alpha: np.ndarray
    mode: str = "steady"
    t: float | None = None


@dataclass
class MeasurementRecord:
    """Homodyne increments on a uniform grid.

    ``dy`` is an array of shape ``(steps,)`` or ``(steps, batch)``.
    """

    dt: float
    dy: np.ndarray
    rng_seed: int | None = None
    true_component: float | None = None

    @property
    def steps(self):
        return int(np.shape(self.dy)[0])

    @property
    def t(self):
        return self.steps * self.dt

    @property
    def Y(self):
        return math.fsum(np.asarray(self.dy, dtype=float)) if np.ndim(self.dy) == 1 \
            else np.sum(self.dy, axis=0)

    @classmethod
    def empty(cls, dt=1.0):
        return cls(dt=dt, dy=np.zeros(0))


@dataclass
class AtomicDensityMatrix:
    """Reduced atomic state indexed by n, m = -J..J."""

    big_j: float
    rho: np.ndarray

    @property
    def n(self):
        return n_grid(self.big_j)

    @property
    def diagonal(self):
        return np.real(np.diag(self.rho)).copy()

    def purity(self):
        r = self.rho
        return float(np.real(np.sum(r * r.conj())))

    def check(self, tol=1e-10):
        """Raise if the matrix is not Hermitian with unit trace."""
        r = self.rho
        herm = np.max(np.abs(r - r.conj().T)) if r.size else 0.0
        tr = np.real(np.trace(r))
        if herm > tol or abs(tr - 1.0) > tol:
            raise ValueError(f"not a density matrix: hermiticity {herm:.2e}, trace {tr!r}")
        return self


# ----------------------------------------------------------------------------
# cavity amplitudes


def _rate(params, n):
    return params.kappa / 2.0 + 1j * np.asarray(n, dtype=float) * params.g_tilde


def alpha_steady(params, n):
    """Steady cavity amplitude for atomic state |n> (array-valued in n)."""
    n = np.asarray(n, dtype=float)
    x = 2.0 * params.g_tilde / params.kappa
    pre = 2.0 * math.sqrt(params.kappa1) * params.beta / params.kappa
    return pre * (1.0 - 1j * n * x) / (1.0 + (n * x) ** 2)


def _segments(beta_profile, params, t_end):
    """Normalise a drive description to a list of (t_start, t_stop, beta)."""
    if beta_profile is None:
        return [(0.0, t_end, complex(params.beta))]
    segs = sorted((float(s), complex(b)) for s, b in beta_profile)
    if not segs or segs[0][0] > 0.0:
        raise ValueError("beta profile must start at t = 0")
    out = []
    for i, (s, b) in enumerate(segs):
        stop = segs[i + 1][0] if i + 1 < len(segs) else t_end
        stop = min(stop, t_end)
        if stop > s:
            out.append((s, stop, b))
    return out


def alpha_transient(params, n, t, beta_profile=None):
    """Cavity amplitude at time ``t`` starting from vacuum at t = 0.

    ``sqrt(kappa1) int_0^t exp(-(kappa/2 + i n g_tilde)(t - t')) beta(t') dt'``.

    Parameters
    ----------
    beta_profile : None, sequence of (t_start, beta), or callable
        ``None`` uses the constant ``params.beta``; a sequence describes a
        piecewise-constant drive and is integrated in closed form; a callable
        ``beta(t)`` is integrated by adaptive quadrature.
    """
    lam = _rate(params, n)
    if t <= 0:
        return np.zeros_like(lam)
    if callable(beta_profile):
        from scipy import integrate

        lam_arr = np.atleast_1d(lam)
        out = np.empty(lam_arr.shape, dtype=complex)
        for i, lm in enumerate(lam_arr):
            def f(tp, part):
                v = np.exp(-lm * (t - tp)) * complex(beta_profile(tp))
                return v.real if part == 0 else v.imag
            re = integrate.quad(f, 0.0, t, args=(0,), limit=200)[0]
            im = integrate.quad(f, 0.0, t, args=(1,), limit=200)[0]
            out[i] = math.sqrt(params.kappa1) * complex(re, im)
        return out.reshape(np.shape(lam))
    a = np.zeros_like(lam)
    for s, stop, b in _segments(beta_profile, params, t):
        dur = stop - s
        decay = np.exp(-lam * dur)
        a = a * decay + math.sqrt(params.kappa1) * b * (1.0 - decay) / lam
    return a


def _expm1_over(mu, dur):
    """(1 - exp(-mu dur)) / mu, with the mu -> 0 limit."""
    mu = np.asarray(mu, dtype=complex)
    z = mu * dur
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, mu)
    return np.where(small, dur * (1.0 - z / 2.0), -np.expm1(-z) / safe)


def _segment_steps(segs, dt, steps):
    """Convert (t_start, t_stop, beta) segments to step-index ranges."""
    out = []
    for s, stop, b in segs:
        k0, k1 = s / dt, stop / dt
        r0, r1 = int(round(k0)), int(round(k1))
        if abs(k0 - r0) > 1e-6 or abs(k1 - r1) > 1e-6:
            raise ValueError("drive switching times must lie on the record grid")
        r1 = min(r1, steps)
        if r1 > r0:
            out.append((r0, r1, b))
    return out


def _step_means(lam, sk, segsteps, dt, block=2048):
    """Yield (k0, k1, step-averaged alpha) blocks, shape (len(lam), k1 - k0)."""
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    frac = _expm1_over(lam, dt) / dt
    a = np.zeros(lam.size, dtype=complex)
    for r0, r1, b in segsteps:
        A = sk * b / lam
        for k0 in range(r0, r1, block):
            k1 = min(r1, k0 + block)
            j = np.arange(k1 - k0)
            powers = np.exp(-lam[:, None] * (dt * j)[None, :])
            yield k0, k1, A[:, None] + ((a - A) * frac)[:, None] * powers
            a = A + (a - A) * np.exp(-lam * dt * (k1 - k0))


def _stepwise_dy_integral(lam, sk, segsteps, dt, dy):
    total = np.zeros(np.size(lam), dtype=complex)
    for k0, k1, means in _step_means(lam, sk, segsteps, dt):
        total += means @ dy[k0:k1]
    return total


@dataclass
class _PathIntegrals:
    """Record functionals entering the conditional weights, one per (n, m)."""

    alpha_end: np.ndarray       # alpha_n(t)
    i_cross: np.ndarray         # int alpha_n alpha_m^* dt   (K x K)
    i_square: np.ndarray        # int alpha_n^2 dt
    i_lin_beta: np.ndarray      # int beta alpha_n dt
    i_dy: np.ndarray            # int alpha_n dy


def _path_integrals(params, big_j, record, steady, beta_profile=None):
    n = n_grid(big_j)
    t = record.t
    dy = np.asarray(record.dy, dtype=float)
    if steady:
        if beta_profile is not None:
            raise ValueError("steady mode assumes a constant drive")
        a = alpha_steady(params, n)
        return _PathIntegrals(
            alpha_end=a,
            i_cross=np.outer(a, a.conj()) * t,
            i_square=a * a * t,
            i_lin_beta=params.beta * a * t,
            i_dy=a * record.Y,
        )
    lam = _rate(params, n)
    sk = math.sqrt(params.kappa1)
    segs = _segments(beta_profile, params, t)
    i_cross = np.zeros((n.size, n.size), dtype=complex)
    i_square = np.zeros(n.size, dtype=complex)
    i_lin = np.zeros(n.size, dtype=complex)
    a0 = np.zeros(n.size, dtype=complex)
    for s, stop, b in segs:
        dur = stop - s
        A = sk * b / lam
        B = a0 - A
        e_n = _expm1_over(lam, dur)
        e_pair = _expm1_over(lam[:, None] + lam.conj()[None, :], dur)
        i_cross += (np.outer(A, A.conj()) * dur + A[:, None] * (B.conj() * e_n.conj())[None, :]
                    + (B * e_n)[:, None] * A.conj()[None, :] + np.outer(B, B.conj()) * e_pair)
        i_square += A * A * dur + 2 * A * B * e_n + B * B * _expm1_over(2 * lam, dur)
        i_lin += b * (A * dur + B * e_n)
        a0 = A + B * np.exp(-lam * dur)

    # step-averaged amplitudes for the stochastic integral
    i_dy = np.zeros(n.size, dtype=complex)
    if record.steps:
        i_dy = _stepwise_dy_integral(lam, sk, _segment_steps(segs, record.dt, record.steps),
                                     record.dt, dy)
    return _PathIntegrals(alpha_end=a0, i_cross=i_cross, i_square=i_square,
                          i_lin_beta=i_lin, i_dy=i_dy)


# ----------------------------------------------------------------------------
# initial states


def initial_coefficients(big_j, approximation="exact"):
    """Coherent spin state along x, expanded in Jz eigenstates.

    ``exact`` uses binomial amplitudes ``sqrt(C(2J, J+n)) / 2^J`` evaluated
    with log-gamma; ``gaussian`` uses the large-N form
    ``sqrt(2/(pi N)) exp(-(n^2 + m^2)/N)``.
    """
    n = n_grid(big_j)
    if approximation == "exact":
        two_j = 2.0 * big_j
        logamp = 0.5 * (special.gammaln(two_j + 1) - special.gammaln(big_j + n + 1)
                        - special.gammaln(big_j - n + 1)) - big_j * math.log(2.0)
        c = np.exp(logamp[:, None] + logamp[None, :])
    elif approximation == "gaussian":
        N = 2.0 * big_j
        if N == 0:
            c = np.ones((1, 1))
        else:
            c = math.sqrt(2.0 / (math.pi * N)) * np.exp(-(n[:, None] ** 2 + n[None, :] ** 2) / N)
    else:
        raise ValueError(f"unknown approximation {approximation!r}")
    return AtomicCoefficients(big_j=big_j, c=c.astype(complex))


def two_state_coefficients(big_j, n):
    """Equal pure superposition of |n> and |-n>."""
    grid = n_grid(big_j)
    v = np.zeros(grid.size, dtype=complex)
    idx = [int(np.argmin(np.abs(grid - n))), int(np.argmin(np.abs(grid + n)))]
    if idx[0] == idx[1]:
        v[idx[0]] = 1.0
    else:
        v[idx] = 1.0 / math.sqrt(2.0)
    return AtomicCoefficients(big_j=big_j, c=np.outer(v, v.conj()))


# ----------------------------------------------------------------------------
# conditional state


def _require_real_beta(params, beta_profile=None):
    vals = [params.beta] if beta_profile is None or callable(beta_profile) else \
        [b for _, b in beta_profile]
    for b in vals:
        if abs(complex(b).imag) > 1e-12 * max(1.0, abs(b)):
            raise ValueError("the coherent-probe solution needs a real beta")


def _normalize(logw):
    diag = np.real(np.diag(logw))
    finite = diag[np.isfinite(diag)]
    if finite.size == 0:
        raise NormalizationError(f"all diagonal weights vanish (largest log-weight {np.max(diag)!r})")
    shift = np.max(finite)
    z = np.sum(np.exp(finite - shift))
    if not np.isfinite(z) or z <= 0:
        raise NormalizationError(f"degenerate normalization, largest log-weight {shift!r}")
    return shift + math.log(z)


def log_weights(params, coeffs, record, steady=True, beta_profile=None):
    """Log of the unnormalised C_nm(t) together with the path integrals."""
    _require_real_beta(params, beta_profile)
    p = _path_integrals(params, coeffs.big_j, record, steady, beta_profile)
    kappa, ek = params.kappa, params.eta * params.kappa1
    d = np.real(np.diag(p.i_cross))
    lw = coeffs.log_c()
    lw = lw - 0.5 * kappa * (d[:, None] + d[None, :] - 2.0 * p.i_cross)
    lw = lw + math.sqrt(ek) * (p.i_dy[:, None] + p.i_dy.conj()[None, :])
    lw = lw - 0.5 * ek * (p.i_square[:, None] + p.i_square.conj()[None, :] + 2.0 * p.i_cross)
    imb = p.i_lin_beta - p.i_lin_beta.conj()
    lw = lw - 0.5 * math.sqrt(params.kappa1) * (imb[:, None] - imb[None, :])
    return lw, p


def conditional_state(params, coeffs, record, steady=True, probe_off_at_end=False,
                      beta_profile=None):
    """Atomic state conditioned on a homodyne record.

    Parameters
    ----------
    params : PhysicalParams
        ``beta`` must be real.
    coeffs : AtomicCoefficients
        Initial coefficients.
    record : MeasurementRecord
    steady : bool
        Replace alpha_n(t) by its steady value throughout (default) or use
        the exact transient from an empty cavity at t = 0.
    probe_off_at_end : bool
        Drop the field-overlap factor: the probe is switched off and the
        cavity has relaxed to vacuum so the atoms factor out.
    beta_profile : sequence of (t_start, beta), optional
        Piecewise-constant drive for transient mode.

    Returns
    -------
    rho : AtomicDensityMatrix
    log_w : ndarray
        Normalised log coefficients ``log C_nm(t)``.
    amps : AmplitudeSet
        Amplitudes at the end of the record.
    """
    lw, p = log_weights(params, coeffs, record, steady, beta_profile)
    lw = lw - _normalize(lw)
    a = p.alpha_end
    if probe_off_at_end:
        overlap = 0.0
    else:
        mod = np.abs(a) ** 2
        overlap = -0.5 * (mod[:, None] + mod[None, :]) + a[:, None] * a.conj()[None, :]
    with np.errstate(under="ignore"):
        rho = np.exp(lw + overlap)
    rho = 0.5 * (rho + rho.conj().T)
    amps = AmplitudeSet(big_j=coeffs.big_j, alpha=a, mode="steady" if steady else "transient",
                        t=record.t)
    return AtomicDensityMatrix(big_j=coeffs.big_j, rho=rho), lw, amps


# ----------------------------------------------------------------------------
# record statistics


@dataclass
class YDistribution:
    """Gaussian mixture for the integrated current Y."""

    weights: np.ndarray
    means: np.ndarray
    variance: float

    def pdf(self, y):
        y = np.asarray(y, dtype=float)[..., None]
        s = math.sqrt(self.variance)
        return np.sum(self.weights * stats.norm.pdf(y, loc=self.means, scale=s), axis=-1)

    def cdf(self, y):
        y = np.asarray(y, dtype=float)[..., None]
        s = math.sqrt(self.variance)
        return np.sum(self.weights * stats.norm.cdf(y, loc=self.means, scale=s), axis=-1)

    def support(self, width=8.0):
        s = math.sqrt(self.variance)
        return float(np.min(self.means) - width * s), float(np.max(self.means) + width * s)


def record_probability_Y(params, coeffs, t):
    """Density of the integrated current Y after probing for ``t`` (steady regime)."""
    if t <= 0:
        raise ValueError("t must be positive")
    a = alpha_steady(params, coeffs.n)
    w = coeffs.diagonal
    w = w / w.sum()
    means = 2.0 * math.sqrt(params.eta * params.kappa1) * a.real * t
    return YDistribution(weights=w, means=means, variance=float(t))


def sample_record(params, coeffs, t, dt, rng_seed, steady=True, beta_profile=None):
    """Draw a homodyne record for the given initial state.

    The record density depends on the initial state only through its
    diagonal, so a component ``q`` is drawn from the diagonal weights and
    increments are then independent Gaussians with mean
    ``2 sqrt(eta kappa1) Re(alpha_q) dt`` (step averaged in transient mode)
    and variance ``dt``.
    """
    steps = int(round(t / dt))
    if steps < 1 or abs(steps * dt - t) > 1e-9 * t:
        raise ValueError("dt must divide t")
    rng = rng_for(rng_seed)
    w = np.clip(coeffs.diagonal, 0.0, None)
    q = rng.choice(w.size, p=w / w.sum())
    n_q = coeffs.n[q]
    noise = rng.standard_normal(steps) * math.sqrt(dt)
    sig = 2.0 * math.sqrt(params.eta * params.kappa1)
    if steady:
        mean = np.full(steps, sig * alpha_steady(params, n_q).real * dt)
    else:
        segsteps = _segment_steps(_segments(beta_profile, params, t), dt, steps)
        mean = np.empty(steps)
        for k0, k1, m in _step_means(_rate(params, n_q), math.sqrt(params.kappa1), segsteps, dt):
            mean[k0:k1] = sig * m[0].real * dt
    return MeasurementRecord(dt=dt, dy=mean + noise, rng_seed=int(rng_seed), true_component=float(n_q))


def sample_Y(params, coeffs, t, size, rng_seed):
    """Integrated currents of ``size`` independent steady-regime records."""
    rng = rng_for(rng_seed)
    w = np.clip(coeffs.diagonal, 0.0, None)
    q = rng.choice(w.size, p=w / w.sum(), size=size)
    mean = 2.0 * math.sqrt(params.eta * params.kappa1) * alpha_steady(params, coeffs.n[q]).real * t
    return mean + rng.standard_normal(size) * math.sqrt(t)


# ----------------------------------------------------------------------------
# purity


def purity_two_state(params, n, t):
    """Purity of an initially equal superposition of |n> and |-n> (steady regime)."""
    kappa, gt = params.kappa, params.g_tilde
    num = 4.0 * params.kappa1 * abs(params.beta) ** 2 * n ** 2 * gt ** 2
    den = ((kappa / 2.0) ** 2 + n ** 2 * gt ** 2) ** 2
    expo = num / den * ((kappa - params.eta * params.kappa1) * t + 1.0)
    return 0.5 * (1.0 + math.exp(-expo))


def purity_full(params, coeffs, record, probe_off_at_end=False, steady=True, beta_profile=None):
    """Tr(rho_at^2) assembled directly from the squared conditional weights."""
    _require_real_beta(params, beta_profile)
    p = _path_integrals(params, coeffs.big_j, record, steady, beta_profile)
    ek = params.eta * params.kappa1
    d = np.real(np.diag(p.i_cross))
    dist_int = d[:, None] + d[None, :] - 2.0 * np.real(p.i_cross)
    x_dy = 2.0 * np.real(p.i_dy)
    x_sq = 2.0 * np.real(p.i_square) + 2.0 * d
    with np.errstate(divide="ignore"):
        log_c2 = 2.0 * np.log(np.abs(coeffs.c))
    expo = (log_c2 - (params.kappa - ek) * dist_int
            + math.sqrt(ek) * (x_dy[:, None] + x_dy[None, :])
            - 0.5 * ek * (x_sq[:, None] + x_sq[None, :]))
    if not probe_off_at_end:
        a = p.alpha_end
        expo = expo - np.abs(a[:, None] - a[None, :]) ** 2
    with np.errstate(divide="ignore"):
        den_terms = np.log(coeffs.diagonal) + math.sqrt(ek) * x_dy - 0.5 * ek * x_sq
    log_den = special.logsumexp(den_terms)
    finite = expo[np.isfinite(expo)]
    if finite.size == 0 or not np.isfinite(log_den):
        raise NormalizationError(f"degenerate normalization, largest log-weight {np.max(den_terms)!r}")
    return float(np.exp(special.logsumexp(finite) - 2.0 * log_den))


# ----------------------------------------------------------------------------
# peak position


@dataclass
class PeakEstimate:
    n_p: float
    single_peaked: bool
    method: str


def _peak_objective(u, a, b, Y, t):
    return -2.0 * (u - 1.0) / b + 2.0 * a * Y / u - 2.0 * a * a * t / u ** 2


def peak_estimate(params, big_j, t, Y):
    """Position of the positive peak of the diagonal in the large-N regime.

    With Gaussian initial coefficients and steady amplitudes the log of the
    diagonal weight is a function of ``u = 1 + 4 n^2 g_tilde^2/kappa^2``
    whose stationary points solve ``u^3 + a b Y u - 2 a^2 b t = 0`` with
    ``a = sqrt(eta kappa1) 2 sqrt(kappa1) beta / kappa`` and
    ``b = 4 g_tilde^2 N / kappa^2``.  The Cardano root is used when it is
    well conditioned; otherwise all real roots are examined and the one
    maximising the weight is refined by bracketing.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    N = 2.0 * big_j
    gt, kappa = params.g_tilde, params.kappa
    a = math.sqrt(params.eta * params.kappa1) * 2.0 * math.sqrt(params.kappa1) * float(np.real(params.beta)) / kappa
    b = 4.0 * gt * gt * N / kappa ** 2
    if a == 0 or b == 0:
        return PeakEstimate(0.0, True, "degenerate")

    u = None
    method = "cardano"
    if Y == 0:
        u = (2.0 * a * a * b * t) ** (1.0 / 3.0)
        method = "closed-form"
    else:
        disc = b * Y ** 3 + 27.0 * a * t * t
        if disc >= 0:
            S = 3.0 * math.sqrt(3.0 * a) * b * t + b * math.sqrt(disc)
            if S > 0:
                s3 = S ** (1.0 / 3.0)
                cand = math.sqrt(a / 3.0) * (s3 - b * Y / s3)
                if abs(cand) > 1e-6 * math.sqrt(a / 3.0) * s3:
                    u = cand
    if u is None:
        method = "bracketed"
        roots = np.roots([1.0, 0.0, a * b * Y, -2.0 * a * a * b * t])
        real = [r.real for r in roots if abs(r.imag) < 1e-9 * max(1.0, abs(r))]
        cands = [r for r in real if r > 1.0] + [1.0]
        u = max(cands, key=lambda x: _peak_objective(x, a, b, Y, t))
        if u > 1.0:
            g = lambda x: x ** 3 + a * b * Y * x - 2.0 * a * a * b * t
            lo, hi = max(1.0, u * (1 - 1e-3)), u * (1 + 1e-3)
            while g(lo) * g(hi) > 0 and lo > 1.0:
                lo = max(1.0, lo - (hi - lo))
                hi = hi + (hi - lo)
            if g(lo) * g(hi) <= 0:
                u = optimize.brentq(g, lo, hi, xtol=1e-14, rtol=1e-15)
    if u <= 1.0:
        return PeakEstimate(0.0, True, method)
    n_p = math.sqrt((u - 1.0) * N / b)
    return PeakEstimate(n_p, False, method)


def diagonal_argmax(params, coeffs, t, Y):
    """Nonnegative n maximising the steady conditional diagonal for given Y."""
    rec = MeasurementRecord(dt=t, dy=np.array([Y]))
    rho, _, _ = conditional_state(params, coeffs, rec, steady=True, probe_off_at_end=True)
    d = rho.diagonal
    n = coeffs.n
    keep = n >= 0
    best = np.max(d[keep])
    # ties resolved towards the nonnegative side, smallest index among equals
    return float(n[keep][int(np.argmax(d[keep] >= best * (1 - 1e-12)))])
