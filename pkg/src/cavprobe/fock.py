"""Truncated Fock-space integration of the two-cavity stochastic master equation.

This is a reference solver for small J.  The joint density matrix of the
atoms (Jz basis, n = -J..J), cavity mode ``a`` (cutoff N1) and cavity mode
``c`` (cutoff N2) is stored densely; every term of the master equation is a
sparse matrix applied from the left or right.  The equation is integrated in
its normalised (nonlinear) form with the same predictor-corrector as the
Gaussian solver.  Nothing here shares code with :mod:`cavprobe.gaussian`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .coherent import MeasurementRecord, initial_coefficients, rng_for
from .sde import pc_step


class CutoffError(ArithmeticError):
    """The truncated Fock space is no longer adequate."""


class TraceDriftError(ArithmeticError):
    """The trace drifted during one step beyond tolerance."""


def _destroy(dim):
    return sparse.diags(np.sqrt(np.arange(1, dim)), 1, format="csr", dtype=complex)


@dataclass
class Operators:
    """Sparse operators on atoms (x) mode a (x) mode c."""

    dims: tuple
    jz: sparse.csr_matrix
    a: sparse.csr_matrix
    c: sparse.csr_matrix
    hamiltonian: sparse.csr_matrix
    squeeze: sparse.csr_matrix
    left: sparse.csr_matrix
    right: sparse.csr_matrix
    params: object
    drift_super: sparse.csr_matrix = None
    measurement_super: sparse.csr_matrix = None

    @property
    def dim(self):
        return int(np.prod(self.dims))


def build_generators(params, cutoffs=(12, 12)):
    """Assemble the operators of the master equation.

    ``left`` and ``right`` collect every term of the deterministic part that
    multiplies rho from one side only.  Together with the sandwich terms
    ``a rho a^dag``, ``c rho c^dag`` and the cavity cross terms they are
    assembled into a sparse superoperator acting on row-major vec(rho).
    """
    n1, n2 = cutoffs
    if n1 < 2 or n2 < 2:
        raise ValueError("cutoffs must be at least 2")
    na = int(round(2 * params.big_j)) + 1
    ia, i1, i2 = (sparse.identity(d, format="csr", dtype=complex) for d in (na, n1, n2))
    jz_at = sparse.diags(-params.big_j + np.arange(na), 0, format="csr", dtype=complex)
    kron = lambda x, y, z: sparse.kron(sparse.kron(x, y), z, format="csr")
    jz = kron(jz_at, i1, i2)
    a = kron(ia, _destroy(n1), i2)
    c = kron(ia, i1, _destroy(n2))
    ad, cd = a.conj().T.tocsr(), c.conj().T.tocsr()
    ham = params.g_tilde * (jz @ ad @ a)
    eps = complex(params.epsilon)
    sq = eps * (cd @ cd) + eps.conjugate() * (c @ c)
    k, k2 = params.kappa, params.kappa2_total
    kc = math.sqrt(params.kappa1 * params.kappa2)
    b = complex(params.beta)
    s1, s2 = math.sqrt(params.kappa1), math.sqrt(params.kappa2)
    left = (-1j * ham - 0.5j * sq - 0.5 * k * (ad @ a) - 0.5 * k2 * (cd @ c)
            + 1j * kc * (ad @ c)
            + 1j * s1 * b * ad + 1j * s1 * b.conjugate() * a
            - s2 * b * cd + s2 * b.conjugate() * c)
    right = (1j * ham + 0.5j * sq - 0.5 * k * (ad @ a) - 0.5 * k2 * (cd @ c)
             - 1j * kc * (cd @ a)
             - 1j * s1 * b * ad - 1j * s1 * b.conjugate() * a
             + s2 * b * cd - s2 * b.conjugate() * c)
    ops = Operators(dims=(na, n1, n2), jz=jz, a=a, c=c, hamiltonian=ham, squeeze=sq,
                    left=left.tocsr(), right=right.tocsr(), params=params)
    ops.drift_super, ops.measurement_super = _liouvillians(ops)
    return ops


def _super(left=None, right=None):
    """Superoperator of rho -> left @ rho @ right on row-major vec(rho)."""
    if left is None:
        left = sparse.identity(right.shape[0], format="csr", dtype=complex)
    if right is None:
        right = sparse.identity(left.shape[0], format="csr", dtype=complex)
    return sparse.kron(left, right.T, format="csr")


def _liouvillians(ops):
    """Drift superoperator and the superoperator of rho -> L rho + rho L^dag."""
    p = ops.params
    a, c = ops.a, ops.c
    ad, cd = a.conj().T.tocsr(), c.conj().T.tocsr()
    drift = (_super(ops.left) + _super(right=ops.right)
             + p.kappa * _super(a, ad) + p.kappa2_total * _super(c, cd))
    kc = math.sqrt(p.kappa1 * p.kappa2)
    if kc:
        drift = drift + 1j * kc * (_super(a, cd) - _super(c, ad))
    e = np.exp(-1j * p.phi)
    # measured jump operator L enters as L rho + rho L^dag
    jump = -e * math.sqrt(p.eta * p.kappa1) * a + 1j * e * math.sqrt(p.eta * p.kappa2) * c
    meas = _super(jump.tocsr()) + _super(right=jump.conj().T.tocsr())
    return drift.tocsr(), meas.tocsr()


def _apply(sup, rho):
    """Apply a superoperator to rho of shape batch + (dim, dim)."""
    dim = rho.shape[-1]
    flat = rho.reshape(-1, dim * dim)
    return np.ascontiguousarray((sup @ flat.T).T).reshape(rho.shape)


def _trace(x):
    return np.trace(x, axis1=-2, axis2=-1)


def deterministic_part(ops, rho):
    """Drift of the master equation at state ``rho`` (batch axes allowed)."""
    return _apply(ops.drift_super, rho)


def measurement_part(ops, rho):
    """Coefficient of dW in the normalised equation (batch axes allowed)."""
    out = _apply(ops.measurement_super, rho)
    return out - _trace(out)[..., None, None] * rho


def signal(ops, rho):
    """sqrt(eta) <X + X^dag>, the mean rate of the measured increment."""
    dim = rho.shape[-1]
    flat = rho.reshape(-1, dim * dim)
    # trace of L rho + rho L^dag, read off the diagonal entries of vec(out)
    diag = np.arange(dim) * (dim + 1)
    val = (ops.measurement_super[diag] @ flat.T).sum(axis=0)
    return np.real(val).reshape(rho.shape[:-2])


@dataclass
class TruncatedState:
    """Joint state on atoms (x) mode a (x) mode c.

    ``rho`` has shape batch + (D, D) with D = (2J+1) N1 N2; a leading batch
    axis holds independent trajectories.
    """

    big_j: float
    dims: tuple
    rho: np.ndarray
    time: float = 0.0

    @property
    def fock_cutoff_1(self):
        return self.dims[1]

    @property
    def fock_cutoff_2(self):
        return self.dims[2]

    @property
    def batch_shape(self):
        return self.rho.shape[:-2]

    def tensor(self):
        d = self.dims
        return self.rho.reshape(self.batch_shape + d + d)

    def atomic(self):
        """Reduced atomic density matrix."""
        return np.einsum("...aijbij->...ab", self.tensor())

    def mode_populations(self):
        """Photon-number distributions of modes a and c."""
        t = self.tensor()
        p1 = np.real(np.einsum("...aijaij->...i", t))
        p2 = np.real(np.einsum("...aijaij->...j", t))
        return p1, p2

    def check(self, tol=1e-9):
        """Raise if the state is not Hermitian, unit trace and positive to ``tol``."""
        rho = self.rho
        herm = float(np.max(np.abs(rho - np.swapaxes(rho.conj(), -1, -2))))
        tr = float(np.max(np.abs(_trace(rho) - 1.0)))
        low = float(np.min(np.linalg.eigvalsh(rho)))
        if herm > tol or tr > tol or low < -tol:
            raise ArithmeticError(f"invalid state: hermiticity {herm:.2e}, trace {tr:.2e}, "
                                  f"lowest eigenvalue {low:.2e}")

    def block_mean(self, op):
        """<op> within each atomic diagonal block |n><n|, normalised per block.

        Blocks with zero population give NaN.
        """
        na, n1, n2 = self.dims
        f = n1 * n2
        out = np.empty(self.batch_shape + (na,), dtype=complex)
        for i in range(na):
            block = self.rho[..., i * f:(i + 1) * f, i * f:(i + 1) * f]
            sub = op[i * f:(i + 1) * f, i * f:(i + 1) * f].toarray()
            with np.errstate(invalid="ignore", divide="ignore"):
                out[..., i] = np.sum(sub.T * block, axis=(-2, -1)) / _trace(block)
        return out


def initial_state(params, coeffs=None, cutoffs=(12, 12), batch=()):
    """Atoms in ``coeffs`` (default x-polarised), both modes in vacuum."""
    if coeffs is None:
        coeffs = initial_coefficients(params.big_j)
    n1, n2 = cutoffs
    vac = np.zeros(n1 * n2)
    vac[0] = 1.0
    rho = np.kron(coeffs.c, np.outer(vac, vac)).astype(complex)
    rho = np.broadcast_to(rho, tuple(np.atleast_1d(batch)) + rho.shape if batch != () else rho.shape)
    na = coeffs.c.shape[0]
    return TruncatedState(big_j=params.big_j, dims=(na, n1, n2), rho=rho.copy())


@dataclass
class OracleDiagnostics:
    max_top_layer: float = 0.0
    max_trace_drift: float = 0.0
    max_hermitian_fix: float = 0.0
    min_eigenvalue: float = 0.0


def integrate(state, params, dt, steps, rng_seed=None, dW=None, dy=None, ops=None,
              check_every=100, diagnostics=None):
    """Advance ``state`` with noise from a seed, a dW stream, or a measured record.

    Parameters
    ----------
    state : TruncatedState
    params : PhysicalParams
    dt : float
        Step, at most 0.005 over the largest rate.
    steps : int
    rng_seed, dW, dy
        Exactly one: a seed for fresh innovations, innovations of shape
        (steps,) + batch, or measured increments to replay.
    ops : Operators, optional
        Prebuilt generators for the cutoffs of ``state``.

    Returns
    -------
    state : TruncatedState
    record : MeasurementRecord
        ``dy = sqrt(eta) <X + X^dag> dt + dW`` per step; replaying it gives
        the same trajectory.

    Raises
    ------
    CutoffError
        Topmost Fock layer of either mode above 1e-6 at a check.
    TraceDriftError
        Trace moved by more than 1e-6 in a single step.
    """
    ops = build_generators(params, state.dims[1:]) if ops is None else ops
    if dt * params.max_rate() > 0.005 * (1 + 1e-12):
        raise ValueError(f"dt too large for the reference solver: dt*rate = {dt * params.max_rate():.3g}")
    if sum(x is not None for x in (rng_seed, dW, dy)) != 1:
        raise ValueError("give exactly one of rng_seed, dW, dy")
    batch = state.batch_shape
    if rng_seed is not None:
        dW = rng_for(rng_seed).standard_normal((steps,) + batch) * math.sqrt(dt)
    diag = OracleDiagnostics() if diagnostics is None else diagnostics
    rho = state.rho
    out_dy = np.empty((steps,) + batch)
    drift = lambda x: (deterministic_part(ops, x[0]),)
    diffusion = lambda x: (measurement_part(ops, x[0]),)
    for k in range(steps):
        mean = signal(ops, rho) * dt
        if dy is not None:
            w = np.asarray(dy[k]) - mean
            out_dy[k] = dy[k]
        else:
            w = np.asarray(dW[k])
            out_dy[k] = mean + w
        (rho,) = pc_step((rho,), drift, diffusion, dt, w)
        fixed = 0.5 * (rho + np.swapaxes(rho.conj(), -1, -2))
        diag.max_hermitian_fix = max(diag.max_hermitian_fix, float(np.max(np.abs(fixed - rho))))
        tr = np.real(_trace(fixed))
        drift_tr = float(np.max(np.abs(tr - 1.0)))
        diag.max_trace_drift = max(diag.max_trace_drift, drift_tr)
        if drift_tr > 1e-6:
            raise TraceDriftError(f"trace drift {drift_tr:.2e} at step {k}")
        rho = fixed / tr[..., None, None]
        if (k + 1) % check_every == 0 or k == steps - 1:
            p1, p2 = TruncatedState(state.big_j, state.dims, rho).mode_populations()
            top = float(max(np.max(p1[..., -1]), np.max(p2[..., -1])))
            diag.max_top_layer = max(diag.max_top_layer, top)
            if top > 1e-6:
                raise CutoffError(f"top Fock layer population {top:.2e} at step {k}; raise the cutoff")
    diag.min_eigenvalue = float(np.min(np.linalg.eigvalsh(rho)))
    new = TruncatedState(state.big_j, state.dims, rho, state.time + steps * dt)
    return new, MeasurementRecord(dt=dt, dy=out_dy)
