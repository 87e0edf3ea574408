"""Physical parameters, unit conventions and derived timescales.

All frequencies are angular frequencies in rad/s.  Values quoted as
``2*pi x MHz`` are converted with :func:`mhz`.  The probe amplitude
``beta`` carries units of s^-1/2 so that ``|beta|**2 * dt`` is a photon
number.

Two drive conventions coexist and are kept explicit:

* the single-cavity coherent probe drives cavity 1 as
  ``d alpha/dt = -(kappa/2 + i n g_tilde) alpha + sqrt(kappa1) beta`` and a
  real ``beta`` gives x-quadrature signals;
* the two-cavity (squeezed probe) master equation drives cavity 1 with
  ``i sqrt(kappa1) beta``.  :func:`cascade_frame` maps the first onto the
  second (``beta -> -i beta`` with ``phi = pi`` and no squeezing cavity).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


def mhz(value):
    """Convert a frequency in MHz (cycles) to an angular frequency in rad/s."""
    return TWO_PI * 1e6 * value


@dataclass(frozen=True)
class PhysicalParams:
    """Experimental constants of the atom-cavity probing setup.

    Parameters
    ----------
    g : float
        Single-atom coupling strength (rad/s).
    delta : float
        Atom-light detuning (rad/s).
    kappa1, kappa_loss1 : float
        Input-mirror and loss decay rates of the atom cavity (rad/s).
    kappa2, kappa_loss2 : float
        Input-mirror and loss decay rates of the squeezing cavity (rad/s).
        ``kappa2 = 0`` removes the squeezing cavity.
    beta : complex
        Input beam amplitude (s^-1/2).
    epsilon : complex
        Nonlinear gain of the squeezing cavity (rad/s).
    eta : float
        Detection efficiency in [0, 1].
    phi : float
        Local oscillator phase (rad).
    gamma_sp : float
        Atomic excited state decay rate, only used for estimates (rad/s).
    big_j : float
        Total spin J = N/2, a nonnegative multiple of 1/2.
    """

    g: float
    delta: float
    kappa1: float
    kappa_loss1: float = 0.0
    kappa2: float = 0.0
    kappa_loss2: float = 0.0
    beta: complex = 0.0
    epsilon: complex = 0.0
    eta: float = 1.0
    phi: float = math.pi
    gamma_sp: float = 0.0
    big_j: float = 0.0

    @property
    def g_tilde(self):
        """Dispersive coupling g**2/delta."""
        return self.g ** 2 / self.delta

    @property
    def kappa(self):
        """Total decay rate of the atom cavity."""
        return self.kappa1 + self.kappa_loss1

    @property
    def kappa2_total(self):
        return self.kappa2 + self.kappa_loss2

    @property
    def n_atoms(self):
        return int(round(2 * self.big_j))

    @property
    def n_values(self):
        """Jz eigenvalues -J, ..., J as a float array."""
        return -self.big_j + np.arange(self.n_atoms + 1, dtype=float)

    @property
    def cavity_photons(self):
        """Steady photon number 4 kappa1 |beta|^2 / kappa^2 for n = 0."""
        return 4.0 * self.kappa1 * abs(self.beta) ** 2 / self.kappa ** 2

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def max_rate(self):
        """Largest rate of the coupled atom-field dynamics."""
        return max(self.kappa, self.kappa2_total, abs(self.epsilon),
                   self.big_j * abs(self.g_tilde))

    def as_dict(self):
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, complex):
                out[f.name] = [v.real, v.imag]
            else:
                out[f.name] = float(v)
        return out

    @classmethod
    def from_dict(cls, data):
        kw = {}
        for f in dataclasses.fields(cls):
            if f.name not in data:
                continue
            v = data[f.name]
            if isinstance(v, (list, tuple)):
                v = complex(v[0], v[1])
            kw[f.name] = v
        return cls(**kw)


def beta_for_photons(n_cav, kappa1, kappa):
    """Real probe amplitude giving ``4 kappa1 beta**2 / kappa**2 = n_cav``."""
    return math.sqrt(n_cav * kappa ** 2 / (4.0 * kappa1))


def preset(name, **overrides):
    """Return one of the built-in parameter sets.

    ``"reichel"`` is the coherent-probe set: g = 2pi x 215 MHz,
    delta = 2pi x 10 GHz, kappa1 = kappa = 2pi x 106 MHz, one tenth of a
    photon amplitude in the cavity (4 kappa1 beta^2/kappa^2 = 0.01, beta real),
    Gamma = 2pi x 6 MHz, eta = 1, J = 50.

    ``"reichel-squeezed"`` adds the squeezing cavity (kappa2 = kappa1, no
    losses), switches the coherent drive off, and uses eta = 0.9,
    phi = pi and epsilon = 0.025 i kappa2.
    """
    kappa1 = mhz(106.0)
    base = dict(
        g=mhz(215.0),
        delta=mhz(10_000.0),
        kappa1=kappa1,
        kappa_loss1=0.0,
        beta=complex(beta_for_photons(0.01, kappa1, kappa1)),
        eta=1.0,
        phi=math.pi,
        gamma_sp=mhz(6.0),
        big_j=50.0,
    )
    if name == "reichel":
        pass
    elif name == "reichel-squeezed":
        base.update(kappa2=kappa1, kappa_loss2=0.0, beta=0j,
                    epsilon=0.025j * kappa1, eta=0.9)
    else:
        raise KeyError(f"unknown preset {name!r}; known: reichel, reichel-squeezed")
    base.update(overrides)
    return PhysicalParams(**base)


def cascade_frame(params):
    """Express a single-cavity coherent probe in two-cavity conventions.

    The coherent probe with real ``beta`` and x-quadrature detection is the
    two-cavity master equation with ``beta -> -i beta``, ``phi = pi`` and the
    squeezing cavity removed.  Cavity-1 amplitudes coincide in both frames.
    """
    return params.replace(beta=-1j * complex(params.beta), phi=math.pi,
                          kappa2=0.0, kappa_loss2=0.0, epsilon=0j)


@dataclass(frozen=True)
class DerivedScales:
    g_tilde: float
    kappa_total: float
    t_qs: float
    t_sp: float
    circle_center: float
    circle_radius: float


def derive_scales(params, n_typical=0, coupled_atoms=None):
    """Timescales and amplitude geometry derived from ``params``.

    Parameters
    ----------
    params : PhysicalParams
    n_typical : float
        Jz value used in the spontaneous emission estimate.
    coupled_atoms : float, optional
        Number of atoms in the level that scatters probe light.  Defaults
        to N, which reproduces the quoted 6e-5 s for the preset; N/2 (the
        mean population of the coupled level) gives twice that.

    Returns
    -------
    DerivedScales
        ``t_qs`` is the probing time after which the signals of n = 0 and
        large |n| separate by one standard deviation,
        ``(1/eta kappa1) kappa^2/(4 kappa1 |beta|^2)``; it is infinite when
        there is no signal.  ``t_sp`` is the mean time between spontaneous
        emission events among ``coupled_atoms`` atoms, for an atomic state
        with Jz = n_typical.
    """
    if abs(n_typical) > params.big_j:
        raise ValueError(f"n_typical={n_typical} outside [-J, J] with J={params.big_j}")
    kappa = params.kappa
    gt = params.g_tilde
    b2 = abs(params.beta) ** 2
    rate_qs = params.eta * params.kappa1 * 4.0 * params.kappa1 * b2 / kappa ** 2
    t_qs = math.inf if rate_qs == 0.0 else 1.0 / rate_qs

    photons = params.cavity_photons / (1.0 + 4.0 * params.g ** 4 * n_typical ** 2
                                       / (params.delta ** 2 * kappa ** 2))
    excitation = params.g ** 2 / (params.delta ** 2 + (params.gamma_sp / 2.0) ** 2)
    atoms = params.n_atoms if coupled_atoms is None else coupled_atoms
    rate_sp = params.gamma_sp * photons * excitation * atoms
    t_sp = math.inf if rate_sp == 0.0 else 1.0 / rate_sp

    r = math.sqrt(params.kappa1) * abs(params.beta) / kappa
    return DerivedScales(g_tilde=gt, kappa_total=kappa, t_qs=t_qs, t_sp=t_sp,
                         circle_center=r, circle_radius=r)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def raise_if_invalid(self):
        if self.violations:
            raise ValueError("invalid parameters: " + "; ".join(self.violations))


def validate(params):
    """Check parameter invariants.

    Hard violations: negative rates, eta outside [0, 1], J not a multiple of
    1/2.  Soft warnings: squeezing at or above the parametric threshold
    ``|epsilon| = (kappa2 + kappa_loss2)/2`` and a strongly saturated
    dispersive shift ``2 J g_tilde / kappa``.
    """
    rep = ValidationReport()
    for name in ("kappa1", "kappa_loss1", "kappa2", "kappa_loss2", "gamma_sp"):
        if getattr(params, name) < 0:
            rep.violations.append(f"{name} negative")
    if not 0.0 <= params.eta <= 1.0:
        rep.violations.append("eta out of range")
    if params.big_j < 0 or abs(2 * params.big_j - round(2 * params.big_j)) > 1e-12:
        rep.violations.append("big_j is not a nonnegative multiple of 1/2")
    if params.delta == 0:
        rep.violations.append("delta is zero")
    if params.kappa <= 0:
        rep.violations.append("kappa1 + kappa_loss1 must be positive")
    k2 = params.kappa2_total
    if abs(params.epsilon) > 0:
        if k2 <= 0:
            rep.violations.append("epsilon nonzero without a squeezing cavity")
        elif abs(params.epsilon) / k2 >= 0.5:
            rep.warnings.append("above OPO threshold: |epsilon|/(kappa2+kappa_loss2) >= 1/2")
    if params.kappa > 0 and 2 * params.big_j * abs(params.g_tilde) / params.kappa > 1e3:
        rep.warnings.append("2 J g_tilde / kappa exceeds 1e3; large-|n| components carry no signal")
    return rep
