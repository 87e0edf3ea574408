"""Observables of conditional atomic states and figure-level reductions.

Peak positions of the n-distribution, the spin Q-function on the Bloch
sphere, per-trajectory scatter summaries, binning against a reference curve
and CSV output with JSON sidecars.
"""

from __future__ import annotations

import csv
import json
import math
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from .coherent import AtomicDensityMatrix, n_grid


@dataclass(frozen=True)
class PeakSummary:
    """Position of the nonnegative peak of the n-distribution.

    ``d_over_2`` uses quadratic interpolation through the discrete maximum
    and its neighbours; ``d_over_2_discrete`` is the grid point itself.
    """

    d_over_2: float
    d_over_2_discrete: float
    single_peaked: bool
    peak_height: float

    @property
    def d(self):
        return 2.0 * self.d_over_2


def _diag_of(rho_at):
    if isinstance(rho_at, AtomicDensityMatrix):
        return rho_at.big_j, rho_at.diagonal
    r = np.asarray(rho_at)
    return (r.shape[0] - 1) / 2.0, np.real(np.diag(r)).copy()


def peak_summary(rho_at, rel_floor=1e-9):
    """Locate the peak of the diagonal over n >= 0.

    The diagonal is first symmetrised, ``(p(n) + p(-n))/2``, so the result
    does not change under n -> -n.  ``single_peaked`` is set when the
    maximum sits at the smallest |n| and no other local maximum rises above
    ``rel_floor`` times the peak.
    """
    big_j, p = _diag_of(rho_at)
    p = 0.5 * (p + p[::-1])
    n = n_grid(big_j)
    size = n.size
    top = float(np.max(p))
    half = np.nonzero(n >= -1e-12)[0]
    # smallest index among near-equal maxima on the nonnegative side
    k = int(half[np.argmax(p[half] >= top * (1 - 1e-12))])
    discrete = float(n[k])
    pos = discrete
    if 0 < k < size - 1:
        lo, mid, hi = p[k - 1], p[k], p[k + 1]
        curv = lo - 2.0 * mid + hi
        if curv < 0:
            shift = 0.5 * (lo - hi) / curv
            pos = discrete + float(np.clip(shift, -0.5, 0.5))
    pos = float(np.clip(pos, 0.0, big_j))

    inner = np.arange(half[0] + 1, size - 1)
    local = [i for i in inner if i != k and p[i] > p[i - 1] * (1 + 1e-12) and p[i] >= p[i + 1]
             and p[i] > rel_floor * top]
    if p[-1] > p[-2] * (1 + 1e-12) and size - 1 != k and p[-1] > rel_floor * top:
        local.append(size - 1)
    single = (k == half[0]) and not local
    return PeakSummary(d_over_2=pos, d_over_2_discrete=discrete, single_peaked=bool(single),
                       peak_height=float(p[k]))


@dataclass
class QFunctionGrid:
    """Spin Q-function on a (theta, phi) grid.

    ``theta`` nodes are Gauss-Legendre points in cos(theta) and ``phi`` is
    uniform, so :meth:`integral` is exact for the polynomial content of Q.
    """

    theta: np.ndarray
    phi: np.ndarray
    values: np.ndarray
    weights_theta: np.ndarray = field(repr=False)

    def integral(self):
        dphi = 2.0 * math.pi / self.phi.size
        return float(np.sum(self.weights_theta[:, None] * self.values) * dphi)

    def argmax(self):
        i, j = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return float(self.theta[i]), float(self.phi[j])


def spin_coherent_amplitudes(big_j, theta):
    """Real factors a_m(theta) with <m|theta, phi> = a_m e^{i (J - m) phi}.

    ``theta = 0`` is the state m = +J.
    """
    n = n_grid(big_j)
    two_j = int(round(2 * big_j))
    log_binom = gammaln(two_j + 1) - gammaln(big_j + n + 1) - gammaln(big_j - n + 1)
    th = np.asarray(theta, dtype=float)[..., None]
    with np.errstate(divide="ignore"):
        lc = np.log(np.cos(th / 2.0))
        ls = np.log(np.sin(th / 2.0))
    expo = 0.5 * log_binom + (big_j + n) * lc + (big_j - n) * ls
    with np.errstate(invalid="ignore"):
        out = np.exp(expo)
    return np.nan_to_num(out)


def spin_q_function(rho_at, n_theta=200, n_phi=400):
    """Q(theta, phi) = (2J+1)/(4 pi) <theta, phi| rho |theta, phi>.

    Parameters
    ----------
    rho_at : AtomicDensityMatrix or ndarray
    n_theta, n_phi : int
        Grid resolution.

    Returns
    -------
    QFunctionGrid
    """
    if isinstance(rho_at, AtomicDensityMatrix):
        big_j, r = rho_at.big_j, rho_at.rho
    else:
        r = np.asarray(rho_at)
        big_j = (r.shape[0] - 1) / 2.0
    size = r.shape[0]
    x, w = np.polynomial.legendre.leggauss(n_theta)
    theta = np.arccos(x[::-1])
    w = w[::-1]
    phi = np.arange(n_phi) * (2.0 * math.pi / n_phi)
    a = spin_coherent_amplitudes(big_j, theta)
    # Q = sum_nm a_n a_m rho_nm e^{i (n - m) phi}; gather by k = n - m
    shifts = np.arange(-(size - 1), size)
    s = np.zeros((theta.size, shifts.size), dtype=complex)
    for idx, k in enumerate(shifts):
        diag = np.diagonal(r, offset=-k)
        if k >= 0:
            s[:, idx] = np.sum(a[:, k:] * a[:, :size - k] * diag, axis=1)
        else:
            s[:, idx] = np.sum(a[:, :size + k] * a[:, -k:] * diag, axis=1)
    q = np.real(s @ np.exp(1j * np.outer(shifts, phi)))
    q *= (2.0 * big_j + 1.0) / (4.0 * math.pi)
    return QFunctionGrid(theta=theta, phi=phi, values=np.clip(q, 0.0, None), weights_theta=w)


# ----------------------------------------------------------------------------
# scatter tables


@dataclass
class TrajectorySummary:
    series: str
    seed: int
    purity: float
    d_over_2: float
    d_over_2_discrete: float
    single_peaked: bool
    Y: float


SCATTER_COLUMNS = ("series", "seed", "purity", "d_over_2", "d_over_2_discrete",
                   "single_peaked", "Y")


@dataclass
class ScatterTable:
    """Rows of per-trajectory summaries plus per-series metadata."""

    rows: list
    series: dict

    def column(self, name, series=None):
        rows = self.rows if series is None else [r for r in self.rows if r.series == series]
        return np.array([getattr(r, name) for r in rows])

    def median(self, name, series):
        return float(np.median(self.column(name, series)))

    def as_rows(self):
        return [[getattr(r, c) for c in SCATTER_COLUMNS] for r in self.rows]


def summarize(series, rhos, seeds, Y, big_j):
    """Summaries of a batch of final atomic matrices (shape (B, 2J+1, 2J+1))."""
    out = []
    for r, s, y in zip(rhos, seeds, Y):
        st = AtomicDensityMatrix(big_j=big_j, rho=r)
        pk = peak_summary(st)
        out.append(TrajectorySummary(series=series, seed=int(s), purity=st.purity(),
                                     d_over_2=pk.d_over_2, d_over_2_discrete=pk.d_over_2_discrete,
                                     single_peaked=pk.single_peaked, Y=float(y)))
    return out


def histogram_summaries(batches):
    """Merge per-series outputs into one scatter table.

    Parameters
    ----------
    batches : list of dict
        Each with keys ``series``, ``rho`` (B x D x D), ``seeds``, ``Y``,
        ``big_j`` and optional ``meta`` (recorded per series).
    """
    if not batches:
        raise ValueError("need at least one batch")
    rows, meta = [], {}
    for b in batches:
        rows.extend(summarize(b["series"], b["rho"], b["seeds"], b["Y"], b["big_j"]))
        seeds = [int(s) for s in b["seeds"]]
        meta[b["series"]] = dict(b.get("meta", {}), seed_range=[min(seeds), max(seeds)],
                                 trajectories=len(seeds))
    return ScatterTable(rows=rows, series=meta)


def bin_by(x, y, edges):
    """Mean, standard error and count of ``y`` in bins of ``x``."""
    x, y = np.asarray(x), np.asarray(y)
    idx = np.digitize(x, edges) - 1
    nb = len(edges) - 1
    mean = np.full(nb, np.nan)
    err = np.full(nb, np.nan)
    count = np.zeros(nb, dtype=int)
    centers = np.full(nb, np.nan)
    for i in range(nb):
        sel = idx == i
        count[i] = int(np.sum(sel))
        if count[i]:
            mean[i] = float(np.mean(y[sel]))
            centers[i] = float(np.mean(x[sel]))
            err[i] = float(np.std(y[sel], ddof=1) / math.sqrt(count[i])) if count[i] > 1 else np.nan
    return centers, mean, err, count


# ----------------------------------------------------------------------------
# output


def _jsonable(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, np.generic):
        return _jsonable(v.item())
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if hasattr(v, "__dataclass_fields__"):
        return _jsonable(asdict(v))
    return v


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, complex):
        return repr(v)
    return str(v)


def write_table(path, columns, rows, sidecar):
    """Write ``rows`` as CSV and ``sidecar`` as ``<path>.json``.

    Floats are written with ``repr`` so reruns are byte-identical.  The
    sidecar also records the package and Python versions.
    """
    from . import __version__

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    meta = dict(_jsonable(sidecar), columns=list(columns), rows=len(rows),
                package_version=__version__, python=platform.python_version())
    side = path.with_name(path.name + ".json")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path, side
