"""Derivative-free weak order 2.0 predictor-corrector for scalar noise.

The state is a tuple of arrays.  ``drift(x)`` returns a tuple of the same
structure; ``diffusion(x)`` returns a tuple whose entries are arrays or
``None`` (no noise on that entry).  The noise increment ``dW`` may be a
scalar or carry leading batch axes shared by every noisy entry.

Scheme (Kloeden & Platen, Numerical Solution of SDEs, sec. 15.5)::

    Ups    = Y + a dt + b dW
    U+-    = Y + a dt +- b sqrt(dt)
    Psi    = 1/4 (b(U+) + b(U-) + 2 b) dW + 1/4 (b(U+) - b(U-)) (dW^2 - dt)/sqrt(dt)
    Ybar   = Y + 1/2 (a(Ups) + a) dt + Psi          (predictor)
    Y_next = Y + 1/2 (a(Ybar) + a) dt + Psi         (corrector)
"""

from __future__ import annotations

import math

import numpy as np


def _bcast(w, arr):
    w = np.asarray(w)
    return w.reshape(w.shape + (1,) * (arr.ndim - w.ndim))


def _axpy(x, dx, scale=1.0):
    return tuple(xi if di is None else xi + scale * di for xi, di in zip(x, dx))


def _noise(b, w):
    return tuple(None if bi is None else bi * _bcast(w, bi) for bi in b)


def pc_step(x, drift, diffusion, dt, dW):
    """Advance ``x`` by one step of length ``dt`` with increment ``dW``."""
    sq = math.sqrt(dt)
    a0 = drift(x)
    b0 = diffusion(x)
    base = _axpy(x, a0, dt)
    ups = _axpy(base, _noise(b0, dW))
    up = _axpy(base, b0, sq)
    um = _axpy(base, b0, -sq)
    bp = diffusion(up)
    bm = diffusion(um)
    dW = np.asarray(dW)
    corr = (dW * dW - dt) / sq
    psi = []
    for b, p, m in zip(b0, bp, bm):
        if b is None:
            psi.append(None)
        else:
            psi.append(0.25 * (p + m + 2.0 * b) * _bcast(dW, b)
                       + 0.25 * (p - m) * _bcast(corr, b))
    a_ups = drift(ups)
    pred = _axpy(_axpy(x, tuple(0.5 * (u + a) for u, a in zip(a_ups, a0)), dt), psi)
    a_pred = drift(pred)
    return _axpy(_axpy(x, tuple(0.5 * (u + a) for u, a in zip(a_pred, a0)), dt), psi)
