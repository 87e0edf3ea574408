"""Conditional atomic states from continuous homodyne probing of a cavity.

The package is organised around a collective spin J coupled dispersively
to a cavity mode that is monitored by homodyne detection:

* :mod:`cavprobe.core`      parameters, unit conventions, timescales
* :mod:`cavprobe.coherent`  closed-form conditional state for a coherent probe
* :mod:`cavprobe.gaussian`  Gaussian-component integration for a squeezed probe
* :mod:`cavprobe.batched`   fixed-step batched Gaussian propagation for many trajectories
* :mod:`cavprobe.fock`      brute-force truncated Fock-space reference solver
* :mod:`cavprobe.analysis`  peak positions, spin Q-function, scatter tables
* :mod:`cavprobe.scatter`   purity / peak-separation series for squeezed and coherent probes
* :mod:`cavprobe.validation` oracle cross-checks at J = 1
* :mod:`cavprobe.cli`       command-line experiment driver
"""

from .core import (
    PhysicalParams,
    DerivedScales,
    derive_scales,
    validate,
    preset,
    mhz,
)

__version__ = "0.1.0"

__all__ = [
    "PhysicalParams",
    "DerivedScales",
    "derive_scales",
    "validate",
    "preset",
    "mhz",
    "__version__",
]
