"""Numerical scattering toolkit for the repulsive Hamiltonian ``H0 = p^2 - x^2``.

Modules
-------
lattice     grids, centred DFT, wave packets, snapshots
mehler      exact free propagation and scaling-law checks
potentials  regular and singular short-range potentials
dynamics    comoving-frame split-step propagation of ``H0 + V``
quadrature  potential-weighted norms adapted to singular and narrow potentials
scatter     wave operators, the scattering operator and the modified dynamics
ewrecon     high-velocity commutator pairings and X-ray samples
radon       X-ray transform and filtered back-projection
cli         ``repsc`` command line
"""
from .errors import (AliasingError, ConfigError, ConvergenceError, GridOverflowError, NumericalError,
                     RepscError, ToleranceError)

__version__ = "0.1.0"

__all__ = ["AliasingError", "ConfigError", "ConvergenceError", "GridOverflowError", "NumericalError",
           "RepscError", "ToleranceError", "__version__"]
