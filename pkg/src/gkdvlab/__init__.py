"""gkdvlab: a numerical laboratory for critical gKdV blow-up and its
saturated continuation.

Subsystems
----------
grid          uniform periodic grids, spectral calculus, resampling
profiles      ground-state family, tail profile, localized blow-up profiles
evolve        ETDRK4 pseudo-spectral evolution with rescale-and-restart
modulation    geometric decomposition, weights, rho/Lyapunov functionals
continuation  blow-up tracking, saturated sweeps, u_ext and weak residuals
config        run-configuration parsing/serialization
snapshots     binary snapshot file format
cli           command-line front end over the library
"""

from .grid import Field, Grid
from .profiles import EquationParams

__all__ = ["Field", "Grid", "EquationParams"]

__version__ = "0.1.0"
