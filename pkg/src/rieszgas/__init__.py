"""Riesz gases: lattice sums, Jellium energies, ground states, Monte Carlo and exact references."""

__version__ = "0.1.0"

from .core import Domain, PointConfiguration, RieszExponent, potential, riesz_energy, riesz_energy_gradient
from .errors import ConvergenceError, NeutralityError, PoleError, RieszError, SingularityError
from .exact import kunz_density, kunz_free_energy, kunz_lambda1, reference_constants, selberg_log_partition
from .jellium import JelliumSystem, background_potential, background_self_energy, jellium_energy
from .lattice import EwaldSettings, Lattice, epstein_zeta, lattice_catalog, madelung, periodic_energy, periodic_potential
from .meanfield import capacity, solve_equilibrium_measure
from .montecarlo import SamplerConfig, sample_canonical, sample_grand_canonical
from .optimize import OptimizerSettings, minimize_energy, minimize_grand_canonical
