"""Colored multiplicative noise with additive white noise: Monte Carlo,
third-order master equation, Kummer-function equilibria and moments."""

__version__ = "0.1.0"

from .grid import GridPdf, UniformGrid, symmetric_grid
from .master import (FluxCoefficients, default_grid, equilibrium_pdf_fick,
                     equilibrium_pdf_third, flux_coefficients, flux_residual,
                     pdf_moment)
from .model import (CorrelationKernel, DerivedScales, ModelParams,
                    derived_scales, laplace_phi)
from .moments import (DIVERGENT, MomentState, equilibrium_moment,
                      evolve_moments, moment_generator_matrix)
from .ndim import NdModel, lie_evolved_coupling, nd_coefficients, noise_gramian
from .pde import EvolveConfig, build_generator, evolve, steady_state
from .sde import EnsembleStats, SimConfig, ensemble_stats, integrate_trajectory, ou_step
from .special import kummer_1f1, normalize_on_grid

__all__ = [
    "__version__",
    "ModelParams", "CorrelationKernel", "DerivedScales", "derived_scales",
    "laplace_phi", "kummer_1f1", "normalize_on_grid", "GridPdf",
    "UniformGrid", "symmetric_grid", "FluxCoefficients", "flux_coefficients",
    "equilibrium_pdf_third", "equilibrium_pdf_fick", "flux_residual",
    "default_grid", "pdf_moment", "SimConfig", "EnsembleStats", "ou_step",
    "integrate_trajectory", "ensemble_stats", "EvolveConfig",
    "build_generator", "evolve", "steady_state", "MomentState", "DIVERGENT",
    "moment_generator_matrix", "equilibrium_moment", "evolve_moments",
    "NdModel", "lie_evolved_coupling", "noise_gramian", "nd_coefficients",
]
