"""Analytic layer of the reduced master equation.

The reduced equation for the PDF is third order,

    dP/dt = d/dx J(x),
    J(x) = a1*x*P + (d0 + d2*x^2)*dP/dx + c1*x*d2P/dx2,

with a1 = (gamma*tau + delta^2)/tau, d0 = D_f, d2 = delta^2/tau and
c1 = D_f*delta^2*theta/tau.  The c1 term is the non-Fick contribution: it
survives only when both the additive noise (D_f > 0) and a finite
correlation time (theta > 0) are present.

Setting J = 0 gives the equilibrium in closed form,

    P_eq(x) propto 1F1((gamma*tau/delta^2 + 1)/2;
                       (1/(delta*r) + 1)/2;
                       -x^2 / (2*D_f*theta)),

with far tails |x|**-(gamma*tau/delta^2 + 1) independent of D_f.  Dropping
the c1 term and keeping Fick's current instead gives the second-order
(Fokker-Planck) equilibrium (D_f + d2*x^2)**(-(1 + gamma*tau/delta^2)/2),
which shares the tail exponent but is substantially wider in the core.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .grid import GridPdf, UniformGrid, symmetric_grid
from .model import DerivedScales, ModelParams
from .special import grid_moment, kummer_1f1_grid, normalize_on_grid

__all__ = [
    "FluxCoefficients", "GridPdf", "flux_coefficients", "default_grid",
    "equilibrium_pdf_third", "equilibrium_pdf_fick", "flux_residual",
    "FluxResidual", "second_solution_integrable", "pdf_moment",
]


@dataclass(frozen=True)
class FluxCoefficients:
    """Coefficients of the probability current J(x).

    a1 : drift, (gamma*tau + delta^2)/tau          [1/time]
    d0 : constant diffusion, D_f                    [x^2/time]
    d2 : multiplicative diffusion prefactor,
         delta^2/tau, so D_xi(x) = d2*x^2           [1/time]
    c1 : non-Fick third-order prefactor,
         D_f*delta^2*theta/tau, multiplies x*d2P/dx2  [x^2/time]
    """

    a1: float
    d0: float
    d2: float
    c1: float

    def __post_init__(self):
        if min(self.a1, self.d0, self.d2, self.c1) < 0:
            raise ValueError("flux coefficients must be non-negative")

    def as_dict(self):
        return {"a1": self.a1, "d0": self.d0, "d2": self.d2, "c1": self.c1}


def flux_coefficients(scales: DerivedScales, params: ModelParams) -> FluxCoefficients:
    tau = params.tau
    return FluxCoefficients(
        a1=(scales.gamma_tau + scales.delta**2) / tau,
        d0=params.d_f,
        d2=scales.delta**2 / tau,
        c1=params.d_f * scales.delta**2 * scales.theta / tau,
    )


def default_grid(params: ModelParams, scales: DerivedScales,
                 n_cells: int = 4096) -> UniformGrid:
    """Symmetric grid wide enough for the core and the tail-fit window."""
    core = 10.0 * math.sqrt(params.d_f / params.gamma)
    heavy = 30.0 * math.sqrt(params.d_f * scales.theta) if scales.theta > 0 else 0.0
    return symmetric_grid(max(core, heavy), n_cells)


def _gaussian_pdf(params: ModelParams, grid: UniformGrid) -> GridPdf:
    # delta = 0 degenerate branch: plain OU equilibrium
    var = params.d_f / params.gamma
    x = grid.centers
    vals = np.exp(-x**2 / (2 * var)) / math.sqrt(2 * math.pi * var)
    _, pdf = normalize_on_grid(vals, grid, math.inf)
    return pdf


def equilibrium_pdf_third(scales: DerivedScales, params: ModelParams,
                          grid: UniformGrid) -> GridPdf:
    """Normalized equilibrium of the third-order master equation."""
    if params.d_f <= 0:
        raise ValueError("equilibrium requires d_f > 0")
    if scales.delta == 0.0:
        return _gaussian_pdf(params, grid)
    if not scales.weak_regime_ok:
        warnings.warn("R >= 1: second solution would be integrable; "
                      "second-order truncation suspect", stacklevel=2)
    a = 0.5 * (scales.gamma_tau / scales.delta**2 + 1.0)
    b = 0.5 * (1.0 / scales.big_r + 1.0)
    z = -grid.centers**2 / (2.0 * params.d_f * scales.theta)
    vals = kummer_1f1_grid(a, b, z)
    norm, pdf = normalize_on_grid(vals, grid, scales.alpha_tail)
    pdf.meta["header"] = {"kind": "equilibrium_third", "norm_constant": repr(norm),
                          **{k: repr(v) for k, v in params.as_dict().items()}}
    return pdf


def equilibrium_pdf_fick(scales: DerivedScales, params: ModelParams,
                         grid: UniformGrid) -> GridPdf:
    """Equilibrium of the Fick-current (Fokker-Planck) truncation."""
    if params.d_f <= 0:
        raise ValueError("equilibrium requires d_f > 0")
    if scales.delta == 0.0:
        return _gaussian_pdf(params, grid)
    d2 = scales.delta**2 / params.tau
    expo = -0.5 * (1.0 + scales.gamma_tau / scales.delta**2)
    vals = (params.d_f + d2 * grid.centers**2) ** expo
    norm, pdf = normalize_on_grid(vals, grid, scales.alpha_tail)
    pdf.meta["header"] = {"kind": "equilibrium_fick", "norm_constant": repr(norm),
                          **{k: repr(v) for k, v in params.as_dict().items()}}
    return pdf


def pdf_moment(pdf: GridPdf, n: int, scales: DerivedScales) -> float:
    """n-th moment of a grid PDF with the exact tail exponent completion."""
    return grid_moment(pdf, n, scales.alpha_tail)


def second_solution_integrable(scales: DerivedScales) -> bool:
    """Integrability at the origin of the rejected second J=0 solution.

    Near x = 0 the second independent solution behaves as
    x**(1 - 1/(delta*r)); it is integrable only when that exponent exceeds
    -1, i.e. R > 1/2.  In the weak regime R < 1/2 it must be discarded,
    which is why the equilibrium keeps only the 1F1 branch.  Never returned
    as a PDF; diagnostic only.
    """
    if scales.big_r == 0.0:
        return False
    return 1.0 - 1.0 / scales.big_r > -1.0


@dataclass(frozen=True)
class FluxResidual:
    """Result of the discrete J(x) = 0 verification.

    residual   : max |J| / max(a1*|x|*P) over the interior
    truncation : same measure recomputed on a 2x coarser subsampling,
                 scaled down by 16 (4th-order differencing)
    conclusive : True when the residual clearly exceeds the finite-
                 difference noise floor, i.e. certifies a genuine J != 0
    """

    residual: float
    truncation: float
    conclusive: bool


def _current(x, p, dx, coeffs):
    # 4th-order central first and second derivatives on the interior
    p1 = (-p[4:] + 8 * p[3:-1] - 8 * p[1:-3] + p[:-4]) / (12 * dx)
    p2 = (-p[4:] + 16 * p[3:-1] - 30 * p[2:-2] + 16 * p[1:-3] - p[:-4]) / (12 * dx**2)
    xi = x[2:-2]
    pi = p[2:-2]
    return (coeffs.a1 * xi * pi + (coeffs.d0 + coeffs.d2 * xi**2) * p1
            + coeffs.c1 * xi * p2), xi, pi


def flux_residual(pdf: GridPdf, coeffs: FluxCoefficients) -> FluxResidual:
    """Normalized max |J(x)| of a smooth grid PDF under the given current."""
    def measure(x, p, dx):
        j, xi, pi = _current(x, p, dx, coeffs)
        scale = float(np.max(coeffs.a1 * np.abs(xi) * pi))
        return float(np.max(np.abs(j))) / scale

    x, p, dx = pdf.x, pdf.values, pdf.grid.dx
    res = measure(x, p, dx)
    res_2h = measure(x[::2], p[::2], 2 * dx)
    truncation = res_2h / 16.0
    return FluxResidual(residual=res, truncation=truncation,
                        conclusive=res > 10.0 * truncation)
