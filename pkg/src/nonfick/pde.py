"""Direct evolver for the third-order master equation in flux form.

dP/dt = d/dx J with J = a1*x*P + (d0 + d2*x^2)*dP/dx + c1*x*d2P/dx2,
discretized finite-volume style: fluxes live on cell faces, the drift uses
a second-order upwind-biased face value, diffusion a central difference and
the third-order term a 4-point centered second derivative at the face.
Reflecting boundaries impose J = 0 at the domain edges exactly, so every
face flux enters two cell updates with opposite signs and the total mass
telescopes to machine precision.

Time stepping is Crank-Nicolson with banded direct solves; after each
solve the update is re-applied in conservative face-flux form, which keeps
the cumulative mass drift at rounding level over ~1e5 steps.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded

from .grid import GridPdf, UniformGrid

__all__ = ["EvolveConfig", "BandedGenerator", "build_generator", "evolve",
           "steady_state", "EvolveResult", "AssemblyError"]


class AssemblyError(RuntimeError):
    """Discrete operator failed the conservation (column-sum) check."""


@dataclass(frozen=True)
class EvolveConfig:
    dt: float
    t_end: float
    scheme: str = "CrankNicolsonBanded"
    steady_tol: float = 1e-9   # threshold on ||P(t+dt)-P(t)||_1 / dt

    def __post_init__(self):
        if self.dt <= 0 or self.t_end <= 0 or self.steady_tol <= 0:
            raise ValueError("dt, t_end and steady_tol must be positive")
        if self.scheme != "CrankNicolsonBanded":
            raise ValueError(f"unknown scheme {self.scheme!r}")


class BandedGenerator:
    """Discrete dP/dt = A P with A banded (bandwidth <= 5) and the matching
    face-flux form for exactly conservative updates."""

    def __init__(self, coeffs, grid: UniformGrid):
        if grid.n_cells < 64:
            raise ValueError("need n_cells >= 64")
        self.coeffs = coeffs
        self.grid = grid
        if coeffs.d2 > 0 and coeffs.a1 / coeffs.d2 <= 3.0:
            warnings.warn("tail exponent <= 3: the true variance diverges; "
                          "the truncated domain regularizes it", stacklevel=3)
        self._faces = self._face_weights()
        self.matrix = self._assemble()
        self._check_conservation()

    # -- assembly -----------------------------------------------------
    def _face_weights(self):
        """Sparse (n_cells+1, n_cells) matrix W: face fluxes G = W @ P."""
        n = self.grid.n_cells
        dx = self.grid.dx
        xf = self.grid.faces
        c = self.coeffs
        rows, cols, vals = [], [], []

        def add(f, j, w):
            # reflecting ghosts: fold exterior columns onto the edge cells
            j = 0 if j < 0 else (n - 1 if j > n - 1 else j)
            rows.append(f)
            cols.append(j)
            vals.append(w)

        for f in range(1, n):           # interior faces only; edges stay 0
            x = xf[f]
            # drift a1*x*P with 2nd-order upwind-biased face value;
            # probability advects toward the origin
            if x > 0:
                add(f, f, 1.5 * c.a1 * x)
                add(f, f + 1, -0.5 * c.a1 * x)
            elif x < 0:
                add(f, f - 1, 1.5 * c.a1 * x)
                add(f, f - 2, -0.5 * c.a1 * x)
            # diffusion (d0 + d2 x^2) dP/dx, central at the face
            dcoef = (c.d0 + c.d2 * x * x) / dx
            add(f, f, dcoef)
            add(f, f - 1, -dcoef)
            # third-order c1*x*d2P/dx2, 4-point centered at the face
            tcoef = c.c1 * x / (2.0 * dx * dx)
            add(f, f - 2, tcoef)
            add(f, f - 1, -tcoef)
            add(f, f, -tcoef)
            add(f, f + 1, tcoef)
        return sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n))

    def _assemble(self):
        # (A P)_i = (G_{i+1} - G_i)/dx
        n = self.grid.n_cells
        diff = sp.diags([-np.ones(n), np.ones(n)], [0, 1],
                        shape=(n, n + 1), format="csr")
        return (diff @ self._faces).tocsr() / self.grid.dx

    def _check_conservation(self):
        a = self.matrix
        colsums = np.asarray(np.abs(a.sum(axis=0))).ravel()
        scale = max(1.0, np.abs(a.data).max())
        if colsums.max() > 1e-13 * scale:
            raise AssemblyError(
                f"column sums {colsums.max():.3e} exceed 1e-13 of the "
                f"operator scale {scale:.3e}")
        lo, hi = self.bandwidths()
        if lo > 2 or hi > 2:
            raise AssemblyError(f"bandwidth ({lo},{hi}) exceeds (2,2)")

    def bandwidths(self):
        coo = self.matrix.tocoo()
        d = coo.col - coo.row
        return int(-d.min()), int(d.max())

    # -- application --------------------------------------------------
    def apply(self, p: np.ndarray) -> np.ndarray:
        """A P in conservative face-flux form (mass-exact)."""
        g = self._faces @ p
        return np.diff(g) / self.grid.dx

    def banded_ab(self, shift: float, scale: float):
        """(shift*I + scale*A) in solve_banded's (2,2) ab layout."""
        n = self.grid.n_cells
        m = (shift * sp.identity(n, format="csr") + scale * self.matrix).tocoo()
        ab = np.zeros((5, n))
        ab[2 + m.row - m.col, m.col] += m.data
        return ab


def build_generator(coeffs, grid: UniformGrid) -> BandedGenerator:
    return BandedGenerator(coeffs, grid)


@dataclass
class EvolveResult:
    times: list
    snapshots: list            # GridPdf per requested time
    mass: np.ndarray           # mass at every step (Riemann sum)
    min_density: float
    steady_residual: float     # last ||dP||_1/dt
    steps: int
    undershoot_warned: bool


def _cn_stepper(gen: BandedGenerator, dt: float):
    ab = gen.banded_ab(1.0, -0.5 * dt)
    half = 0.5 * dt

    def step(p):
        rhs = p + half * (gen.matrix @ p)
        p_impl = solve_banded((2, 2), ab, rhs)
        # conservative recompute of the same CN update from face fluxes
        g = gen._faces @ ((p + p_impl) * 0.5)
        return p + (dt / gen.grid.dx) * np.diff(g)

    return step


def evolve(p0: GridPdf, gen: BandedGenerator, config: EvolveConfig,
           snapshot_times=()) -> EvolveResult:
    """Crank-Nicolson march recording snapshots; tracks mass and undershoot."""
    if p0.grid != gen.grid:
        raise ValueError("initial PDF lives on a different grid")
    dx = gen.grid.dx
    p = p0.values.copy()
    step = _cn_stepper(gen, config.dt)
    n_steps = int(round(config.t_end / config.dt))
    want = sorted(set(min(int(round(t / config.dt)), n_steps)
                      for t in snapshot_times))
    times, snaps = [], []
    mass = np.empty(n_steps + 1)
    mass[0] = p.sum() * dx
    min_density = float(p.min())
    residual = math.inf
    warned = False
    for k in range(1, n_steps + 1):
        p_new = step(p)
        residual = float(np.abs(p_new - p).sum()) * dx / config.dt
        p = p_new
        mass[k] = p.sum() * dx
        mn = float(p.min())
        min_density = min(min_density, mn)
        if not warned and mn < -1e-6 * max(float(p.max()), 1e-300):
            warnings.warn(f"negative density undershoot {mn:.3e} at "
                          f"t={k * config.dt:.3f} (dispersive third-order "
                          "term)", stacklevel=2)
            warned = True
        if not np.isfinite(p).all():
            raise RuntimeError(f"solver breakdown at step {k}")
        if want and k == want[0]:
            want.pop(0)
            times.append(k * config.dt)
            snaps.append(GridPdf(gen.grid, p.copy()))
    return EvolveResult(times=times, snapshots=snaps, mass=mass,
                        min_density=min_density, steady_residual=residual,
                        steps=n_steps, undershoot_warned=warned)


def steady_state(gen: BandedGenerator, config: EvolveConfig,
                 p_init: GridPdf) -> tuple[GridPdf, float]:
    """March to stationarity; returns (normalized steady PDF, residual).

    Raises RuntimeError when the stationarity threshold is not reached
    within t_end.
    """
    if p_init.grid != gen.grid:
        raise ValueError("initial PDF lives on a different grid")
    dx = gen.grid.dx
    p = p_init.values.copy()
    step = _cn_stepper(gen, config.dt)
    n_steps = int(round(config.t_end / config.dt))
    check = max(1, int(round(0.5 / config.dt)))
    residual = math.inf
    for k in range(1, n_steps + 1):
        p_new = step(p)
        if k % check == 0 or k == n_steps:
            residual = float(np.abs(p_new - p).sum()) * dx / config.dt
            if not np.isfinite(residual):
                raise RuntimeError(f"solver breakdown at step {k}")
            if residual < config.steady_tol:
                p = p_new
                break
        p = p_new
    else:
        raise RuntimeError(
            f"no steady state within t_end={config.t_end}: residual "
            f"{residual:.3e} > steady_tol {config.steady_tol:.3e}")
    total = p.sum() * dx
    return GridPdf(gen.grid, p / total), residual
