"""Uniform 1-D grids and grid-sampled PDFs (finite-volume convention).

Densities live at cell centers x_i = x_min + (i + 1/2)*dx.  Reflecting
(zero-flux) boundaries sit at x_min and x_max.  A normalized ``GridPdf`` may
carry a small ``tail_mass`` accounting for the analytic power-law completion
outside the grid, so that ``mass + tail_mass`` is 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson


@dataclass(frozen=True)
class UniformGrid:
    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if not (self.x_max > self.x_min):
            raise ValueError("need x_max > x_min")
        if self.n_cells < 8:
            raise ValueError("need n_cells >= 8")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def faces(self) -> np.ndarray:
        return self.x_min + np.arange(self.n_cells + 1) * self.dx

    def is_symmetric(self, tol=1e-12) -> bool:
        return abs(self.x_min + self.x_max) <= tol * max(1.0, abs(self.x_max))


def symmetric_grid(x_max: float, n_cells: int = 4096) -> UniformGrid:
    return UniformGrid(-x_max, x_max, n_cells)


@dataclass(frozen=True)
class GridPdf:
    """PDF sampled on a uniform grid with reflecting-boundary metadata."""

    grid: UniformGrid
    values: np.ndarray = field(repr=False)
    boundary: str = "Reflecting"
    tail_mass: float = 0.0
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_cells,):
            raise ValueError("values shape must match grid.n_cells")
        peak = float(np.max(v)) if v.size else 0.0
        if v.size and float(np.min(v)) < -1e-6 * max(peak, 1e-300):
            raise ValueError("density has non-negligible negative values")
        object.__setattr__(self, "values", v)

    @property
    def x(self) -> np.ndarray:
        return self.grid.centers

    @property
    def mass(self) -> float:
        """Simpson integral of the density over the grid (cached)."""
        if "mass" not in self.meta:
            self.meta["mass"] = float(simpson(self.values, x=self.x))
        return self.meta["mass"]

    def moment(self, n: int) -> float:
        """n-th moment by Simpson quadrature on the grid (no tail term)."""
        return float(simpson(self.values * self.x**n, x=self.x))

    def interp(self, xq: np.ndarray) -> np.ndarray:
        return np.interp(xq, self.x, self.values)

    def to_csv(self, path, header: dict | None = None):
        hdr = dict(self.meta.get("header", {}))
        if header:
            hdr.update(header)
        hdr.setdefault("boundary", self.boundary)
        hdr.setdefault("tail_mass", repr(float(self.tail_mass)))
        with open(path, "w") as fh:
            for k, v in hdr.items():
                fh.write(f"# {k}={v}\n")
            fh.write("x,density\n")
            for xi, pi in zip(self.x, self.values):
                fh.write(f"{float(xi)!r},{float(pi)!r}\n")

    @staticmethod
    def from_csv(path) -> "GridPdf":
        hdr, xs, ps = {}, [], []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    k, _, v = line[1:].strip().partition("=")
                    hdr[k.strip()] = v.strip()
                elif not line.startswith("x,"):
                    a, b = line.split(",")
                    xs.append(float(a))
                    ps.append(float(b))
        x = np.asarray(xs)
        dx = x[1] - x[0]
        grid = UniformGrid(x[0] - dx / 2, x[-1] + dx / 2, len(x))
        return GridPdf(grid, np.asarray(ps),
                       boundary=hdr.get("boundary", "Reflecting"),
                       tail_mass=float(hdr.get("tail_mass", 0.0)),
                       meta={"header": hdr})


def l1_distance(a: GridPdf, b: GridPdf) -> float:
    """L1 distance of two densities on the same grid."""
    if a.grid != b.grid:
        raise ValueError("grids differ; interpolate first")
    return float(np.sum(np.abs(a.values - b.values)) * a.grid.dx)
