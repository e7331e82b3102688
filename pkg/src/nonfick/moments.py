"""Moment hierarchy of the third-order master equation.

Each moment obeys a linear ODE coupled only to the moment two orders below:

    d<x^n>/dt = -n*gamma*(1 - n*delta^2/(gamma*tau)) <x^n>
                + n*(n-1)*D_f*(1 - n*delta*r) <x^{n-2}>

so the system is lower triangular with eigenvalues on the diagonal,
independent of D_f and r.  The n-th moment exists at equilibrium only when
1 - n*delta^2/(gamma*tau) > 0 (strictly); marginal equality counts as
divergent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .model import DerivedScales, ModelParams


class Divergent:
    """Tagged value for non-existent equilibrium moments (prints as inf)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Divergent"

    def __float__(self):
        return math.inf


DIVERGENT = Divergent()


@dataclass(frozen=True)
class MomentState:
    """Moments <x^0> .. <x^n_max> at one instant (all orders, even and odd)."""

    n_max: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if self.n_max < 2 or self.n_max % 2:
            raise ValueError("n_max must be even and >= 2")
        if v.shape != (self.n_max + 1,):
            raise ValueError("values must hold orders 0..n_max")
        if v[0] != 1.0:
            raise ValueError("<x^0> must be 1")
        if np.any(v[2::2] < 0):
            raise ValueError("even moments must be >= 0")
        object.__setattr__(self, "values", v)

    def __getitem__(self, n: int) -> float:
        return float(self.values[n])


def decay_rate(n: int, scales: DerivedScales, params: ModelParams) -> float:
    """Relaxation rate n*gamma*(1 - n*delta^2/(gamma*tau)) of <x^n>."""
    return n * params.gamma * (1.0 - n * scales.delta**2 / scales.gamma_tau)


def moment_generator_matrix(n_max: int, scales: DerivedScales,
                            params: ModelParams) -> np.ndarray:
    """Lower-bidiagonal generator on moment orders 0..n_max.

    Row n: diagonal -n*gamma*(1 - n*delta^2/(gamma*tau)), sub-entry at
    column n-2 equal to n*(n-1)*D_f*(1 - n*delta*r).
    """
    if n_max < 2 or n_max % 2:
        raise ValueError("n_max must be even and >= 2")
    m = np.zeros((n_max + 1, n_max + 1))
    for n in range(1, n_max + 1):
        m[n, n] = -decay_rate(n, scales, params)
        if n >= 2:
            m[n, n - 2] = n * (n - 1) * params.d_f * (1.0 - n * scales.big_r)
    return m


def moment_exists(n: int, scales: DerivedScales) -> bool:
    if n % 2:
        return True  # odd moments are identically zero
    if scales.delta == 0.0:
        return True
    return 1.0 - n * scales.delta**2 / scales.gamma_tau > 0.0


def equilibrium_moment(n: int, scales: DerivedScales, params: ModelParams):
    """Equilibrium <x^n>: 0 for odd n, the double-factorial product for
    even n, or DIVERGENT when the existence condition fails."""
    if n < 1:
        return 1.0 if n == 0 else None
    if n % 2:
        return 0.0
    if not moment_exists(n, scales):
        return DIVERGENT
    val = (params.d_f / params.gamma) ** (n // 2) * math.prod(
        range(1, n, 2))  # (n-1)!!
    for j in range(1, n // 2 + 1):
        val *= (1.0 - 2 * j * scales.big_r) / (
            1.0 - 2 * j * scales.delta**2 / scales.gamma_tau)
    return val


def evolve_moments(state0: MomentState, matrix: np.ndarray, t: float) -> MomentState:
    """Propagate the triangular system by the exact matrix exponential."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if matrix.shape != (state0.n_max + 1, state0.n_max + 1):
        raise ValueError("matrix/state size mismatch")
    vals = expm(matrix * t) @ state0.values
    vals[0] = 1.0
    # wipe the rounding dust on odd orders when starting symmetric
    if np.all(state0.values[1::2] == 0.0):
        vals[1::2] = 0.0
    return MomentState(state0.n_max, vals)


def moment_table(n_max: int, scales: DerivedScales, params: ModelParams):
    """Rows (n, equilibrium-or-DIVERGENT, decay rate, exists) for the CLI."""
    rows = []
    for n in range(1, n_max + 1):
        rows.append((n, equilibrium_moment(n, scales, params),
                     decay_rate(n, scales, params), moment_exists(n, scales)))
    return rows
