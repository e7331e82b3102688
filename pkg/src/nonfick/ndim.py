"""N-dimensional third-order master-equation coefficients.

For dx/dt = -E x + f(t) - eps*G*xi(t) x  (E, G constant matrices, f white
with diffusion matrix D, xi scalar colored noise with autocorrelation phi),
the second-cumulant master equation needs two correlation-weighted kernels:

    K_drift = int_0^inf phi(u) L(u) du,           L(u) = exp(-Eu) G exp(Eu)
    K_third = 2 int_0^inf phi(u) L(u) M(u) du,    M(u) = int_0^u exp(-Es) D exp(-E^T s) ds

which multiply the x-linear and the gradient part of the perturbation term.
The memory kernel M uses decaying propagators exp(-E s) D exp(-E^T s); the
growing-propagator alternative exp(+E s) D exp(+E^T s) diverges for stable E
with slowly decaying kernels and breaks the scalar reduction
(K_drift -> tau, K_third -> D_f*tau*theta), so the decaying form is the one
implemented.

Scalar sanity: for n = 1, E = gamma, G = 1, D = D_f and an OU kernel,
eps^2*K_drift and eps^2*K_third reproduce the d2 and c1 flux coefficients
of the one-dimensional module exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, solve_continuous_lyapunov

from .model import CorrelationKernel

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


class ConvergenceError(RuntimeError):
    pass


def _expm(m: np.ndarray) -> np.ndarray:
    if m.shape == (1, 1):
        return np.array([[math.exp(m[0, 0])]])
    return expm(m)


@dataclass(frozen=True)
class NdModel:
    """Matrices and kernel of the N-dimensional model."""

    e_matrix: np.ndarray = field(repr=False)
    d_matrix: np.ndarray = field(repr=False)
    g_matrix: np.ndarray = field(repr=False)
    epsilon: float
    tau: float
    kernel: CorrelationKernel = CorrelationKernel("OU")

    def __post_init__(self):
        e = np.atleast_2d(np.asarray(self.e_matrix, dtype=float))
        d = np.atleast_2d(np.asarray(self.d_matrix, dtype=float))
        g = np.atleast_2d(np.asarray(self.g_matrix, dtype=float))
        n = e.shape[0]
        for name, m in (("E", e), ("D", d), ("G", g)):
            if m.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}")
        if np.max(np.abs(d - d.T)) > 1e-12 * max(1.0, np.max(np.abs(d))):
            raise ValueError("D must be symmetric within 1e-12")
        if np.min(np.linalg.eigvals(e).real) <= 0:
            raise ValueError("all eigenvalues of E must have positive real part")
        if self.epsilon < 0 or self.tau <= 0:
            raise ValueError("need epsilon >= 0 and tau > 0")
        object.__setattr__(self, "e_matrix", e)
        object.__setattr__(self, "d_matrix", d)
        object.__setattr__(self, "g_matrix", g)

    @property
    def n(self) -> int:
        return self.e_matrix.shape[0]

    @property
    def centered_e(self) -> np.ndarray:
        """E minus its mean eigenvalue; the scalar shift cancels in the
        conjugation exp(-Eu) G exp(Eu), which only grows with the spread."""
        if "e0" not in self.__dict__:
            mu = float(np.trace(self.e_matrix)) / self.n
            self.__dict__["e0"] = self.e_matrix - mu * np.eye(self.n)
        return self.__dict__["e0"]

    @property
    def spectral_spread(self) -> float:
        if "spec" not in self.__dict__:
            val = float(np.max(np.abs(np.linalg.eigvals(self.centered_e))))
            self.__dict__["spec"] = val
        return self.__dict__["spec"]

    def phi(self, u: float) -> float:
        if self.kernel.variant == "OU":
            return math.exp(-u / self.tau)
        return self.kernel.phi_at(u)


@dataclass(frozen=True)
class NdCoefficients:
    k_drift: np.ndarray = field(repr=False)
    k_third: np.ndarray = field(repr=False)
    err_drift: float = 0.0
    err_third: float = 0.0


def lie_evolved_coupling(model: NdModel, u: float) -> np.ndarray:
    """exp(-E u) G exp(E u) by scaling-and-squaring matrix exponentials.

    Computed with the trace-centered E (the scalar part of the spectrum
    cancels in the conjugation), so overflow can only come from a genuine
    spectral spread."""
    if u < 0:
        raise ValueError("u must be >= 0")
    if u * model.spectral_spread > 300.0:
        raise OverflowError("u * spectral spread of E too large for the "
                            "Lie factor")
    em = _expm(-model.centered_e * u)
    ep = _expm(model.centered_e * u)
    out = em @ model.g_matrix @ ep
    if not np.isfinite(out).all():
        raise OverflowError("Lie factor overflowed")
    return out


def _gl_panel(fn, a, b):
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    acc = None
    for xi, wi in zip(_GL_NODES, _GL_WEIGHTS):
        v = fn(mid + half * xi)
        acc = wi * v if acc is None else acc + wi * v
    return half * acc


def _adaptive_matrix_quad(fn, a, b, tol):
    """Panel-doubling Gauss-Legendre; returns (integral, error_estimate)."""
    coarse = _gl_panel(fn, a, b)
    for depth in range(14):
        n_panels = 2 ** (depth + 1)
        edges = np.linspace(a, b, n_panels + 1)
        fine = sum(_gl_panel(fn, lo, hi) for lo, hi in zip(edges, edges[1:]))
        err = float(np.max(np.abs(fine - coarse)))
        if err <= tol * max(1.0, float(np.max(np.abs(fine)))):
            return fine, err
        coarse = fine
    raise ConvergenceError("panel refinement stalled")


def noise_gramian(model: NdModel, u: float) -> np.ndarray:
    """M(u) = int_0^u exp(-Es) D exp(-E^T s) ds; u = math.inf allowed.

    The stationary case solves E M + M E^T = D algebraically.
    """
    if u == 0:
        return np.zeros_like(model.d_matrix)
    if math.isinf(u):
        return solve_continuous_lyapunov(model.e_matrix, model.d_matrix)
    if u < 0:
        raise ValueError("u must be >= 0")

    def integrand(s):
        em = _expm(-model.e_matrix * s)
        return em @ model.d_matrix @ em.T

    m, err = _adaptive_matrix_quad(integrand, 0.0, u, 1e-12)
    norm = max(float(np.max(np.abs(m))), 1e-300)
    if err > 1e-9 * norm:
        raise ConvergenceError(f"gramian quadrature error {err:.2e} above "
                               f"1e-9 of ||M||={norm:.2e}")
    return m


def nd_coefficients(model: NdModel, tol: float = 1e-10) -> NdCoefficients:
    """Correlation-weighted kernels K_drift and K_third by adaptive
    quadrature over u, truncated where the kernel decay dominates."""
    n = model.n
    # M(u) = M_inf - exp(-Eu) M_inf exp(-E^T u): exact via the stationary
    # Lyapunov solution, so only the outer u-integral needs quadrature
    m_inf = solve_continuous_lyapunov(model.e_matrix, model.d_matrix)

    def f_drift(u):
        return model.phi(u) * lie_evolved_coupling(model, u)

    def f_third(u):
        lie = lie_evolved_coupling(model, u)
        em = _expm(-model.e_matrix * u)   # decaying propagator, safe
        m_u = m_inf - em @ m_inf @ em.T
        return 2.0 * model.phi(u) * (lie @ m_u)

    def accumulate(fn):
        total = np.zeros((n, n))
        err_total = 0.0
        width = model.tau
        a = 0.0
        tail_ref = None
        for k in range(200):
            part, err = _adaptive_matrix_quad(fn, a, a + width, tol)
            total += part
            err_total += err
            scale = max(float(np.max(np.abs(total))), 1e-300)
            contrib = float(np.max(np.abs(part)))
            if tail_ref is not None and contrib > tail_ref * 1.0000001 and k > 3:
                raise ConvergenceError("correlation too long for spectral gap")
            tail_ref = contrib
            a += width
            if contrib < 1e-13 * scale:
                return total, err_total
        raise ConvergenceError("correlation too long for spectral gap")

    k_drift, e_drift = accumulate(f_drift)
    k_third, e_third = accumulate(f_third)
    return NdCoefficients(k_drift=k_drift, k_third=k_third,
                          err_drift=e_drift, err_third=e_third)


def scalar_flux_terms(model: NdModel) -> tuple[float, float, float]:
    """For a 1x1 model return (a1, d2, c1) of the one-dimensional current."""
    if model.n != 1:
        raise ValueError("scalar reduction needs n = 1")
    co = nd_coefficients(model)
    e2 = model.epsilon ** 2
    gamma = float(model.e_matrix[0, 0])
    return (gamma + e2 * float(co.k_drift[0, 0]),
            e2 * float(co.k_drift[0, 0]),
            e2 * float(co.k_third[0, 0]))
