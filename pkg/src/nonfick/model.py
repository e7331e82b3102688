"""Physical parameters, correlation kernels and derived scales.

The model is the linear SDE

    dx/dt = -gamma*x + f(t) - epsilon*x*xi(t)

where f(t) is white noise with <f(t)f(t')> = 2*D_f*delta(t-t') (so the
unperturbed generator carries exactly D_f d^2/dx^2) and xi(t) is a
unit-variance Gaussian process with normalized autocorrelation phi(u),
phi(0) = 1 and tau = integral of phi.

Everything downstream (flux coefficients, equilibria, moments) consumes the
dimensionless scales computed here:

    delta = epsilon*tau        perturbation strength
    theta = (tau - phi_hat(2*gamma)) / (gamma*tau)   memory time, theta < 1/gamma
    r     = epsilon*theta
    R     = delta*r            strength of the non-Fick flux term
    alpha = gamma*tau/delta**2 + 1                   tail exponent of the PDF
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class KernelError(ValueError):
    """Raised for non-integrable or malformed correlation kernels."""


@dataclass(frozen=True)
class ModelParams:
    """Physical inputs of the SDE.

    gamma   : relaxation rate of the drift, > 0              [1/time]
    epsilon : multiplicative noise strength, >= 0             [1/time]
    tau     : correlation time of xi (integral of phi), > 0   [time]
    d_f     : diffusion coefficient of the additive noise,
              convention <f(t)f(t')> = 2*d_f*delta(t-t'), >= 0  [x^2/time]
    """

    gamma: float
    epsilon: float
    tau: float
    d_f: float

    def __post_init__(self):
        for name in ("gamma", "epsilon", "tau", "d_f"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.d_f < 0:
            raise ValueError(f"d_f must be >= 0, got {self.d_f}")

    def as_dict(self):
        return {"gamma": self.gamma, "epsilon": self.epsilon,
                "tau": self.tau, "d_f": self.d_f}


@dataclass(frozen=True)
class CorrelationKernel:
    """Normalized autocorrelation phi(u) of the multiplicative noise.

    Two variants:

    * ``OU``: phi(u) = exp(-u/tau).  No sample data; tau comes from
      :class:`ModelParams`.
    * ``TabulatedDecay``: phi given as sample pairs (u_i, phi_i) on
      [0, u_max], phi(0) = 1, decaying so the integral converges.  The
      Laplace transform is done by composite Gauss quadrature on the samples
      plus an exponential-tail completion fitted to the last decade.
    """

    variant: str = "OU"
    u: np.ndarray | None = field(default=None, repr=False)
    phi: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.variant not in ("OU", "TabulatedDecay"):
            raise ValueError(f"unknown kernel variant {self.variant!r}")
        if self.variant == "TabulatedDecay":
            if self.u is None or self.phi is None:
                raise KernelError("TabulatedDecay requires sample arrays")
            u = np.asarray(self.u, dtype=float)
            phi = np.asarray(self.phi, dtype=float)
            if u.ndim != 1 or u.shape != phi.shape or u.size < 8:
                raise KernelError("need >= 8 matching (u, phi) samples")
            if u[0] != 0.0 or abs(phi[0] - 1.0) > 1e-12:
                raise KernelError("samples must start at u=0 with phi(0)=1")
            if np.any(np.diff(u) <= 0):
                raise KernelError("u samples must be strictly increasing")
            if np.any(~np.isfinite(phi)):
                raise KernelError("phi samples must be finite")
            object.__setattr__(self, "u", u)
            object.__setattr__(self, "phi", phi)
            # integrability guard: fitted tail must decay
            if self._tail_fit()[1] <= 0:
                raise KernelError("kernel not integrable")

    def phi_at(self, u):
        """phi(u) for TabulatedDecay: cubic interpolation on the samples,
        fitted exponential beyond the last one.  Scalar or array u."""
        if self.variant != "OU":
            from scipy.interpolate import CubicSpline

            interp = CubicSpline(self.u, self.phi)
            amp, rate = self._tail_fit()
            u_arr = np.asarray(u, dtype=float)
            inside = u_arr <= self.u[-1]
            out = np.where(inside, interp(np.minimum(u_arr, self.u[-1])),
                           amp * np.exp(-rate * np.maximum(u_arr, self.u[-1]))
                           if amp > 0 else 0.0)
            return float(out) if np.isscalar(u) else out
        raise ValueError("OU kernel: evaluate exp(-u/tau) with params.tau")

    def _tail_fit(self):
        """Exponential fit A*exp(-rate*u) over the last decade of samples.

        Returns (A, rate); rate <= 0 flags a non-decaying tail.
        """
        u, phi = self.u, self.phi
        sel = u >= u[-1] / 10.0
        if np.count_nonzero(sel) < 3 or np.any(phi[sel] <= 0):
            # cannot fit a positive exponential; treat as hard truncation
            return 0.0, np.inf
        lu, lphi = u[sel], np.log(phi[sel])
        rate, logA = np.polyfit(lu, lphi, 1)
        return math.exp(logA), -rate


def laplace_phi(kernel: CorrelationKernel, s: float, tau: float | None = None) -> float:
    """Laplace transform phi_hat(s) = int_0^inf phi(u) exp(-s u) du.

    For the OU variant ``tau`` must be supplied and the closed form
    tau/(1 + s*tau) is returned.  Tabulated kernels are integrated by
    composite Gauss-Legendre over the sample intervals (cubic interpolant)
    with the fitted exponential tail appended beyond the last sample.
    """
    if s < 0:
        raise ValueError(f"s must be >= 0, got {s}")
    if kernel.variant == "OU":
        if tau is None:
            raise ValueError("OU kernel needs tau")
        return tau / (1.0 + s * tau)

    u, phi = kernel.u, kernel.phi
    # panel-wise 6-point Gauss-Legendre on a piecewise-cubic interpolant
    from scipy.interpolate import CubicSpline

    interp = CubicSpline(u, phi)
    nodes, weights = np.polynomial.legendre.leggauss(6)
    a, b = u[:-1], u[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    vals = interp(pts) * np.exp(-s * pts)
    body = float(np.sum(half[:, None] * weights[None, :] * vals))

    amp, rate = kernel._tail_fit()
    if amp == 0.0:
        tail = 0.0
    else:
        tail = amp * math.exp(-(rate + s) * u[-1]) / (rate + s)
    return body + tail


def kernel_integral(kernel: CorrelationKernel, tau: float | None = None) -> float:
    """tau := int_0^inf phi(u) du, i.e. the s=0 Laplace transform."""
    return laplace_phi(kernel, 0.0, tau)


@dataclass(frozen=True)
class DerivedScales:
    """Dimensionless scale quantities derived from (params, kernel).

    ``alpha_tail`` and ``n_max_moment`` use ``math.inf`` as the sentinel for
    the unperturbed (delta = 0) case.  ``n_max_moment`` is the largest n with
    1 - n*delta^2/(gamma*tau) > 0, strictly: marginal equality counts as
    divergent.
    """

    delta: float
    gamma_tau: float
    theta: float
    r: float
    big_r: float
    alpha_tail: float
    n_max_moment: float
    weak_regime_ok: bool

    def as_dict(self):
        return {
            "delta": self.delta, "gamma_tau": self.gamma_tau,
            "theta": self.theta, "r": self.r, "big_r": self.big_r,
            "alpha_tail": self.alpha_tail, "n_max_moment": self.n_max_moment,
            "weak_regime_ok": self.weak_regime_ok,
        }


def derived_scales(params: ModelParams, kernel: CorrelationKernel | None = None) -> DerivedScales:
    """Compute all derived scales; kernel defaults to OU."""
    if kernel is None:
        kernel = CorrelationKernel("OU")
    if kernel.variant == "TabulatedDecay":
        t_int = kernel_integral(kernel)
        if abs(t_int - params.tau) > 1e-3 * params.tau:
            raise KernelError(
                f"params.tau={params.tau} must equal the kernel integral "
                f"{t_int:.6g} (tau is defined as int phi du)")
    delta = params.epsilon * params.tau
    gamma_tau = params.gamma * params.tau
    phi_hat = laplace_phi(kernel, 2.0 * params.gamma, params.tau)
    theta = (params.tau - phi_hat) / gamma_tau
    r = params.epsilon * theta
    big_r = delta * r
    if delta == 0.0:
        alpha = math.inf
        n_max = math.inf
    else:
        q = gamma_tau / delta**2
        alpha = q + 1.0
        n_max = math.floor(q) if math.floor(q) < q else int(q) - 1
    return DerivedScales(
        delta=delta, gamma_tau=gamma_tau, theta=theta, r=r, big_r=big_r,
        alpha_tail=alpha, n_max_moment=n_max, weak_regime_ok=big_r < 1.0,
    )


def tabulate_kernel(fn, u_max: float, n: int = 2048) -> CorrelationKernel:
    """Sample a callable phi(u) into a TabulatedDecay kernel."""
    u = np.linspace(0.0, u_max, n)
    return CorrelationKernel("TabulatedDecay", u=u, phi=np.asarray([fn(x) for x in u]))
