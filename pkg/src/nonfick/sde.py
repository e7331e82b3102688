"""Monte Carlo ground truth for the SDE dx = -(gamma + eps*xi)x dt + dW.

The colored noise xi is an exact-discretized Ornstein-Uhlenbeck process with
unit stationary variance; the smooth multiplicative term is advanced with a
Heun (trapezoidal) update, consistent with the Stratonovich white-noise
limit; the additive noise enters as sqrt(2*D_f*dt) per step.

Determinism contract: every trajectory draws from its own counter-based
stream (Philox keyed by (seed, trajectory index)), trajectories are
processed in fixed-size chunks, and all floating-point reductions happen in
chunk-index order.  Results are therefore bit-identical for a given seed no
matter how many worker processes run the chunks.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from .model import ModelParams

CHUNK = 256  # trajectories per work unit; fixed, or determinism breaks
_BLOCK_TARGET = 500_000  # step*trajectory entries per noise block


class DivergenceError(RuntimeError):
    """Raised when too many trajectories overflow (unstable step size)."""


@dataclass(frozen=True)
class SimConfig:
    """Simulation controls.

    x0 = None draws the initial condition from the delta = 0 Gaussian
    (variance D_f/gamma); an explicit x0 starts every trajectory there and
    lifts the burn-in floor (relaxation studies need t_burn = 0).
    """

    dt: float
    t_burn: float
    t_end: float
    n_traj: int
    seed: int
    stride: int = 10
    scheme: str = "HeunStratonovich"
    x0: float | None = None
    hist_bins: int = 201
    hist_range: tuple[float, float] | None = None
    record_trace: bool = False
    # (b1, b2, alpha): adds a tail-completed second-moment trace row; the
    # truncated mean E[x^2 ^ b2^2] is completed analytically with the exact
    # tail exponent alpha, amplitude fitted from counts in b1 <= |x| <= b2.
    # Tames the infinite-variance estimator noise of heavy-tailed x^2.
    trace_tail: tuple[float, float, float] | None = None
    checkpoints: tuple[int, ...] = ()
    burst_threshold: float | None = None

    def __post_init__(self):
        if self.dt <= 0 or self.t_end <= self.t_burn or self.t_burn < 0:
            raise ValueError("need dt > 0 and t_end > t_burn >= 0")
        if self.n_traj < 1 or self.stride < 1:
            raise ValueError("need n_traj >= 1 and stride >= 1")
        if self.scheme != "HeunStratonovich":
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @property
    def burn_steps(self) -> int:
        return int(round(self.t_burn / self.dt))

    @property
    def n_rec(self) -> int:
        total = int(round((self.t_end - self.t_burn) / self.dt))
        return total // self.stride

    @property
    def n_steps(self) -> int:
        return self.burn_steps + self.n_rec * self.stride


def validate_config(params: ModelParams, config: SimConfig):
    """Stability and burn-in guards; raises ValueError outside the rules."""
    dt_max = 0.05 * min(params.tau, 1.0 / params.gamma,
                        1.0 / (params.gamma + 4.0 * params.epsilon))
    if config.dt > dt_max * (1 + 1e-12):
        raise ValueError(f"dt={config.dt} exceeds stability guard {dt_max:.4g}")
    if config.x0 is None:
        burn_min = 10.0 * max(params.tau, 1.0 / params.gamma)
        if config.t_burn < burn_min * (1 - 1e-12):
            raise ValueError(f"t_burn={config.t_burn} below burn-in floor "
                             f"{burn_min:.4g}")
    if config.n_rec < 1:
        raise ValueError("no recorded samples: increase t_end or cut stride")


def ou_step(xi, dt: float, noise, tau: float):
    """Exact OU transition xi' = xi e^{-dt/tau} + sqrt(1-e^{-2dt/tau}) eta."""
    if dt <= 0 or tau <= 0:
        raise ValueError("need dt > 0 and tau > 0")
    decay = math.exp(-dt / tau)
    return xi * decay + math.sqrt(1.0 - decay * decay) * noise


def _traj_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(
        np.random.SeedSequence(seed, spawn_key=(index,))))


def _chunk_worker(args):
    """Simulate trajectories [lo, hi) and return chunk accumulators."""
    params, config, lo, hi, keep_samples = args
    gamma, eps, tau, d_f = (params.gamma, params.epsilon, params.tau,
                            params.d_f)
    dt = config.dt
    width = hi - lo
    rngs = [_traj_rng(config.seed, i) for i in range(lo, hi)]

    decay = math.exp(-dt / tau)
    ou_amp = math.sqrt(1.0 - decay * decay)
    add_amp = math.sqrt(2.0 * d_f * dt)
    hdt = 0.5 * dt
    hdt2 = 0.5 * dt * dt

    # initial draws come first in each stream: (xi0, x0)
    init = np.empty((2, width))
    for j, rng in enumerate(rngs):
        init[:, j] = rng.standard_normal(2)
    xi = init[0].copy()
    if config.x0 is None:
        x = init[1] * math.sqrt(d_f / gamma)
    else:
        x = np.full(width, float(config.x0))

    n_steps = config.n_steps
    burn_steps = config.burn_steps
    stride = config.stride
    block = max(stride, int(_BLOCK_TARGET / max(width, 1)) // stride * stride)

    edges, aux_edges = _hist_edges(params, config)
    counts = np.zeros(len(edges) - 1, dtype=np.int64)
    n_below = n_above = 0
    aux_counts = np.zeros(len(aux_edges) - 1, dtype=np.int64)

    msum = np.zeros((4, width))          # per-trajectory sums of x..x^4
    n_neg = np.zeros(width, dtype=np.int64)
    n_burst = np.zeros(width, dtype=np.int64)

    trace_len = n_steps // stride + 1
    trace = None
    tb = config.trace_tail
    if config.record_trace:
        trace = np.zeros((4 if tb else 2, trace_len))

    def record_trace(k, x):
        x2 = x * x
        trace[0, k] = x.sum()
        trace[1, k] = x2.sum()
        if tb:
            trace[2, k] = np.minimum(x2, tb[1] * tb[1]).sum()
            ax = np.abs(x)
            trace[3, k] = np.count_nonzero((ax >= tb[0]) & (ax <= tb[1]))

    if trace is not None:
        record_trace(0, x)

    ck_idx = [c // config.n_traj for c in config.checkpoints]
    ck_sums = np.zeros((len(ck_idx), width))
    x2run = np.zeros(width)

    samples = [] if keep_samples else None
    noise = np.empty((block, width, 2))
    rec_count = 0
    g = 0
    while g < n_steps:
        nb = min(block, n_steps - g)
        for j, rng in enumerate(rngs):
            noise[:nb, j, :] = rng.standard_normal((nb, 2))
        # exact OU recursion for the whole block, then Heun factors
        xi_block, zf = lfilter([ou_amp], [1.0, -decay], noise[:nb, :, 0],
                               axis=0, zi=(decay * xi)[None, :])
        lam_prev = gamma + eps * xi
        lam = gamma + eps * xi_block
        lam0 = np.vstack([lam_prev[None, :], lam[:-1]])
        amp_fac = 1.0 - hdt * (lam0 + lam) + hdt2 * (lam0 * lam)
        for s in range(nb):
            x = amp_fac[s] * x + add_amp * noise[s, :, 1]
            gs = g + s + 1
            if trace is not None and gs % stride == 0:
                record_trace(gs // stride, x)
            if gs > burn_steps:
                if (gs - burn_steps) % stride == 0:
                    rec_count += 1
                    x2 = x * x
                    msum[0] += x
                    msum[1] += x2
                    msum[2] += x2 * x
                    msum[3] += x2 * x2
                    x2run += x2
                    n_neg += x < 0
                    if config.burst_threshold is not None:
                        n_burst += np.abs(x) > config.burst_threshold
                    c, lo_c, hi_c = _bin_counts(x, edges)
                    counts += c
                    n_below += lo_c
                    n_above += hi_c
                    aux_counts += np.histogram(np.abs(x), bins=aux_edges)[0]
                    for ci, b in enumerate(ck_idx):
                        if rec_count == b:
                            ck_sums[ci] = x2run
                    if samples is not None:
                        samples.append(x.copy())
        xi = xi_block[-1]
        g += nb

    bad = ~np.isfinite(x) | (np.abs(x) > 1e300)
    for arr in (msum, ck_sums):
        arr[..., bad] = 0.0
    return {
        "lo": lo, "width": width, "divergent": bad,
        "counts": counts, "n_below": n_below, "n_above": n_above,
        "aux_counts": aux_counts, "msum": msum, "n_neg": n_neg,
        "n_burst": n_burst, "trace": trace, "ck_sums": ck_sums,
        "rec_count": rec_count, "edges": edges, "aux_edges": aux_edges,
        "samples": None if samples is None else np.array(samples).T,
    }


def _bin_counts(x, edges):
    counts = np.histogram(x, bins=edges)[0]
    return counts, int(np.sum(x < edges[0])), int(np.sum(x > edges[-1]))


def _hist_edges(params: ModelParams, config: SimConfig):
    if config.hist_range is not None:
        lo, hi = config.hist_range
    else:
        sigma = max(_sigma_estimate(params),
                    0.4 * abs(config.x0 or 0.0), 1e-9)
        lo, hi = -5.0 * sigma, 5.0 * sigma
    edges = np.linspace(lo, hi, config.hist_bins + 1)
    aux_hi = 30.0 * max(abs(lo), abs(hi)) / 10.0
    aux_edges = np.geomspace(aux_hi / 3000.0, aux_hi, 97)
    return edges, aux_edges


def _sigma_estimate(params: ModelParams) -> float:
    from .model import derived_scales
    from .moments import DIVERGENT, equilibrium_moment

    scales = derived_scales(params)
    m2 = equilibrium_moment(2, scales, params)
    if m2 is DIVERGENT:
        return 3.0 * math.sqrt(params.d_f / params.gamma)
    return math.sqrt(m2)


@dataclass(frozen=True)
class EnsembleStats:
    """Histogram, moment estimates and diagnostics of an ensemble run."""

    hist_edges: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    n_below: int
    n_above: int
    aux_edges: np.ndarray = field(repr=False)
    aux_counts: np.ndarray = field(repr=False)
    moments: dict          # order -> (estimate, standard error)
    n_samples: int
    n_traj: int
    n_divergent: int
    frac_time_negative: float
    burst: tuple[float, float] | None
    trace: tuple[np.ndarray, np.ndarray, np.ndarray] | None
    running_m2: tuple[tuple[int, float], ...]

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.hist_edges[:-1] + self.hist_edges[1:])

    @property
    def density(self) -> np.ndarray:
        dx = np.diff(self.hist_edges)
        return self.counts / (self.n_samples * dx)

    @property
    def aux_density(self) -> np.ndarray:
        dx = np.diff(self.aux_edges)
        return self.aux_counts / (self.n_samples * dx)

    def histogram_csv(self, path, header: dict | None = None):
        with open(path, "w") as fh:
            for k, v in (header or {}).items():
                fh.write(f"# {k}={v}\n")
            fh.write("bin_center,density\n")
            for c, d in zip(self.bin_centers, self.density):
                fh.write(f"{float(c)!r},{float(d)!r}\n")

    def to_dict(self):
        return {
            "moments": {str(k): list(v) for k, v in self.moments.items()},
            "n_samples": self.n_samples,
            "n_traj": self.n_traj,
            "n_divergent": self.n_divergent,
            "frac_time_negative": self.frac_time_negative,
            "burst": list(self.burst) if self.burst else None,
            "running_m2": [list(c) for c in self.running_m2],
            "counts_total": int(self.counts.sum()),
            "n_below": self.n_below,
            "n_above": self.n_above,
        }


def integrate_trajectory(params: ModelParams, config: SimConfig,
                         seed: int | None = None, stream: int = 0):
    """One sampled path; bit-identical to member `stream` of the ensemble.

    Returns (times, xs) with samples recorded every `stride` steps after the
    burn-in.  Trajectories that overflow raise DivergenceError.
    """
    cfg = config if seed is None else replace(config, seed=seed)
    validate_config(params, cfg)
    out = _chunk_worker((params, cfg, stream, stream + 1, True))
    if out["divergent"][0]:
        raise DivergenceError("trajectory overflowed |x| > 1e300")
    times = cfg.t_burn + cfg.dt * cfg.stride * np.arange(1, cfg.n_rec + 1)
    return times, out["samples"][0]


def ensemble_stats(params: ModelParams, config: SimConfig,
                   threads: int = 1) -> EnsembleStats:
    """Run n_traj independent trajectories and aggregate deterministically."""
    validate_config(params, config)
    for c in config.checkpoints:
        if c % config.n_traj or c // config.n_traj > config.n_rec:
            raise ValueError("checkpoints must be multiples of n_traj within "
                             "the recorded sample budget")

    chunks = [(params, config, lo, min(lo + CHUNK, config.n_traj), False)
              for lo in range(0, config.n_traj, CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_chunk_worker, chunks))
    else:
        parts = [_chunk_worker(c) for c in chunks]
    parts.sort(key=lambda p: p["lo"])
    return _reduce(params, config, parts)


def _reduce(params, config, parts):
    edges = parts[0]["edges"]
    aux_edges = parts[0]["aux_edges"]
    counts = np.zeros(len(edges) - 1, dtype=np.int64)
    aux_counts = np.zeros(len(aux_edges) - 1, dtype=np.int64)
    n_below = n_above = 0
    msum = []
    divergent = []
    n_neg = 0
    n_burst = 0
    trace = None
    ck = np.zeros(len(config.checkpoints))
    for p in parts:
        counts += p["counts"]
        aux_counts += p["aux_counts"]
        n_below += p["n_below"]
        n_above += p["n_above"]
        msum.append(p["msum"])
        divergent.append(p["divergent"])
        n_neg += int(p["n_neg"].sum())
        n_burst += int(p["n_burst"].sum())
        if p["trace"] is not None:
            trace = p["trace"] if trace is None else trace + p["trace"]
        ck += p["ck_sums"].sum(axis=1)
    msum = np.concatenate(msum, axis=1)          # (4, n_traj) in index order
    divergent = np.concatenate(divergent)
    n_div = int(divergent.sum())
    if n_div > 1e-3 * config.n_traj:
        raise DivergenceError(
            f"{n_div}/{config.n_traj} trajectories diverged; "
            "parameters outside the stable regime for this dt")
    kept = ~divergent
    n_kept = int(kept.sum())
    n_rec = parts[0]["rec_count"]
    n_samples = n_kept * n_rec

    traj_means = msum[:, kept] / n_rec
    moments = {}
    for order in range(1, 5):
        m = traj_means[order - 1]
        est = float(np.mean(m))
        se = float(np.std(m, ddof=1) / math.sqrt(n_kept)) if n_kept > 1 else math.inf
        moments[order] = (est, se)

    burst = None
    if config.burst_threshold is not None:
        fracs = []
        for p in parts:
            fr = p["n_burst"][~p["divergent"]] / n_rec
            fracs.append(fr)
        fr = np.concatenate(fracs)
        burst = (float(np.mean(fr)),
                 float(np.std(fr, ddof=1) / math.sqrt(len(fr))))

    trace_out = None
    if trace is not None:
        tt = config.dt * config.stride * np.arange(trace.shape[1])
        rows = [tt, trace[0] / config.n_traj, trace[1] / config.n_traj]
        if config.trace_tail:
            b1, b2, alpha = config.trace_tail
            trunc = trace[2] / config.n_traj
            frac = trace[3] / config.n_traj
            amp = frac * (alpha - 1.0) / (
                2.0 * (b1 ** (1 - alpha) - b2 ** (1 - alpha)))
            tail = 4.0 * amp * b2 ** (3.0 - alpha) / ((alpha - 3.0) *
                                                      (alpha - 1.0))
            rows.append(trunc + tail)
        trace_out = tuple(rows)

    running = tuple(
        (c, float(ck[i] / (n_kept * (c // config.n_traj))))
        for i, c in enumerate(config.checkpoints))

    return EnsembleStats(
        hist_edges=edges, counts=counts, n_below=n_below, n_above=n_above,
        aux_edges=aux_edges, aux_counts=aux_counts, moments=moments,
        n_samples=n_samples, n_traj=n_kept, n_divergent=n_div,
        frac_time_negative=n_neg / max(n_samples, 1), burst=burst,
        trace=trace_out, running_m2=running,
    )


def fit_exponential_rate(times, values, equilibrium, t_min=0.0,
                         min_frac=0.05) -> float:
    """Asymptotic decay rate of values(t) -> equilibrium.

    Points before ``t_min`` are dropped (fast transients relax at their own
    rate before the slow mode takes over); the fit then follows the signed
    residual from t_min until it first changes sign (i.e. hits the noise
    floor) or falls below ``min_frac`` of its value at t_min.  Log residuals
    are fitted weighted by the gap (delta-method variance of the log).
    """
    v = np.asarray(values, dtype=float) - equilibrium
    t = np.asarray(times, dtype=float)
    sel = t >= t_min
    v, t = v[sel], t[sel]
    if v.size < 4 or v[0] == 0.0:
        raise ValueError("no resolvable approach to fit")
    sgn = math.copysign(1.0, v[0])
    v = v * sgn
    end = int(np.argmax(v <= 0)) if np.any(v <= 0) else v.size
    v, t = v[:end], t[:end]
    keep = v > min_frac * v[0]
    if keep.sum() < 4:
        raise ValueError("too few points in the fit window")
    # polyfit weights multiply the residuals: w = gap undoes the log variance
    slope = np.polyfit(t[keep], np.log(v[keep]), 1, w=v[keep])[0]
    return -float(slope)
