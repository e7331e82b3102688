"""Flat key=value config files with include support.

Lines look like ``gamma = 0.4``; ``#`` starts a comment; ``include PATH``
splices another file (relative to the including one).  Later assignments
win.  Model keys: gamma, epsilon, tau, d_f, kernel, kernel_file.  The
remaining keys parameterize the simulation, grids and comparison thresholds
and all have defaults derived from the model parameters.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .model import CorrelationKernel, ModelParams
from .sde import SimConfig


class ConfigError(ValueError):
    """Bad config file; message carries file, line and key context."""


def parse_config(path) -> dict:
    """Read a key=value file (with includes) into a string dict."""
    out: dict[str, str] = {}
    _parse_into(Path(path), out, depth=0)
    return out


def _parse_into(path: Path, out: dict, depth: int):
    if depth > 8:
        raise ConfigError(f"{path}: include nesting too deep")
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("include"):
            target = line[len("include"):].strip()
            if not target:
                raise ConfigError(f"{path}:{ln}: include without a path")
            _parse_into((path.parent / target), out, depth + 1)
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"{path}:{ln}: empty key or value")
        out[key] = value
    return out


def _get(cfg: dict, key: str, cast, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        if cast is bool:
            return cfg[key].lower() in ("1", "true", "yes", "on")
        return cast(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: cannot parse {cfg[key]!r}") from exc


def model_from_config(cfg: dict) -> tuple[ModelParams, CorrelationKernel]:
    params = ModelParams(
        gamma=_get(cfg, "gamma", float),
        epsilon=_get(cfg, "epsilon", float),
        tau=_get(cfg, "tau", float),
        d_f=_get(cfg, "d_f", float),
    )
    kind = cfg.get("kernel", "ou").lower()
    if kind == "ou":
        kernel = CorrelationKernel("OU")
    elif kind in ("tabulated", "tabulateddecay"):
        fname = cfg.get("kernel_file")
        if not fname:
            raise ConfigError("kernel=tabulated requires kernel_file")
        data = np.loadtxt(fname, delimiter=",", comments="#")
        kernel = CorrelationKernel("TabulatedDecay", u=data[:, 0],
                                   phi=data[:, 1])
    else:
        raise ConfigError(f"key 'kernel': unknown variant {kind!r}")
    return params, kernel


def dt_guard(params: ModelParams) -> float:
    return 0.05 * min(params.tau, 1.0 / params.gamma,
                      1.0 / (params.gamma + 4.0 * params.epsilon))


def sim_config_from(cfg: dict, params: ModelParams,
                    seed: int | None = None) -> SimConfig:
    """SimConfig from the config dict with stability-aware defaults."""
    dt = _get(cfg, "dt", float, default=0.5 * dt_guard(params))
    burn_floor = 10.0 * max(params.tau, 1.0 / params.gamma)
    t_burn = _get(cfg, "t_burn", float, default=burn_floor)
    stride_time = _get(cfg, "stride_time", float,
                       default=max(params.tau, 1.0 / params.gamma))
    stride = _get(cfg, "stride", int, default=max(1, int(round(stride_time / dt))))
    n_traj = _get(cfg, "n_traj", int, default=1000)
    n_samples = _get(cfg, "n_samples", float, default=1e6)
    t_end_default = t_burn + math.ceil(n_samples / n_traj) * stride * dt
    t_end = _get(cfg, "t_end", float, default=t_end_default)
    hist_bins = _get(cfg, "hist_bins", int, default=201)
    hist_range = None
    if "hist_min" in cfg or "hist_max" in cfg:
        hist_range = (_get(cfg, "hist_min", float),
                      _get(cfg, "hist_max", float))
    x0 = _get(cfg, "x0", float, default=math.nan)
    return SimConfig(
        dt=dt, t_burn=t_burn, t_end=t_end, n_traj=n_traj,
        seed=seed if seed is not None else _get(cfg, "seed", int, default=20240117),
        stride=stride, x0=None if math.isnan(x0) else x0,
        hist_bins=hist_bins, hist_range=hist_range,
    )
