"""Flat ``key = value`` experiment configuration with defaults and line-numbered errors."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Union

from .pressure import METHODS
from .solver import SolverConfig


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


PROFILES = ("taylor_green", "random_band")
PROXY_MODES = ("grad_u", "vorticity")
FORMULATIONS = ("velocity", "vorticity")


@dataclass(frozen=True)
class ExperimentConfig:
    """Every recognised key, with dots replaced by underscores in the attribute names."""

    grid_n: int = 64
    grid_length: float = 2 * math.pi
    time_dt: float = 0.0  # 0 selects the CFL-limited step
    time_t_end: float = 1.0
    time_cfl_cap: float = 0.5
    time_pressure_per_stage: bool = True
    time_formulation: str = "velocity"
    init_seed: int = 0
    init_kmin: float = 1.0
    init_kmax: float = 4.0
    init_u_amp: float = 1.0
    init_b_amp: float = 0.0
    init_profile: str = "taylor_green"
    pressure_method: str = "fixed_point_with_cg_fallback"
    pressure_tol: float = 1e-10
    pressure_max_iter: int = 200
    pressure_relax: float = 1.0
    proxy_bkm_cap: float = math.inf
    proxy_tail_cap: float = 0.1
    proxy_mode: str = "grad_u"
    proxy_drift_tol: float = 1e-3
    output_dir: str = "out"
    output_stride: int = 1

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            cfl_cap=self.time_cfl_cap, pressure_method=self.pressure_method, pressure_tol=self.pressure_tol,
            pressure_max_iter=self.pressure_max_iter, pressure_relax=self.pressure_relax,
            pressure_per_stage=self.time_pressure_per_stage, drift_tol=self.proxy_drift_tol,
            bkm_cap=self.proxy_bkm_cap, tail_cap=self.proxy_tail_cap, proxy_mode=self.proxy_mode,
        )

    def with_values(self, **kw: Any) -> "ExperimentConfig":
        out = replace(self, **kw)
        validate(out)
        return out


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
KEYS = tuple(name.replace("_", ".", 1) for name in _FIELDS)


def _attr(key: str) -> str:
    return key.replace(".", "_", 1)


def _coerce(key: str, raw: str) -> Any:
    kind = type(getattr(ExperimentConfig(), _attr(key)))
    if kind is bool:
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean for {key}, got {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def validate(cfg: ExperimentConfig) -> None:
    """Raise ``ValueError`` naming the first violated invariant."""
    if cfg.grid_n < 16 or cfg.grid_n % 2:
        raise ValueError("grid.n must be even and at least 16")
    if not cfg.grid_length > 0:
        raise ValueError("grid.length must be positive")
    if cfg.time_dt < 0 or cfg.time_t_end < 0:
        raise ValueError("time.dt and time.t_end must be nonnegative")
    if not cfg.time_cfl_cap > 0:
        raise ValueError("time.cfl_cap must be positive")
    if cfg.time_formulation not in FORMULATIONS:
        raise ValueError(f"time.formulation must be one of {', '.join(FORMULATIONS)}")
    if not 0 <= cfg.init_b_amp < 1:
        raise ValueError("init.b_amp must lie in [0, 1) so that the density stays positive")
    if cfg.init_u_amp < 0:
        raise ValueError("init.u_amp must be nonnegative")
    if not 0 <= cfg.init_kmin <= cfg.init_kmax:
        raise ValueError("need 0 <= init.kmin <= init.kmax")
    if cfg.init_profile not in PROFILES:
        raise ValueError(f"init.profile must be one of {', '.join(PROFILES)}")
    if cfg.pressure_method not in METHODS:
        raise ValueError(f"pressure.method must be one of {', '.join(METHODS)}")
    if not cfg.pressure_tol > 0 or cfg.pressure_max_iter < 1 or not 0 < cfg.pressure_relax <= 2:
        raise ValueError("pressure.tol > 0, pressure.max_iter >= 1 and 0 < pressure.relax <= 2 required")
    if cfg.proxy_mode not in PROXY_MODES:
        raise ValueError(f"proxy.mode must be one of {', '.join(PROXY_MODES)}")
    if not (cfg.proxy_bkm_cap > 0 and cfg.proxy_tail_cap > 0 and cfg.proxy_drift_tol >= 0):
        raise ValueError("proxy caps must be positive")
    if cfg.output_stride < 1:
        raise ValueError("output.stride must be at least 1")


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment, missing keys take defaults."""
    values: dict[str, Any] = {}
    where: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno)
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in where:
            raise ConfigError(f"duplicate key {key!r} (first set on line {where[key]})", lineno)
        try:
            values[_attr(key)] = _coerce(key, raw)
        except ValueError as exc:
            raise ConfigError(f"malformed value for {key}: {exc}", lineno) from None
        where[key] = lineno
    cfg = ExperimentConfig(**values)
    try:
        validate(cfg)
    except ValueError as exc:
        msg = str(exc)
        culprit = next((where[k] for k in where if k in msg), None)
        raise ConfigError(msg, culprit) from None
    return cfg


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def echo(cfg: ExperimentConfig) -> str:
    """Effective configuration in the input syntax; ``parse_config(echo(c)) == c``."""
    lines = []
    for key in KEYS:
        v = getattr(cfg, _attr(key))
        lines.append(f"{key} = {repr(v) if isinstance(v, float) else str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"
