"""Run configuration: a flat YAML mapping whose keys carry their units.

Every key has a default matching the reference scenario, so an empty file is a
valid configuration.  Unknown keys are errors, not warnings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .channel import Lognormal, PathLossParams, Rayleigh, Rician, SystemParams
from .geometry import Environment, InfeasibleGeometryError, environment_from_dict


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # geometry
    source_xy_m: tuple[float, float] = (5.76, 5.76)
    blockages_m: tuple[tuple[float, float, float], ...] = ((2.88, 2.88, 1.5),)
    sampling_box_m: tuple[float, float, float, float] = (-10.0, -10.0, 10.0, 10.0)
    # link budget
    noise_dbm: float = -75.0
    p_max_mw: float = 100.0
    t_s: float = 1.0
    d_bits_per_hz: float = 8.0
    alpha: float = 0.2
    aperture_m2: float = 0.01
    reward_c_mws: float = 1000.0
    k_los_db: float = 0.0
    eta_los: float = 2.5
    k_nlos_db: float = -25.0
    eta_nlos: float = 5.76
    # fading
    fading: str = "lognormal"
    lognormal_sigma_unit: str = "db"
    sigma_los: float = 8.66
    sigma_nlos: float = 9.02
    rayleigh_psi: float = 1.0 / math.sqrt(2.0)
    rician_k_factor: float = 3.0
    # experiment
    n: tuple[int, ...] = (1, 2, 4, 8)
    trials: int = 10_000
    seed: int = 7
    workers: int = 1
    output_dir: str = ""
    grid_cell_m: float = 0.1
    heatmap_resolution_m: float = 0.1
    regularity_decades: float = 12.0
    c_grid_mws: tuple[float, ...] = ()

    def environment(self) -> Environment:
        return environment_from_dict(self.source_xy_m, self.blockages_m, self.sampling_box_m)

    def fading_models(self):
        if self.fading == "rayleigh":
            return Rayleigh(self.rayleigh_psi), Rayleigh(self.rayleigh_psi)
        if self.fading == "rician":
            return Rician(self.rician_k_factor), Rician(self.rician_k_factor)
        if self.lognormal_sigma_unit == "natural":
            return Lognormal.from_natural(self.sigma_los), Lognormal.from_natural(self.sigma_nlos)
        return Lognormal(self.sigma_los), Lognormal(self.sigma_nlos)

    def system_params(self) -> SystemParams:
        los, nlos = self.fading_models()
        return SystemParams(
            noise_dbm=self.noise_dbm, p_max_mw=self.p_max_mw, t_s=self.t_s,
            d_bits_per_hz=self.d_bits_per_hz, alpha=self.alpha, aperture_m2=self.aperture_m2,
            reward_c=self.reward_c_mws,
            pathloss=PathLossParams(self.k_los_db, self.eta_los, self.k_nlos_db, self.eta_nlos),
            fading_los=los, fading_nlos=nlos,
        )

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = [list(x) if isinstance(x, tuple) else x for x in v]
            out[f.name] = v
        return out


_FIELDS = {f.name: f for f in fields(RunConfig)}
_CHOICES = {"fading": ("lognormal", "rayleigh", "rician"), "lognormal_sigma_unit": ("db", "natural")}


def _coerce(name: str, value: Any) -> Any:
    default = getattr(RunConfig(), name)
    try:
        if name == "blockages_m":
            return tuple(tuple(float(x) for x in b) for b in value)
        if name == "n":
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            if isinstance(value, int):
                value = [value]
            return tuple(int(x) for x in value)
        if name == "c_grid_mws":
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            return tuple(float(x) for x in value)
        if isinstance(default, tuple):
            return tuple(float(x) for x in value)
        if isinstance(default, bool):
            return bool(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError("expected an integer")
            return int(value)
        if isinstance(default, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: cannot use {value!r} ({exc})") from None


def build_config(values: dict[str, Any]) -> RunConfig:
    unknown = sorted(set(values) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    kw = {k: _coerce(k, v) for k, v in values.items()}
    for key, allowed in _CHOICES.items():
        if key in kw and kw[key] not in allowed:
            raise ConfigError(f"{key}: must be one of {', '.join(allowed)}, got {kw[key]!r}")
    cfg = replace(RunConfig(), **kw)
    if any(x < 0 for x in cfg.n):
        raise ConfigError("n: candidate counts must be non-negative")
    if cfg.trials < 1:
        raise ConfigError("trials: must be at least 1")
    if cfg.workers < 1:
        raise ConfigError("workers: must be at least 1")
    for key in ("grid_cell_m", "heatmap_resolution_m", "regularity_decades"):
        if not getattr(cfg, key) > 0:
            raise ConfigError(f"{key}: must be positive")
    # physics invariants are re-checked by the constructors
    try:
        cfg.environment()
    except InfeasibleGeometryError:
        raise
    except ValueError as exc:
        raise ConfigError(f"geometry: {exc}") from None
    try:
        cfg.system_params()
    except ValueError as exc:
        raise ConfigError(f"system parameters: {exc}") from None
    return cfg


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> RunConfig:
    values: dict[str, Any] = {}
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a flat mapping of keys to values")
        values.update(loaded)
    values.update(overrides or {})
    return build_config(values)


def dump_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None))
