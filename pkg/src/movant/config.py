"""System parameters, presets and config-file loading.

Keys carry their unit in the name (``power_dbm``, ``wavelength_m``,
``min_distance_wl`` for multiples of the wavelength, ...).  Values in dB/dBm
are converted to linear units through the derived properties; all numerical
code works in linear units.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

__all__ = [
    "SystemConfig",
    "BacktrackParams",
    "PRESETS",
    "SWEEP_AXES",
    "SCHEMES",
    "dbm_to_watt",
    "db_to_linear",
    "load_config",
    "preset",
]

SCHEMES = ("proposed-gmm", "proposed-pmm", "decoupled-gmm", "scsit-gmm", "scsit-upa")

# sweep axis name -> config key
SWEEP_AXES = {
    "power": "power_dbm",
    "x_t": "tx_region_wl",
    "x_r": "rx_region_wl",
    "d": "min_distance_wl",
    "r_min": "rate_min_bps",
}


def dbm_to_watt(p_dbm):
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def db_to_linear(x_db):
    return 10.0 ** (x_db / 10.0)


@dataclass(frozen=True)
class BacktrackParams:
    """Line-search settings shared by the short-term optimizers."""

    step: float = 10.0
    shrink: float = 0.5
    armijo: float = 0.6
    tol: float = 1e-6
    max_iter: int = 30
    max_backtracks: int = 60

    def __post_init__(self):
        if not 0.0 < self.shrink < 1.0:
            raise ValueError(f"shrink must lie in (0, 1), got {self.shrink}")
        if not 0.0 < self.armijo < 1.0:
            raise ValueError(f"armijo must lie in (0, 1), got {self.armijo}")
        if self.step <= 0 or self.tol <= 0:
            raise ValueError("step and tol must be positive")
        if self.max_iter < 0 or self.max_backtracks < 0:
            raise ValueError("iteration caps must be nonnegative")


@dataclass(frozen=True)
class SystemConfig:
    # geometry / array sizes
    n_tx: int = 8
    n_rx: int = 2
    n_users: int = 4
    n_paths: int = 10
    wavelength_m: float = 0.06
    min_distance_wl: float = 0.5
    tx_region_wl: float = 0.5
    rx_region_wl: float = 0.5
    # link budget
    noise_dbm: float = -80.0
    pathloss_ref_db: float = -40.0
    pathloss_exp: float = 2.8
    power_dbm: float = 20.0
    rate_min_bps: float = 1.0
    distance_min_m: float = 20.0
    distance_max_m: float = 100.0
    # long-term loop
    n_iter: int = 100
    batch_size: int = 10
    tau_t: float = -1.0
    tau_h: float = -1.0
    tau_r: float = -1.0
    tau_q: float | None = None  # None -> -P^-2
    rho_exp: float = 0.9
    gamma_exp: float = 1.0
    # short-term line search
    step: float = 10.0
    shrink: float = 0.5
    armijo: float = 0.6
    tol: float = 1e-6
    n_short_iter: int = 30
    max_backtracks: int = 60
    gp_early_exit: bool = False
    # policies
    redraw_angles_per_sample: bool = False
    upa_tx_spacing_wl: float = 0.5
    upa_rx_spacing_wl: float = 0.5
    # experiment
    realizations: int = 1000
    eval_samples: int = 200
    trace_eval_samples: int = 20
    seed: int = 0

    def __post_init__(self):
        for name in ("n_tx", "n_rx", "n_users", "n_paths", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("wavelength_m", "min_distance_wl", "tx_region_wl", "rx_region_wl"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("tau_t", "tau_h", "tau_r"):
            if not getattr(self, name) < 0:
                raise ValueError(f"{name} must be negative")
        if self.tau_q is not None and not self.tau_q < 0:
            raise ValueError("tau_q must be negative")
        if self.n_iter < 0 or self.realizations < 0 or self.eval_samples < 1:
            raise ValueError("iteration and sample counts must be nonnegative")
        if not self.distance_max_m >= self.distance_min_m > 0:
            raise ValueError("invalid distance range")
        BacktrackParams(**self._backtrack_kwargs())

    # derived, linear units
    @property
    def power_w(self) -> float:
        return float(dbm_to_watt(self.power_dbm))

    @property
    def noise_w(self) -> float:
        return float(dbm_to_watt(self.noise_dbm))

    @property
    def pathloss_ref(self) -> float:
        return float(db_to_linear(self.pathloss_ref_db))

    @property
    def min_distance_m(self) -> float:
        return self.min_distance_wl * self.wavelength_m

    @property
    def tx_region_m(self) -> float:
        return self.tx_region_wl * self.wavelength_m

    @property
    def rx_region_m(self) -> float:
        return self.rx_region_wl * self.wavelength_m

    @property
    def tau_q_value(self) -> float:
        return self.tau_q if self.tau_q is not None else -1.0 / self.power_w**2

    def _backtrack_kwargs(self) -> dict:
        return dict(
            step=self.step,
            shrink=self.shrink,
            armijo=self.armijo,
            tol=self.tol,
            max_iter=self.n_short_iter,
            max_backtracks=self.max_backtracks,
        )

    @property
    def backtrack(self) -> BacktrackParams:
        return BacktrackParams(**self._backtrack_kwargs())

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


PRESETS: dict[str, dict[str, Any]] = {
    "paper": {},
    "desk": dict(
        n_tx=4,
        n_rx=2,
        n_users=2,
        n_paths=4,
        n_iter=30,
        batch_size=4,
        n_short_iter=15,
        realizations=50,
        eval_samples=100,
    ),
}


def preset(name: str, **overrides) -> SystemConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return SystemConfig(**{**base, **overrides})


_FIELDS = {f.name: f for f in dataclasses.fields(SystemConfig)}


def coerce_value(key: str, value):
    """Convert a raw (string or YAML) value to the type of config field ``key``."""
    if key not in _FIELDS:
        raise KeyError(f"unknown config key {key!r}")
    if value is None:
        return None
    default = _FIELDS[key].default
    if isinstance(default, bool):
        if isinstance(value, str):
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"{key}: expected a boolean, got {value!r}")
        return bool(value)
    if isinstance(default, int):
        ival = int(value)
        if float(value) != ival:
            raise ValueError(f"{key}: expected an integer, got {value!r}")
        return ival
    return float(value)


def load_config(path: str | Path, base: SystemConfig | None = None) -> SystemConfig:
    """Read a flat YAML key/value file; unknown keys are rejected."""
    path = Path(path)
    with path.open() as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: expected a flat mapping of keys to values")
    unknown = sorted(set(raw) - set(_FIELDS))
    if unknown:
        raise KeyError(f"{path}: unknown config keys {unknown}")
    values = {}
    for key, value in raw.items():
        if isinstance(value, (dict, list)):
            raise ValueError(f"{path}: key {key!r} must map to a scalar")
        values[key] = coerce_value(key, value)
    base = base or SystemConfig()
    return base.replace(**values)
