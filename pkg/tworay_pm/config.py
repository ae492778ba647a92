"""
Config - flat TOML run configuration, presets and the resolved-config echo
"""

from __future__ import annotations

import dataclasses
import math
import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from pathlib import Path

from .admm import AdmmOptions
from .array_model import ArrayLayout, uniform_layout
from .ber_sim import BerConfig
from .closed_form import CHANNEL_MODES
from .errors import ConfigError, GeometryError
from .geometry import ScenarioGeometry, ring_angles_for_step, ring_paths
from .sparse_design import BACKENDS, candidate_grid
from .targets import ConstellationSpec, mpsk_spec, qpsk_spec

MODES = ("ula", "sparse")
CONSTELLATIONS = ("qpsk", "mpsk")
ALPHA_MODES = ("from-ula", "fixed")
LOS_WEIGHTS = ("redesign", "reuse", "both")
RCOND_MODES = ("auto", "fixed")


@dataclass(frozen=True)
class RunConfig:
    """Every run setting; the defaults reproduce the reference two-ray scenario"""

    # scenario, lengths in wavelengths
    H: float = 500.0
    D1: float = 1000.0
    D: float = 1000.0
    h: float = 0.0
    ring_radius: float = 8.4
    ring_step_deg: float = 1.0
    # arrays
    mode: str = "ula"
    N: int = 30
    spacing: float = 0.5
    grid_aperture: float = 20.0
    grid_points: int = 401
    # targets
    constellation: str = "qpsk"
    symbol_count: int = 4
    desired_magnitude: float = 1.0
    eaves_magnitude: float = 0.1
    seed: int = 0
    # sparse design
    alpha_mode: str = "from-ula"
    alpha: float = 14.0707
    gamma: float = 1e-3
    max_reweight_iters: int = 10
    solver: str = "admm"
    admm_max_iter: int = 50000
    admm_gap_tol: float = 1e-6
    # "auto" sweeps the truncation threshold per symbol, "fixed" uses rank_rcond
    rcond_mode: str = "auto"
    rank_rcond: float = 1e-7
    # BER
    snr_db: float = 12.0
    trials: int = 10**6
    desired_trials: int = 10**7
    eval_radii: tuple[float, ...] = (8.0, 8.4, 8.8)
    channel_mode: str = "two-ray"
    los_weights: str = "both"
    workers: int = 1
    concordance_instances: int = 100
    # study stages
    stage_ula: bool = True
    stage_sparse: bool = True
    stage_patterns: bool = True
    stage_ber: bool = True
    stage_los: bool = True
    stage_concordance: bool = True

    def geometry(self, radius: float | None = None) -> ScenarioGeometry:
        return ScenarioGeometry(
            reflector_height=self.H,
            desired_range=self.D1,
            desired_height=self.h,
            unity_power_distance=self.D,
            ring_radius=self.ring_radius if radius is None else radius,
            ring_angles_deg=ring_angles_for_step(self.ring_step_deg),
        )

    def constellation_spec(self) -> ConstellationSpec:
        if self.constellation == "qpsk":
            return qpsk_spec(self.seed, self.desired_magnitude, self.eaves_magnitude)
        return mpsk_spec(self.symbol_count, self.seed, self.desired_magnitude, self.eaves_magnitude)

    def ula_layout(self) -> ArrayLayout:
        return uniform_layout(self.N, self.spacing)

    def candidate_grid(self) -> ArrayLayout:
        return candidate_grid(self.grid_points, self.grid_aperture)

    @property
    def grid_spacing(self) -> float:
        return self.grid_aperture / (self.grid_points - 1)

    def ber_config(self, **overrides) -> BerConfig:
        values = dict(
            snr_db=self.snr_db, trials=self.trials, desired_trials=self.desired_trials,
            channel_mode=self.channel_mode, eval_radii=self.eval_radii, rng_seed=self.seed,
            workers=self.workers,
        )
        values.update(overrides)
        return BerConfig(**values)

    def admm_options(self) -> AdmmOptions:
        return AdmmOptions(max_iter=self.admm_max_iter, gap_tol=self.admm_gap_tol)

    def rcond(self) -> float | None:
        """Truncation threshold for the closed form; None selects the sweep"""
        return self.rank_rcond if self.rcond_mode == "fixed" else None

    def replace(self, **changes) -> "RunConfig":
        config = dataclasses.replace(self, **changes)
        validate(config)
        return config

    def to_toml(self) -> str:
        """Resolved configuration in the same format parse_config reads"""
        lines = [f"{f.name} = {_toml_value(getattr(self, f.name))}" for f in dataclasses.fields(self)]
        return "\n".join(lines) + "\n"


PRESETS: dict[str, dict] = {
    "two-ray-reference": {},
}


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, tuple):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    return str(value)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _key_lines(text: str) -> dict[str, int]:
    found = {}
    for number, line in enumerate(text.splitlines(), start=1):
        match = re.match(r"\s*([A-Za-z0-9_-]+)\s*=", line)
        if match:
            found.setdefault(match.group(1), number)
    return found


def _coerce(name: str, value, line):
    kind = _FIELDS[name].type
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"expected true or false, got {value!r}", key=name, line=line)
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", key=name, line=line)
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", key=name, line=line)
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", key=name, line=line)
        return value
    # tuple of floats
    if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise ConfigError(f"expected a list of numbers, got {value!r}", key=name, line=line)
    return tuple(float(v) for v in value)


def _check(condition: bool, key: str, message: str, lines: dict[str, int]):
    if not condition:
        raise ConfigError(message, key=key, line=lines.get(key))


def validate(config: RunConfig, lines: dict[str, int] | None = None) -> None:
    """Enforce every module invariant on a RunConfig"""
    lines = lines or {}
    c = config
    positive = ["H", "D", "spacing", "grid_aperture", "desired_magnitude", "gamma",
                "admm_gap_tol"]
    for key in positive:
        value = getattr(c, key)
        _check(math.isfinite(value) and value > 0, key, f"must be positive, got {value}", lines)
    _check(c.D1 > abs(c.h), "D1", f"must exceed |h|={abs(c.h)}, got {c.D1}", lines)
    _check(c.ring_radius >= 0, "ring_radius", f"must be non-negative, got {c.ring_radius}", lines)
    _check(0 < c.ring_step_deg <= 360, "ring_step_deg",
           f"must lie in (0, 360], got {c.ring_step_deg}", lines)
    _check(c.mode in MODES, "mode", f"must be one of {MODES}, got '{c.mode}'", lines)
    _check(c.N >= 1, "N", f"must be at least 1, got {c.N}", lines)
    _check(c.grid_points >= 2, "grid_points", f"must be at least 2, got {c.grid_points}", lines)
    _check(c.constellation in CONSTELLATIONS, "constellation",
           f"must be one of {CONSTELLATIONS}, got '{c.constellation}'", lines)
    _check(c.symbol_count >= 2 and c.symbol_count & (c.symbol_count - 1) == 0, "symbol_count",
           f"must be a power of two of at least 2, got {c.symbol_count}", lines)
    _check(c.constellation != "qpsk" or c.symbol_count == 4, "symbol_count",
           f"qpsk has 4 symbols, got {c.symbol_count}", lines)
    _check(c.eaves_magnitude >= 0, "eaves_magnitude", f"must be non-negative, got {c.eaves_magnitude}", lines)
    _check(c.seed >= 0, "seed", f"must be non-negative, got {c.seed}", lines)
    _check(c.alpha_mode in ALPHA_MODES, "alpha_mode",
           f"must be one of {ALPHA_MODES}, got '{c.alpha_mode}'", lines)
    _check(c.alpha > 0, "alpha", f"must be positive, got {c.alpha}", lines)
    _check(c.max_reweight_iters >= 1, "max_reweight_iters",
           f"must be at least 1, got {c.max_reweight_iters}", lines)
    _check(c.solver in BACKENDS, "solver", f"must be one of {BACKENDS}, got '{c.solver}'", lines)
    _check(c.admm_max_iter >= 1, "admm_max_iter", f"must be at least 1, got {c.admm_max_iter}", lines)
    _check(c.rcond_mode in RCOND_MODES, "rcond_mode",
           f"must be one of {RCOND_MODES}, got '{c.rcond_mode}'", lines)
    _check(c.admm_gap_tol < 1, "admm_gap_tol", f"must be below 1, got {c.admm_gap_tol}", lines)
    _check(0 < c.rank_rcond < 1, "rank_rcond", f"must lie in (0, 1), got {c.rank_rcond}", lines)
    _check(math.isfinite(c.snr_db), "snr_db", f"must be finite, got {c.snr_db}", lines)
    _check(c.trials >= 1, "trials", f"must be at least 1, got {c.trials}", lines)
    _check(c.desired_trials >= 1, "desired_trials", f"must be at least 1, got {c.desired_trials}", lines)
    _check(len(c.eval_radii) >= 1 and all(r >= 0 for r in c.eval_radii), "eval_radii",
           "must be a non-empty list of non-negative radii", lines)
    _check(c.channel_mode in CHANNEL_MODES, "channel_mode",
           f"must be one of {CHANNEL_MODES}, got '{c.channel_mode}'", lines)
    _check(c.los_weights in LOS_WEIGHTS, "los_weights",
           f"must be one of {LOS_WEIGHTS}, got '{c.los_weights}'", lines)
    _check(c.workers >= 1, "workers", f"must be at least 1, got {c.workers}", lines)
    _check(c.concordance_instances >= 1, "concordance_instances",
           f"must be at least 1, got {c.concordance_instances}", lines)

    try:
        geo = c.geometry()
        geo.validate()
    except GeometryError as err:
        raise ConfigError(str(err), key="ring_radius", line=lines.get("ring_radius")) from err
    for radius in c.eval_radii:
        try:
            ring_paths(geo, radius)
        except GeometryError as err:
            raise ConfigError(f"radius {radius}: {err}", key="eval_radii", line=lines.get("eval_radii")) from err


def parse_config(text: str, preset: str | None = None) -> RunConfig:
    """Parse flat TOML text on top of the defaults (or a named preset)"""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        match = re.search(r"line (\d+)", str(err))
        raise ConfigError(f"invalid TOML: {err}", line=int(match.group(1)) if match else None) from err

    lines = _key_lines(text)
    values = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset '{preset}', expected one of {sorted(PRESETS)}")
        values.update(PRESETS[preset])
    for key, value in data.items():
        if key not in _FIELDS:
            raise ConfigError("unknown key", key=key, line=lines.get(key))
        values[key] = _coerce(key, value, lines.get(key))

    config = RunConfig(**values)
    validate(config, lines)
    return config


def load_config(path: str | Path | None = None, preset: str | None = None) -> RunConfig:
    if path is None:
        return parse_config("", preset)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from err
    return parse_config(text, preset)
