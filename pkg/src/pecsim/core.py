"""Shared domain types, units and configuration.

Units throughout: temperatures in degC, power in kW, energy in kWh, time in s,
flows in m3/s, capacities in kJ/K and heat-transfer coefficients in kJ/(K.s).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace
from typing import Literal, Mapping

import numpy as np

Season = Literal["summer", "winter"]
SEASONS: tuple[str, ...] = ("summer", "winter")
DAY_S = 86400


class ConfigError(ValueError):
    """Invalid configuration value; ``key`` names the offending dotted key."""

    def __init__(self, key: str, message: str, value: object = None):
        self.key = key
        self.value = value
        detail = f"{key}: {message}"
        if value is not None:
            detail += f" (got {value!r})"
        super().__init__(detail)


@dataclass(frozen=True)
class RoomParams:
    C: float = 2000.0
    alpha_ex: float = 0.048
    Q_ap: float = 0.1
    Q_oc: float = 0.1
    C_oc: float = 200.0
    alpha_in: float = 0.1425
    Q_he: float = 0.7


ROOM_KEYS = tuple(f.name for f in fields(RoomParams))


@dataclass(frozen=True)
class BuildingSpec:
    """Zones, rooms, thermal and plant parameters.

    Rooms are numbered zone by zone; ``rooms[j]`` belongs to ``zone_of(j)``.
    """

    rooms_per_zone: tuple[int, ...] = (5,)
    rooms: tuple[RoomParams, ...] = (RoomParams(),) * 5
    rho: float = 1.204
    sigma: float = 1.003
    eta_h: float = 1.34
    eta_c: float = 0.40
    eta_f: float = 0.65
    v_max: float = 0.5
    u_min: float = 12.0
    u_max: float = 35.0
    v_a_fan: float = 1.0
    v_a_draft: float = 0.1

    @property
    def n_zones(self) -> int:
        return len(self.rooms_per_zone)

    @property
    def n_rooms(self) -> int:
        return len(self.rooms)

    def zone_of(self, room: int) -> int:
        edge = 0
        for z, n in enumerate(self.rooms_per_zone):
            edge += n
            if room < edge:
                return z
        raise IndexError(room)

    def room_arrays(self) -> dict[str, np.ndarray]:
        """Per-room parameters as float arrays, plus the HVAC coupling ``b = rho*sigma/n_r``."""
        out = {k: np.array([getattr(r, k) for r in self.rooms], dtype=float) for k in ROOM_KEYS}
        n_r = np.array([self.rooms_per_zone[self.zone_of(j)] for j in range(self.n_rooms)], dtype=float)
        out["b"] = self.rho * self.sigma / n_r
        return out


@dataclass(frozen=True)
class Timebase:
    tau_fine: int = 30
    tau_coarse: int = 600
    tau_u: int = 3600

    @property
    def fine_per_day(self) -> int:
        return DAY_S // self.tau_fine

    @property
    def coarse_per_day(self) -> int:
        return DAY_S // self.tau_coarse

    @property
    def u_blocks_per_day(self) -> int:
        return DAY_S // self.tau_u

    @property
    def fine_per_coarse(self) -> int:
        return self.tau_coarse // self.tau_fine

    @property
    def coarse_per_u(self) -> int:
        return self.tau_u // self.tau_coarse


@dataclass(frozen=True)
class ComfortSpec:
    """Linear PMV coefficients and comfort band; ``P4 = P1 * t_neutral``."""

    P1: float = 0.5
    P2: float = 1.1
    P3: float = 0.05
    P_ll: float = -0.5
    P_ul: float = 0.5
    t_neutral: float = 24.0

    @property
    def P4(self) -> float:
        return self.P1 * self.t_neutral

    def comfort_range(self, v_a: float = 0.0) -> tuple[float, float]:
        """Occupied-region temperatures for which PMV lies in the band at air speed ``v_a``."""
        shift = -self.P2 * v_a + self.P3 * v_a * v_a - self.P4
        return (self.P_ll - shift) / self.P1, (self.P_ul - shift) / self.P1


@dataclass(frozen=True)
class ControlSpec:
    """Controller settings: baseline schedules, SPOT hysteresis and MPC solver knobs."""

    r: float = 0.8
    schedule_start_h: float = 9.0
    schedule_end_h: float = 18.0
    schedule_u_summer: float = 15.0
    schedule_u_winter: float = 20.0
    schedule_v: float = 0.236
    hysteresis: float = 0.05
    plan_margin: float = 0.04
    penalty_weight: float = 1000.0
    max_iter: int = 200
    rel_tol: float = 1e-3
    patience: int = 5
    u_step: float = 0.5
    u_search_blocks: int = 2
    u_window: float = 2.0
    plan_heater: bool = False
    u_summer_min: float = 12.0
    u_summer_max: float = 20.0
    u_winter_min: float = 20.0
    u_winter_max: float = 35.0

    def u_grid(self, season: str) -> np.ndarray:
        lo, hi = (
            (self.u_summer_min, self.u_summer_max)
            if season == "summer"
            else (self.u_winter_min, self.u_winter_max)
        )
        n = int(round((hi - lo) / self.u_step))
        return lo + self.u_step * np.arange(n + 1)


@dataclass(frozen=True)
class Config:
    building: BuildingSpec = field(default_factory=BuildingSpec)
    timebase: Timebase = field(default_factory=Timebase)
    comfort_summer: ComfortSpec = field(default_factory=ComfortSpec)
    comfort_winter: ComfortSpec = field(default_factory=lambda: ComfortSpec(t_neutral=22.0))
    control: ControlSpec = field(default_factory=ControlSpec)
    T_init_offset: float = 2.0

    def comfort(self, season: str) -> ComfortSpec:
        if season not in SEASONS:
            raise ValueError(f"unknown season {season!r}")
        return self.comfort_summer if season == "summer" else self.comfort_winter

    def digest(self) -> str:
        return hashlib.sha256(dump_config(self).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class RoomState:
    """Room temperature due to HVAC plus the occupied-region offset.

    In single-region mode ``delta_oc`` stays zero so all three temperatures coincide.
    """

    T_hv: float
    delta_oc: float = 0.0
    T_un: float | None = None

    @property
    def T_oc(self) -> float:
        return self.T_hv + self.delta_oc

    @property
    def T_unoccupied(self) -> float:
        return self.T_hv if self.T_un is None else self.T_un


@dataclass(frozen=True)
class ControlVector:
    u: float
    v: np.ndarray
    r: float
    heater: np.ndarray | None = None
    fan: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        object.__setattr__(self, "v", v)
        n = v.shape[0]
        for name in ("heater", "fan"):
            val = getattr(self, name)
            object.__setattr__(self, name, np.zeros(n, bool) if val is None else np.asarray(val, bool))
        if np.any(v < 0):
            raise ValueError("flow rates must be non-negative")
        if not 0.0 <= self.r <= 1.0:
            raise ValueError(f"reuse ratio r must lie in [0, 1], got {self.r}")
        if np.any(self.heater & self.fan):
            raise ValueError("heater and fan cannot both be on in one room")

    def check_bounds(self, building: BuildingSpec, tol: float = 1e-9) -> None:
        if np.any(self.v > building.v_max + tol):
            raise ValueError(f"flow above v_max={building.v_max}")
        if np.any(self.v > tol) and not building.u_min - tol <= self.u <= building.u_max + tol:
            raise ValueError(f"supply temperature {self.u} outside [{building.u_min}, {building.u_max}]")

    @property
    def V(self) -> float:
        return float(self.v.sum())


# ---------------------------------------------------------------------------
# key = value configuration files

_BUILDING_FLOAT = ("rho", "sigma", "eta_h", "eta_c", "eta_f", "v_max", "u_min", "u_max", "v_a_fan", "v_a_draft")
_AIR_KEYS = ("rho", "sigma")
_INT_CONTROL = ("max_iter", "patience", "u_search_blocks")
_COMFORT_KEYS = ("P1", "P2", "P3", "P_ll", "P_ul")


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'", raw)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}", "empty key", raw)
        if key in out:
            raise ConfigError(key, "duplicate key")
        out[key] = value
    return out


def load_config(path) -> Config:
    with open(path, encoding="utf-8") as fh:
        return validate_config(parse_config_text(fh.read()))


def _num(key: str, raw, kind=float):
    if isinstance(raw, str) and not raw.strip():
        raise ConfigError(key, "missing value")
    try:
        val = kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected {kind.__name__}", raw) from None
    if kind is float and not np.isfinite(val):
        raise ConfigError(key, "must be finite", raw)
    return val


def _int(key: str, raw) -> int:
    val = _num(key, raw, float)
    if val != int(val):
        raise ConfigError(key, "expected an integer", raw)
    return int(val)


def _bool(key: str, raw) -> bool:
    if isinstance(raw, bool):
        return raw
    text = str(raw).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, "expected a boolean", raw)


def _positive(key: str, val: float) -> None:
    if not val > 0:
        raise ConfigError(key, "must be > 0", val)


def validate_config(raw: Mapping[str, object] | None = None) -> Config:
    """Build a :class:`Config` from a flat dotted-key mapping, applying defaults.

    Every invariant is checked; errors name the dotted key at fault.
    """
    raw = dict(raw or {})
    used: set[str] = set()

    def take(key, default, conv=float):
        if key in raw:
            used.add(key)
            return conv(key, raw[key]) if conv is not float else _num(key, raw[key])
        return default

    # building topology
    default_b = BuildingSpec()
    rpz_raw = raw.get("building.rooms_per_zone")
    if rpz_raw is None:
        rooms_per_zone = default_b.rooms_per_zone
    else:
        used.add("building.rooms_per_zone")
        parts = [p for p in str(rpz_raw).replace(";", ",").split(",") if p.strip()]
        if not parts:
            raise ConfigError("building.rooms_per_zone", "missing value")
        rooms_per_zone = tuple(_int("building.rooms_per_zone", p) for p in parts)
    n_zones = take("building.n_zones", None, _int)
    if n_zones is not None:
        if n_zones < 1:
            raise ConfigError("building.n_zones", "must be >= 1", n_zones)
        if len(rooms_per_zone) == 1 and n_zones > 1:
            rooms_per_zone = rooms_per_zone * n_zones
        elif len(rooms_per_zone) != n_zones:
            raise ConfigError("building.n_zones", "does not match building.rooms_per_zone", n_zones)
    for n in rooms_per_zone:
        if n < 1:
            raise ConfigError("building.rooms_per_zone", "each zone needs >= 1 room", n)
    n_rooms = sum(rooms_per_zone)

    base_room = {k: take(f"room.{k}", getattr(RoomParams(), k)) for k in ROOM_KEYS}
    rooms = []
    for j in range(n_rooms):
        vals = {k: take(f"room.{j + 1}.{k}", base_room[k]) for k in ROOM_KEYS}
        for k, v in vals.items():
            key = f"room.{j + 1}.{k}" if f"room.{j + 1}.{k}" in raw else f"room.{k}"
            _positive(key, v)
        if not vals["C_oc"] < vals["C"]:
            key = f"room.{j + 1}.C_oc" if f"room.{j + 1}.C_oc" in raw else "room.C_oc"
            raise ConfigError(key, f"C_oc must be < C ({vals['C']})", vals["C_oc"])
        rooms.append(RoomParams(**vals))

    bvals = {}
    for k in _BUILDING_FLOAT:
        prefix = "air" if k in _AIR_KEYS else "plant"
        bvals[k] = take(f"{prefix}.{k}", getattr(default_b, k))
    for k in ("rho", "sigma", "eta_h", "eta_c", "eta_f", "v_max", "v_a_fan"):
        _positive(f"{'air' if k in _AIR_KEYS else 'plant'}.{k}", bvals[k])
    if bvals["v_a_draft"] < 0:
        raise ConfigError("plant.v_a_draft", "must be >= 0", bvals["v_a_draft"])
    if not bvals["u_min"] < bvals["u_max"]:
        raise ConfigError("plant.u_min", f"u_min must be < u_max ({bvals['u_max']})", bvals["u_min"])
    building = BuildingSpec(rooms_per_zone=rooms_per_zone, rooms=tuple(rooms), **bvals)

    # timebase
    tb = Timebase(
        tau_fine=take("time.tau_fine", 30, _int),
        tau_coarse=take("time.tau_coarse", 600, _int),
        tau_u=take("time.tau_u", 3600, _int),
    )
    for k in ("tau_fine", "tau_coarse", "tau_u"):
        _positive(f"time.{k}", getattr(tb, k))
    if tb.tau_coarse % tb.tau_fine:
        raise ConfigError("time.tau_coarse", "tau_coarse not divisible by tau_fine", tb.tau_coarse)
    if tb.tau_u % tb.tau_coarse:
        raise ConfigError("time.tau_u", "tau_u not divisible by tau_coarse", tb.tau_u)
    if DAY_S % tb.tau_u:
        raise ConfigError("time.tau_u", "day length not divisible by tau_u", tb.tau_u)

    # comfort
    cvals = {k: take(f"comfort.{k}", getattr(ComfortSpec(), k)) for k in _COMFORT_KEYS}
    _positive("comfort.P1", cvals["P1"])
    if not cvals["P_ll"] < cvals["P_ul"]:
        raise ConfigError("comfort.P_ll", f"P_ll must be < P_ul ({cvals['P_ul']})", cvals["P_ll"])
    comfort_summer = ComfortSpec(**cvals, t_neutral=take("comfort.T_n_summer", 24.0))
    comfort_winter = ComfortSpec(**cvals, t_neutral=take("comfort.T_n_winter", 22.0))

    # control
    cdef = ControlSpec()
    ctrl = {}
    for f in fields(ControlSpec):
        conv = _int if f.name in _INT_CONTROL else _bool if f.name == "plan_heater" else float
        ctrl[f.name] = take(f"control.{f.name}", getattr(cdef, f.name), conv)
    control = ControlSpec(**ctrl)
    if not 0.0 <= control.r <= 1.0:
        raise ConfigError("control.r", "must lie in [0, 1]", control.r)
    for k in ("schedule_v", "penalty_weight", "rel_tol", "u_step", "max_iter", "patience"):
        _positive(f"control.{k}", getattr(control, k))
    for k in ("hysteresis", "plan_margin"):
        if getattr(control, k) < 0:
            raise ConfigError(f"control.{k}", "must be >= 0", getattr(control, k))
    if control.schedule_v > building.v_max:
        raise ConfigError("control.schedule_v", f"exceeds plant.v_max ({building.v_max})", control.schedule_v)
    if not 0 <= control.schedule_start_h < control.schedule_end_h <= 24:
        raise ConfigError("control.schedule_start_h", "need 0 <= start < end <= 24", control.schedule_start_h)
    for season in SEASONS:
        lo, hi = getattr(control, f"u_{season}_min"), getattr(control, f"u_{season}_max")
        if not lo <= hi:
            raise ConfigError(f"control.u_{season}_min", f"must be <= u_{season}_max ({hi})", lo)
        if lo < building.u_min or hi > building.u_max:
            raise ConfigError(f"control.u_{season}_min", "candidate grid outside plant u bounds", (lo, hi))
        su = getattr(control, f"schedule_u_{season}")
        if not building.u_min <= su <= building.u_max:
            raise ConfigError(f"control.schedule_u_{season}", "outside plant u bounds", su)

    t_init_offset = take("engine.T_init_offset", 2.0)

    unknown = sorted(set(raw) - used)
    if unknown:
        raise ConfigError(unknown[0], "unknown configuration key")

    return Config(
        building=building,
        timebase=tb,
        comfort_summer=comfort_summer,
        comfort_winter=comfort_winter,
        control=control,
        T_init_offset=t_init_offset,
    )


def config_to_dict(cfg: Config) -> dict[str, str]:
    """Flatten a config to dotted keys; ``validate_config`` inverts this."""
    out: dict[str, str] = {}
    b = cfg.building
    out["building.rooms_per_zone"] = ",".join(str(n) for n in b.rooms_per_zone)
    for k in ROOM_KEYS:
        vals = [getattr(r, k) for r in b.rooms]
        out[f"room.{k}"] = repr(vals[0])
        for j, v in enumerate(vals):
            if v != vals[0]:
                out[f"room.{j + 1}.{k}"] = repr(v)
    for k in _BUILDING_FLOAT:
        out[f"{'air' if k in _AIR_KEYS else 'plant'}.{k}"] = repr(getattr(b, k))
    for k in ("tau_fine", "tau_coarse", "tau_u"):
        out[f"time.{k}"] = str(getattr(cfg.timebase, k))
    for k in _COMFORT_KEYS:
        out[f"comfort.{k}"] = repr(getattr(cfg.comfort_summer, k))
    out["comfort.T_n_summer"] = repr(cfg.comfort_summer.t_neutral)
    out["comfort.T_n_winter"] = repr(cfg.comfort_winter.t_neutral)
    for f in fields(ControlSpec):
        out[f"control.{f.name}"] = repr(getattr(cfg.control, f.name))
    out["engine.T_init_offset"] = repr(cfg.T_init_offset)
    return out


def dump_config(cfg: Config) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config_to_dict(cfg).items())


def with_rooms(cfg: Config, n_rooms: int) -> Config:
    """Single-zone copy of ``cfg`` with ``n_rooms`` identical rooms."""
    b = replace(cfg.building, rooms_per_zone=(n_rooms,), rooms=(cfg.building.rooms[0],) * n_rooms)
    return replace(cfg, building=b)
