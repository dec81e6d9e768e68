"""World and adversary configuration, loadable from JSON.

Schema (every key optional)::

    {
      "seed": 42,
      "duration": 3600,
      "range_profile": "measured" | "max-range",
      "ranges": {"outdoor_m": 61, "indoor_m": 38},
      "broadcast_interval": 2,
      "adversary": {
        "capabilities": ["passive_sniff", "botnet", ...],
        "watch_zones": [{"label": "cafe", "center": [0, 0], "radius": 60}],
        "internet_cut": [{"zone": "city", "start": 900, "end": 1800}],
        "jamming": [{"zone": "conference", "start": 0, "end": 450}],
        "botnet": ["pongo-1", "pongo-2"]
      },
      "options": {"trap_protection": true, "helpers": 3, ...},
      "devices": [{"id": "extra-1", "position": [10, 5], "indoor": false,
                   "internet": true, "cellular": true, "bluetooth": true,
                   "finder": true}]
    }

Options are scenario-specific; each scenario documents the keys it reads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Union

from ..errors import ConfigError
from ..keychain import EPOCH_SECONDS

CAPABILITIES = frozenset(
    {
        "passive_sniff",
        "internet_cut",
        "botnet",
        "backdoor_oracle",
        "fake_appointments",
        "camera_reports",
        "jamming",
    }
)


@dataclass(frozen=True)
class RangeModel:
    outdoor_m: float
    indoor_m: float

    def __post_init__(self):
        if not (self.outdoor_m > 0 and self.indoor_m > 0):
            raise ConfigError("ranges must be positive")

    def link(self, indoor: bool) -> float:
        return self.indoor_m if indoor else self.outdoor_m


MEASURED = RangeModel(61.0, 38.0)
MAX_RANGE = RangeModel(1000.0, 400.0)
RANGE_PROFILES = {"measured": MEASURED, "max-range": MAX_RANGE}


@dataclass(frozen=True)
class WatchZone:
    label: str
    center: tuple[float, float]
    radius: float

    def contains(self, pos) -> bool:
        return (pos[0] - self.center[0]) ** 2 + (pos[1] - self.center[1]) ** 2 <= self.radius**2


@dataclass(frozen=True)
class ZoneWindow:
    zone: str
    start: int
    end: int

    def active(self, t: int) -> bool:
        return self.start <= t < self.end


@dataclass(frozen=True)
class DeviceSpec:
    device_id: str
    position: tuple[float, float]
    indoor: bool = False
    bluetooth: bool = True
    internet: bool = True
    cellular: bool = True
    finder: bool = True


@dataclass(frozen=True)
class AdversaryConfig:
    capabilities: frozenset = frozenset()
    watch_zones: tuple[WatchZone, ...] = ()
    internet_cut: tuple[ZoneWindow, ...] = ()
    jamming: tuple[ZoneWindow, ...] = ()
    botnet: tuple[str, ...] = ()

    def has(self, cap: str) -> bool:
        return cap in self.capabilities

    def zone(self, label: str) -> WatchZone:
        for z in self.watch_zones:
            if z.label == label:
                return z
        raise ConfigError(f"unknown watch zone {label!r}")

    def with_capabilities(self, *caps: str) -> "AdversaryConfig":
        return replace(self, capabilities=self.capabilities | frozenset(caps))

    def check_zone_refs(self) -> None:
        """Windows must name a watch zone; checked once scenario zones are merged in."""
        for w in self.internet_cut + self.jamming:
            self.zone(w.zone)

    def merged_with(self, base: "AdversaryConfig") -> "AdversaryConfig":
        """Scenario defaults in ``base``, overridden or extended by ``self``."""
        mine = {z.label for z in self.watch_zones}
        return AdversaryConfig(
            capabilities=base.capabilities | self.capabilities,
            watch_zones=tuple(z for z in base.watch_zones if z.label not in mine) + self.watch_zones,
            internet_cut=self.internet_cut or base.internet_cut,
            jamming=self.jamming or base.jamming,
            botnet=tuple(dict.fromkeys(base.botnet + self.botnet)),
        )

    def validate(self, duration: int) -> None:
        unknown = set(self.capabilities) - CAPABILITIES
        if unknown:
            raise ConfigError(f"unknown capabilities: {sorted(unknown)}")
        labels = [z.label for z in self.watch_zones]
        if len(labels) != len(set(labels)):
            raise ConfigError("watch zone labels must be unique")
        for z in self.watch_zones:
            if z.radius <= 0:
                raise ConfigError(f"zone {z.label!r} needs a positive radius")
        for name, windows in (("internet_cut", self.internet_cut), ("jamming", self.jamming)):
            if windows and not self.has(name):
                raise ConfigError(f"{name} windows given without the {name} capability")
            for w in windows:
                if not 0 <= w.start < w.end <= duration:
                    raise ConfigError(f"{name} window {w.start}..{w.end} outside run duration {duration}")


@dataclass(frozen=True)
class WorldConfig:
    seed: int = 42
    duration: int = 3600
    range_model: RangeModel = MEASURED
    range_profile: str = "measured"
    epoch_seconds: int = EPOCH_SECONDS
    broadcast_interval: int = 2
    adversary: AdversaryConfig = AdversaryConfig()
    options: dict = field(default_factory=dict)
    devices: tuple[DeviceSpec, ...] = ()

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError("duration must be positive")
        if self.epoch_seconds != EPOCH_SECONDS:
            raise ConfigError(f"epoch length is fixed at {EPOCH_SECONDS} s")
        if self.broadcast_interval <= 0:
            raise ConfigError("broadcast_interval must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 bits")
        self.adversary.validate(self.duration)

    def option(self, key: str, default: Any = None) -> Any:
        return self.options.get(key, default)

    def with_options(self, **kw) -> "WorldConfig":
        return replace(self, options={**self.options, **kw})

    def with_adversary(self, adversary: AdversaryConfig) -> "WorldConfig":
        return replace(self, adversary=adversary)

    def manifest(self) -> dict:
        return {
            "seed": self.seed,
            "duration": self.duration,
            "range_profile": self.range_profile,
            "ranges": [self.range_model.outdoor_m, self.range_model.indoor_m],
            "capabilities": sorted(self.adversary.capabilities),
            "options": {k: self.options[k] for k in sorted(self.options)},
        }


_TOP_KEYS = {"seed", "duration", "range_profile", "ranges", "broadcast_interval", "adversary", "options", "devices"}
_ADV_KEYS = {"capabilities", "watch_zones", "internet_cut", "jamming", "botnet"}


def _pair(value, what: str) -> tuple[float, float]:
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ConfigError(f"{what} must be a pair [x, y]")
    try:
        return float(value[0]), float(value[1])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what} must be numeric") from exc


def _windows(raw) -> tuple[ZoneWindow, ...]:
    try:
        return tuple(ZoneWindow(str(w["zone"]), int(w["start"]), int(w["end"])) for w in raw)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad zone window: {exc}") from exc


def adversary_from_dict(raw: dict) -> AdversaryConfig:
    if not isinstance(raw, dict):
        raise ConfigError("adversary must be an object")
    extra = set(raw) - _ADV_KEYS
    if extra:
        raise ConfigError(f"unknown adversary keys: {sorted(extra)}")
    try:
        zones = tuple(
            WatchZone(str(z["label"]), _pair(z["center"], "zone center"), float(z["radius"]))
            for z in raw.get("watch_zones", [])
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad watch zone: {exc}") from exc
    return AdversaryConfig(
        capabilities=frozenset(raw.get("capabilities", [])),
        watch_zones=zones,
        internet_cut=_windows(raw.get("internet_cut", [])),
        jamming=_windows(raw.get("jamming", [])),
        botnet=tuple(str(b) for b in raw.get("botnet", [])),
    )


def config_from_dict(raw: dict) -> WorldConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    extra = set(raw) - _TOP_KEYS
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    profile = raw.get("range_profile", "measured")
    if profile not in RANGE_PROFILES:
        raise ConfigError(f"unknown range profile {profile!r}")
    ranges = RANGE_PROFILES[profile]
    if "ranges" in raw:
        r = raw["ranges"]
        try:
            ranges = RangeModel(float(r.get("outdoor_m", ranges.outdoor_m)), float(r.get("indoor_m", ranges.indoor_m)))
        except (AttributeError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad ranges: {exc}") from exc
    devices = []
    for d in raw.get("devices", []):
        try:
            devices.append(
                DeviceSpec(
                    str(d["id"]),
                    _pair(d["position"], "device position"),
                    bool(d.get("indoor", False)),
                    bool(d.get("bluetooth", True)),
                    bool(d.get("internet", True)),
                    bool(d.get("cellular", True)),
                    bool(d.get("finder", True)),
                )
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad device entry: {exc}") from exc
    options = raw.get("options", {})
    if not isinstance(options, dict):
        raise ConfigError("options must be an object")
    try:
        return WorldConfig(
            seed=int(raw.get("seed", 42)),
            duration=int(raw.get("duration", 3600)),
            range_model=ranges,
            range_profile=profile,
            broadcast_interval=int(raw.get("broadcast_interval", 2)),
            adversary=adversary_from_dict(raw.get("adversary", {})),
            options=dict(options),
            devices=tuple(devices),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(source: Union[str, Path, dict, None]) -> WorldConfig:
    """Parse a JSON file path, a JSON string, or a dict; ``None`` gives defaults."""
    if source is None:
        return WorldConfig()
    if isinstance(source, dict):
        return config_from_dict(source)
    text: Optional[str] = None
    path = Path(source)
    try:
        if path.exists():
            text = path.read_text()
    except OSError:
        pass
    if text is None:
        if isinstance(source, Path) or not str(source).lstrip().startswith("{"):
            raise ConfigError(f"config file not found: {source}")
        text = str(source)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(raw)
