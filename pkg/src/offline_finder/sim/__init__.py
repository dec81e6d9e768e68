"""Discrete-event world, scripted scenarios and the adversaries that watch them."""

from .config import (
    CAPABILITIES,
    MAX_RANGE,
    MEASURED,
    AdversaryConfig,
    DeviceSpec,
    RangeModel,
    WatchZone,
    WorldConfig,
    ZoneWindow,
    load_config,
)
from .world import Device, Event, Observation, ReportStore, SimTrace, World, decode_location, encode_location
from .adversary import anonymity_set, anonymity_sizes, attack_crowd_tracking, attack_key_correlation, identify
from .scenarios import SCENARIOS, run_scenario

__all__ = [
    "CAPABILITIES",
    "MAX_RANGE",
    "MEASURED",
    "AdversaryConfig",
    "DeviceSpec",
    "RangeModel",
    "WatchZone",
    "WorldConfig",
    "ZoneWindow",
    "load_config",
    "Device",
    "Event",
    "Observation",
    "ReportStore",
    "SimTrace",
    "World",
    "decode_location",
    "encode_location",
    "anonymity_set",
    "anonymity_sizes",
    "attack_crowd_tracking",
    "attack_key_correlation",
    "identify",
    "SCENARIOS",
    "run_scenario",
]
