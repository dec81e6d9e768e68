"""Discrete-event world: positioned devices, range-limited Bluetooth, the report store.

Time is integer simulated seconds. Offline devices carrying a master record
broadcast their current epoch key every ``broadcast_interval`` seconds;
online finders that hear a key upload one ECIES location report per key.
Scenario scripts schedule everything else through :meth:`World.at`.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import json
import math
import random
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .. import __version__, group, keychain
from ..auth.wire import BackdoorOracle, frame, unframe
from ..errors import ConfigError, DecryptFailure, InvalidArgument
from ..keychain import EpochCache, MasterKeyRecord
from .config import AdversaryConfig, WorldConfig

LOCATION = struct.Struct(">ddq")


def encode_location(x: float, y: float, t: int) -> bytes:
    return LOCATION.pack(float(x), float(y), int(t))


def decode_location(data: bytes) -> tuple[float, float, int]:
    if len(data) != LOCATION.size:
        raise InvalidArgument("location payload must be 24 bytes")
    return LOCATION.unpack(data)


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:32]


def distance(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass
class Device:
    device_id: str
    owner: Optional[str] = None  # principal label; None for anonymous passers-by
    position: tuple[float, float] = (0.0, 0.0)
    master: Optional[MasterKeyRecord] = None
    bluetooth: bool = True
    internet: bool = True
    cellular: bool = True
    finder_enabled: bool = True
    indoor: bool = False
    listening: bool = False
    offline_windows: list[tuple[int, int]] = field(default_factory=list)
    key_log: list[tuple[int, bytes]] = field(default_factory=list)
    inbox: list[tuple[int, str, tuple[bytes, ...]]] = field(default_factory=list)
    on_receive: Optional[Callable] = None
    notes: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        return self.owner or self.device_id

    def go_offline(self, start: int, end: int) -> None:
        """Switch WiFi and cellular off for ``[start, end)``."""
        self.offline_windows.append((start, end))

    def keys_heard(self, start: int = 0, end: Optional[int] = None) -> list[bytes]:
        out = []
        for t, key in self.key_log:
            if t >= start and (end is None or t < end) and key not in out:
                out.append(key)
        return out


class ReportStore:
    """Append-only map from 32-byte index to ``(ciphertext, upload time)`` entries."""

    def __init__(self):
        self.entries: dict[bytes, list[tuple[bytes, int]]] = {}
        self.log: list[tuple[bytes, bytes, int]] = []

    def append(self, index: bytes, blob: bytes, t: int) -> bool:
        if len(index) != group.HASH_LEN:
            raise InvalidArgument("server index must be 32 bytes")
        bucket = self.entries.setdefault(bytes(index), [])
        if any(b == blob for b, _ in bucket):
            return False
        bucket.append((bytes(blob), t))
        self.log.append((bytes(index), bytes(blob), t))
        return True

    def get(self, index: bytes) -> list[tuple[bytes, int]]:
        return list(self.entries.get(bytes(index), ()))

    def all_bytes(self) -> Iterable[bytes]:
        for index, blob, _ in self.log:
            yield index
            yield blob

    def __len__(self) -> int:
        return len(self.log)


@dataclass(frozen=True)
class Event:
    time: int
    seq: int
    kind: str
    actor: str
    digest: str
    position: tuple[float, float]
    detail: dict = field(default_factory=dict)

    def record(self) -> dict:
        return {
            "time": self.time,
            "seq": self.seq,
            "kind": self.kind,
            "actor": self.actor,
            "digest": self.digest,
            "position": [round(self.position[0], 3), round(self.position[1], 3)],
            "detail": {k: self.detail[k] for k in sorted(self.detail)},
        }


@dataclass(frozen=True)
class Observation:
    """One emission seen by the adversary."""

    time: int
    ref: int  # seq of the emission event
    sniffer: str  # watch-zone label or botnet device id
    kind: str
    payload: bytes
    position: tuple[float, float]  # where the sniffer listens from
    radius: float  # how far it hears

    def record(self) -> dict:
        return {
            "time": self.time,
            "ref": self.ref,
            "sniffer": self.sniffer,
            "kind": self.kind,
            "payload": self.payload.hex(),
            "position": [round(self.position[0], 3), round(self.position[1], 3)],
            "radius": self.radius,
        }


@dataclass
class Track:
    label: str
    indoor: bool
    path: list[tuple[int, float, float]]
    removed_at: Optional[int] = None

    def position_at(self, t: int) -> Optional[tuple[float, float]]:
        if self.removed_at is not None and t >= self.removed_at:
            return None
        pos = None
        for pt, x, y in self.path:
            if pt > t:
                break
            pos = (x, y)
        return pos


@dataclass
class SimTrace:
    """Everything a run emitted; the source of truth for all metrics."""

    manifest: dict
    events: list[Event] = field(default_factory=list)
    tracks: dict[str, Track] = field(default_factory=dict)
    store: list[tuple[bytes, bytes, int]] = field(default_factory=list)
    observations: list[Observation] = field(default_factory=list)
    oracle_plaintexts: list[bytes] = field(default_factory=list)
    principals: tuple[str, ...] = ()
    verdicts: dict = field(default_factory=dict)

    def lines(self) -> list[str]:
        dump = lambda obj: json.dumps(obj, separators=(",", ":"))  # noqa: E731
        out = [dump({"record": "manifest", **self.manifest, "principals": list(self.principals)})]
        for dev_id in sorted(self.tracks):
            tr = self.tracks[dev_id]
            out.append(
                dump(
                    {
                        "record": "track",
                        "device": dev_id,
                        "label": tr.label,
                        "indoor": tr.indoor,
                        "path": [[t, round(x, 3), round(y, 3)] for t, x, y in tr.path],
                        "removed_at": tr.removed_at,
                    }
                )
            )
        out += [dump({"record": "event", **e.record()}) for e in self.events]
        out += [dump({"record": "store", "index": i.hex(), "blob": b.hex(), "time": t}) for i, b, t in self.store]
        out += [dump({"record": "observation", **o.record()}) for o in self.observations]
        out += [dump({"record": "oracle", "plaintext": p.hex()}) for p in self.oracle_plaintexts]
        out.append(dump({"record": "verdict", **{k: self.verdicts[k] for k in sorted(self.verdicts)}}))
        return out

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def digest(self) -> str:
        return hashlib.sha256(self.text().encode()).hexdigest()

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.text())

    def events_of(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.kind == kind]

    def event(self, seq: int) -> Event:
        return self.events[seq]

    def sensitive_events(self) -> list[Event]:
        return [e for e in self.events if e.kind == "ble" and e.detail.get("wb")]

    def position_at(self, device_id: str, t: int):
        return self.tracks[device_id].position_at(t)

    def observations_of(self, seq: int) -> list[Observation]:
        return [o for o in self.observations if o.ref == seq]


class World:
    def __init__(self, cfg: WorldConfig, scenario: str, adversary: Optional[AdversaryConfig] = None):
        self.cfg = cfg
        self.adv = adversary if adversary is not None else cfg.adversary
        self.adv.validate(cfg.duration)
        self.adv.check_zone_refs()
        self.scenario = scenario
        self.rng = random.Random(cfg.seed)
        self.now = 0
        self.devices: dict[str, Device] = {}
        self.store = ReportStore()
        self.trace = SimTrace({"scenario": scenario, "version": __version__, **cfg.manifest(), "zones": self._zone_manifest()})
        self.oracle = BackdoorOracle()
        self._known_keys: set[int] = set()
        self._queue: list = []
        self._counter = itertools.count()
        self._caches: dict[bytes, EpochCache] = {}
        self._uploaded: set[tuple[str, bytes]] = set()
        self.at(0, self._tick)
        for spec in cfg.devices:
            self.add(
                Device(
                    spec.device_id,
                    None,
                    spec.position,
                    bluetooth=spec.bluetooth,
                    internet=spec.internet,
                    cellular=spec.cellular,
                    finder_enabled=spec.finder,
                    indoor=spec.indoor,
                )
            )

    def _zone_manifest(self) -> list:
        return [[z.label, list(z.center), z.radius] for z in self.adv.watch_zones]

    # ----- population

    def new_master(self) -> MasterKeyRecord:
        return MasterKeyRecord.generate(self.rng, created_at=0)

    def add(self, dev: Device) -> Device:
        if dev.device_id in self.devices or dev.device_id in self.trace.tracks:
            raise ConfigError(f"duplicate device id {dev.device_id!r}")
        self.devices[dev.device_id] = dev
        self.trace.tracks[dev.device_id] = Track(dev.label, dev.indoor, [(self.now, *dev.position)])
        if dev.master is not None:
            self._register_master(dev.master)
        return dev

    def crowd(self, prefix: str, n: int, center, radius: float, **kw) -> list[Device]:
        """``n`` anonymous devices scattered uniformly in a disc."""
        out = []
        for k in range(n):
            r = radius * math.sqrt(self.rng.random())
            a = 2 * math.pi * self.rng.random()
            pos = (center[0] + r * math.cos(a), center[1] + r * math.sin(a))
            out.append(self.add(Device(f"{prefix}-{k:02d}", None, pos, **kw)))
        return out

    def remove(self, device_id: str, reason: str) -> Device:
        dev = self.devices.pop(device_id)
        self.trace.tracks[device_id].removed_at = self.now
        self._event("remove", device_id, reason.encode(), dev.position, {"reason": reason})
        return dev

    def move(self, device_id: str, pos, indoor: Optional[bool] = None) -> None:
        dev = self.devices.get(device_id)
        if dev is None:
            return
        dev.position = (float(pos[0]), float(pos[1]))
        if indoor is not None:
            dev.indoor = indoor
        self.trace.tracks[device_id].path.append((self.now, *dev.position))
        self._event("move", device_id, b"", dev.position)

    def principals(self, *labels: str) -> None:
        self.trace.principals = tuple(dict.fromkeys(self.trace.principals + labels))

    # ----- scheduling

    def at(self, t: int, fn: Callable, *args) -> None:
        if t < self.now:
            raise InvalidArgument(f"cannot schedule at {t} before now={self.now}")
        heapq.heappush(self._queue, (t, next(self._counter), fn, args))

    def step_world(self, until: int) -> list[Event]:
        """Process every scheduled action with time <= ``until``; return new events."""
        if until < self.now:
            raise InvalidArgument("until must not precede the current time")
        first = len(self.trace.events)
        while self._queue and self._queue[0][0] <= until:
            t, _, fn, args = heapq.heappop(self._queue)
            self.now = t
            fn(*args)
        self.now = until
        return self.trace.events[first:]

    def run(self) -> None:
        self.step_world(self.cfg.duration)

    # ----- radio state

    def _cut(self, pos, t: int) -> bool:
        return any(w.active(t) and self.adv.zone(w.zone).contains(pos) for w in self.adv.internet_cut)

    def _jammed(self, pos, t: int) -> bool:
        return any(w.active(t) and self.adv.zone(w.zone).contains(pos) for w in self.adv.jamming)

    def online(self, dev: Device, t: Optional[int] = None) -> bool:
        t = self.now if t is None else t
        if not (dev.internet or dev.cellular):
            return False
        if any(s <= t < e for s, e in dev.offline_windows):
            return False
        return not self._cut(dev.position, t)

    def can_emit(self, dev: Device) -> bool:
        """Bluetooth on and no WiFi or cellular: the offline trigger."""
        return dev.bluetooth and not self.online(dev)

    def link_range(self, a: Device, b: Optional[Device] = None) -> float:
        indoor = a.indoor or (b is not None and b.indoor)
        return self.cfg.range_model.link(indoor)

    def linked(self, a: Device, b: Device) -> bool:
        if not (a.bluetooth and b.bluetooth):
            return False
        if self._jammed(a.position, self.now) or self._jammed(b.position, self.now):
            return False
        return distance(a.position, b.position) <= self.link_range(a, b)

    def in_range(self, sender: Device) -> list[Device]:
        return [d for _, d in sorted(self.devices.items()) if d is not sender and self.linked(sender, d)]

    # ----- keys

    def _register_master(self, master: MasterKeyRecord) -> EpochCache:
        tag = master.to_bytes()
        if tag not in self._caches:
            self._caches[tag] = EpochCache(master)
        return self._caches[tag]

    def epoch(self, master: MasterKeyRecord, i: int) -> keychain.EpochState:
        state = self._register_master(master).get(i)
        if state.d_i not in self._known_keys:
            self._known_keys.add(state.d_i)
            self.oracle.keys.append((state.d_i, state.P_i))
        return state

    def current_epoch(self, master: MasterKeyRecord) -> keychain.EpochState:
        return self.epoch(master, keychain.epoch_at(master, self.now))

    def register_key(self, d: int) -> None:
        if d not in self._known_keys:
            self._known_keys.add(d)
            self.oracle.keys.append((d, group.public_key(d)))

    # ----- events and the adversary's ears

    def _event(self, kind: str, actor: str, payload: bytes, pos, detail: Optional[dict] = None) -> Event:
        ev = Event(self.now, len(self.trace.events), kind, actor, digest(payload), tuple(pos), detail or {})
        self.trace.events.append(ev)
        return ev

    def _observe(self, ev: Event, sender: Device, kind: str, payload: bytes) -> None:
        if self.adv.has("passive_sniff"):
            for z in self.adv.watch_zones:
                if z.contains(sender.position):
                    self._observation(ev, z.label, kind, payload, z.center, z.radius)
        if self.adv.has("botnet"):
            for bot_id in self.adv.botnet:
                bot = self.devices.get(bot_id)
                if bot is not None and bot is not sender and self.linked(sender, bot):
                    self._observation(ev, bot_id, kind, payload, bot.position, self.link_range(bot))

    def _observation(self, ev, sniffer, kind, payload, pos, radius) -> None:
        obs = Observation(self.now, ev.seq, sniffer, kind, payload, tuple(pos), float(radius))
        self.trace.observations.append(obs)
        self._event("observe", sniffer, payload, pos, {"ref": ev.seq, "kind": kind})

    # ----- periodic key broadcast

    def _tick(self) -> None:
        for dev_id in sorted(self.devices):
            dev = self.devices.get(dev_id)
            if dev is not None and dev.master is not None and self.can_emit(dev):
                self._broadcast_key(dev)
        nxt = self.now + self.cfg.broadcast_interval
        if nxt <= self.cfg.duration:
            self.at(nxt, self._tick)

    def _broadcast_key(self, dev: Device) -> None:
        state = self.current_epoch(dev.master)
        key = group.encode_point(state.P_i)
        receivers = self.in_range(dev)
        ev = self._event("broadcast", dev.device_id, key, dev.position, {"epoch": state.i, "heard_by": len(receivers)})
        self._observe(ev, dev, "key", key)
        index = None
        for r in receivers:
            if r.listening:
                r.key_log.append((self.now, key))
            if r.finder_enabled and self.online(r):
                index = index or group.hash_index(state.P_i)
                if (r.device_id, index) not in self._uploaded:
                    self._uploaded.add((r.device_id, index))
                    report = group.ecies_encrypt(encode_location(*r.position, self.now), state.P_i, self.rng)
                    self.upload(r.device_id, index, report.to_bytes(), kind="report")

    # ----- payload transmission and the store

    def emit(self, sender_id: str, kind: str, fields: Iterable[bytes], *, sensitive: bool = False) -> list[str]:
        """Broadcast framed ``fields`` over Bluetooth; returns receiver ids.

        ``kind="drop"`` packets are ``[index, ciphertext]`` pairs that online
        finders relay to the store, as they would a location report.
        """
        dev = self.devices[sender_id]
        if not self.can_emit(dev):
            raise InvalidArgument(f"{sender_id} is online or has Bluetooth off and cannot broadcast")
        fields = tuple(bytes(f) for f in fields)
        payload = frame(fields)
        receivers = self.in_range(dev)
        detail = {"kind": kind, "receivers": [r.device_id for r in receivers], "radius": self.link_range(dev)}
        if sensitive:
            detail["wb"] = True
        ev = self._event("ble", sender_id, payload, dev.position, detail)
        self._observe(ev, dev, kind, payload)
        for r in receivers:
            r.inbox.append((self.now, kind, fields))
            if kind == "drop" and r.finder_enabled and self.online(r):
                self.upload(r.device_id, fields[0], fields[1], kind="relay")
            if r.on_receive is not None:
                r.on_receive(self, r, kind, fields)
        return detail["receivers"]

    def upload(self, device_id: str, index: bytes, blob: bytes, kind: str = "upload") -> bool:
        dev = self.devices[device_id]
        if not self.online(dev):
            raise InvalidArgument(f"{device_id} is offline and cannot reach the store")
        fresh = self.store.append(index, blob, self.now)
        if fresh:
            self._event("store_write", device_id, blob, dev.position, {"index": index.hex(), "via": kind})
        return fresh

    def query(self, device_id: str, index: bytes) -> list[tuple[bytes, int]]:
        dev = self.devices[device_id]
        if not self.online(dev):
            raise InvalidArgument(f"{device_id} is offline and cannot reach the store")
        found = self.store.get(index)
        self._event("store_read", device_id, index, dev.position, {"hits": len(found)})
        return found

    def poll_own(self, device_id: str, master: MasterKeyRecord, t_from: int = 0, t_to: Optional[int] = None):
        """Owner-side lookup: ``(epoch state, blob, upload time, plaintext)`` for every decryptable entry."""
        t_to = self.now if t_to is None else t_to
        out = []
        first = keychain.epoch_at(master, t_from)
        for k, index in enumerate(keychain.owner_lookup_indices(master, t_from, t_to)):
            state = self.epoch(master, first + k)
            for blob, t in self.query(device_id, index):
                try:
                    plain = group.ecies_decrypt(blob, state.d_i)
                except DecryptFailure:
                    continue
                out.append((state, blob, t, plain))
        return out

    # ----- wrap-up

    def _oracle_pass(self) -> list[bytes]:
        """Global decryption over everything the adversary saw plus the store."""
        last = self.cfg.duration // keychain.EPOCH_SECONDS
        by_index: dict[bytes, int] = {}
        for cache in list(self._caches.values()):
            for i in range(last + 1):
                state = self.epoch(cache.master, i)
                by_index[group.hash_index(state.P_i)] = state.d_i
        seen: list[bytes] = []
        done: set[bytes] = set()

        def read(blob: bytes, d: Optional[int] = None) -> None:
            if blob in done:
                return
            done.add(blob)
            try:
                group.Ciphertext.from_bytes(blob)
            except DecryptFailure:
                return
            plain = None
            if d is not None:
                try:
                    plain = group.ecies_decrypt(blob, d)
                except DecryptFailure:
                    plain = None
            if plain is None:
                plain = self.oracle.try_decrypt(blob)
            if plain is not None:
                seen.append(plain)

        for obs in self.trace.observations:
            if obs.kind == "key":
                continue
            try:
                fields = unframe(obs.payload)
            except InvalidArgument:
                continue
            for f in fields:
                read(f)
        for index, blob, _ in self.store.log:
            read(blob, by_index.get(index))
        return seen

    def finish(self, verdicts: dict) -> SimTrace:
        self.trace.store = list(self.store.log)
        if self.adv.has("backdoor_oracle"):
            self.trace.oracle_plaintexts = self._oracle_pass()
        self.trace.verdicts = verdicts
        return self.trace
