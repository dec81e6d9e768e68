"""What the adversary can conclude from a trace."""

from __future__ import annotations

from collections import defaultdict
from typing import Optional

from .. import group, keychain
from ..auth.wire import plaintext_mentions, unframe
from ..errors import ConfigError, DecryptFailure, InvalidArgument
from ..keychain import MasterKeyRecord
from .config import AdversaryConfig
from .world import Event, SimTrace, decode_location, distance


def _devices_near(trace: SimTrace, center, radius: float, t: int) -> set[str]:
    out = set()
    for tr in trace.tracks.values():
        pos = tr.position_at(t)
        if pos is not None and distance(pos, center) <= radius:
            out.add(tr.label)
    return out


def anonymity_set(trace: SimTrace, adv: AdversaryConfig, event: Event) -> set[str]:
    """Labels of every device that could have sent ``event``.

    Each sniffer that heard it contributes the devices within its reception
    radius and the adversary intersects them. Unobserved emissions fall back
    to the first receiver, then to the transmitter's own position.
    """
    t = event.time
    observers = trace.observations_of(event.seq)
    if observers:
        sets = [_devices_near(trace, o.position, o.radius, t) for o in observers]
        return set.intersection(*sets)
    radius = float(event.detail.get("radius", 0.0))
    for rid in event.detail.get("receivers", ()):
        pos = trace.position_at(rid, t)
        if pos is not None:
            return _devices_near(trace, pos, radius, t)
    return _devices_near(trace, event.position, radius, t)


def anonymity_sizes(trace: SimTrace, adv: AdversaryConfig) -> list[int]:
    return [len(anonymity_set(trace, adv, e)) for e in trace.sensitive_events()]


def oracle_labels(trace: SimTrace) -> set[str]:
    """Principal labels appearing in anything the backdoor oracle decrypted."""
    return {lab for lab in trace.principals for p in trace.oracle_plaintexts if plaintext_mentions(p, lab)}


def identify(trace: SimTrace, adv: AdversaryConfig) -> Optional[str]:
    """Attribution under the conservative rule, then the oracle's label scan.

    An observed sensitive emission is attributed only when its anonymity set
    is a single device.
    """
    for ev in trace.sensitive_events():
        if not trace.observations_of(ev.seq):
            continue
        cands = anonymity_set(trace, adv, ev)
        if len(cands) == 1:
            return next(iter(cands))
    if adv.has("backdoor_oracle"):
        found = sorted(oracle_labels(trace))
        if found:
            return found[0]
    return None


def attack_key_correlation(trace: SimTrace, adv: AdversaryConfig, suspect: str = "Bob", window: int = 60) -> Optional[str]:
    """Join keys sniffed at homes with keys the botnet saw side by side.

    Home zones are watch zones labelled ``home:<label>``. If some botnet
    sniffer heard a key from ``suspect``'s home within ``window`` seconds of
    a key from another home, that other home's label is returned.
    """
    for cap in ("internet_cut", "botnet"):
        if not adv.has(cap):
            raise ConfigError(f"key correlation needs the {cap} capability")
    homes = {z.label.split(":", 1)[1]: z.label for z in adv.watch_zones if z.label.startswith("home:")}
    if suspect not in homes:
        raise ConfigError(f"no home zone for suspect {suspect!r}")
    home_keys: dict[str, set[bytes]] = defaultdict(set)
    by_bot: dict[str, list] = defaultdict(list)
    bots = set(adv.botnet)
    for o in trace.observations:
        if o.kind != "key":
            continue
        if o.sniffer.startswith("home:"):
            home_keys[o.sniffer.split(":", 1)[1]].add(o.payload)
        elif o.sniffer in bots:
            by_bot[o.sniffer].append(o)
    suspect_keys = home_keys.get(suspect, set())
    if not suspect_keys:
        return None
    for bot in sorted(by_bot):
        seen = by_bot[bot]
        for o in seen:
            if o.payload not in suspect_keys:
                continue
            near = {p.payload for p in seen if abs(p.time - o.time) <= window}
            for label in sorted(homes):
                if label != suspect and home_keys.get(label, set()) & near:
                    return label
    return None


def attack_crowd_tracking(
    trace: SimTrace, adv: AdversaryConfig, master: MasterKeyRecord
) -> list[tuple[str, tuple[float, float], int]]:
    """Poll the store under the distributed key and decode informer sightings."""
    if not adv.has("camera_reports"):
        return []
    end = int(trace.manifest.get("duration", 0))
    store: dict[bytes, list[bytes]] = defaultdict(list)
    for index, blob, _ in trace.store:
        store[index].append(blob)
    out = []
    for i in range(keychain.epoch_at(master, end) + 1):
        state = keychain.derive_epoch(master, i)
        for blob in store.get(group.hash_index(state.P_i), ()):
            try:
                loc, tag = unframe(group.ecies_decrypt(blob, state.d_i))
                x, y, t = decode_location(loc)
            except (DecryptFailure, InvalidArgument, ValueError):
                continue
            out.append((tag.decode(), (x, y), t))
    return sorted(out, key=lambda r: (r[2], r[0]))
