"""Scripted scenarios: the four rendezvous models, the missing-person flow,
and the two surveillance attacks.

Every scenario builds a :class:`World` from a :class:`WorldConfig`, runs it to
the configured duration and returns the :class:`SimTrace` with a verdict
dict. Common verdict keys:

``goal_met``            the scenario's success predicate (drives the CLI exit code)
``delivered``           the secret / location reached its intended reader
``identification``      adversary's attribution, ``None`` when it has none
``anonymity_set_min``   smallest anonymity set over whistleblower emissions
``accepted_lures``      fake appointments acted upon
"""

from __future__ import annotations

from typing import Callable, Optional

from .. import contfrac, group
from ..auth.wire import encode_nonce, fresh_nonce, frame, unframe
from ..errors import ConfigError, DecryptFailure, InvalidArgument
from .adversary import anonymity_sizes, attack_crowd_tracking, attack_key_correlation, identify, oracle_labels
from .config import AdversaryConfig, WatchZone, WorldConfig, ZoneWindow
from .world import Device, SimTrace, World, decode_location, encode_location

MIN_ANONYMITY = 20
CROWD = 30
SECRET_LEN = 48


def _secret(w: World) -> bytes:
    return b"LEAK:" + group.random_bytes(w.rng, SECRET_LEN - 5)


def _require(cfg: WorldConfig, duration: int, scenario: str) -> None:
    if cfg.duration < duration:
        raise ConfigError(f"{scenario} needs duration >= {duration}, got {cfg.duration}")


def _loc_msg(x: float, y: float, t: int) -> bytes:
    return frame([encode_location(x, y, t)])


def _seal(w: World, fields, pub) -> bytes:
    return group.ecies_encrypt(frame(fields), pub, w.rng).to_bytes()


def _conclude(w: World, verdicts: dict, goal: Callable[[dict], bool]) -> SimTrace:
    trace = w.finish(verdicts)
    sizes = anonymity_sizes(trace, w.adv)
    verdicts["anonymity_set_min"] = min(sizes) if sizes else None
    verdicts["whistleblower_emissions"] = len(sizes)
    verdicts["identification"] = identify(trace, w.adv)
    verdicts["oracle_labels"] = sorted(oracle_labels(trace))
    verdicts["oracle_reads"] = len(trace.oracle_plaintexts)
    verdicts["goal_met"] = bool(goal(verdicts))
    return trace


def _anonymous_ok(v: dict) -> bool:
    return v["identification"] is None and (v["anonymity_set_min"] is None or v["anonymity_set_min"] >= MIN_ANONYMITY)


def _decrypt_any(blob: bytes, keys) -> Optional[bytes]:
    for d in keys:
        try:
            return group.ecies_decrypt(blob, d)
        except DecryptFailure:
            continue
    return None


def _retained_keys(w: World, dev: Device) -> list[int]:
    """Every epoch private key the owner can re-derive up to now."""
    if dev.master is None:
        return []
    return [w.epoch(dev.master, i).d_i for i in range(w.now // 900 + 1)]


# --------------------------------------------------------------------------
# Model 1: known journalist, dead drop via a passer-by, CF trap protection
# --------------------------------------------------------------------------

M1_CAFE = (0.0, 0.0)
M1_ALICE_HOME = (-2500.0, 300.0)
M1_BOB_HOME = (5000.0, 0.0)
M1_PLACE = (1200.0, 800.0)
M1_LURE = (-800.0, -900.0)


def run_model1(cfg: WorldConfig) -> SimTrace:
    """Options: ``trap_protection`` (True), ``crowd`` (30), ``meet_time`` (3000)."""
    _require(cfg, 3100, "model1")
    default = AdversaryConfig(frozenset({"passive_sniff"}), (WatchZone("cafe", M1_CAFE, 60.0),))
    adv = cfg.adversary.merged_with(default)
    w = World(cfg, "model1", adv)
    protect = bool(cfg.option("trap_protection", True))
    meet_t = int(cfg.option("meet_time", 3000))
    alice = w.add(Device("alice-phone", "Alice", M1_ALICE_HOME, master=w.new_master()))
    bob = w.add(Device("bob-phone", "Bob", M1_BOB_HOME, master=w.new_master()))
    pongo = w.add(Device("pongo-phone", "Pongo", (3000.0, 3000.0)))
    w.crowd("cafe", int(cfg.option("crowd", CROWD)), M1_CAFE, 25.0)
    w.principals("Alice", "Bob", "Pongo")

    # prerequisite: both sides hold the other's key list for the operation
    e = 0
    pa, pb = w.epoch(alice.master, e).P_i, w.epoch(bob.master, e).P_i
    st = {
        "na": fresh_nonce(w.rng),
        "nb": None,
        "alice_auth": False,
        "bob_auth": False,
        "place": None,
        "accepted": 0,
        "rejected": 0,
        "seen_a": set(),
        "seen_b": set(),
    }

    def drop(fields) -> None:
        w.emit(alice.device_id, "drop", [group.hash_index(pb), _seal(w, fields, pb)], sensitive=True)

    def visit_cafe(t_in: int, actions) -> None:
        w.at(t_in, w.move, alice.device_id, (M1_CAFE[0] + 3.0, M1_CAFE[1] + 2.0))
        alice.go_offline(t_in + 10, t_in + 150)
        for k, act in enumerate(actions):
            w.at(t_in + 40 + 10 * k, act)
        w.at(t_in + 160, w.move, alice.device_id, M1_ALICE_HOME)

    if protect:
        visit_cafe(200, [lambda: drop([encode_nonce(st["na"])])])
    else:
        visit_cafe(200, [lambda: drop([encode_location(*M1_PLACE, meet_t)])])

    def bob_poll() -> None:
        if not w.online(bob):
            return
        for state, blob, t_up, plain in w.poll_own(bob.device_id, bob.master):
            if blob in st["seen_b"] or len(plain) == 24:
                continue
            st["seen_b"].add(blob)
            try:
                fields = unframe(plain)
            except InvalidArgument:
                continue
            if protect and len(fields) == 1 and len(fields[0]) == 16 and st["nb"] is None:
                na = int.from_bytes(fields[0], "big")
                st["nb"] = fresh_nonce(w.rng)
                fc1 = contfrac.derive_fc(na, pa, pb)
                w.upload(bob.device_id, group.hash_index(pa), _seal(w, [fc1.to_bytes(), encode_nonce(st["nb"])], pa))
            elif protect and len(fields) == 1 and len(fields[0]) == 72 and st["nb"] is not None:
                st["bob_auth"] = contfrac.derive_fc(st["nb"], pb, pa).matches(fields[0])
            elif len(fields) == 1 and len(fields[0]) == 24 and (st["bob_auth"] or not protect):
                st["place"] = decode_location(fields[0])

    def alice_poll() -> None:
        if not w.online(alice):
            return
        for state, blob, t_up, plain in w.poll_own(alice.device_id, alice.master):
            if blob in st["seen_a"] or len(plain) == 24:  # reports about her own phone
                continue
            st["seen_a"].add(blob)
            try:
                fields = unframe(plain)
            except InvalidArgument:
                continue
            if protect:
                ok = (
                    len(fields) == 2
                    and not st["alice_auth"]
                    and contfrac.derive_fc(st["na"], pa, pb).matches(fields[0])
                    and len(fields[1]) == 16
                )
                if ok:
                    st["alice_auth"] = True
                    nb = int.from_bytes(fields[1], "big")
                    fc2 = contfrac.derive_fc(nb, pb, pa).to_bytes()
                    visit_cafe(w.now + 100, [lambda: drop([fc2]), lambda: drop([encode_location(*M1_PLACE, meet_t)])])
                else:
                    st["rejected"] += 1
            elif len(fields) == 1 and len(fields[0]) == 24:
                x, y, t = decode_location(fields[0])
                if t > t_up:  # an appointment, taken at face value
                    st["accepted"] += 1
                    w.at(max(t - 60, w.now), w.move, alice.device_id, (x, y))

    for t in range(400, 2800, 150):
        w.at(t, bob_poll)
        w.at(t + 60, alice_poll)

    if adv.has("fake_appointments"):
        # Pongo picked up Alice's broadcast key at the cafe
        def lure() -> None:
            w.upload(pongo.device_id, group.hash_index(pa), _seal(w, [encode_location(*M1_LURE, 2000)], pa))
            forged = group.random_bytes(w.rng, 72)
            w.upload(pongo.device_id, group.hash_index(pa), _seal(w, [forged, encode_nonce(fresh_nonce(w.rng))], pa))

        w.at(430, lure)

    def meet() -> None:
        if st["place"] is not None:
            w.move(bob.device_id, M1_PLACE)
            if st["alice_auth"] or not protect:
                w.move(alice.device_id, (M1_PLACE[0] + 15.0, M1_PLACE[1]))

    w.at(meet_t - 30, meet)
    w.run()
    verdicts = {
        "scenario": "model1",
        "trap_protection": protect,
        "delivered": st["place"] is not None and tuple(st["place"][:2]) == M1_PLACE,
        "authenticated": bool(st["alice_auth"] and st["bob_auth"]) if protect else None,
        "accepted_lures": st["accepted"],
        "rejected_lures": st["rejected"],
    }
    return _conclude(w, verdicts, lambda v: v["delivered"] and _anonymous_ok(v) and v["accepted_lures"] == 0)


# --------------------------------------------------------------------------
# Model 2: harvest keys at the press conference, hand the secret to strangers
# --------------------------------------------------------------------------

M2_CONF = (0.0, 0.0)
M2_FALLBACK = (2000.0, 0.0)
M2_SUBWAY = (4000.0, 0.0)
M2_SQUARE = (3000.0, 2000.0)
M2_FAKE = (-1500.0, 1500.0)
M2_MEET = 2400
M2_FAKE_MEET = 2000


def run_model2(cfg: WorldConfig) -> SimTrace:
    """Options: ``journalists`` (4), ``helpers`` (3), ``jamming`` (False),
    ``arrest`` (False), ``pool`` (False), ``crowd`` (30)."""
    _require(cfg, 2700, "model2")
    zones = (
        WatchZone("conference", M2_CONF, 100.0),
        WatchZone("subway", M2_SUBWAY, 60.0),
    )
    caps = {"passive_sniff"}
    jam: tuple = ()
    if cfg.option("jamming", False):
        caps.add("jamming")
        jam = (ZoneWindow("conference", 50, 450),)
    adv = cfg.adversary.merged_with(AdversaryConfig(frozenset(caps), zones, jamming=jam))
    w = World(cfg, "model2", adv)
    secret = _secret(w)
    use_pool = bool(cfg.option("pool", False))

    alice = w.add(Device("alice-phone", "Alice", (-3000.0, -3000.0), listening=True))
    journalists = [
        w.add(Device(f"journalist-{k}", f"Journalist-{k}", (500.0 + 40 * k, 3000.0), master=w.new_master(), listening=True))
        for k in range(1, int(cfg.option("journalists", 4)) + 1)
    ]
    opponents = [
        w.add(Device(f"ss-{k}", f"SS-{k}", (-500.0, 400.0 * k), master=w.new_master(), listening=True)) for k in (1, 2)
    ]
    opponents.append(w.add(Device("tartuffe", "Tartuffe", (-900.0, 0.0), master=w.new_master(), listening=True)))
    attendees = journalists + opponents
    helpers = [
        w.add(Device(f"helper-{k}", None, (M2_SUBWAY[0] + 6.0 * k, M2_SUBWAY[1] - 8.0), master=w.new_master(), listening=True))
        for k in range(int(cfg.option("helpers", 3)))
    ]
    w.crowd("subway", int(cfg.option("crowd", CROWD)), M2_SUBWAY, 25.0)
    w.principals("Alice", *[d.owner for d in attendees])
    pool = w.new_master() if use_pool else None
    pool_key = w.epoch(pool, 0).P_i if pool else None

    # the press conference: everyone inside switches WiFi and cellular off
    for k, dev in enumerate(attendees):
        w.at(90, w.move, dev.device_id, (M2_CONF[0] + 3.0 * k, M2_CONF[1] + 2.0 * (k % 3)), True)
        dev.go_offline(100, 400)
        w.at(450, w.move, dev.device_id, (dev.position[0], dev.position[1]), False)
    for k, dev in enumerate(journalists):
        # journalists also frequent the university every day
        w.at(590, w.move, dev.device_id, (M2_FALLBACK[0] + 4.0 * k, M2_FALLBACK[1]))
        dev.go_offline(600, 800)
        w.at(810, w.move, dev.device_id, (500.0 + 40 * k, 3000.0))
    w.at(90, w.move, alice.device_id, (M2_CONF[0] - 4.0, M2_CONF[1]), True)
    alice.go_offline(100, 400)
    st: dict = {"harvest": [], "site": None, "anon": [], "trips": {}, "readers": set(), "arrest": None}

    def harvest_conference() -> None:
        st["harvest"] = alice.keys_heard(100, 400)
        if st["harvest"]:
            st["site"] = "conference"
            w.move(alice.device_id, (-3000.0, -3000.0), False)
        else:
            w.move(alice.device_id, (M2_FALLBACK[0], M2_FALLBACK[1] - 10.0), False)
            alice.go_offline(595, 805)

    def harvest_fallback() -> None:
        if st["site"] is None:
            st["harvest"] = alice.keys_heard(600, 800)
            st["site"] = "fallback" if st["harvest"] else None

    w.at(420, harvest_conference)
    w.at(820, harvest_fallback)

    # the subway: anonymous helpers are offline and broadcasting
    for h in helpers:
        h.go_offline(950, 1150)
    w.at(990, w.move, alice.device_id, (M2_SUBWAY[0] + 2.0, M2_SUBWAY[1] + 1.0))
    alice.go_offline(1000, 1200)

    def step1() -> None:
        st["anon"] = [k for k in alice.keys_heard(1000, 1100) if k not in st["harvest"]]
        for key in st["harvest"]:
            pub = group.decode_point(key)
            w.emit(alice.device_id, "secret", [group.ecies_encrypt(secret, pub, w.rng).to_bytes()], sensitive=True)

    def step2() -> None:
        for key in st["harvest"] + st["anon"]:
            pub = group.decode_point(key)
            w.emit(alice.device_id, "drop", [group.hash_index(pub), _seal(w, [encode_location(*M2_SQUARE, M2_MEET)], pub)], sensitive=True)

    w.at(1100, step1)
    w.at(1120, step2)
    w.at(1210, w.move, alice.device_id, (-3000.0, -3000.0))

    if adv.has("fake_appointments"):
        ss = opponents[0]

        def fake() -> None:
            for key in ss.keys_heard(100, 400):
                pub = group.decode_point(key)
                w.upload(ss.device_id, group.hash_index(pub), _seal(w, [encode_location(*M2_FAKE, M2_FAKE_MEET)], pub))

        w.at(1300, fake)

    def appointments(dev: Device) -> list[tuple[float, float, int]]:
        out = []
        for _, _, t_up, plain in w.poll_own(dev.device_id, dev.master):
            if len(plain) == 24:
                continue
            try:
                fields = unframe(plain)
                x, y, t = decode_location(fields[0])
            except (InvalidArgument, IndexError):
                continue
            if len(fields) == 1 and t > t_up and (x, y, t) not in out:
                out.append((x, y, t))
        return sorted(out, key=lambda a: a[2])

    def holder_poll(dev: Device) -> None:
        if dev.device_id not in w.devices:
            return
        if use_pool and dev in journalists:
            return
        for x, y, t in appointments(dev):
            st["trips"].setdefault(dev.label, []).append((x, y, t))
            w.at(t - 30, w.move, dev.device_id, (x + w.rng.uniform(-10, 10), y + w.rng.uniform(-10, 10)))
            w.at(t + 45, read_secret, dev, t)

    def read_secret(dev: Device, since: int) -> None:
        keys = _retained_keys(w, dev)
        for t, kind, fields in dev.inbox:
            if kind == "secret" and t >= since and _decrypt_any(fields[0], keys) == secret:
                st["readers"].add(dev.label)
                return

    def helper_poll(h: Device) -> None:
        if h.device_id not in w.devices:
            return
        packages = [f[0] for _, kind, f in h.inbox if kind == "secret"]
        if use_pool:
            for blob in packages:
                w.upload(h.device_id, group.hash_index(pool_key), blob)
            return
        for x, y, t in appointments(h):
            w.at(t - 30, w.move, h.device_id, (x, y))
            h.go_offline(t, t + 60)
            for k, blob in enumerate(packages):
                w.at(t + 5 + k, lambda hid=h.device_id, b=blob: hid in w.devices and w.emit(hid, "secret", [b]))

    for dev in attendees:
        w.at(1500, holder_poll, dev)
    for h in helpers:
        w.at(1500, helper_poll, h)

    if use_pool:
        def pool_read() -> None:
            for dev in journalists + opponents:
                keys = _retained_keys(w, dev)
                for blob, _ in w.query(dev.device_id, group.hash_index(pool_key)):
                    if _decrypt_any(blob, keys) == secret:
                        st["readers"].add(dev.label)
                        break

        w.at(1700, pool_read)

    if cfg.option("arrest", False) and helpers:
        def arrest() -> None:
            h = w.remove(helpers[0].device_id, "arrested")
            state = b"".join(f for _, _, fields in h.inbox for f in fields) + b"".join(k for _, k in h.key_log)
            linked = any(tok in state for tok in (b"Alice", alice.device_id.encode()))
            st["arrest"] = {"device": h.device_id, "alice_linked": linked, "state_bytes": len(state)}

        w.at(1700, arrest)

    w.run()
    wasted = 0
    for label, trips in st["trips"].items():
        for x, y, t in trips:
            if (x, y) == M2_FAKE:
                wasted += 1
    journalist_labels = {d.label for d in journalists}
    opponent_labels = {d.label for d in opponents}
    verdicts = {
        "scenario": "model2",
        "harvest_site": st["site"],
        "harvested_keys": len(st["harvest"]),
        "readers": sorted(st["readers"]),
        "delivered": bool(st["readers"] & journalist_labels),
        "opponents_can_read": bool(st["readers"] & opponent_labels),
        "accepted_lures": wasted,
        "pool": use_pool,
        "arrest": st["arrest"],
    }
    return _conclude(
        w,
        verdicts,
        lambda v: v["delivered"] and _anonymous_ok(v) and not (v["arrest"] or {}).get("alice_linked", False),
    )


# --------------------------------------------------------------------------
# Model 3: encrypt to a stranger's key, let helpers arrange the meeting
# --------------------------------------------------------------------------

M3_PARK = (-3000.0, 0.0)
M3_ANON_HOME = (-3000.0, -300.0)
M3_CAFE = (0.0, 0.0)
M3_FAKE = (-1500.0, 1500.0)


def _m3_square(h: int) -> tuple[float, float]:
    return (1000.0 + 300.0 * h, 1000.0)


def run_model3(cfg: WorldConfig) -> SimTrace:
    """Options: ``helpers`` (3), ``trap_protection`` (False), ``crowd`` (30)."""
    _require(cfg, 2600, "model3")
    caps = {"passive_sniff"}
    botnet: tuple = ()
    if cfg.adversary.has("fake_appointments"):
        caps.add("botnet")
        botnet = ("pongo-park",)
    adv = cfg.adversary.merged_with(
        AdversaryConfig(frozenset(caps), (WatchZone("cafe", M3_CAFE, 60.0),), botnet=botnet)
    )
    w = World(cfg, "model3", adv)
    secret = _secret(w)
    protect = bool(cfg.option("trap_protection", False))
    n_helpers = int(cfg.option("helpers", 3))

    alice = w.add(Device("alice-phone", "Alice", (-6000.0, 0.0), listening=True))
    anon = w.add(Device("anon-user", None, M3_PARK, master=w.new_master(), listening=True))
    anon.go_offline(50, 300)
    w.crowd("park", 3, (M3_PARK[0] + 20.0, M3_PARK[1]), 15.0)
    if "pongo-park" in adv.botnet:
        w.add(Device("pongo-park", "Pongo", (M3_PARK[0] - 10.0, M3_PARK[1] + 5.0), listening=True))
    helpers = [
        w.add(Device(f"helper-{h}", None, (M3_CAFE[0] + 5.0 * h, M3_CAFE[1] - 6.0), listening=True))
        for h in range(n_helpers)
    ]
    w.crowd("cafe", int(cfg.option("crowd", CROWD)), M3_CAFE, 25.0)
    w.principals("Alice", "Pongo")
    st: dict = {"target": None, "appointments": [], "trips": [], "recovered": set(), "flood": None}

    w.at(100, w.move, alice.device_id, (M3_PARK[0] + 10.0, M3_PARK[1]))

    def save_key() -> None:
        heard = alice.keys_heard(100, 200)
        st["target"] = heard[0] if heard else None

    w.at(200, save_key)
    w.at(210, w.move, anon.device_id, M3_ANON_HOME)
    w.at(400, w.move, alice.device_id, (M3_CAFE[0] + 2.0, M3_CAFE[1] + 3.0))
    alice.go_offline(450, 600)

    def step1() -> None:
        if st["target"] is None:
            return
        pub = group.decode_point(st["target"])
        w.emit(alice.device_id, "package", [group.ecies_encrypt(secret, pub, w.rng).to_bytes(), st["target"]], sensitive=True)

    w.at(500, step1)
    w.at(610, w.move, alice.device_id, (-6000.0, 0.0))

    def helper_book(h_idx: int) -> None:
        h = helpers[h_idx]
        pkgs = [f for _, kind, f in h.inbox if kind == "package"]
        if not pkgs:
            return
        ct, key = pkgs[0]
        pub = group.decode_point(key)
        sq, t_meet = _m3_square(h_idx), 2000 + 100 * h_idx
        w.upload(h.device_id, group.hash_index(pub), _seal(w, [encode_location(*sq, t_meet)], pub))
        w.at(t_meet - 30, w.move, h.device_id, sq)
        h.go_offline(t_meet, t_meet + 60)
        w.at(t_meet + 5, lambda: w.emit(h.device_id, "secret", [ct]))
        w.at(t_meet + 40, helper_read, h)

    def helper_read(h: Device) -> None:
        # with the flood, helpers hold the recipient's private key too
        flood = st["flood"]
        if flood is None:
            return
        for _, kind, fields in h.inbox:
            if kind == "package":
                try:
                    if group.ecies_decrypt(fields[0], flood) == secret:
                        st["recovered"].add(h.label)
                except DecryptFailure:
                    pass

    for h_idx in range(n_helpers):
        w.at(700 + 10 * h_idx, helper_book, h_idx)

    if adv.has("fake_appointments"):
        def fake() -> None:
            pongo = w.devices["pongo-park"]
            for key in pongo.keys_heard():
                pub = group.decode_point(key)
                w.upload(pongo.device_id, group.hash_index(pub), _seal(w, [encode_location(*M3_FAKE, 1900)], pub))

        w.at(800, fake)

    def anon_poll() -> None:
        for state, blob, t_up, plain in w.poll_own(anon.device_id, anon.master):
            if len(plain) == 24:
                continue  # where his own phone was seen
            try:
                (loc,) = unframe(plain)
                x, y, t = decode_location(loc)
            except (InvalidArgument, ValueError):
                continue
            if t > t_up:
                st["appointments"].append((x, y, t, state.i))
        st["appointments"].sort(key=lambda a: a[2])
        if not st["appointments"]:
            return
        if protect:
            w.at(1100, flood)
        else:
            for x, y, t, _ in st["appointments"]:
                w.at(t - 30, w.move, anon.device_id, (x + 10.0, y))
                w.at(t + 30, anon_read, (x, y, t))

    def flood() -> None:
        w.move(anon.device_id, (M3_CAFE[0] - 4.0, M3_CAFE[1] + 4.0))
        anon.go_offline(w.now, w.now + 60)
        d = w.epoch(anon.master, st["appointments"][0][3]).d_i
        fields = [group.encode_scalar(d)] + [encode_location(x, y, t) for x, y, t, _ in st["appointments"]]
        receivers = w.emit(anon.device_id, "flood", fields)
        if receivers:
            st["flood"] = d
        w.at(w.now + 70, w.move, anon.device_id, M3_ANON_HOME)

    def anon_read(appt) -> None:
        x, y, t = appt
        got = False
        keys = _retained_keys(w, anon)
        for t_in, kind, fields in anon.inbox:
            if kind == "secret" and t_in >= t and _decrypt_any(fields[0], keys) == secret:
                st["recovered"].add(anon.label)
                got = True
        st["trips"].append({"place": [x, y], "time": t, "secret": got})

    w.at(1000, anon_poll)
    w.run()
    fake_meets = sum(1 for trip in st["trips"] if not trip["secret"])
    verdicts = {
        "scenario": "model3",
        "trap_protection": protect,
        "helpers": n_helpers,
        "appointments": len(st["appointments"]),
        "recovered_by": sorted(st["recovered"]),
        "delivered": bool(st["recovered"]),
        "accepted_lures": fake_meets,
        "status": "no-helper" if not st["appointments"] else ("delivered" if st["recovered"] else "undelivered"),
    }
    return _conclude(w, verdicts, lambda v: v["delivered"] and _anonymous_ok(v) and v["accepted_lures"] == 0)


# --------------------------------------------------------------------------
# Model 4: timed key exchange at a secret place, then an encrypted chat
# --------------------------------------------------------------------------

M4_ALICE = (-15.0, 0.0)
M4_BOB = (20.0, 0.0)
M4_MESSAGES = (b"how many workers are unpaid", b"about forty, since last year", b"are there documents", b"payroll sheets, photographed")


def run_model4(cfg: WorldConfig) -> SimTrace:
    """Options: ``third_party`` (False), ``eavesdropper`` (False), ``crowd`` (30)."""
    _require(cfg, 1500, "model4")
    caps: set = set()
    botnet: tuple = ()
    if cfg.option("eavesdropper", False):
        caps |= {"botnet", "backdoor_oracle"}
        botnet = ("ss-ear",)
    adv = cfg.adversary.merged_with(AdversaryConfig(frozenset(caps), botnet=botnet))
    w = World(cfg, "model4", adv)
    alice = w.add(Device("alice-phone", "Alice", M4_ALICE, master=w.new_master(), listening=True))
    bob = w.add(Device("bob-phone", "Bob", M4_BOB, master=w.new_master(), listening=True))
    w.crowd("plaza", int(cfg.option("crowd", CROWD)), (0.0, 0.0), 25.0)
    labels = ["Alice", "Bob"]
    if cfg.option("third_party", False):
        stranger = w.add(Device("stranger", "Stranger", (0.0, 20.0), master=w.new_master()))
        stranger.go_offline(170, 280)
        labels.append("Stranger")
    if botnet:
        w.add(Device("ss-ear", "SS", (5.0, -10.0), listening=True))
        labels.append("SS")
    w.principals(*labels)
    st: dict = {"attempts": 0, "aborts": [], "peer": {}, "d": {}, "received": {"Alice": [], "Bob": []}}

    def attempt(s: int) -> None:
        st["attempts"] += 1
        w.at(s + 60, check, s)

    def check(s: int) -> None:
        # step 1: nobody else in range may be broadcasting offline-finding keys
        if alice.keys_heard(s, s + 60) or bob.keys_heard(s, s + 60):
            st["aborts"].append({"at": s, "reason": "broadcaster present"})
            w.at(s + 300, attempt, s + 300)
            return
        alice.go_offline(s + 60, s + 120)
        bob.go_offline(s + 120, s + 180)
        w.at(s + 180, settle, s)

    def settle(s: int) -> None:
        kb = bob.keys_heard(s + 60, s + 120)
        ka = alice.keys_heard(s + 120, s + 180)
        if len(kb) != 1 or len(ka) != 1:
            # a third key in the window: nobody's key is taken, start over
            st["aborts"].append({"at": s, "reason": "third key"})
            w.at(s + 300, attempt, s + 300)
            return
        st["peer"] = {"Alice": ka[0], "Bob": kb[0]}
        st["d"] = {
            "Alice": w.epoch(alice.master, (s + 60) // 900).d_i,
            "Bob": w.epoch(bob.master, (s + 120) // 900).d_i,
        }
        talk(s + 200)

    def talk(t0: int) -> None:
        turns = [(alice, "Alice", bob, "Bob"), (bob, "Bob", alice, "Alice")]
        for k, text in enumerate(M4_MESSAGES):
            me, my_label, peer, peer_label = turns[k % 2]
            t = t0 + 40 * k
            me.go_offline(t, t + 20)
            pub = group.decode_point(st["peer"][my_label])
            w.at(t + 5, say, me, peer, peer_label, pub, text, me is alice)

    def say(me, peer, peer_label, pub, text, sensitive) -> None:
        ct = group.ecies_encrypt(text, pub, w.rng).to_bytes()
        if peer.device_id in w.emit(me.device_id, "talk", [ct], sensitive=sensitive):
            try:
                st["received"][peer_label].append(group.ecies_decrypt(ct, st["d"][peer_label]))
            except DecryptFailure:
                pass

    w.at(100, attempt, 100)
    w.run()

    def state_bytes(label: str) -> bytes:
        dev = alice if label == "Alice" else bob
        parts = [st["peer"].get(label, b"")] + st["received"][label] + [k for _, k in dev.key_log]
        parts += [f for _, _, fields in dev.inbox for f in fields]
        return b"".join(parts)

    def mentions(blob: bytes, other: Device) -> bool:
        return other.label.encode() in blob or other.device_id.encode() in blob

    established = bool(st["peer"])
    exchanged = established and st["received"]["Bob"] == list(M4_MESSAGES[0::2]) and st["received"]["Alice"] == list(
        M4_MESSAGES[1::2]
    )
    verdicts = {
        "scenario": "model4",
        "attempts": st["attempts"],
        "aborts": st["aborts"],
        "established": established,
        "delivered": exchanged,
        "identity_free": not (mentions(state_bytes("Alice"), bob) or mentions(state_bytes("Bob"), alice)),
        "accepted_lures": 0,
    }
    trace = _conclude(w, verdicts, lambda v: v["delivered"] and v["identity_free"] and _anonymous_ok(v))
    verdicts["eavesdropper_reads"] = sum(1 for p in trace.oracle_plaintexts if p in M4_MESSAGES)
    return trace


# --------------------------------------------------------------------------
# Missing person: spotters report sightings under the seeker's key
# --------------------------------------------------------------------------


def run_missing_person(cfg: WorldConfig) -> SimTrace:
    """Options: ``spotters`` (1), ``matches`` (list of ``[spotter, time]``, default ``[[0, 600]]``)."""
    _require(cfg, 900, "missing-person")
    w = World(cfg, "missing-person", cfg.adversary)
    n = int(cfg.option("spotters", 1))
    matches = [tuple(m) for m in cfg.option("matches", [[0, 600]] if n else [])]
    for s, t in matches:
        if not (0 <= int(s) < n and 0 < int(t) < cfg.duration - 60):
            raise ConfigError(f"bad match event {[s, t]}")
    seeker = w.add(Device("seeker", "Bob", (5000.0, 0.0), master=w.new_master()))
    spotters = [w.add(Device(f"spotter-{k}", None, (800.0 * k, 100.0))) for k in range(n)]
    carol = w.add(Device("missing", "Carol", (-2000.0, -2000.0), bluetooth=False))
    w.principals("Bob", "Carol")
    p_search = w.epoch(seeker.master, 0).P_i  # published with the picture
    expected = []

    def match(k: int) -> None:
        sp = spotters[k]
        w.move(carol.device_id, (sp.position[0] + 5.0, sp.position[1]))
        blob = group.ecies_encrypt(encode_location(*sp.position, w.now), p_search, w.rng).to_bytes()
        w.upload(sp.device_id, group.hash_index(p_search), blob, kind="sighting")

    for s, t in sorted(matches, key=lambda m: m[1]):
        w.at(int(t), match, int(s))
        expected.append([spotters[int(s)].position[0], spotters[int(s)].position[1], int(t)])
    found = []

    def seek() -> None:
        for _, _, _, plain in w.poll_own(seeker.device_id, seeker.master):
            x, y, t = decode_location(plain)
            found.append([x, y, t])

    w.at(cfg.duration - 10, seek)
    w.run()
    found.sort(key=lambda r: r[2])
    verdicts = {
        "scenario": "missing-person",
        "recovered": found,
        "expected": expected,
        "delivered": bool(found),
        "accepted_lures": 0,
    }
    return _conclude(w, verdicts, lambda v: v["recovered"] == v["expected"])


# --------------------------------------------------------------------------
# Surveillance: key correlation during an internet cut, and crowd tracking
# --------------------------------------------------------------------------

KC_ALICE_HOME = (0.0, 0.0)
KC_BOB_HOME = (5000.0, 0.0)
KC_MEET = (2500.0, 2000.0)


def key_correlation_adversary() -> AdversaryConfig:
    return AdversaryConfig(
        frozenset({"internet_cut", "botnet", "passive_sniff"}),
        (
            WatchZone("home:Alice", KC_ALICE_HOME, 80.0),
            WatchZone("home:Bob", KC_BOB_HOME, 80.0),
            WatchZone("city", (2500.0, 0.0), 20000.0),
        ),
        internet_cut=(ZoneWindow("city", 900, 1800),),
        botnet=tuple(f"pongo-{k}" for k in range(3)),
    )


def run_key_correlation(cfg: WorldConfig) -> SimTrace:
    """Options: ``independent_chains`` (False), ``botnet_at_meeting`` (True), ``meeting_time`` (1000)."""
    _require(cfg, 1900, "key-correlation")
    at_meeting = bool(cfg.option("botnet_at_meeting", True))
    adv = cfg.adversary.merged_with(key_correlation_adversary())
    w = World(cfg, "key-correlation", adv)
    independent = bool(cfg.option("independent_chains", False))
    meet_t = int(cfg.option("meeting_time", 1000))
    devices = {}
    for who, home, off in (("Alice", KC_ALICE_HOME, -10.0), ("Bob", KC_BOB_HOME, 10.0)):
        shared = w.new_master()
        devices[who] = (
            w.add(Device(f"{who.lower()}-phone", who, (home[0], home[1] - 5.0), master=w.new_master() if independent else shared)),
            w.add(Device(f"{who.lower()}-laptop", who, (home[0], home[1] + 5.0), master=shared)),
        )
        w.at(meet_t - 100, w.move, devices[who][0].device_id, (KC_MEET[0] + off, KC_MEET[1]))
    for k, (x, y) in enumerate([KC_ALICE_HOME, KC_BOB_HOME, KC_MEET]):
        w.crowd(f"locals{k}", 5, (x + 30.0, y + 30.0), 20.0, master=None)
    for dev in w.devices.values():
        if dev.device_id.startswith("locals"):
            dev.master = w.new_master()
    bot_center = KC_MEET if at_meeting else (-4000.0, 3000.0)
    for k in range(3):
        w.add(Device(f"pongo-{k}", "Pongo", (bot_center[0] + 8.0 * k, bot_center[1] - 12.0), finder_enabled=False))
    w.principals("Alice", "Bob", "Pongo")
    w.run()
    verdicts = {"scenario": "key-correlation", "independent_chains": independent, "botnet_at_meeting": at_meeting}
    trace = w.finish(verdicts)
    verdicts["identification"] = attack_key_correlation(trace, adv, suspect="Bob")
    verdicts["goal_met"] = verdicts["identification"] == ("Alice" if (not independent and at_meeting) else None)
    return trace


def crowd_tracking_adversary() -> AdversaryConfig:
    return AdversaryConfig(frozenset({"camera_reports"}))


CAMERA_RANGE = 30.0


def run_crowd_tracking(cfg: WorldConfig) -> SimTrace:
    """Options: ``informers`` (3), ``sightings`` (2 per informer), ``target_outside`` (False)."""
    n_inf = int(cfg.option("informers", 3))
    per = int(cfg.option("sightings", 2))
    _require(cfg, 300 + 600 * max(n_inf, 1) + 100, "crowd-tracking")
    adv = cfg.adversary.merged_with(crowd_tracking_adversary())
    w = World(cfg, "crowd-tracking", adv)
    ss = w.add(Device("ss-hq", "SS", (-9000.0, 0.0), master=w.new_master()))
    target = w.add(Device("member-1", "Member-1", (-5000.0, -5000.0)))
    informers = [w.add(Device(f"informer-{k}", None, (1000.0 * k, 0.0))) for k in range(n_inf)]
    w.principals("SS", "Member-1")
    outside = bool(cfg.option("target_outside", False))
    scripted = []

    for k, inf in enumerate(informers):
        t0 = 300 + 600 * k
        if not outside:
            w.at(t0 - 10, w.move, target.device_id, (inf.position[0] + 10.0, inf.position[1] + 5.0))
        for j in range(per):
            t = t0 + 100 * j
            w.at(t, lambda inf=inf: sighting(inf))
            if not outside:
                scripted.append([target.label, inf.position[0] + 10.0, inf.position[1] + 5.0, t])

    def sighting(inf: Device) -> None:
        if not adv.has("camera_reports"):
            return
        key = w.current_epoch(ss.master).P_i  # the key the SS hands its supporters
        for dev in sorted(w.devices.values(), key=lambda d: d.device_id):
            if dev is inf or dev.owner is None or dev.owner == "SS":
                continue
            if (dev.position[0] - inf.position[0]) ** 2 + (dev.position[1] - inf.position[1]) ** 2 <= CAMERA_RANGE**2:
                payload = frame([encode_location(*dev.position, w.now), dev.label.encode()])
                w.upload(inf.device_id, group.hash_index(key), group.ecies_encrypt(payload, key, w.rng).to_bytes(), kind="sighting")

    w.run()
    verdicts = {"scenario": "crowd-tracking", "informers": n_inf, "scripted": scripted}
    trace = w.finish(verdicts)
    harvested = attack_crowd_tracking(trace, adv, ss.master)
    verdicts["harvested"] = [[lab, pos[0], pos[1], t] for lab, pos, t in harvested]
    verdicts["goal_met"] = verdicts["harvested"] == scripted
    return trace


SCENARIOS: dict[str, Callable[[WorldConfig], SimTrace]] = {
    "model1": run_model1,
    "model2": run_model2,
    "model3": run_model3,
    "model4": run_model4,
    "missing-person": run_missing_person,
    "key-correlation": run_key_correlation,
    "crowd-tracking": run_crowd_tracking,
}


def run_scenario(name: str, cfg: Optional[WorldConfig] = None) -> SimTrace:
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    return SCENARIOS[name](cfg if cfg is not None else WorldConfig())
