import json

import pytest

from offline_finder import group, keychain
from offline_finder.auth.wire import label_bytes, unframe
from offline_finder.errors import ConfigError, InvalidArgument
from offline_finder.sim import (
    AdversaryConfig,
    Device,
    SimTrace,
    WatchZone,
    World,
    WorldConfig,
    ZoneWindow,
    anonymity_set,
    decode_location,
    encode_location,
    load_config,
    run_scenario,
)
from offline_finder.sim.scenarios import MIN_ANONYMITY, SCENARIOS

FAKE = AdversaryConfig(frozenset({"fake_appointments"}))
ORACLE = AdversaryConfig(frozenset({"backdoor_oracle"}))


def lost_device_world(finder_distance, indoor=True, **cfg_kw):
    w = World(WorldConfig(duration=120, **cfg_kw), "unit")
    master = w.new_master()
    tag = w.add(Device("tag", "Owner", (0.0, 0.0), master))
    tag.go_offline(0, 60)
    w.add(Device("finder", None, (finder_distance, 0.0), indoor=indoor))
    w.add(Device("phone", "Owner", (5000.0, 5000.0)))
    return w, master


# ---- world mechanics


def test_location_struct():
    raw = encode_location(1.5, -2.25, 77)
    assert len(raw) == 24 and decode_location(raw) == (1.5, -2.25, 77)
    with pytest.raises(InvalidArgument):
        decode_location(raw[:-1])


def test_finder_in_range_reports_exact_position():
    w, master = lost_device_world(30.0)
    w.step_world(61)
    assert len(w.store) == 1
    hits = w.poll_own("phone", master, 0, 61)
    assert len(hits) == 1
    state, _, t_up, plain = hits[0]
    assert decode_location(plain) == (30.0, 0.0, 0)
    assert state.i == 0 and t_up == 0


def test_finder_out_of_indoor_range():
    w, master = lost_device_world(50.0)
    w.run()
    assert len(w.store) == 0
    # outdoors 50 m is within the 61 m link
    w, _ = lost_device_world(50.0, indoor=False)
    w.run()
    assert len(w.store) == 1


def test_max_range_profile():
    from offline_finder.sim import MAX_RANGE

    w, _ = lost_device_world(350.0, range_model=MAX_RANGE, range_profile="max-range")
    w.run()
    assert len(w.store) == 1


def test_online_devices_do_not_broadcast():
    w = World(WorldConfig(duration=20), "unit")
    w.add(Device("tag", "Owner", (0.0, 0.0), w.new_master()))
    w.add(Device("finder", None, (10.0, 0.0)))
    w.run()
    assert not w.trace.events_of("broadcast") and len(w.store) == 0
    with pytest.raises(InvalidArgument):
        w.emit("tag", "drop", [b"x"])


def test_offline_finder_cannot_upload():
    w, _ = lost_device_world(30.0)
    w.devices["finder"].go_offline(0, 200)
    w.run()
    assert len(w.store) == 0
    with pytest.raises(InvalidArgument):
        w.query("finder", bytes(32))


def test_one_report_per_finder_and_epoch():
    w, _ = lost_device_world(30.0)
    w.run()
    # 30 ticks inside the offline window but a single upload
    assert len(w.trace.events_of("broadcast")) == 30
    assert len(w.store) == 1


def test_store_is_blind(rng):
    w, master = lost_device_world(30.0)
    w.run()
    blob = b"".join(w.store.all_bytes())
    assert encode_location(30.0, 0.0, 0) not in blob
    assert label_bytes("Owner") not in blob
    pub = group.encode_point(keychain.derive_epoch(master, 0).P_i)
    assert pub not in blob  # indexes are hashes of keys, not keys


def test_store_rejects_bad_index():
    w, _ = lost_device_world(30.0)
    with pytest.raises(InvalidArgument):
        w.store.append(b"short", b"blob", 0)


def test_drop_relay_and_jamming():
    zone = WatchZone("hall", (0.0, 0.0), 100.0)
    adv = AdversaryConfig(frozenset({"jamming"}), (zone,), jamming=(ZoneWindow("hall", 10, 20),))
    w = World(WorldConfig(duration=40, adversary=adv), "unit")
    src = w.add(Device("src", None, (0.0, 0.0)))
    src.go_offline(0, 40)
    w.add(Device("relay", None, (20.0, 0.0)))

    def send(tag):
        w.emit("src", "drop", [bytes([tag]) * 32, b"payload-%d" % tag])

    w.at(5, send, 1)
    w.at(15, send, 2)
    w.run()
    assert [b for _, b, _ in w.store.log] == [b"payload-1"]


def test_schedule_in_past():
    w = World(WorldConfig(duration=10), "unit")
    w.step_world(5)
    with pytest.raises(InvalidArgument):
        w.at(3, lambda: None)
    with pytest.raises(InvalidArgument):
        w.step_world(4)


def test_duplicate_device():
    w = World(WorldConfig(), "unit")
    w.add(Device("x"))
    with pytest.raises(ConfigError):
        w.add(Device("x"))


# ---- anonymity sets


def _anon_world(n):
    zone = WatchZone("square", (0.0, 0.0), 60.0)
    adv = AdversaryConfig(frozenset({"passive_sniff"}), (zone,))
    w = World(WorldConfig(duration=10, adversary=adv), "unit")
    wb = w.add(Device("wb", "Alice", (0.0, 0.0)))
    wb.go_offline(0, 10)
    w.crowd("bystander", n, (0.0, 0.0), 40.0)
    w.add(Device("far", None, (500.0, 0.0)))
    w.at(1, lambda: w.emit("wb", "drop", [bytes(32), b"x"], sensitive=True))
    w.run()
    trace = w.finish({})
    return trace, adv


def test_anonymity_set_disc():
    trace, adv = _anon_world(50)
    (ev,) = trace.sensitive_events()
    cands = anonymity_set(trace, adv, ev)
    assert len(cands) == 51 and "Alice" in cands and "far" not in cands


def test_anonymity_set_singleton():
    trace, adv = _anon_world(0)
    (ev,) = trace.sensitive_events()
    assert anonymity_set(trace, adv, ev) == {"Alice"}
    from offline_finder.sim import identify

    assert identify(trace, adv) == "Alice"


# ---- configuration


def test_config_defaults_and_json(tmp_path):
    assert load_config(None) == WorldConfig()
    raw = {
        "seed": 9,
        "range_profile": "max-range",
        "ranges": {"indoor_m": 300},
        "adversary": {
            "capabilities": ["internet_cut", "passive_sniff"],
            "watch_zones": [{"label": "city", "center": [0, 0], "radius": 900}],
            "internet_cut": [{"zone": "city", "start": 10, "end": 20}],
        },
        "options": {"helpers": 2},
        "devices": [{"id": "extra", "position": [1, 2], "indoor": True}],
    }
    p = tmp_path / "c.json"
    p.write_text(json.dumps(raw))
    cfg = load_config(str(p))
    assert cfg.seed == 9 and cfg.range_model.outdoor_m == 1000 and cfg.range_model.indoor_m == 300
    assert cfg.adversary.zone("city").radius == 900
    assert cfg.option("helpers") == 2 and cfg.devices[0].indoor
    assert load_config(json.dumps(raw)) == cfg


@pytest.mark.parametrize(
    "raw",
    [
        {"bogus": 1},
        {"range_profile": "huge"},
        {"duration": 0},
        {"seed": -1},
        {"broadcast_interval": 0},
        {"adversary": {"capabilities": ["telepathy"]}},
        {"adversary": {"internet_cut": [{"zone": "z", "start": 0, "end": 5}]}},
        {"adversary": {"capabilities": ["jamming"], "jamming": [{"zone": "z", "start": 0, "end": 99999}]}},
        {"adversary": {"watch_zones": [{"label": "z", "center": [0], "radius": 1}]}},
        {"adversary": {"watch_zones": [{"label": "z", "center": [0, 0], "radius": -1}]}},
        {"devices": [{"position": [0, 0]}]},
        {"options": []},
        {"ranges": {"outdoor_m": 0}},
    ],
)
def test_config_errors(raw):
    with pytest.raises(ConfigError):
        load_config(raw)


def test_config_missing_file_and_bad_json():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/cfg.json")
    with pytest.raises(ConfigError):
        load_config("{not json")


def test_dangling_zone_reference():
    adv = AdversaryConfig(frozenset({"internet_cut"}), internet_cut=(ZoneWindow("nowhere", 0, 5),))
    with pytest.raises(ConfigError):
        World(WorldConfig(adversary=adv), "unit")


def test_scenario_duration_and_name():
    with pytest.raises(ConfigError):
        run_scenario("model1", WorldConfig(duration=100))
    with pytest.raises(ConfigError):
        run_scenario("model9")


# ---- scenarios


def _assert_anonymous_delivery(v):
    assert v["delivered"] and v["goal_met"]
    assert v["identification"] is None
    assert v["whistleblower_emissions"] >= 1
    assert v["anonymity_set_min"] >= MIN_ANONYMITY


@pytest.mark.parametrize("name", ["model1", "model2", "model3", "model4"])
def test_model_defaults(name):
    _assert_anonymous_delivery(run_scenario(name).verdicts)


def test_model1_trap_protection():
    on = run_scenario("model1", WorldConfig(adversary=FAKE)).verdicts
    off = run_scenario("model1", WorldConfig(adversary=FAKE).with_options(trap_protection=False)).verdicts
    assert on["accepted_lures"] == 0 and on["rejected_lures"] >= 1 and on["goal_met"]
    assert on["authenticated"]
    assert off["accepted_lures"] >= 1 and not off["goal_met"]


def test_model1_oracle_learns_no_labels():
    v = run_scenario("model1", WorldConfig(adversary=ORACLE)).verdicts
    assert v["oracle_reads"] > 0 and v["oracle_labels"] == [] and v["identification"] is None


def test_model2_variants():
    base = run_scenario("model2").verdicts
    assert base["harvest_site"] == "conference" and base["opponents_can_read"]
    jam = run_scenario("model2", WorldConfig().with_options(jamming=True)).verdicts
    assert jam["harvest_site"] == "fallback" and not jam["opponents_can_read"]
    assert all(r.startswith("Journalist") for r in jam["readers"])
    _assert_anonymous_delivery(jam)
    arrest = run_scenario("model2", WorldConfig().with_options(arrest=True)).verdicts
    assert arrest["arrest"]["alice_linked"] is False
    pool = run_scenario("model2", WorldConfig().with_options(pool=True)).verdicts
    _assert_anonymous_delivery(pool)
    fake = run_scenario("model2", WorldConfig(adversary=FAKE)).verdicts
    assert fake["accepted_lures"] >= 1 and fake["delivered"]


def test_model3_variants():
    off = run_scenario("model3", WorldConfig(adversary=FAKE)).verdicts
    on = run_scenario("model3", WorldConfig(adversary=FAKE).with_options(trap_protection=True)).verdicts
    assert off["accepted_lures"] >= 1 and not off["goal_met"]
    assert on["accepted_lures"] == 0 and on["delivered"] and on["goal_met"]
    none = run_scenario("model3", WorldConfig().with_options(helpers=0)).verdicts
    assert none["status"] == "no-helper" and not none["delivered"]


def test_model4_variants():
    third = run_scenario("model4", WorldConfig().with_options(third_party=True)).verdicts
    assert third["attempts"] == 2 and third["aborts"][0]["reason"] == "third key"
    assert third["established"]
    eve = run_scenario("model4", WorldConfig().with_options(eavesdropper=True)).verdicts
    assert eve["eavesdropper_reads"] > 0 and eve["identity_free"]
    assert eve["identification"] is None and eve["oracle_labels"] == []


def test_missing_person():
    many = [[0, 600], [1, 700], [2, 800]]
    v = run_scenario("missing-person", WorldConfig().with_options(spotters=3, matches=many)).verdicts
    assert v["recovered"] == v["expected"] and len(v["recovered"]) == 3
    v = run_scenario("missing-person", WorldConfig().with_options(spotters=0)).verdicts
    assert v["recovered"] == [] and not v["delivered"]


def test_key_correlation():
    assert run_scenario("key-correlation").verdicts["identification"] == "Alice"
    cfg = WorldConfig().with_options(independent_chains=True)
    assert run_scenario("key-correlation", cfg).verdicts["identification"] is None
    cfg = WorldConfig().with_options(botnet_at_meeting=False)
    assert run_scenario("key-correlation", cfg).verdicts["identification"] is None


def test_crowd_tracking():
    v = run_scenario("crowd-tracking").verdicts
    assert v["harvested"] == v["scripted"] and len(v["scripted"]) == 6
    v = run_scenario("crowd-tracking", WorldConfig().with_options(target_outside=True)).verdicts
    assert v["harvested"] == []


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_determinism(name):
    a = run_scenario(name, WorldConfig(seed=5))
    b = run_scenario(name, WorldConfig(seed=5))
    assert a.text() == b.text() and a.digest() == b.digest()


def test_seed_changes_trace():
    assert run_scenario("model4", WorldConfig(seed=1)).digest() != run_scenario("model4", WorldConfig(seed=2)).digest()


def test_trace_format(tmp_path):
    tr = run_scenario("model4")
    path = tmp_path / "t.jsonl"
    tr.write(path)
    lines = path.read_text().splitlines()
    records = [json.loads(x) for x in lines]
    assert records[0]["record"] == "manifest" and records[0]["scenario"] == "model4"
    assert records[-1]["record"] == "verdict"
    assert {r["record"] for r in records} >= {"track", "event", "store"}


def test_sensitive_payloads_unframe():
    tr = run_scenario("model1")
    for o in tr.observations:
        if o.kind != "key":
            unframe(o.payload)
    assert isinstance(tr, SimTrace)
