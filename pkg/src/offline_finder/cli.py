"""``offline-finder`` command line.

Exit codes: 0 expected outcome, 1 goal or property unmet, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__, contfrac, group, keychain
from .auth import IntruderCapabilities, default_scene, intruder_search, run_lowe_attack
from .errors import ConfigError, OfflineFinderError, PrecisionError
from .keychain import MasterKeyRecord
from .sim import load_config
from .sim.scenarios import SCENARIOS, run_scenario

EXIT_OK, EXIT_UNMET, EXIT_USAGE = 0, 1, 2
LOWE_STEPS = ["1.3", "2.3", "2.6", "1.6", "1.7", "2.7"]
ATTACKS = ("lowe-vs-ns", "lowe-vs-nsl", "intruder-search", "key-correlation", "crowd-tracking")


class _Usage(Exception):
    pass


def _config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _write_trace(trace, args) -> None:
    if args.config is not None:
        trace.manifest["config"] = str(args.config)
    if args.out:
        trace.write(args.out)


def cmd_simulate(args) -> int:
    if args.scenario not in SCENARIOS:
        raise _Usage(f"unknown scenario {args.scenario!r}; choose from {', '.join(SCENARIOS)}")
    cfg = _config(args)
    trace = run_scenario(args.scenario, cfg)
    _write_trace(trace, args)
    v = trace.verdicts
    ident = v.get("identification")
    parts = ["delivered" if v.get("delivered") else "not delivered", f"identification {ident or '⊥'}"]
    if v.get("anonymity_set_min") is not None:
        parts.append(f"min anonymity set {v['anonymity_set_min']}")
    if v.get("accepted_lures"):
        parts.append(f"accepted lures {v['accepted_lures']}")
    print(", ".join(parts))
    if args.json:
        print(json.dumps(v, sort_keys=True, default=str))
    print(f"trace sha256 {trace.digest()}")
    print("goal met" if v["goal_met"] else "goal unmet")
    return EXIT_OK if v["goal_met"] else EXIT_UNMET


def _print_transcript(verdict) -> None:
    for msg in verdict.transcript:
        print(msg.export())


def cmd_attack(args) -> int:
    name = args.name
    if name == "lowe-vs-ns":
        scene = default_scene("ns", args.seed if args.seed is not None else 7)
        p = scene.principals
        v = run_lowe_attack(p["A"], p["B"], p["SS"], protocol="ns", seed=scene.nonce_seed)
        _print_transcript(v)
        print("steps " + " ".join(v.steps))
        print(v.summary())
        ok = v.steps == LOWE_STEPS and v.responder_deceived
        return EXIT_OK if ok else EXIT_UNMET
    if name in ("lowe-vs-nsl", "intruder-search"):
        protocol = "nsl" if name == "lowe-vs-nsl" else args.protocol
        caps = IntruderCapabilities(backdoor_oracle=args.oracle)
        findings = intruder_search(protocol, args.depth, caps)
        deceived = [f for f in findings if f.responder_deceived]
        for k, f in enumerate(findings):
            print(f"finding {k}: {' '.join(f.steps)} -> {f.summary()}; leaked {sorted(f.secrets_leaked) or '-'}")
        leaked_labels = sorted({lab for f in findings for lab in f.labels_leaked(("A", "B", "SS"))})
        if args.oracle:
            print(f"labels in decrypted payloads: {', '.join(leaked_labels) or 'none'}")
        if not deceived:
            print(f"no attack at depth {args.depth}")
        if args.oracle:
            expected = bool(leaked_labels) == (protocol != "cf")
        else:
            expected = bool(deceived) == (protocol == "ns")
        return EXIT_OK if expected else EXIT_UNMET
    if name in ("key-correlation", "crowd-tracking"):
        trace = run_scenario(name, _config(args))
        _write_trace(trace, args)
        v = trace.verdicts
        if name == "key-correlation":
            print(f"identification {v['identification'] or '⊥'}")
        else:
            for label, x, y, t in v["harvested"]:
                print(f"{t:6d}  {label}  ({x:.1f}, {y:.1f})")
            print(f"harvested {len(v['harvested'])} of {len(v['scripted'])} scripted sightings")
        print(f"trace sha256 {trace.digest()}")
        return EXIT_OK if v["goal_met"] else EXIT_UNMET
    raise _Usage(f"unknown attack {name!r}; choose from {', '.join(ATTACKS)}")


def cmd_cf(args) -> int:
    x = contfrac.transcendental_from_nonce(args.nonce, args.root)
    try:
        q = contfrac.cf_expand(x, args.count, args.offset)
    except PrecisionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNMET
    print(" ".join(str(a) for a in q))
    print(f"stable at {q.stable_precision} digits")
    return EXIT_OK


def _load_record(path: str) -> MasterKeyRecord:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read record: {exc}") from exc
    return MasterKeyRecord.load(data)


def cmd_keychain(args) -> int:
    if args.sub == "new":
        # --seed is for reproducible fixtures only; real records use OS entropy
        rng = random.Random(args.seed) if args.seed is not None else random.SystemRandom()
        rec = MasterKeyRecord.generate(rng, args.created_at)
        if args.out:
            Path(args.out).write_text(rec.to_text())
        else:
            sys.stdout.write(rec.to_text())
        return EXIT_OK
    rec = _load_record(args.record)
    if args.sub == "epoch":
        if args.i < 0:
            raise _Usage("--i must be >= 0")
        state = keychain.derive_epoch(rec, args.i)
        print(f"{group.encode_point(state.P_i).hex()} {state.index.hex()}")
        return EXIT_OK
    for index in keychain.owner_lookup_indices(rec, args.t_from, args.t_to):
        print(index.hex())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="offline-finder", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario and write its trace")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--config", help="JSON config file (or inline JSON object)")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out", help="trace output path (JSON lines)")
    sim.add_argument("--json", action="store_true", help="also print the verdict dict")
    sim.set_defaults(fn=cmd_simulate)

    att = sub.add_parser("attack", help="run a protocol or surveillance attack")
    att.add_argument("--name", required=True)
    att.add_argument("--config")
    att.add_argument("--seed", type=int)
    att.add_argument("--out")
    att.add_argument("--protocol", choices=("ns", "nsl", "cf"), default="ns")
    att.add_argument("--depth", type=int, default=8)
    att.add_argument("--oracle", action="store_true", help="give the intruder the global decryption oracle")
    att.set_defaults(fn=cmd_attack)

    cf = sub.add_parser("cf", help="partial quotients of root(log(nonce))")
    cf.add_argument("--nonce", type=int, required=True)
    cf.add_argument("--root", type=int, default=contfrac.FC_ROOT)
    cf.add_argument("--count", type=int, default=contfrac.FC_LENGTH)
    cf.add_argument("--offset", type=int, default=0)
    cf.set_defaults(fn=cmd_cf)

    kc = sub.add_parser("keychain", help="master records and epoch keys")
    kcs = kc.add_subparsers(dest="sub", required=True)
    new = kcs.add_parser("new")
    new.add_argument("--seed", type=int, help="deterministic record for testing; never for real use")
    new.add_argument("--created-at", type=int, default=0)
    new.add_argument("--out")
    ep = kcs.add_parser("epoch")
    ep.add_argument("--record", required=True)
    ep.add_argument("--i", type=int, required=True)
    ix = kcs.add_parser("indices")
    ix.add_argument("--record", required=True)
    ix.add_argument("--from", dest="t_from", type=int, required=True)
    ix.add_argument("--to", dest="t_to", type=int, required=True)
    kc.set_defaults(fn=cmd_keychain)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (_Usage, OfflineFinderError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
