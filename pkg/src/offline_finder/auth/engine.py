"""Multi-session execution under an active intruder, and a bounded search over it.

An :class:`Execution` holds every role instance started so far, what the
intruder knows, and the actions taken. Actions are plain tuples:

``("start", initiator, peer)``
    an honest initiator opens a session with ``peer``.
``("deliver", target, term)``
    the intruder hands ``term`` to role ``target`` (a run number) or to a
    fresh responder ``("new", label)``. ``term`` is ``("blob", i)`` for the
    i-th observed ciphertext (forward / redirect / replay) or
    ``("build", fields)`` for a payload it encrypts itself from known
    fields. CF first messages carry ``("build"|"blob", ..., metadata)``.

The search runs symbolically (perfect encryption) and every verdict it
returns is replayed over real ECIES before being handed back.
"""

from __future__ import annotations

import hashlib
import itertools
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .. import contfrac, group
from ..errors import InvalidArgument
from .roles import (
    ACCEPTED,
    ABORTED,
    CFClient,
    CFServer,
    NSInitiator,
    NSResponder,
    ProtocolAbort,
)
from .wire import (
    NONCE_BYTES,
    BackdoorOracle,
    BehaviorProfile,
    ConnectionMetadata,
    EciesSealer,
    MessageChannel,
    Principal,
    ProtocolMessage,
    SymbolicSealer,
    frame,
    introduce,
    label_bytes,
    plaintext_mentions,
)

PROTOCOLS = ("ns", "nsl", "cf")
MAX_DEPTH = 10


@dataclass(frozen=True)
class IntruderCapabilities:
    forward: bool = True  # intercept, forward, redirect and replay observed blobs
    encrypt_known: bool = True  # build payloads from known fields
    decrypt_own: bool = True
    backdoor_oracle: bool = False
    max_sessions: int = 2  # per honest principal and role


@dataclass
class SessionVerdict:
    protocol: str
    initiator_accepts: bool = False
    responder_accepts: bool = False
    responder_peer_belief: Optional[str] = None
    responder_deceived: bool = False
    secrets_leaked: frozenset = frozenset()
    aborted_at: Optional[str] = None
    abort_reason: Optional[str] = None
    transcript: list[ProtocolMessage] = field(default_factory=list)
    leaked_plaintexts: list[bytes] = field(default_factory=list)
    actions: tuple = ()
    nonces: dict = field(default_factory=dict)  # role name -> (Na, Nb) as that role saw them

    @property
    def steps(self) -> list[str]:
        return [m.run_step for m in self.transcript]

    def labels_leaked(self, labels) -> set[str]:
        return {lab for lab in labels for p in self.leaked_plaintexts if plaintext_mentions(p, lab)}

    def summary(self) -> str:
        if self.responder_deceived:
            return f"responder deceived: believes {self.responder_peer_belief}"
        if self.aborted_at:
            return f"aborted at {self.aborted_at} ({self.abort_reason})"
        if self.responder_accepts:
            return f"accepted, responder believes {self.responder_peer_belief}"
        return "no acceptance"


@dataclass
class Scene:
    """Who is on the network and which roles they may play."""

    protocol: str
    principals: dict[str, Principal]
    intruder: str
    initiators: tuple[str, ...]
    responders: tuple[str, ...]
    nonce_seed: int = 0

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise InvalidArgument(f"unknown protocol {self.protocol!r}")

    @property
    def lowe_fix(self) -> bool:
        return self.protocol == "nsl"

    @property
    def honest(self) -> set[str]:
        return set(self.principals) - {self.intruder}

    def nonce_for(self, owner: str, run: int) -> int:
        h = hashlib.sha256(b"%d|%s|%d" % (self.nonce_seed, owner.encode(), run)).digest()
        return int.from_bytes(h[:NONCE_BYTES], "big") | (1 << 127)

    def peers_of(self, initiator: str) -> list[str]:
        if self.protocol == "cf":
            return [p for p in self.principals if p != initiator and (p in self.responders or p == self.intruder)]
        return [p for p in self.principals if p != initiator]


def default_scene(protocol: str, seed: int = 7) -> Scene:
    """A and B honest, SS a registered insider; A initiates, B responds.

    For the CF protocol A is a client with a behaviour profile, B a server
    knowing A's (and SS's) profile, and SS may pose as a server to A.
    """
    rng = random.Random(seed)
    if protocol == "cf":
        a = Principal.create("A", rng, BehaviorProfile(720, "downtown Dakar", 40.0))
        b = Principal.create("B", rng)
        ss = Principal.create("SS", rng, BehaviorProfile(1080, "Obelisque Square", 15.0))
        # the binding offsets of (A,B) and (A,SS) must differ; see the ledger
        while contfrac.fc_offset(contfrac.fc_binding(a.pub, b.pub)) == contfrac.fc_offset(
            contfrac.fc_binding(a.pub, ss.pub)
        ):
            ss = Principal.create("SS", rng, ss.profile)
    else:
        a, b, ss = (Principal.create(x, rng) for x in ("A", "B", "SS"))
    introduce(a, b, ss)
    return Scene(protocol, {"A": a, "B": b, "SS": ss}, "SS", ("A",), ("B",), seed)


class Execution:
    def __init__(self, scene: Scene, caps: IntruderCapabilities, sealer, channel: Optional[MessageChannel] = None):
        self.scene = scene
        self.caps = caps
        self.sealer = sealer
        self.channel = channel
        self.roles: list = []
        intr = scene.principals[scene.intruder]
        self.atoms: set[bytes] = {label_bytes(l) for l in scene.principals}
        self.atoms.add(group.encode_point(intr.pub))
        self.atoms.add(scene.nonce_for(scene.intruder, 0).to_bytes(NONCE_BYTES, "big"))
        self.blobs: list[tuple] = []  # (blob, addressed-to label)
        self.metas: set[ConnectionMetadata] = set()
        if intr.profile is not None:
            self.metas.add(intr.typical_connection())
        self.leaked_plaintexts: list[bytes] = []
        self.actions: list[tuple] = []
        self.abort: Optional[tuple[str, str]] = None

    # ----- copying and identity for the search

    def clone(self) -> "Execution":
        new = Execution.__new__(Execution)
        new.scene, new.caps, new.sealer, new.channel = self.scene, self.caps, self.sealer, None
        new.roles = list(self.roles)  # roles are cloned on write, see _own
        new.atoms = set(self.atoms)
        new.blobs = list(self.blobs)
        new.metas = set(self.metas)
        new.leaked_plaintexts = list(self.leaked_plaintexts)
        new.actions = list(self.actions)
        new.abort = self.abort
        return new

    def _own(self, run: int):
        role = self.roles[run - 1].clone()
        self.roles[run - 1] = role
        return role

    def state_key(self):
        return (
            tuple(r.key() for r in self.roles),
            frozenset(self.atoms),
            frozenset((b, to) for b, to in self.blobs),
            frozenset(self.metas),
        )

    # ----- recording

    def _record(self, step: int, run: int, sender: str, recipient: str, blob) -> None:
        if self.channel is None:
            return
        tag = f"{self.scene.protocol.upper()}-{step}"
        self.channel.send(tag, sender, recipient, self.sealer.payload_bytes(blob), run)

    def _observe(self, blob, to: str) -> None:
        """The intruder sees every honest output."""
        self.blobs.append((blob, to))
        intr = self.scene.principals[self.scene.intruder]
        if self.caps.decrypt_own and to == self.scene.intruder:
            self._learn(self.sealer.open(blob, intr.d, intr.pub))
        elif self.caps.backdoor_oracle and to in self.scene.principals:
            target = self.scene.principals[to]
            try:
                fields = self.sealer.open(blob, target.d, target.pub)
            except Exception:
                return
            self.leaked_plaintexts.append(frame(fields))
            self._learn(fields)

    def _learn(self, fields) -> None:
        self.atoms.update(fields)

    # ----- actions

    def apply(self, action: tuple) -> None:
        """Run one action; a :class:`ProtocolAbort` propagates to the caller."""
        self.actions.append(action)
        if action[0] == "start":
            self._start(action[1], action[2])
        elif action[0] == "deliver":
            self._deliver(action[1], action[2])
        else:
            raise InvalidArgument(f"unknown action {action!r}")

    def _start(self, who: str, peer: str) -> None:
        owner = self.scene.principals[who]
        run = len(self.roles) + 1
        nonce = self.scene.nonce_for(who, run)
        peer_pub = owner.directory.get(peer)
        if self.scene.protocol == "cf":
            role = CFClient(owner, nonce, run, peer=peer, peer_pub=peer_pub, metadata=owner.typical_connection())
            step = 1
        else:
            role = NSInitiator(owner, nonce, run, peer=peer, peer_pub=peer_pub, lowe_fix=self.scene.lowe_fix)
            step = 3
        self.roles.append(role)
        try:
            blob = role.start(self.sealer)
        except ProtocolAbort as exc:
            self.abort = (f"{run}.{exc.step}", exc.reason)
            raise
        self._record(step, run, who, peer, blob)
        if self.scene.protocol == "cf":
            self.metas.add(role.metadata)
        self._observe(blob, peer)

    def derivable(self, fieldval: bytes) -> bool:
        """Can the intruder produce this field from what it knows?"""
        if fieldval in self.atoms:
            return True
        return self.scene.protocol == "cf" and fieldval in self._fc_candidates()

    def _materialize(self, term, recipient: Principal):
        if term[0] == "blob":
            return self.blobs[term[1]][0]
        if self.channel is not None:
            # scripted or replayed builds must stay within intruder knowledge
            for f in term[1]:
                if not self.derivable(f):
                    raise InvalidArgument("intruder cannot build a field it does not know")
        return self.sealer.seal(list(term[1]), recipient.pub)

    def _deliver(self, target, term) -> None:
        proto = self.scene.protocol
        intr = self.scene.intruder
        if isinstance(target, tuple):  # fresh responder
            owner = self.scene.principals[target[1]]
            run = len(self.roles) + 1
            nonce = self.scene.nonce_for(owner.label, run)
            if proto == "cf":
                role = CFServer(owner, nonce, run)
            else:
                role = NSResponder(owner, nonce, run, lowe_fix=self.scene.lowe_fix)
            self.roles.append(role)
        else:
            role = self._own(target)
        blob = self._materialize(term, role.owner)
        step = role.waiting_for
        try:
            if isinstance(role, NSResponder) and step == 3:
                claimed = role.on_message3(blob, self.sealer)
                self._record(3, role.run, f"{intr}({claimed})", role.owner.label, blob)
                out = role.reply(role.owner.directory.get(claimed), self.sealer)
                self._record(6, role.run, role.owner.label, claimed, out)
                self._observe(out, claimed)
            elif isinstance(role, NSResponder) and step == 7:
                self._record(7, role.run, f"{intr}({role.claimed})", role.owner.label, blob)
                role.on_message7(blob, self.sealer)
            elif isinstance(role, NSInitiator) and step == 6:
                self._record(6, role.run, intr if role.peer == intr else f"{intr}({role.peer})", role.owner.label, blob)
                out = role.on_message6(blob, self.sealer)
                self._record(7, role.run, role.owner.label, role.peer, out)
                self._observe(out, role.peer)
            elif isinstance(role, CFServer) and step == 1:
                meta = term[2]
                out = role.on_message1(blob, meta, self.sealer)
                self._record(1, role.run, f"{intr}(?)", role.owner.label, blob)
                self._record(2, role.run, role.owner.label, role.inferred, out)
                self._observe(out, role.inferred)
            elif isinstance(role, CFServer) and step == 3:
                self._record(3, role.run, f"{intr}(?)", role.owner.label, blob)
                role.on_message3(blob, self.sealer)
            elif isinstance(role, CFClient) and step == 2:
                self._record(2, role.run, intr if role.peer == intr else f"{intr}(?)", role.owner.label, blob)
                out = role.on_message2(blob, self.sealer)
                self._record(3, role.run, role.owner.label, role.peer, out)
                self._observe(out, role.peer)
            else:
                raise ProtocolAbort(0, "role is not waiting for a message")
        except ProtocolAbort as exc:
            role.status = ABORTED
            self.abort = (f"{role.run}.{exc.step}", exc.reason)
            raise

    # ----- enumeration of intruder moves

    def _nonces(self) -> list[bytes]:
        return sorted(a for a in self.atoms if len(a) == NONCE_BYTES)

    def _labels(self) -> list[bytes]:
        return sorted(label_bytes(l) for l in self.scene.principals)

    def _fc_candidates(self) -> list[bytes]:
        pubs = [p.pub for _, p in sorted(self.scene.principals.items())]
        out = set()
        for raw in self._nonces():
            n = int.from_bytes(raw, "big")
            if n < 2:
                continue
            for ka, kb in itertools.permutations(pubs, 2):
                out.add(contfrac.derive_fc(n, ka, kb).to_bytes())
        return sorted(out)

    def _builds(self, role_kind: str, step: int) -> list[tuple[bytes, ...]]:
        if not self.caps.encrypt_known:
            return []
        N, L = self._nonces(), self._labels()
        if role_kind == "ns":
            if step == 3:
                return [(n, l) for n in N for l in L]
            if step == 6:
                pairs = [(n1, n2) for n1 in N for n2 in N]
                if self.scene.lowe_fix:
                    return [(l, n1, n2) for l in L for n1, n2 in pairs]
                return pairs
            if step == 7:
                return [(n,) for n in N]
        else:
            if step == 1:
                return [(n,) for n in N]
            # challenges it can compute, plus any it decrypted verbatim
            known = {a for a in self.atoms if len(a) == 8 * contfrac.FC_LENGTH}
            fcs = sorted(known.union(self._fc_candidates()))
            if step == 2:
                return [(fc, n) for fc in fcs for n in N]
            if step == 3:
                return [(fc,) for fc in fcs]
        return []

    def _sessions(self, owner: str, initiator: bool) -> int:
        return sum(1 for r in self.roles if r.owner.label == owner and r.initiator == initiator)

    def enabled_actions(self) -> list[tuple]:
        out: list[tuple] = []
        kind = "cf" if self.scene.protocol == "cf" else "ns"
        for who in self.scene.initiators:
            if self._sessions(who, True) < self.caps.max_sessions:
                for peer in self.scene.peers_of(who):
                    out.append(("start", who, peer))
        targets: list[tuple] = []
        for role in self.roles:
            if role.waiting_for is not None and role.status not in (ACCEPTED, ABORTED):
                targets.append((role.run, role.owner.label, role.waiting_for))
        for who in self.scene.responders:
            if self._sessions(who, False) < self.caps.max_sessions:
                targets.append((("new", who), who, 1 if kind == "cf" else 3))
        for target, owner, step in targets:
            terms: list[tuple] = []
            if self.caps.forward:
                terms += [("blob", i) for i, (_, to) in enumerate(self.blobs)]
            terms += [("build", f) for f in self._builds(kind, step)]
            if kind == "cf" and step == 1:
                terms = [t + (m,) for t in terms for m in sorted(self.metas, key=repr)]
            out += [("deliver", target, t) for t in terms]
        return out

    # ----- findings

    def deceived_responders(self) -> list:
        found = []
        honest = self.scene.honest
        for r in self.roles:
            if r.initiator or r.belief is None or r.belief not in honest:
                continue
            matched = any(
                i.initiator and i.owner.label == r.belief and i.peer == r.owner.label and i.nonce == r.other_nonce
                for i in self.roles
            )
            if not matched:
                found.append(r)
        return found

    def leaked_nonces(self) -> set[int]:
        honest = self.scene.honest
        out = set()
        for r in self.roles:
            partner = r.peer if r.initiator else r.partner
            if partner in honest and r.nonce.to_bytes(NONCE_BYTES, "big") in self.atoms:
                out.add(r.nonce)
        return out

    def verdict(self) -> SessionVerdict:
        inits = [r for r in self.roles if r.initiator]
        resps = [r for r in self.roles if not r.initiator]
        deceived = self.deceived_responders()
        accepted = [r for r in resps if r.status == ACCEPTED]
        focus = deceived[0] if deceived else (accepted[0] if accepted else None)
        return SessionVerdict(
            protocol=self.scene.protocol,
            initiator_accepts=any(r.status == ACCEPTED for r in inits),
            responder_accepts=bool(accepted),
            responder_peer_belief=focus.belief if focus else None,
            responder_deceived=bool(deceived),
            secrets_leaked=frozenset(self.leaked_nonces()),
            aborted_at=self.abort[0] if self.abort else None,
            abort_reason=self.abort[1] if self.abort else None,
            transcript=list(self.channel.transcript) if self.channel else [],
            leaked_plaintexts=list(self.leaked_plaintexts),
            actions=tuple(self.actions),
            nonces=self._nonce_views(),
        )

    def _nonce_views(self) -> dict:
        out = {}
        for r in self.roles:
            if r.status != ACCEPTED:
                continue
            pair = (r.nonce, r.other_nonce) if r.initiator else (r.other_nonce, r.nonce)
            out[f"{'initiator' if r.initiator else 'responder'}:{r.run}"] = pair
        return out


def replay(
    scene: Scene,
    actions,
    caps: IntruderCapabilities = IntruderCapabilities(),
    *,
    rng: Optional[group.RandomSource] = None,
    network: Optional[MessageChannel] = None,
) -> SessionVerdict:
    """Execute ``actions`` over real ECIES, stopping at the first abort."""
    network = network if network is not None else MessageChannel()
    if caps.backdoor_oracle and network.oracle is None:
        network.oracle = BackdoorOracle(list(scene.principals.values()))
    ex = Execution(scene, caps, EciesSealer(rng if rng is not None else random.Random(scene.nonce_seed)), network)
    for action in actions:
        try:
            ex.apply(action)
        except ProtocolAbort:
            break
    v = ex.verdict()
    if network.oracle is not None:
        v.leaked_plaintexts = list(network.oracle.plaintexts)
    return v


def _signature(ex: Execution):
    return (
        frozenset((r.owner.label, r.belief) for r in ex.deceived_responders()),
        frozenset(ex.leaked_nonces()),
    )


def intruder_search(
    protocol: str,
    max_depth: int = 8,
    capabilities: IntruderCapabilities = IntruderCapabilities(),
    scene: Optional[Scene] = None,
    *,
    replay_concrete: bool = True,
) -> list[SessionVerdict]:
    """Breadth-first search for deceived responders or leaked nonces.

    Moves that make an honest role abort are pruned: an aborted session can
    only shrink what the intruder learns. A state with a deceived responder
    is reported and not expanded further. One verdict (the shortest trace)
    is returned per distinct finding.
    """
    if max_depth > MAX_DEPTH:
        raise InvalidArgument(f"max_depth must be <= {MAX_DEPTH}")
    scene = scene or default_scene(protocol)
    if scene.protocol != protocol:
        raise InvalidArgument("scene protocol does not match")
    root = Execution(scene, capabilities, SymbolicSealer())
    seen = {root.state_key()}
    frontier = deque([root])
    findings: dict = {}
    for _ in range(max_depth):
        nxt = deque()
        for ex in frontier:
            for action in ex.enabled_actions():
                child = ex.clone()
                try:
                    child.apply(action)
                except ProtocolAbort:
                    continue
                key = child.state_key()
                if key in seen:
                    continue
                seen.add(key)
                sig = _signature(child)
                if (sig[0] or sig[1]) and sig not in findings:
                    findings[sig] = child
                if not sig[0]:
                    nxt.append(child)
        frontier = nxt
    out = []
    for ex in findings.values():
        if replay_concrete:
            out.append(replay(scene, ex.actions, capabilities))
        else:
            out.append(ex.verdict())
    return out
