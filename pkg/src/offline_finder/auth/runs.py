"""Honest runs of NS, NSL and CF, and the scripted Lowe interleaving."""

from __future__ import annotations

import dataclasses
import random
from typing import Optional

from .. import group
from ..errors import DecryptFailure
from .engine import IntruderCapabilities, Scene, SessionVerdict, replay
from .roles import ACCEPTED, CFClient, CFServer, NSInitiator, NSResponder, ProtocolAbort
from .wire import (
    AuthServer,
    ConnectionMetadata,
    EciesSealer,
    MessageChannel,
    Principal,
    encode_nonce,
    fresh_nonce,
    frame,
    label_bytes,
    unframe,
)


class _Dropped(Exception):
    def __init__(self, step: int):
        self.step = step


def _send(network: MessageChannel, tag: str, sender: str, recipient: str, payload: bytes) -> bytes:
    out = network.send(tag, sender, recipient, payload)
    if out is None:
        raise _Dropped(int(tag.rsplit("-", 1)[1]))
    return out


def _ns_family(
    a: Principal,
    b: Principal,
    as_server: AuthServer,
    network: MessageChannel,
    lowe_fix: bool,
    rng: Optional[group.RandomSource],
) -> SessionVerdict:
    proto = "NSL" if lowe_fix else "NS"
    rng = rng if rng is not None else random.Random(0)
    sealer = EciesSealer(rng)
    init = NSInitiator(a, fresh_nonce(rng), 1, peer=b.label, lowe_fix=lowe_fix)
    resp = NSResponder(b, fresh_nonce(rng), 1, lowe_fix=lowe_fix)
    verdict = SessionVerdict(protocol=proto.lower())

    def finish(step=None, reason=None):
        verdict.initiator_accepts = init.status == ACCEPTED
        verdict.responder_accepts = resp.status == ACCEPTED
        verdict.responder_peer_belief = resp.belief
        verdict.transcript = list(network.transcript)
        if step is not None:
            verdict.aborted_at = str(step)
            verdict.abort_reason = reason
        if init.status == ACCEPTED:
            verdict.nonces["initiator:1"] = (init.nonce, init.other_nonce)
        if resp.status == ACCEPTED:
            verdict.nonces["responder:1"] = (resp.other_nonce, resp.nonce)
        if network.oracle is not None:
            verdict.leaked_plaintexts = list(network.oracle.plaintexts)
        return verdict

    try:
        # 1-2: A asks AS for B's certificate
        req = _send(network, f"{proto}-1", a.label, "AS", frame([label_bytes(a.label), label_bytes(b.label)]))
        try:
            _, wanted = unframe(req)
            cert = as_server.certificate(wanted.decode())
        except (KeyError, ValueError):
            return finish(1, "principal not registered")
        cert = _send(network, f"{proto}-2", "AS", a.label, cert)
        try:
            got_label, init.peer_pub = as_server.verify(cert)
        except DecryptFailure:
            return finish(2, "bad certificate")
        if got_label != b.label:
            return finish(2, "certificate for the wrong principal")
        # 3
        m3 = _send(network, f"{proto}-3", a.label, b.label, init.start(sealer))
        claimed = resp.on_message3(m3, sealer)
        # 4-5: B fetches the claimed initiator's certificate
        req = _send(network, f"{proto}-4", b.label, "AS", frame([label_bytes(b.label), label_bytes(claimed)]))
        try:
            _, wanted = unframe(req)
            cert = as_server.certificate(wanted.decode())
        except (KeyError, ValueError):
            return finish(4, "principal not registered")
        cert = _send(network, f"{proto}-5", "AS", b.label, cert)
        try:
            got_label, peer_pub = as_server.verify(cert)
        except DecryptFailure:
            return finish(5, "bad certificate")
        if got_label != claimed:
            return finish(5, "certificate for the wrong principal")
        # 6-7
        m6 = _send(network, f"{proto}-6", b.label, a.label, resp.reply(peer_pub, sealer))
        m7 = _send(network, f"{proto}-7", a.label, b.label, init.on_message6(m6, sealer))
        resp.on_message7(m7, sealer)
    except ProtocolAbort as exc:
        return finish(exc.step, exc.reason)
    except _Dropped as exc:
        return finish(exc.step, "message dropped")
    return finish()


def run_ns(a, b, as_server, network=None, *, rng=None) -> SessionVerdict:
    """The seven-step Needham-Schroeder public-key protocol, certificates from ``as_server``."""
    return _ns_family(a, b, as_server, network if network is not None else MessageChannel(), False, rng)


def run_nsl(a, b, as_server, network=None, *, rng=None) -> SessionVerdict:
    """As :func:`run_ns`, with the responder's identity inside message 6."""
    return _ns_family(a, b, as_server, network if network is not None else MessageChannel(), True, rng)


def lowe_actions(scene: Scene, intruder: str = "SS", initiator: str = "A", responder: str = "B") -> list[tuple]:
    """The two-run interleaving: A talks to the intruder, who replays A's nonce to B."""
    na = encode_nonce(scene.nonce_for(initiator, 1))
    nb = encode_nonce(scene.nonce_for(responder, 2))
    return [
        ("start", initiator, intruder),  # 1.3
        ("deliver", ("new", responder), ("build", (na, label_bytes(initiator)))),  # 2.3, 2.6
        ("deliver", 1, ("blob", 1)),  # 1.6, 1.7
        ("deliver", 2, ("build", (nb,))),  # 2.7
    ]


def run_lowe_attack(
    a: Principal,
    b: Principal,
    ss: Principal,
    network: Optional[MessageChannel] = None,
    *,
    protocol: str = "ns",
    as_server: Optional[AuthServer] = None,
    seed: int = 7,
) -> SessionVerdict:
    """Replay the Lowe interleaving against NS (``protocol="ns"``) or NSL.

    When ``as_server`` is given, A only learns SS's key through a
    certificate; an unregistered SS therefore stops the attack at 1.3.
    """
    if as_server is not None:
        directory = {lab: pub for lab, pub in as_server.registry.items()}
        a = dataclasses.replace(a, directory=directory)
    scene = Scene(protocol, {a.label: a, b.label: b, ss.label: ss}, ss.label, (a.label,), (b.label,), seed)
    return replay(
        scene,
        lowe_actions(scene, ss.label, a.label, b.label),
        IntruderCapabilities(),
        network=network,
    )


def run_cf_auth(
    client: Principal,
    server: Principal,
    network: Optional[MessageChannel] = None,
    metadata: Optional[ConnectionMetadata] = None,
    *,
    rng: Optional[group.RandomSource] = None,
) -> SessionVerdict:
    """Identity-free three-message exchange; the server infers the client from behaviour."""
    network = network if network is not None else MessageChannel()
    rng = rng if rng is not None else random.Random(0)
    sealer = EciesSealer(rng)
    meta = metadata if metadata is not None else client.typical_connection()
    cl = CFClient(client, fresh_nonce(rng), 1, peer=server.label, peer_pub=client.directory.get(server.label), metadata=meta)
    sv = CFServer(server, fresh_nonce(rng), 1)
    verdict = SessionVerdict(protocol="cf")
    step = None
    reason = None
    try:
        m1 = _send(network, "CF-1", client.label, server.label, cl.start(sealer))
        m2 = _send(network, "CF-2", server.label, client.label, sv.on_message1(m1, meta, sealer))
        m3 = _send(network, "CF-3", client.label, server.label, cl.on_message2(m2, sealer))
        sv.on_message3(m3, sealer)
    except ProtocolAbort as exc:
        step, reason = exc.step, exc.reason
    except _Dropped as exc:
        step, reason = exc.step, "message dropped"
    verdict.initiator_accepts = cl.status == ACCEPTED
    verdict.responder_accepts = sv.status == ACCEPTED
    verdict.responder_peer_belief = sv.belief
    verdict.transcript = list(network.transcript)
    if step is not None:
        verdict.aborted_at, verdict.abort_reason = str(step), reason
    if cl.status == ACCEPTED:
        verdict.nonces["initiator:1"] = (cl.nonce, cl.other_nonce)
    if sv.status == ACCEPTED:
        verdict.nonces["responder:1"] = (sv.other_nonce, sv.nonce)
    if network.oracle is not None:
        verdict.leaked_plaintexts = list(network.oracle.plaintexts)
    return verdict
