"""Per-session state machines for NS, NSL and the identity-free CF protocol.

Roles never touch the network. They turn incoming blobs into outgoing blobs
through a sealer, so the same code runs over real ECIES and over the
symbolic terms of the intruder search.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional

from .. import contfrac
from ..errors import DecryptFailure, InvalidArgument
from ..group import Point
from .wire import (
    ConnectionMetadata,
    Principal,
    ProfileMatcher,
    decode_nonce,
    encode_nonce,
    label_bytes,
)

IDLE, WAITING, ACCEPTED, ABORTED = "idle", "waiting", "accepted", "aborted"


class ProtocolAbort(Exception):
    def __init__(self, step: int, reason: str):
        super().__init__(f"step {step}: {reason}")
        self.step = step
        self.reason = reason


def _open(sealer, blob, me: Principal, step: int) -> tuple[bytes, ...]:
    try:
        return sealer.open(blob, me.d, me.pub)
    except DecryptFailure:
        raise ProtocolAbort(step, "decrypt-failure") from None


def _nonce(raw: bytes, step: int) -> int:
    try:
        return decode_nonce(raw)
    except InvalidArgument:
        raise ProtocolAbort(step, "malformed nonce") from None


@dataclass
class Role:
    owner: Principal
    nonce: int
    run: int = 1
    status: str = IDLE

    initiator = False

    def clone(self):
        return copy.copy(self)

    @property
    def waiting_for(self) -> Optional[int]:
        return None

    def fail(self, step: int, reason: str):
        self.status = ABORTED
        raise ProtocolAbort(step, reason)


# --------------------------------------------------------------------------
# Needham-Schroeder public key, with or without Lowe's fix
# --------------------------------------------------------------------------


@dataclass
class NSInitiator(Role):
    peer: str = ""
    peer_pub: Optional[Point] = None
    lowe_fix: bool = False
    other_nonce: Optional[int] = None

    initiator = True

    @property
    def waiting_for(self):
        return 6 if self.status == WAITING else None

    def start(self, sealer):
        """Message 3: ``E(Na || A : PK_peer)``."""
        if self.peer_pub is None:
            self.fail(3, f"no public key for {self.peer}")
        self.status = WAITING
        return sealer.seal([encode_nonce(self.nonce), label_bytes(self.owner.label)], self.peer_pub)

    def on_message6(self, blob, sealer):
        """Check message 6 and answer with message 7: ``E(Nb : PK_peer)``."""
        fields = _open(sealer, blob, self.owner, 6)
        if self.lowe_fix:
            if len(fields) != 3:
                self.fail(6, "malformed message 6")
            ident, na, nb = fields
            if ident != label_bytes(self.peer):
                self.fail(6, "responder identity mismatch")
        else:
            if len(fields) != 2:
                self.fail(6, "malformed message 6")
            na, nb = fields
        if _nonce(na, 6) != self.nonce:
            self.fail(6, "nonce mismatch")
        self.other_nonce = _nonce(nb, 6)
        self.status = ACCEPTED
        return sealer.seal([encode_nonce(self.other_nonce)], self.peer_pub)

    def key(self):
        return ("nsi", self.owner.label, self.peer, self.status, self.nonce, self.other_nonce)


@dataclass
class NSResponder(Role):
    lowe_fix: bool = False
    claimed: Optional[str] = None
    other_nonce: Optional[int] = None
    peer_pub: Optional[Point] = None

    @property
    def waiting_for(self):
        if self.status == IDLE:
            return 3
        return 7 if self.status == WAITING else None

    @property
    def belief(self) -> Optional[str]:
        return self.claimed if self.status == ACCEPTED else None

    @property
    def partner(self) -> Optional[str]:
        return self.claimed

    def on_message3(self, blob, sealer) -> str:
        """Decrypt message 3 and return the claimed initiator label."""
        fields = _open(sealer, blob, self.owner, 3)
        if len(fields) != 2:
            self.fail(3, "malformed message 3")
        na, ident = fields
        self.other_nonce = _nonce(na, 3)
        try:
            self.claimed = ident.decode("utf-8")
        except UnicodeDecodeError:
            self.fail(3, "malformed identity")
        return self.claimed

    def reply(self, peer_pub: Optional[Point], sealer):
        """Message 6: ``E([B ||] Na || Nb : PK_claimed)``."""
        if peer_pub is None:
            self.fail(4, f"no public key for {self.claimed}")
        self.peer_pub = peer_pub
        fields = [encode_nonce(self.other_nonce), encode_nonce(self.nonce)]
        if self.lowe_fix:
            fields.insert(0, label_bytes(self.owner.label))
        self.status = WAITING
        return sealer.seal(fields, peer_pub)

    def on_message7(self, blob, sealer) -> None:
        fields = _open(sealer, blob, self.owner, 7)
        if len(fields) != 1 or _nonce(fields[0], 7) != self.nonce:
            self.fail(7, "nonce mismatch")
        self.status = ACCEPTED

    def key(self):
        return ("nsr", self.owner.label, self.claimed, self.status, self.nonce, self.other_nonce)


# --------------------------------------------------------------------------
# Identity-free protocol with continued-fraction challenges
# --------------------------------------------------------------------------


@dataclass
class CFClient(Role):
    peer: str = ""
    peer_pub: Optional[Point] = None
    metadata: Optional[ConnectionMetadata] = None
    other_nonce: Optional[int] = None

    initiator = True

    @property
    def waiting_for(self):
        return 2 if self.status == WAITING else None

    def start(self, sealer):
        """Message 1: ``E(Na : PK_server)``; no identity travels."""
        if self.peer_pub is None:
            self.fail(1, f"no public key for {self.peer}")
        self.status = WAITING
        return sealer.seal([encode_nonce(self.nonce)], self.peer_pub)

    def on_message2(self, blob, sealer):
        """Verify ``FC_1`` and answer ``E(FC_2 : PK_server)``."""
        fields = _open(sealer, blob, self.owner, 2)
        if len(fields) != 2:
            self.fail(2, "malformed message 2")
        fc1, nb = fields
        expected = contfrac.derive_fc(self.nonce, self.owner.pub, self.peer_pub)
        if not expected.matches(fc1):
            self.fail(2, "FC mismatch")
        self.other_nonce = _nonce(nb, 2)
        if self.other_nonce < 2:
            self.fail(2, "invalid nonce")
        fc2 = contfrac.derive_fc(self.other_nonce, self.peer_pub, self.owner.pub)
        self.status = ACCEPTED
        return sealer.seal([fc2.to_bytes()], self.peer_pub)

    def key(self):
        return ("cfc", self.owner.label, self.peer, self.status, self.nonce, self.other_nonce)


@dataclass
class CFServer(Role):
    matcher: ProfileMatcher = field(default_factory=ProfileMatcher)
    inferred: Optional[str] = None
    client_pub: Optional[Point] = None
    other_nonce: Optional[int] = None

    @property
    def waiting_for(self):
        if self.status == IDLE:
            return 1
        return 3 if self.status == WAITING else None

    @property
    def belief(self) -> Optional[str]:
        return self.inferred if self.status == ACCEPTED else None

    @property
    def partner(self) -> Optional[str]:
        return self.inferred

    def on_message1(self, blob, metadata: ConnectionMetadata, sealer):
        """Infer the client from behaviour, then send ``E(FC_1 || Nb : K_client)``."""
        fields = _open(sealer, blob, self.owner, 1)
        if len(fields) != 1:
            self.fail(1, "malformed message 1")
        na = _nonce(fields[0], 1)
        if na < 2:
            self.fail(1, "invalid nonce")
        label = self.matcher.infer(self.owner.profiles, metadata)
        if label is None or label not in self.owner.directory:
            self.fail(1, "unrecognized profile")
        self.inferred = label
        self.client_pub = self.owner.directory[label]
        self.other_nonce = na
        fc1 = contfrac.derive_fc(na, self.client_pub, self.owner.pub)
        self.status = WAITING
        return sealer.seal([fc1.to_bytes(), encode_nonce(self.nonce)], self.client_pub)

    def on_message3(self, blob, sealer) -> None:
        fields = _open(sealer, blob, self.owner, 3)
        if len(fields) != 1:
            self.fail(3, "malformed message 3")
        expected = contfrac.derive_fc(self.nonce, self.owner.pub, self.client_pub)
        if not expected.matches(fields[0]):
            self.fail(3, "FC mismatch")
        self.status = ACCEPTED

    def key(self):
        return ("cfs", self.owner.label, self.inferred, self.status, self.nonce, self.other_nonce)
