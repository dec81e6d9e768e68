"""Field framing, principals, certificates and the message channel."""

from __future__ import annotations

import hashlib
import hmac
import random
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .. import group
from ..errors import DecryptFailure, InvalidArgument
from ..group import Point

NONCE_BYTES = 16


def frame(fields: Sequence[bytes]) -> bytes:
    """``X || Y``: each field prefixed by its 4-byte big-endian length."""
    return b"".join(struct.pack(">I", len(f)) + f for f in fields)


def unframe(data: bytes) -> tuple[bytes, ...]:
    out = []
    pos = 0
    while pos < len(data):
        if pos + 4 > len(data):
            raise InvalidArgument("truncated field header")
        (n,) = struct.unpack(">I", data[pos : pos + 4])
        pos += 4
        if pos + n > len(data):
            raise InvalidArgument("truncated field body")
        out.append(data[pos : pos + n])
        pos += n
    return tuple(out)


def encode_nonce(n: int) -> bytes:
    return n.to_bytes(NONCE_BYTES, "big")


def decode_nonce(data: bytes) -> int:
    if len(data) != NONCE_BYTES:
        raise InvalidArgument("nonce field must be 16 bytes")
    return int.from_bytes(data, "big")


def fresh_nonce(rng: group.RandomSource) -> int:
    # >= 2 so the value is a valid input to transcendental_from_nonce
    return rng.randrange(2, 2 ** (8 * NONCE_BYTES))


def label_bytes(label: str) -> bytes:
    return label.encode("utf-8")


def plaintext_mentions(plaintext: bytes, label: str) -> bool:
    """True if a decrypted payload carries ``label``.

    A framed payload is split into fields and each field compared with the
    label; labels of four bytes or more are also searched for as raw
    substrings.
    """
    raw = label_bytes(label)
    try:
        fields = unframe(plaintext)
    except InvalidArgument:
        fields = ()
    if raw in fields:
        return True
    return len(raw) >= 4 and raw in plaintext


# --------------------------------------------------------------------------
# Principals
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BehaviorProfile:
    """How a key usually connects: minute of day, place, typing rate."""

    minute_of_day: int
    location: str
    typing_wpm: float


@dataclass(frozen=True)
class ConnectionMetadata:
    minute_of_day: int
    location: str
    typing_wpm: float


@dataclass
class Principal:
    label: str
    d: int
    pub: Point
    directory: dict[str, Point] = field(default_factory=dict)
    profile: Optional[BehaviorProfile] = None
    profiles: dict[str, BehaviorProfile] = field(default_factory=dict)

    def __post_init__(self):
        if group.public_key(self.d) != self.pub:
            raise InvalidArgument(f"key pair of {self.label} is inconsistent")

    @classmethod
    def create(
        cls, label: str, rng: group.RandomSource, profile: Optional[BehaviorProfile] = None
    ) -> "Principal":
        d, pub = group.generate_keypair(rng)
        return cls(label, d, pub, {}, profile, {})

    def learn(self, *others: "Principal") -> None:
        for other in others:
            self.directory[other.label] = other.pub
            if other.profile is not None and other.label != self.label:
                self.profiles[other.label] = other.profile

    def typical_connection(self) -> ConnectionMetadata:
        if self.profile is None:
            raise InvalidArgument(f"{self.label} has no behavior profile")
        p = self.profile
        return ConnectionMetadata(p.minute_of_day, p.location, p.typing_wpm)


def introduce(*principals: Principal) -> None:
    """Give every principal every other principal's public key."""
    for p in principals:
        p.learn(*principals)


@dataclass
class ProfileMatcher:
    """Rule-based stand-in for inferring a client from connection behaviour.

    A profile matches when the time is within ``time_tolerance`` minutes
    (wrapping at midnight), the location label is equal and the typing rate
    is within ``rate_tolerance`` wpm. Zero or several matches give ``None``.
    """

    time_tolerance: int = 30
    rate_tolerance: float = 5.0

    def matches(self, profile: BehaviorProfile, meta: ConnectionMetadata) -> bool:
        dt = abs(profile.minute_of_day - meta.minute_of_day) % 1440
        dt = min(dt, 1440 - dt)
        return (
            dt <= self.time_tolerance
            and profile.location == meta.location
            and abs(profile.typing_wpm - meta.typing_wpm) <= self.rate_tolerance
        )

    def infer(self, profiles: dict[str, BehaviorProfile], meta: ConnectionMetadata) -> Optional[str]:
        hits = [label for label, prof in sorted(profiles.items()) if self.matches(prof, meta)]
        return hits[0] if len(hits) == 1 else None


# --------------------------------------------------------------------------
# Authentication server: certificates are MAC'd (public key, label) records
# --------------------------------------------------------------------------


class AuthServer:
    label = "AS"

    def __init__(self, signing_secret: bytes):
        if len(signing_secret) != group.SECRET_LEN:
            raise InvalidArgument("signing secret must be 32 bytes")
        self.signing_secret = signing_secret
        self.registry: dict[str, Point] = {}

    @classmethod
    def create(cls, rng: group.RandomSource) -> "AuthServer":
        return cls(group.random_bytes(rng, group.SECRET_LEN))

    def register(self, *principals: Principal) -> None:
        for p in principals:
            if p.label in self.registry and self.registry[p.label] != p.pub:
                raise InvalidArgument(f"label {p.label!r} already registered")
            self.registry[p.label] = p.pub

    def _mac(self, body: bytes) -> bytes:
        return hmac.new(self.signing_secret, body, hashlib.sha256).digest()

    def certificate(self, label: str) -> bytes:
        """Certificate for ``label``; raises ``KeyError`` when unregistered."""
        body = frame([group.encode_point(self.registry[label]), label_bytes(label)])
        return frame([body, self._mac(body)])

    def verify(self, cert: bytes) -> tuple[str, Point]:
        try:
            body, tag = unframe(cert)
            enc_pub, raw_label = unframe(body)
        except (InvalidArgument, ValueError):
            raise DecryptFailure("bad certificate") from None
        if not hmac.compare_digest(tag, self._mac(body)):
            raise DecryptFailure("bad certificate")
        return raw_label.decode(), group.decode_point(enc_pub)


# --------------------------------------------------------------------------
# Sealing: concrete ECIES, or symbolic terms for the intruder search
# --------------------------------------------------------------------------


class EciesSealer:
    def __init__(self, rng: group.RandomSource):
        self.rng = rng

    def seal(self, fields: Sequence[bytes], pub: Point) -> bytes:
        return group.ecies_encrypt(frame(fields), pub, self.rng).to_bytes()

    def open(self, blob, d: int, pub: Point) -> tuple[bytes, ...]:
        if not isinstance(blob, (bytes, bytearray)):
            raise DecryptFailure()
        try:
            return unframe(group.ecies_decrypt(bytes(blob), d))
        except InvalidArgument:
            raise DecryptFailure() from None

    @staticmethod
    def payload_bytes(blob) -> bytes:
        return bytes(blob)


@dataclass(frozen=True)
class SealedTerm:
    recipient: bytes  # encoded public key
    fields: tuple[bytes, ...]


class SymbolicSealer:
    """Perfect encryption: a term opens only under the matching key."""

    def __init__(self):
        self._enc: dict[Point, bytes] = {}

    def _encode(self, pub: Point) -> bytes:
        if pub not in self._enc:
            self._enc[pub] = group.encode_point(pub)
        return self._enc[pub]

    def seal(self, fields: Sequence[bytes], pub: Point) -> SealedTerm:
        return SealedTerm(self._encode(pub), tuple(fields))

    def open(self, blob, d: int, pub: Point) -> tuple[bytes, ...]:
        if not isinstance(blob, SealedTerm) or blob.recipient != self._encode(pub):
            raise DecryptFailure()
        return blob.fields

    @staticmethod
    def payload_bytes(blob) -> bytes:
        if isinstance(blob, SealedTerm):
            return b"SYM" + blob.recipient + frame(blob.fields)
        return bytes(blob)


# --------------------------------------------------------------------------
# Transcript and channel
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ProtocolMessage:
    step: str  # e.g. "NS-3", "NSL-6", "CF-2"
    sender: str  # harness-only label
    recipient: str
    payload: bytes
    observed_at: int = 0
    run: int = 1

    @property
    def number(self) -> int:
        return int(self.step.rsplit("-", 1)[1])

    @property
    def run_step(self) -> str:
        """Tag in ``run.step`` form, e.g. ``2.6``."""
        return f"{self.run}.{self.number}"

    def export(self) -> str:
        return f"{self.run_step} {self.step} {self.sender}->{self.recipient} {self.payload.hex()}"


class BackdoorOracle:
    """Global decryption capability: holds every private key in play."""

    def __init__(self, principals: Sequence[Principal] = ()):
        self.keys: list[tuple[int, Point]] = [(p.d, p.pub) for p in principals]
        self.plaintexts: list[bytes] = []

    def add(self, *principals: Principal) -> None:
        self.keys.extend((p.d, p.pub) for p in principals)

    def try_decrypt(self, payload: bytes) -> Optional[bytes]:
        for d, _ in self.keys:
            try:
                return group.ecies_decrypt(payload, d)
            except DecryptFailure:
                continue
        return None

    def observe(self, payload: bytes) -> None:
        plain = self.try_decrypt(payload)
        if plain is not None:
            self.plaintexts.append(plain)


Interceptor = Callable[[ProtocolMessage], Optional[ProtocolMessage]]


class MessageChannel:
    """Ordered, reliable, interceptable network.

    ``interceptor`` sees every message and returns it, a replacement, or
    ``None`` to drop it. ``oracle`` (if set) reads every payload.
    """

    def __init__(self, interceptor: Optional[Interceptor] = None, oracle: Optional[BackdoorOracle] = None):
        self.interceptor = interceptor
        self.oracle = oracle
        self.transcript: list[ProtocolMessage] = []
        self.clock = 0

    def send(self, step: str, sender: str, recipient: str, payload: bytes, run: int = 1) -> Optional[bytes]:
        msg = ProtocolMessage(step, sender, recipient, payload, self.clock, run)
        self.clock += 1
        if self.interceptor is not None:
            msg = self.interceptor(msg)
            if msg is None:
                return None
        self.transcript.append(msg)
        if self.oracle is not None:
            self.oracle.observe(msg.payload)
        return msg.payload

    def export(self) -> str:
        return "".join(m.export() + "\n" for m in self.transcript)


def default_rng(rng: Optional[group.RandomSource]) -> group.RandomSource:
    return rng if rng is not None else random.Random(0)
