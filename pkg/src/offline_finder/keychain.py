"""Rotating key chain: secret ratchet, diversification, per-epoch key pairs.

Epoch ``i`` covers simulated seconds ``[created_at + 900*i, created_at + 900*(i+1))``.
Epoch 0 diversifies ``sk0`` directly; each ratchet step yields the next
epoch's secret.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterator, Optional

from . import group
from .errors import InvalidArgument, InvalidKey, InvalidTime
from .group import ORDER, Point

EPOCH_SECONDS = 900
RECORD_VERSION = 0x01
RECORD_LEN = 1 + group.SCALAR_LEN + group.POINT_LEN + group.SECRET_LEN + 8


@dataclass(frozen=True)
class MasterKeyRecord:
    d: int
    P: Point
    sk0: bytes
    created_at: int = 0

    def __post_init__(self):
        if not 0 < self.d < ORDER:
            raise InvalidKey("master private key out of range")
        if len(self.sk0) != group.SECRET_LEN:
            raise InvalidArgument("sk0 must be 32 bytes")

    @classmethod
    def generate(cls, rng: group.RandomSource, created_at: int = 0) -> "MasterKeyRecord":
        d, P = group.generate_keypair(rng)
        return cls(d, P, group.random_bytes(rng, group.SECRET_LEN), created_at)

    @classmethod
    def from_secret(cls, d: int, sk0: bytes, created_at: int = 0) -> "MasterKeyRecord":
        return cls(d, group.public_key(d), sk0, created_at)

    def to_bytes(self) -> bytes:
        return (
            bytes([RECORD_VERSION])
            + group.encode_scalar(self.d)
            + group.encode_point(self.P)
            + self.sk0
            + struct.pack(">Q", self.created_at)
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "MasterKeyRecord":
        if len(data) != RECORD_LEN or data[0] != RECORD_VERSION:
            raise InvalidArgument("malformed master key record")
        off = 1
        d = group.decode_scalar(data[off : off + group.SCALAR_LEN])
        off += group.SCALAR_LEN
        P = group.decode_point(data[off : off + group.POINT_LEN])
        off += group.POINT_LEN
        sk0 = data[off : off + group.SECRET_LEN]
        off += group.SECRET_LEN
        (created_at,) = struct.unpack(">Q", data[off:])
        record = cls(d, P, sk0, created_at)
        if group.public_key(d) != P:
            raise InvalidKey("public key does not match private key")
        return record

    def to_text(self) -> str:
        return (
            f"version={RECORD_VERSION}\n"
            f"d={group.encode_scalar(self.d).hex()}\n"
            f"P={group.encode_point(self.P).hex()}\n"
            f"sk0={self.sk0.hex()}\n"
            f"created_at={self.created_at}\n"
        )

    @classmethod
    def from_text(cls, text: str) -> "MasterKeyRecord":
        fields = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise InvalidArgument(f"bad record line: {line!r}")
            fields[key.strip()] = value.strip()
        try:
            if int(fields["version"]) != RECORD_VERSION:
                raise InvalidArgument("unsupported record version")
            raw = (
                bytes([RECORD_VERSION])
                + bytes.fromhex(fields["d"])
                + bytes.fromhex(fields["P"])
                + bytes.fromhex(fields["sk0"])
                + struct.pack(">Q", int(fields["created_at"]))
            )
        except (KeyError, ValueError, struct.error) as exc:
            raise InvalidArgument(f"malformed master key record: {exc}") from exc
        return cls.from_bytes(raw)

    @classmethod
    def load(cls, data: bytes) -> "MasterKeyRecord":
        """Accept either the binary or the hex-field text form."""
        if len(data) == RECORD_LEN and data[0] == RECORD_VERSION:
            return cls.from_bytes(data)
        try:
            text = data.decode("ascii")
        except UnicodeDecodeError as exc:
            raise InvalidArgument("unrecognized master key record") from exc
        return cls.from_text(text)


@dataclass(frozen=True)
class EpochState:
    i: int
    sk_i: bytes
    u_i: int
    v_i: int
    d_i: int
    P_i: Point

    @property
    def index(self) -> bytes:
        return group.hash_index(self.P_i)


def ratchet(sk_prev: bytes) -> bytes:
    return group.kdf(sk_prev, b"update", group.SECRET_LEN)


def diversify(sk_i: bytes) -> tuple[int, int]:
    """Split 72 KDF bytes into two 36-byte halves reduced mod the order.

    A zero ``u`` would collapse the affine map, so it is re-derived under
    ``diversify-retry-k`` labels until non-zero.
    """
    label = b"diversify"
    k = 0
    while True:
        raw = group.kdf(sk_i, label, 72)
        u = int.from_bytes(raw[:36], "big") % ORDER
        v = int.from_bytes(raw[36:], "big") % ORDER
        if u:
            return u, v
        k += 1
        label = b"diversify-retry-%d" % k


def _epoch_from(master: MasterKeyRecord, i: int, sk_i: bytes, uv=None) -> EpochState:
    u, v = uv if uv is not None else diversify(sk_i)
    d_i = (u * master.d + v) % ORDER
    P_i = group.linear_combination(u, master.P, v)
    return EpochState(i, sk_i, u, v, d_i, P_i)


def derive_epoch(
    master: MasterKeyRecord, i: int, *, _override_uv: Optional[tuple[int, int]] = None
) -> EpochState:
    """Key pair of epoch ``i``.

    ``_override_uv`` replaces the diversified multipliers; it exists for tests
    of the affine map and is never used by the simulator.
    """
    if i < 0:
        raise InvalidArgument("epoch counter must be >= 0")
    sk = master.sk0
    for _ in range(i):
        sk = ratchet(sk)
    return _epoch_from(master, i, sk, _override_uv)


def iter_epochs(master: MasterKeyRecord, start: int = 0, stop: Optional[int] = None) -> Iterator[EpochState]:
    """Yield epochs ``start, start+1, ...`` without re-ratcheting from sk0 each time."""
    if start < 0:
        raise InvalidArgument("epoch counter must be >= 0")
    sk = master.sk0
    for _ in range(start):
        sk = ratchet(sk)
    i = start
    while stop is None or i < stop:
        yield _epoch_from(master, i, sk)
        sk = ratchet(sk)
        i += 1


def epoch_at(master: MasterKeyRecord, t: int) -> int:
    if t < master.created_at:
        raise InvalidTime(f"time {t} precedes record creation at {master.created_at}")
    return (t - master.created_at) // EPOCH_SECONDS


def broadcast_key(master: MasterKeyRecord, t: int) -> EpochState:
    return derive_epoch(master, epoch_at(master, t))


def owner_lookup_indices(master: MasterKeyRecord, t_from: int, t_to: int) -> list[bytes]:
    if t_from > t_to:
        raise InvalidArgument("t_from must not exceed t_to")
    first = epoch_at(master, t_from)
    last = epoch_at(master, t_to)
    return [e.index for e in iter_epochs(master, first, last + 1)]


class EpochCache:
    """Memoizes epochs of one master record; the simulator asks for the same epoch often."""

    def __init__(self, master: MasterKeyRecord):
        self.master = master
        self._epochs: dict[int, EpochState] = {}
        self._last = (0, master.sk0)

    def get(self, i: int) -> EpochState:
        if i in self._epochs:
            return self._epochs[i]
        j, sk = self._last
        if i < j:
            j, sk = 0, self.master.sk0
        while j < i:
            sk = ratchet(sk)
            j += 1
        self._last = (j, sk)
        state = _epoch_from(self.master, i, sk)
        self._epochs[i] = state
        return state

    def at(self, t: int) -> EpochState:
        return self.get(epoch_at(self.master, t))
