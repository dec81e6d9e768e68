"""P-224 group arithmetic, the one-step KDF, ECIES and server-index hashing.

Points are kept in affine form at the API boundary (:class:`Point`) and in
Jacobian coordinates internally. The ECDH step of ECIES and point
decompression go through OpenSSL via ``cryptography``; the affine key maps
used by the key chain need general point addition, which OpenSSL does not
expose, so that part is implemented here.
"""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Protocol

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import DecryptFailure, InvalidArgument, InvalidKey

# NIST P-224 (secp224r1)
P = 2**224 - 2**96 + 1
A = P - 3
B = 0xB4050A850C04B3ABF54132565044B0B7D7BFD8BA270B39432355FFB4
ORDER = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFF16A2E0B8F03E13DD29455C5C2A3D
GX = 0xB70E0CBD6BB4BF7F321390B94A03C1D356C21122343280D6115C1D21
GY = 0xBD376388B5F723FB4C22DFE6CD4375A05A07476444D5819985007E34

SCALAR_LEN = 28
POINT_LEN = 29
SECRET_LEN = 32
HASH_LEN = 32
TAG_LEN = 16
CIPHERTEXT_VERSION = 0x01

_CURVE = ec.SECP224R1()


class RandomSource(Protocol):
    """What the package needs from a random generator.

    ``random.Random`` satisfies it; tests always pass a seeded instance.
    """

    def randrange(self, start: int, stop: int = ..., step: int = ...) -> int: ...

    def getrandbits(self, k: int) -> int: ...


def random_bytes(rng: RandomSource, n: int) -> bytes:
    return rng.getrandbits(8 * n).to_bytes(n, "big")


# --------------------------------------------------------------------------
# Jacobian arithmetic. A point is (X, Y, Z); Z == 0 marks the identity.
# --------------------------------------------------------------------------

_INF = (1, 1, 0)


def _jdouble(pt):
    X, Y, Z = pt
    if Z == 0 or Y == 0:
        return _INF
    delta = Z * Z % P
    gamma = Y * Y % P
    beta = X * gamma % P
    alpha = 3 * (X - delta) * (X + delta) % P
    X3 = (alpha * alpha - 8 * beta) % P
    Z3 = ((Y + Z) ** 2 - gamma - delta) % P
    Y3 = (alpha * (4 * beta - X3) - 8 * gamma * gamma) % P
    return (X3, Y3, Z3)


def _jadd(p1, p2):
    X1, Y1, Z1 = p1
    X2, Y2, Z2 = p2
    if Z1 == 0:
        return p2
    if Z2 == 0:
        return p1
    Z1Z1 = Z1 * Z1 % P
    Z2Z2 = Z2 * Z2 % P
    U1 = X1 * Z2Z2 % P
    U2 = X2 * Z1Z1 % P
    S1 = Y1 * Z2 * Z2Z2 % P
    S2 = Y2 * Z1 * Z1Z1 % P
    H = (U2 - U1) % P
    R = (S2 - S1) % P
    if H == 0:
        if R == 0:
            return _jdouble(p1)
        return _INF
    HH = H * H % P
    HHH = H * HH % P
    V = U1 * HH % P
    X3 = (R * R - HHH - 2 * V) % P
    Y3 = (R * (V - X3) - S1 * HHH) % P
    Z3 = H * Z1 * Z2 % P
    return (X3, Y3, Z3)


def _to_affine(pt) -> "Point":
    X, Y, Z = pt
    if Z == 0:
        return IDENTITY
    zinv = pow(Z, -1, P)
    zinv2 = zinv * zinv % P
    return Point(X * zinv2 % P, Y * zinv2 * zinv % P)


def _jmul(k: int, pt) -> tuple:
    """Fixed 4-bit window multiplication; ``k`` already reduced."""
    if k == 0 or pt[2] == 0:
        return _INF
    table = [_INF, pt]
    for _ in range(14):
        table.append(_jadd(table[-1], pt))
    acc = _INF
    for shift in range((k.bit_length() + 3) // 4 * 4 - 4, -1, -4):
        if acc[2]:
            for _ in range(4):
                acc = _jdouble(acc)
        nib = (k >> shift) & 0xF
        if nib:
            acc = _jadd(acc, table[nib])
    return acc


def _build_table(x: int, y: int):
    # table[w][j] = j * 16**w * (x, y), for 56 nibble positions
    rows = []
    base = (x, y, 1)
    for _ in range(SCALAR_LEN * 2):
        row = [_INF, base]
        for _ in range(14):
            row.append(_jadd(row[-1], base))
        affine = [_to_affine(p) for p in row]
        rows.append([(a.x, a.y, 1) if not a.is_identity else _INF for a in affine])
        for _ in range(4):
            base = _jdouble(base)
    return rows


def _jmul_table(table, k: int):
    acc = _INF
    w = 0
    while k:
        nib = k & 0xF
        if nib:
            acc = _jadd(acc, table[w][nib])
        k >>= 4
        w += 1
    return acc


@lru_cache(maxsize=1)
def _base_table():
    return _build_table(GX, GY)


@lru_cache(maxsize=256)
def _point_table(x: int, y: int):
    """Fixed-base table for a point reused many times, e.g. a master public key."""
    return _build_table(x, y)


def _jmul_base(k: int):
    return _jmul_table(_base_table(), k)


@dataclass(frozen=True)
class Point:
    """Affine point on P-224; ``x is None`` encodes the identity."""

    x: Optional[int]
    y: Optional[int]

    @property
    def is_identity(self) -> bool:
        return self.x is None

    def on_curve(self) -> bool:
        if self.is_identity:
            return True
        return (self.y * self.y - (self.x**3 + A * self.x + B)) % P == 0

    def _jac(self):
        return _INF if self.is_identity else (self.x, self.y, 1)

    def __add__(self, other: "Point") -> "Point":
        if not isinstance(other, Point):
            return NotImplemented
        return _to_affine(_jadd(self._jac(), other._jac()))

    def __neg__(self) -> "Point":
        if self.is_identity:
            return self
        return Point(self.x, (-self.y) % P)

    def __sub__(self, other: "Point") -> "Point":
        return self + (-other)

    def __rmul__(self, k: int) -> "Point":
        if not isinstance(k, int):
            return NotImplemented
        return scalar_mul(k, self)

    def __bytes__(self) -> bytes:
        return encode_point(self)

    def __repr__(self) -> str:
        if self.is_identity:
            return "Point(identity)"
        return f"Point({encode_point(self).hex()[:16]}...)"


IDENTITY = Point(None, None)
G = Point(GX, GY)


def scalar_mul(k: int, pt: Point) -> Point:
    """Return ``k * pt``; ``k`` is reduced modulo the group order first."""
    k %= ORDER
    if pt == G:
        return _to_affine(_jmul_base(k))
    return _to_affine(_jmul(k, pt._jac()))


def linear_combination(u: int, pt: Point, v: int) -> Point:
    """``u * pt + v * G`` with a single affine conversion."""
    if pt.is_identity:
        return _to_affine(_jmul_base(v % ORDER))
    acc = _jadd(_jmul_table(_point_table(pt.x, pt.y), u % ORDER), _jmul_base(v % ORDER))
    return _to_affine(acc)


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------


def encode_scalar(k: int) -> bytes:
    if not 0 <= k < ORDER:
        raise InvalidArgument("scalar out of range")
    return k.to_bytes(SCALAR_LEN, "big")


def decode_scalar(data: bytes) -> int:
    if len(data) != SCALAR_LEN:
        raise InvalidArgument(f"scalar must be {SCALAR_LEN} bytes")
    k = int.from_bytes(data, "big")
    if k >= ORDER:
        raise InvalidArgument("scalar not reduced")
    return k


@lru_cache(maxsize=4096)
def encode_point(pt: Point) -> bytes:
    """29-byte compressed form: 0x02/0x03 parity byte then big-endian x."""
    if pt.is_identity:
        raise InvalidKey("the identity has no encoding")
    return bytes([2 | (pt.y & 1)]) + pt.x.to_bytes(SCALAR_LEN, "big")


def decode_point(data: bytes) -> Point:
    if len(data) != POINT_LEN or data[0] not in (2, 3):
        raise InvalidKey("malformed point encoding")
    try:
        key = ec.EllipticCurvePublicKey.from_encoded_point(_CURVE, bytes(data))
    except ValueError as exc:
        raise InvalidKey("point not on curve") from exc
    nums = key.public_numbers()
    return Point(nums.x, nums.y)


def _openssl_public(pt: Point) -> ec.EllipticCurvePublicKey:
    return ec.EllipticCurvePublicNumbers(pt.x, pt.y, _CURVE).public_key()


def _openssl_private(k: int) -> ec.EllipticCurvePrivateKey:
    return ec.derive_private_key(k, _CURVE)


def public_key(d: int) -> Point:
    """``d * G`` via OpenSSL. Used where speed matters and as a test oracle."""
    if not 0 < d < ORDER:
        raise InvalidKey("private scalar out of range")
    nums = _openssl_private(d).public_key().public_numbers()
    return Point(nums.x, nums.y)


def generate_keypair(rng: RandomSource) -> tuple[int, Point]:
    d = rng.randrange(1, ORDER)
    return d, public_key(d)


# --------------------------------------------------------------------------
# KDF
# --------------------------------------------------------------------------


def kdf(secret: bytes, label: bytes, out_len: int) -> bytes:
    """Single-step concatenation KDF with SHA-256.

    Block ``i`` is ``SHA256(counter_i || secret || label)`` with a 4-byte
    big-endian counter starting at 1; ``label`` plays the role of OtherInfo.
    """
    if out_len <= 0 or out_len > 255 * HASH_LEN:
        raise InvalidArgument(f"out_len must be in 1..{255 * HASH_LEN}")
    if isinstance(label, str):
        label = label.encode()
    out = bytearray()
    counter = 1
    while len(out) < out_len:
        out += hashlib.sha256(struct.pack(">I", counter) + secret + label).digest()
        counter += 1
    return bytes(out[:out_len])


# --------------------------------------------------------------------------
# ECIES
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Ciphertext:
    ephemeral_public: Point
    body: bytes
    tag: bytes

    def header(self) -> bytes:
        return (
            bytes([CIPHERTEXT_VERSION])
            + encode_point(self.ephemeral_public)
            + struct.pack(">I", len(self.body))
        )

    def to_bytes(self) -> bytes:
        return self.header() + self.body + self.tag

    @classmethod
    def from_bytes(cls, data: bytes) -> "Ciphertext":
        """Parse the wire form. Any malformation is a :class:`DecryptFailure`."""
        hdr = 1 + POINT_LEN + 4
        if len(data) < hdr + 1 + TAG_LEN or data[0] != CIPHERTEXT_VERSION:
            raise DecryptFailure()
        (blen,) = struct.unpack(">I", data[1 + POINT_LEN : hdr])
        if blen == 0 or len(data) != hdr + blen + TAG_LEN:
            raise DecryptFailure()
        try:
            eph = decode_point(data[1 : 1 + POINT_LEN])
        except InvalidKey:
            raise DecryptFailure() from None
        return cls(eph, data[hdr : hdr + blen], data[hdr + blen :])

    def __bytes__(self) -> bytes:
        return self.to_bytes()


def _ecies_keys(shared: bytes) -> tuple[bytes, bytes]:
    material = kdf(shared, b"ecies", 28)
    return material[:16], material[16:]


def ecies_encrypt(plaintext: bytes, pub: Point, rng: RandomSource) -> Ciphertext:
    if pub.is_identity:
        raise InvalidKey("cannot encrypt to the identity")
    if not plaintext:
        raise InvalidArgument("plaintext must be non-empty")
    eph_d = rng.randrange(1, ORDER)
    eph_key = _openssl_private(eph_d)
    nums = eph_key.public_key().public_numbers()
    eph_pub = Point(nums.x, nums.y)
    shared = eph_key.exchange(ec.ECDH(), _openssl_public(pub))
    key, nonce = _ecies_keys(shared)
    header = (
        bytes([CIPHERTEXT_VERSION]) + encode_point(eph_pub) + struct.pack(">I", len(plaintext))
    )
    sealed = AESGCM(key).encrypt(nonce, plaintext, header)
    return Ciphertext(eph_pub, sealed[:-TAG_LEN], sealed[-TAG_LEN:])


def ecies_decrypt(c: Ciphertext | bytes, d: int) -> bytes:
    if isinstance(c, (bytes, bytearray)):
        c = Ciphertext.from_bytes(bytes(c))
    if not c.body or len(c.tag) != TAG_LEN or not 0 < d < ORDER:
        raise DecryptFailure()
    try:
        shared = _openssl_private(d).exchange(ec.ECDH(), _openssl_public(c.ephemeral_public))
    except ValueError:
        raise DecryptFailure() from None
    key, nonce = _ecies_keys(shared)
    try:
        return AESGCM(key).decrypt(nonce, c.body + c.tag, c.header())
    except InvalidTag:
        raise DecryptFailure() from None


def hash_index(pub: Point) -> bytes:
    """32-byte server index: SHA-256 over the compressed point."""
    if pub.is_identity:
        raise InvalidKey("the identity has no server index")
    return hashlib.sha256(encode_point(pub)).digest()


def make_rng(seed: int) -> random.Random:
    return random.Random(seed)
