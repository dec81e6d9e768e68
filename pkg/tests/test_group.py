import random

import pytest
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.kdf.concatkdf import ConcatKDFHash
from hypothesis import given, settings
from hypothesis import strategies as st

from offline_finder import group
from offline_finder.errors import DecryptFailure, InvalidArgument, InvalidKey
from offline_finder.group import G, IDENTITY, ORDER

scalars = st.integers(min_value=0, max_value=ORDER - 1)
nonzero = st.integers(min_value=1, max_value=ORDER - 1)

# frozen from an independent ConcatKDFHash run (see ledger)
KDF_ZERO_UPDATE_32 = "8e060cc4ea4212639614d3da13ddcc18683e684571062eb50880b0eaa589babe"


def test_scalar_mul_edge_scalars():
    assert group.scalar_mul(0, G).is_identity
    assert group.scalar_mul(1, G) == G
    assert group.scalar_mul(ORDER - 1, G) + G == IDENTITY
    assert group.scalar_mul(ORDER - 1, G) == -G


def test_curve_constants():
    assert G.on_curve()
    assert group.scalar_mul(ORDER, G).is_identity


@settings(max_examples=100, deadline=None)
@given(scalars, scalars)
def test_homomorphism(a, b):
    lhs = group.scalar_mul((a + b) % ORDER, G)
    assert lhs == group.scalar_mul(a, G) + group.scalar_mul(b, G)


@settings(max_examples=50, deadline=None)
@given(nonzero)
def test_scalar_mul_agrees_with_openssl(k):
    nums = ec.derive_private_key(k, ec.SECP224R1()).public_key().public_numbers()
    pt = group.scalar_mul(k, G)
    assert (pt.x, pt.y) == (nums.x, nums.y)


@settings(max_examples=50, deadline=None)
@given(nonzero, scalars)
def test_linear_combination(u, v):
    P = group.public_key(12345)
    expect = group.scalar_mul(u, P) + group.scalar_mul(v, G)
    assert group.linear_combination(u, P, v) == expect


@settings(max_examples=50, deadline=None)
@given(nonzero)
def test_point_encoding_roundtrip(k):
    pt = group.public_key(k)
    enc = group.encode_point(pt)
    assert len(enc) == group.POINT_LEN and enc[0] in (2, 3)
    assert group.decode_point(enc) == pt


def test_point_encoding_errors():
    with pytest.raises(InvalidKey):
        group.encode_point(IDENTITY)
    with pytest.raises(InvalidKey):
        group.decode_point(b"\x04" + bytes(28))
    with pytest.raises(InvalidKey):
        group.decode_point(b"\x02" + b"\xff" * 28)
    with pytest.raises(InvalidKey):
        group.decode_point(b"\x02" + bytes(10))


def test_scalar_encoding():
    assert group.encode_scalar(ORDER - 1) == (ORDER - 1).to_bytes(28, "big")
    assert group.decode_scalar(group.encode_scalar(77)) == 77
    with pytest.raises(InvalidArgument):
        group.encode_scalar(ORDER)
    with pytest.raises(InvalidArgument):
        group.decode_scalar(ORDER.to_bytes(28, "big"))


# ---- kdf


def test_kdf_golden_vector():
    assert group.kdf(bytes(32), b"update", 32).hex() == KDF_ZERO_UPDATE_32


@settings(max_examples=50, deadline=None)
@given(st.binary(min_size=1, max_size=64), st.binary(max_size=24), st.integers(1, 200))
def test_kdf_matches_reference(secret, label, n):
    ref = ConcatKDFHash(hashes.SHA256(), n, label).derive(secret)
    assert group.kdf(secret, label, n) == ref


def test_kdf_deterministic_and_label_separated():
    s = bytes(range(32))
    assert group.kdf(s, b"update", 32) == group.kdf(s, b"update", 32)
    assert group.kdf(s, b"update", 32) != group.kdf(s, b"diversify", 32)


def test_kdf_labels_never_collide():
    r = random.Random(5)
    seen = set()
    for _ in range(10_000):
        s = group.random_bytes(r, 32)
        a, b = group.kdf(s, b"update", 32), group.kdf(s, b"diversify", 32)
        assert a != b
        seen.add(a)
        seen.add(b)
    assert len(seen) == 20_000


def test_kdf_length_bounds():
    with pytest.raises(InvalidArgument):
        group.kdf(b"x", b"y", 0)
    with pytest.raises(InvalidArgument):
        group.kdf(b"x", b"y", 255 * 32 + 1)
    assert len(group.kdf(b"x", b"y", 255 * 32)) == 255 * 32


# ---- ecies


def test_ecies_roundtrip_and_layout(rng):
    d, P = group.generate_keypair(rng)
    c = group.ecies_encrypt(b"48.8566,2.3522", P, rng)
    raw = c.to_bytes()
    assert raw[0] == 0x01
    assert int.from_bytes(raw[30:34], "big") == len(c.body) == 14
    assert len(raw) == 1 + 29 + 4 + 14 + 16
    assert group.ecies_decrypt(raw, d) == b"48.8566,2.3522"
    assert group.ecies_decrypt(c, d) == b"48.8566,2.3522"


def test_ecies_is_probabilistic(rng):
    _, P = group.generate_keypair(rng)
    assert group.ecies_encrypt(b"m", P, rng).to_bytes() != group.ecies_encrypt(b"m", P, rng).to_bytes()


@settings(max_examples=40, deadline=None)
@given(st.binary(min_size=1, max_size=300), st.integers(0, 2**32))
def test_ecies_roundtrip_property(msg, seed):
    r = random.Random(seed)
    d, P = group.generate_keypair(r)
    assert group.ecies_decrypt(group.ecies_encrypt(msg, P, r), d) == msg


def test_ecies_failures(rng):
    d, P = group.generate_keypair(rng)
    other, _ = group.generate_keypair(rng)
    raw = group.ecies_encrypt(b"secret square", P, rng).to_bytes()
    with pytest.raises(DecryptFailure):
        group.ecies_decrypt(raw, other)
    tampered = raw[:-1] + bytes([raw[-1] ^ 1])
    with pytest.raises(DecryptFailure):
        group.ecies_decrypt(tampered, d)
    with pytest.raises(DecryptFailure):
        group.ecies_decrypt(raw[:-3], d)
    with pytest.raises(DecryptFailure):
        group.ecies_decrypt(b"\x02" + raw[1:], d)
    with pytest.raises(DecryptFailure):
        group.ecies_decrypt(b"", d)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_any_bit_flip_fails(data):
    r = random.Random(data.draw(st.integers(0, 1000)))
    d, P = group.generate_keypair(r)
    raw = bytearray(group.ecies_encrypt(b"meet at the square", P, r).to_bytes())
    bit = data.draw(st.integers(0, len(raw) * 8 - 1))
    raw[bit // 8] ^= 1 << (bit % 8)
    with pytest.raises(DecryptFailure):
        group.ecies_decrypt(bytes(raw), d)


def test_ecies_preconditions(rng):
    with pytest.raises(InvalidKey):
        group.ecies_encrypt(b"x", IDENTITY, rng)
    _, P = group.generate_keypair(rng)
    with pytest.raises(InvalidArgument):
        group.ecies_encrypt(b"", P, rng)


# ---- server index


def test_hash_index():
    P = group.public_key(99)
    assert group.hash_index(P) == group.hash_index(P)
    assert len(group.hash_index(P)) == 32
    assert group.hash_index(P) != group.hash_index(group.scalar_mul(2, P))
    with pytest.raises(InvalidKey):
        group.hash_index(IDENTITY)
