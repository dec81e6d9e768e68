import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from offline_finder import group, keychain
from offline_finder.errors import InvalidArgument, InvalidKey, InvalidTime
from offline_finder.group import G, ORDER
from offline_finder.keychain import EPOCH_SECONDS, MasterKeyRecord

# frozen from an independent ConcatKDFHash run (see ledger)
RATCHET10_ZERO = "a7a394f882c7ef1cc16daa1e56e9239a365481612cafe4582884e62ee923d1f9"
DIVERSIFY_AB_U = 0x7515F092646F1A1D235611915274F692606C45AFBF8BB84B221CB1A6
DIVERSIFY_AB_V = 0x482B08CD6E66D47B281D953443C17EDD444F736D447A9E27A691D600


@pytest.fixture(scope="module")
def master():
    return MasterKeyRecord.generate(random.Random(21), created_at=1000)


def test_epoch_is_fifteen_minutes():
    assert EPOCH_SECONDS == 15 * 60


def test_ratchet_golden_chain():
    s = bytes(32)
    for _ in range(10):
        s = keychain.ratchet(s)
    assert s.hex() == RATCHET10_ZERO


def test_ratchet_never_fixed_point():
    r = random.Random(2)
    for _ in range(1000):
        s = group.random_bytes(r, 32)
        assert keychain.ratchet(s) != s
        assert keychain.ratchet(s) == keychain.ratchet(s)


def test_diversify_golden():
    assert keychain.diversify(b"\xab" * 32) == (DIVERSIFY_AB_U, DIVERSIFY_AB_V)


@settings(max_examples=100, deadline=None)
@given(st.binary(min_size=32, max_size=32))
def test_diversify_reduced(sk):
    u, v = keychain.diversify(sk)
    assert 0 < u < ORDER and 0 <= v < ORDER


def test_diversify_retries_on_zero_u(monkeypatch):
    calls = []
    real = group.kdf

    def fake(secret, label, n):
        calls.append(label)
        if label == b"diversify":
            return ORDER.to_bytes(36, "big") + (5).to_bytes(36, "big")
        return real(secret, label, n)

    monkeypatch.setattr(group, "kdf", fake)
    u, _ = keychain.diversify(bytes(32))
    assert u != 0
    assert calls[:2] == [b"diversify", b"diversify-retry-1"]


def test_epoch_invariants(master):
    for state in keychain.iter_epochs(master, 0, 101):
        assert 0 < state.u_i < ORDER
        assert state.d_i == (state.u_i * master.d + state.v_i) % ORDER
        assert group.scalar_mul(state.d_i, G) == state.P_i
        assert group.public_key(state.d_i) == state.P_i


def test_derive_epoch_matches_iteration(master):
    streamed = {s.i: s for s in keychain.iter_epochs(master, 0, 12)}
    for i in (0, 1, 5, 11):
        assert keychain.derive_epoch(master, i) == streamed[i]
    assert keychain.derive_epoch(master, 0).sk_i == master.sk0
    assert keychain.derive_epoch(master, 1).sk_i == keychain.ratchet(master.sk0)


def test_affine_identity_hook(master):
    s = keychain.derive_epoch(master, 3, _override_uv=(1, 0))
    assert s.d_i == master.d and s.P_i == master.P


def test_negative_epoch(master):
    with pytest.raises(InvalidArgument):
        keychain.derive_epoch(master, -1)


def test_chain_determinism():
    a = MasterKeyRecord.from_secret(777, b"\x01" * 32)
    b = MasterKeyRecord.from_secret(777, b"\x01" * 32)
    assert list(keychain.iter_epochs(a, 0, 20)) == list(keychain.iter_epochs(b, 0, 20))


def test_broadcast_key_boundaries(master):
    c = master.created_at
    assert keychain.broadcast_key(master, c).i == 0
    assert keychain.broadcast_key(master, c + 899).i == 0
    assert keychain.broadcast_key(master, c + 900).i == 1
    assert keychain.epoch_at(master, c + 90_000) == 100
    with pytest.raises(InvalidTime):
        keychain.broadcast_key(master, c - 1)


def test_owner_lookup_indices(master):
    c = master.created_at
    assert len(keychain.owner_lookup_indices(master, c, c)) == 1
    idx = keychain.owner_lookup_indices(master, c, c + 3600)
    assert len(idx) == 5
    assert idx == [group.hash_index(keychain.derive_epoch(master, i).P_i) for i in range(5)]
    with pytest.raises(InvalidArgument):
        keychain.owner_lookup_indices(master, c + 10, c)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 20_000), st.integers(0, 20_000))
def test_lookup_window_property(a, b):
    rec = MasterKeyRecord.from_secret(4242, b"\x07" * 32)
    lo, hi = min(a, b), max(a, b)
    idx = keychain.owner_lookup_indices(rec, lo, hi)
    first, last = lo // 900, hi // 900
    assert len(idx) == last - first + 1
    assert idx[0] == keychain.derive_epoch(rec, first).index


def test_epoch_cache(master):
    cache = keychain.EpochCache(master)
    assert cache.get(7) == keychain.derive_epoch(master, 7)
    assert cache.get(2) == keychain.derive_epoch(master, 2)
    assert cache.at(master.created_at + 1800).i == 2


def test_record_roundtrip(master):
    raw = master.to_bytes()
    assert len(raw) == 1 + 28 + 29 + 32 + 8 and raw[0] == 1
    assert MasterKeyRecord.from_bytes(raw) == master
    assert MasterKeyRecord.from_text(master.to_text()) == master
    assert MasterKeyRecord.load(raw) == master
    assert MasterKeyRecord.load(master.to_text().encode()) == master


def test_record_rejects_corruption(master):
    raw = bytearray(master.to_bytes())
    with pytest.raises(InvalidArgument):
        MasterKeyRecord.from_bytes(bytes(raw[:-1]))
    bad = bytearray(raw)
    bad[0] = 2
    with pytest.raises(InvalidArgument):
        MasterKeyRecord.from_bytes(bytes(bad))
    other = MasterKeyRecord.from_secret(5, bytes(32))
    mixed = raw[:29] + other.to_bytes()[29:58] + raw[58:]
    with pytest.raises(InvalidKey):
        MasterKeyRecord.from_bytes(bytes(mixed))
    with pytest.raises(InvalidArgument):
        MasterKeyRecord.load(b"garbage\n")
    with pytest.raises(InvalidKey):
        MasterKeyRecord.from_secret(0, bytes(32))


def test_no_repeats_over_ten_thousand_epochs():
    rec = MasterKeyRecord.from_secret(31337, b"\x42" * 32)
    keys, indices = set(), set()
    for s in keychain.iter_epochs(rec, 0, 10_001):
        enc = group.encode_point(s.P_i)
        keys.add(enc)
        indices.add(s.index)
    assert len(keys) == len(indices) == 10_001
