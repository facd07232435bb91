import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uss_sim import errors, keystore
from uss_sim.keystore import (
    FileIngest, KeyPool, SeededRandom, gf64_mul, poly_hash, provision_keys, secure_recv,
    secure_send,
)
from uss_sim.params import key_budget

from conftest import make_params


def fresh_pool(bits=4096, seed=1):
    g = np.random.default_rng(seed)
    return KeyPool({(0, 1): g.integers(0, 2, bits, dtype=np.uint8)})


def test_gf64_mul_field_laws():
    g = np.random.default_rng(0)
    for _ in range(50):
        a, b, c = (int(v) for v in g.integers(0, 2**63, 3, dtype=np.uint64))
        assert gf64_mul(a, 1) == a
        assert gf64_mul(a, b) == gf64_mul(b, a)
        assert gf64_mul(a, b ^ c) == gf64_mul(a, b) ^ gf64_mul(a, c)
        assert gf64_mul(gf64_mul(a, b), c) == gf64_mul(a, gf64_mul(b, c))
    # x^64 reduces to x^4 + x^3 + x + 1
    assert gf64_mul(1 << 63, 2) == 0b11011


def test_poly_hash_depends_on_seq_and_length():
    bits = np.zeros(64, dtype=np.uint8)
    h = poly_hash(12345, 0, 0, bits)
    assert h != poly_hash(12345, 0, 1, bits)
    assert h != poly_hash(12345, 0, 0, bits[:63])


def test_all_zero_payload_exposes_keystream():
    pool = fresh_pool()
    env = secure_send(pool, 0, 1, np.zeros(100, dtype=np.uint8))
    assert np.array_equal(env.ciphertext, pool.pair_keys[(0, 1)][:100])


def test_identical_payloads_use_disjoint_pads():
    pool = fresh_pool()
    payload = np.ones(128, dtype=np.uint8)
    e1 = secure_send(pool, 0, 1, payload)
    e2 = secure_send(pool, 0, 1, payload)
    assert not np.array_equal(e1.ciphertext, e2.ciphertext)
    assert pool.consumed[(0, 1)] == 2 * (128 + 128)


def test_round_trip_in_order():
    pool = fresh_pool()
    g = np.random.default_rng(3)
    sent = [g.integers(0, 2, 128, dtype=np.uint8) for _ in range(5)]
    envs = [secure_send(pool, 0, 1, s) for s in sent]
    for s, e in zip(sent, envs):
        assert np.array_equal(secure_recv(pool, e), s)


def test_directions_keep_separate_sequences():
    pool = fresh_pool()
    e_ab = secure_send(pool, 0, 1, np.ones(8, dtype=np.uint8))
    e_ba = secure_send(pool, 1, 0, np.zeros(8, dtype=np.uint8))
    assert (e_ab.seq, e_ba.seq) == (0, 0)
    assert secure_recv(pool, e_ba).sum() == 0
    assert secure_recv(pool, e_ab).sum() == 8


def test_replay_rejected():
    pool = fresh_pool()
    e = secure_send(pool, 0, 1, np.ones(16, dtype=np.uint8))
    secure_recv(pool, e)
    with pytest.raises(errors.AuthFailure):
        secure_recv(pool, e)


def test_out_of_order_rejected():
    pool = fresh_pool()
    secure_send(pool, 0, 1, np.ones(16, dtype=np.uint8))
    e2 = secure_send(pool, 0, 1, np.ones(16, dtype=np.uint8))
    with pytest.raises(errors.AuthFailure):
        secure_recv(pool, e2)


@pytest.mark.parametrize("length", [1, 7, 64, 65])
def test_every_single_bit_flip_detected(length):
    base = fresh_pool(seed=length)
    payload = np.random.default_rng(length).integers(0, 2, length, dtype=np.uint8)
    template = base.clone()
    secure_send(template, 0, 1, payload)
    for i in range(length + 64):
        pool = base.clone()
        e = secure_send(pool, 0, 1, payload)
        if i < length:
            e.ciphertext = e.ciphertext.copy()
            e.ciphertext[i] ^= 1
        else:
            e.tag ^= 1 << (i - length)
        with pytest.raises(errors.AuthFailure):
            secure_recv(pool, e)


def test_truncated_ciphertext_rejected():
    pool = fresh_pool()
    e = secure_send(pool, 0, 1, np.ones(32, dtype=np.uint8))
    e.ciphertext = e.ciphertext[:-1]
    with pytest.raises(errors.AuthFailure):
        secure_recv(pool, e)


def test_exhaustion():
    pool = fresh_pool(bits=200)
    secure_send(pool, 0, 1, np.ones(72, dtype=np.uint8))
    with pytest.raises(errors.KeyExhaustedError):
        secure_send(pool, 0, 1, np.ones(1, dtype=np.uint8))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 300), min_size=1, max_size=6))
def test_ledger_is_monotone_and_exact(lengths):
    pool = fresh_pool(bits=sum(lengths) + 128 * len(lengths))
    prev = 0
    for k in lengths:
        secure_send(pool, 0, 1, np.ones(k, dtype=np.uint8))
        assert pool.consumed[(0, 1)] == prev + k + 128
        prev = pool.consumed[(0, 1)]
    assert pool.available(0, 1) == 0


def test_seeded_provisioning_is_deterministic():
    p = make_params(N=4, n=16, M=2, d_f=0, l_max=0, s={-1: "0.45", 0: "0.35"})
    a = provision_keys(p, SeededRandom(7))
    b = provision_keys(p, SeededRandom(7))
    assert a.pair_keys.keys() == b.pair_keys.keys()
    assert all(np.array_equal(a.pair_keys[k], b.pair_keys[k]) for k in a.pair_keys)
    c = provision_keys(p, SeededRandom(8))
    assert not np.array_equal(a.pair_keys[(0, 1)], c.pair_keys[(0, 1)])


def test_link_requirements_cover_budget():
    p = make_params(N=2, n=4, M=1, d_f=0, l_max=0, s={-1: "0.45", 0: "0.35"})
    req = keystore.link_requirements(p)
    budget = key_budget(p)
    for (a, b), bits in req.items():
        payload = budget.signer_link_bits if a == 0 else budget.peer_link_bits
        assert bits >= payload
    assert req[(0, 1)] >= 4 and req[(0, 2)] >= 4
    assert set(req) == {(0, 1), (0, 2), (1, 2)}


def test_key_file_round_trip(tmp_path):
    bits = np.random.default_rng(0).integers(0, 2, 77, dtype=np.uint8)
    keystore.write_key_file(tmp_path / "k.key", 2, 1, bits)
    link, back = keystore.read_key_file(tmp_path / "k.key")
    assert link == (1, 2)
    assert np.array_equal(back, bits)


@pytest.mark.parametrize("mutate", ["magic", "version", "self", "truncate"])
def test_key_file_format_errors(tmp_path, mutate):
    path = tmp_path / "k.key"
    keystore.write_key_file(path, 0, 1, np.ones(40, dtype=np.uint8))
    raw = bytearray(path.read_bytes())
    if mutate == "magic":
        raw[0:4] = b"XXXX"
    elif mutate == "version":
        raw[4] = 9
    elif mutate == "self":
        raw[8] = raw[6]
    else:
        raw = raw[:-1]
    path.write_bytes(bytes(raw))
    with pytest.raises(errors.KeyFileFormatError):
        keystore.read_key_file(path)


def test_file_ingest_matches_exported_pool(tmp_path):
    p = make_params(N=4, n=16, M=2, d_f=0, l_max=0, s={-1: "0.45", 0: "0.35"})
    pool = provision_keys(p, SeededRandom(3))
    keystore.export_pool(pool, tmp_path)
    again = provision_keys(p, FileIngest(tmp_path))
    for k, bits in pool.pair_keys.items():
        assert np.array_equal(again.pair_keys[k][:len(bits)], bits)


def test_short_signer_file_rejected(tmp_path):
    p = make_params(N=4, n=16, M=2, d_f=0, l_max=0, s={-1: "0.45", 0: "0.35"})
    pool = provision_keys(p, SeededRandom(3))
    keystore.export_pool(pool, tmp_path)
    need = keystore.link_requirements(p)[(0, 1)]
    keystore.write_key_file(tmp_path / "0_1.key", 0, 1, np.ones(need - 1, dtype=np.uint8))
    with pytest.raises(errors.InsufficientKeyFileError):
        provision_keys(p, FileIngest(tmp_path))


def test_payload_only_budget_error_reports_short_link(tmp_path):
    # 31 payload bits where the signer link needs 32 (plus tags) cannot pass
    p = make_params(N=4, n=16, M=2, d_f=0, l_max=0, s={-1: "0.45", 0: "0.35"})
    assert key_budget(p).signer_link_bits == 32
    pool = provision_keys(p, SeededRandom(3))
    keystore.export_pool(pool, tmp_path)
    keystore.write_key_file(tmp_path / "0_1.key", 0, 1, np.ones(31, dtype=np.uint8))
    with pytest.raises(errors.InsufficientKeyFileError, match=r"\(0, 1\)|0_1|0-1|0 and 1|link"):
        provision_keys(p, FileIngest(tmp_path))


def test_missing_link_file(tmp_path):
    p = make_params(N=2, n=4, M=1, d_f=0, l_max=0, s={-1: "0.45", 0: "0.35"})
    with pytest.raises(errors.InsufficientKeyFileError):
        provision_keys(p, FileIngest(tmp_path))


def test_keydir_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv(keystore.KEYDIR_ENV, str(tmp_path))
    assert FileIngest.from_env().directory == tmp_path
