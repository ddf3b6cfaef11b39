import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hefed import he
from hefed.errors import LevelError, MissingKeyError, NoiseBudgetExhausted, ParamsError, ParamsMismatchError
from hefed.he import ckks, instrument
from hefed.he.params import VOCAB_WIDTH

vectors = st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=128)
binary72 = st.lists(st.integers(0, 1), min_size=VOCAB_WIDTH, max_size=VOCAB_WIDTH)


def enc(bundle, values, seed=None):
    return he.ckks_encrypt(bundle.public_key, bundle.params, values, seed=seed)


def dec(bundle, ct, width):
    return he.ckks_decrypt(bundle.secret_key, bundle.params, ct, width)


def test_encode_decode_without_encryption(small_ckks):
    p = small_ckks.params
    v = np.linspace(-3, 3, p.slot_count)
    got = ckks.decode(p, ckks.encode(p, v, p.scale).astype(float), p.scale)
    assert np.max(np.abs(got - v)) < 1e-9


@settings(max_examples=50, deadline=None)
@given(vectors)
def test_roundtrip(small_ckks, v):
    got = dec(small_ckks, enc(small_ckks, v), len(v))
    assert np.max(np.abs(got - np.array(v))) < 1e-5


def test_unused_slots_are_zero(small_ckks):
    got = dec(small_ckks, enc(small_ckks, [5.0, 6.0]), None)
    assert got.shape == (small_ckks.params.slot_count,)
    assert np.max(np.abs(got[2:])) < 1e-6


def test_probabilistic_and_seeded(small_ckks):
    a, b = enc(small_ckks, [1.0]), enc(small_ckks, [1.0])
    assert a != b
    s = bytes(32)
    assert enc(small_ckks, [1.0], seed=s) == enc(small_ckks, [1.0], seed=s)


@settings(max_examples=30, deadline=None)
@given(vectors, vectors)
def test_add(small_ckks, u, v):
    w = max(len(u), len(v))
    pu, pv = np.zeros(w), np.zeros(w)
    pu[: len(u)], pv[: len(v)] = u, v
    got = dec(small_ckks, he.ckks_add(small_ckks.params, enc(small_ckks, u), enc(small_ckks, v)), w)
    assert np.max(np.abs(got - (pu + pv))) < 1e-5


@settings(max_examples=30, deadline=None)
@given(vectors)
def test_multiply_rescales_one_level(small_ckks, v):
    p = small_ckks.params
    a = enc(small_ckks, v)
    prod = he.ckks_multiply(p, a, a, small_ckks.relin_key)
    assert prod.level == a.level - 1 and prod.size == 2
    got = dec(small_ckks, prod, len(v))
    assert np.max(np.abs(got - np.square(v))) < 1e-2


def test_multiply_without_relin_keeps_three_parts(small_ckks):
    p = small_ckks.params
    a = enc(small_ckks, [2.0, 3.0])
    prod = he.ckks_multiply(p, a, a, None, rescale=False)
    assert prod.size == 3 and prod.level == a.level
    assert np.allclose(dec(small_ckks, prod, 2), [4.0, 9.0], atol=1e-3)
    relin = he.ckks_relinearize(p, prod, small_ckks.relin_key)
    assert np.allclose(dec(small_ckks, he.ckks_rescale(p, relin), 2), [4.0, 9.0], atol=1e-3)


def test_add_aligns_levels(small_ckks):
    p = small_ckks.params
    low = ckks._drop_to(enc(small_ckks, [1.0, 2.0]), 1)
    total = he.ckks_add(p, low, enc(small_ckks, [3.0, 4.0]))
    assert total.level == 1
    assert np.allclose(dec(small_ckks, total, 2), [4.0, 6.0], atol=1e-5)


def test_add_rejects_scale_mismatch(small_ckks):
    p = small_ckks.params
    a = enc(small_ckks, [1.0])
    with pytest.raises(ParamsMismatchError, match="scale"):
        he.ckks_add(p, a, he.ckks_multiply(p, a, a, small_ckks.relin_key))


@pytest.mark.parametrize("steps", [0, 1, 2, 3, 5, 17, 64, 127, -1])
def test_rotate(small_ckks, steps):
    p = small_ckks.params
    v = np.arange(p.slot_count, dtype=float)
    got = dec(small_ckks, he.ckks_rotate(p, enc(small_ckks, v), steps, small_ckks.galois_keys), None)
    assert np.max(np.abs(got - np.roll(v, -steps))) < 1e-3


def test_rotate_missing_key(small_ckks):
    p = small_ckks.params
    empty = he.GaloisKeys(p.digest, {})
    with pytest.raises(MissingKeyError):
        he.ckks_rotate(p, enc(small_ckks, [1.0]), 1, empty)


@pytest.mark.parametrize("width", [1, 2, 5, 72, 128])
def test_slot_sum(small_ckks, width):
    p = small_ckks.params
    rng = np.random.default_rng(width)
    v = rng.uniform(-1, 1, width)
    got = dec(small_ckks, he.ckks_slot_sum(p, enc(small_ckks, v), width, small_ckks.galois_keys), 1)
    assert abs(got[0] - v.sum()) < 1e-4


@settings(max_examples=40, deadline=None)
@given(binary72, binary72)
def test_encrypted_dot_matches_plaintext(small_ckks, u, v):
    p = small_ckks.params
    ct = he.encrypted_dot(p, enc(small_ckks, u), enc(small_ckks, v), small_ckks, VOCAB_WIDTH)
    assert abs(dec(small_ckks, ct, 1)[0] - float(np.dot(u, v))) < 1e-2


def test_level_exhaustion(small_ckks):
    p = small_ckks.params
    ct = enc(small_ckks, [1.0])
    for _ in range(p.max_level):
        ct = he.ckks_multiply(p, ct, ct, small_ckks.relin_key)
    assert ct.level == 0
    with pytest.raises(LevelError):
        he.ckks_multiply(p, ct, ct, small_ckks.relin_key)
    with pytest.raises(LevelError):
        he.ckks_rescale(p, ct)


def test_scale_overflow_detected(small_ckks):
    p = small_ckks.params
    a = enc(small_ckks, [1.0])
    sq = he.ckks_multiply(p, a, a, small_ckks.relin_key, rescale=False)
    quad = he.ckks_multiply(p, sq, sq, small_ckks.relin_key, rescale=False)
    with pytest.raises(NoiseBudgetExhausted):
        dec(small_ckks, quad, 1)


def test_wrong_scale_rejected(small_ckks):
    with pytest.raises(ParamsError):
        he.ckks_encrypt(small_ckks.public_key, small_ckks.params, [1.0], scale=2.0**30)


def test_cross_params_rejected(small_ckks, default_ckks):
    a = enc(small_ckks, [1.0])
    with pytest.raises(ParamsMismatchError):
        he.ckks_decrypt(default_ckks.secret_key, default_ckks.params, a, 1)
    forged = dataclasses.replace(a, params_id=default_ckks.params.digest)
    with pytest.raises(ParamsMismatchError):
        he.ckks_add(small_ckks.params, a, forged)


def test_decrypt_is_counted(small_ckks):
    before = instrument.snapshot().get("decrypt", 0)
    dec(small_ckks, enc(small_ckks, [1.0]), 1)
    assert instrument.snapshot()["decrypt"] == before + 1


def test_seeded_keygen_is_deterministic():
    p = he.gen_params("test_small")
    a, b = he.keygen(p, b"\x05" * 32), he.keygen(p, b"\x05" * 32)
    assert he.public_frames(a) == he.public_frames(b)
    assert he.secret_frame(a) == he.secret_frame(b)
    assert he.secret_frame(he.keygen(p, b"\x06" * 32)) != he.secret_frame(a)


def test_default_params_dot_product(default_ckks):
    p = default_ckks.params
    u = np.zeros(VOCAB_WIDTH)
    v = np.zeros(VOCAB_WIDTH)
    u[0] = v[0] = 1
    v[5] = 1
    ct = he.encrypted_dot(p, enc(default_ckks, u), enc(default_ckks, v), default_ckks, VOCAB_WIDTH)
    assert abs(dec(default_ckks, ct, 1)[0] - 1.0) < 1e-3
    zero = he.encrypted_dot(p, enc(default_ckks, u), enc(default_ckks, np.roll(u, 3)), default_ckks, VOCAB_WIDTH)
    assert abs(dec(default_ckks, zero, 1)[0]) < 1e-3
