"""Approximate arithmetic over encrypted real vectors (CKKS).

Ciphertext parts are kept in NTT form over moduli ``0..level``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hefed.errors import (
    EncodingError,
    LevelError,
    MissingKeyError,
    NoiseBudgetExhausted,
    ParamsError,
    ParamsMismatchError,
)
from hefed.he import _kernels as K
from hefed.he import instrument
from hefed.he.keys import (
    GaloisKeys,
    KeySwitchKey,
    PublicKey,
    SecretKey,
    _frozen,
    key_switch,
    make_rng,
    mod_down,
    sample_error,
    sample_ternary,
    small_to_ntt,
)
from hefed.he.params import HeParams, Scheme, get_context

# decryption refuses values whose scaled magnitude leaves less headroom than this
_HEADROOM_BITS = 2


@dataclass(frozen=True, eq=False)
class CkksCiphertext:
    parts: np.ndarray  # (2 or 3, level + 1, N) uint64
    level: int
    scale: float
    params_id: bytes

    def __eq__(self, other):
        if not isinstance(other, CkksCiphertext):
            return NotImplemented
        return (
            self.level == other.level
            and self.scale == other.scale
            and self.params_id == other.params_id
            and self.parts.shape == other.parts.shape
            and bool(np.array_equal(self.parts, other.parts))
        )

    __hash__ = None

    @property
    def size(self) -> int:
        return self.parts.shape[0]


def _ctx_for(params: HeParams, params_id: bytes):
    if params.scheme != Scheme.CKKS:
        raise ParamsError("CKKS operation on non-CKKS parameters")
    if params_id != params.digest:
        raise ParamsMismatchError("object does not belong to these parameters")
    return get_context(params)


def encode(params: HeParams, values, scale: float) -> np.ndarray:
    """Map up to N/2 real values to signed integer coefficients (object dtype if large)."""
    ctx = get_context(params)
    z = np.zeros(params.slot_count, dtype=np.complex128)
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size > params.slot_count:
        raise EncodingError(f"vector of length {v.size} exceeds {params.slot_count} slots")
    if not np.all(np.isfinite(v)):
        raise EncodingError("vector contains non-finite values")
    z[: v.size] = v
    full = np.zeros(ctx.n, dtype=np.complex128)
    full[ctx.slot_index] = z
    full[ctx.conj_index] = np.conj(z)
    coeffs = np.real(np.fft.fft(full) / ctx.n * np.conj(ctx.psi_pows)) * scale
    coeffs = np.rint(coeffs)
    if np.max(np.abs(coeffs), initial=0.0) < 2.0**62:
        return coeffs.astype(np.int64)
    return np.array([int(c) for c in coeffs], dtype=object)


def decode(params: HeParams, coeffs: np.ndarray, scale: float) -> np.ndarray:
    ctx = get_context(params)
    vals = ctx.n * np.fft.ifft(coeffs * ctx.psi_pows)
    return np.real(vals[ctx.slot_index]) / scale


def _to_rns(coeffs: np.ndarray, tables) -> np.ndarray:
    if coeffs.dtype == np.int64:
        return K.from_signed(coeffs, tables.q)
    out = np.empty((len(tables.moduli), coeffs.size), dtype=np.uint64)
    for r, q in enumerate(tables.moduli):
        out[r] = [int(c) % q for c in coeffs]
    return out


def ckks_encrypt(pk: PublicKey, params: HeParams, values, scale: float | None = None, rng=None, seed=None) -> CkksCiphertext:
    """Encrypt a real vector at the top level; unused slots hold zero."""
    ctx = _ctx_for(params, pk.params_id)
    scale = params.scale if scale is None else scale
    if scale != params.scale:
        raise ParamsError(f"scale {scale} does not match parameter scale {params.scale}")
    rng = rng if rng is not None else make_rng(seed)
    level = params.max_level
    dt = ctx.tables(range(level + 1))
    m = _to_rns(encode(params, values, scale), dt)
    K.ntt_forward(m, dt.q, dt.psi, dt.psip)
    u = small_to_ntt(sample_ternary(rng, ctx.n), dt)
    e0 = small_to_ntt(sample_error(rng, ctx.n), dt)
    e1 = small_to_ntt(sample_error(rng, ctx.n), dt)
    c0 = K.add(K.add(K.mul(pk.data[0], u, dt.q, dt.r0, dt.r1), e0, dt.q), m, dt.q)
    c1 = K.add(K.mul(pk.data[1], u, dt.q, dt.r0, dt.r1), e1, dt.q)
    return CkksCiphertext(_frozen(np.stack([c0, c1])), level, float(scale), params.digest)


def _dot_secret(ctx, ct, sk: SecretKey) -> np.ndarray:
    dt = ctx.tables(range(ct.level + 1))
    s = np.ascontiguousarray(sk.s[: ct.level + 1])
    acc = ct.parts[0].copy()
    s_pow = s
    for i in range(1, ct.size):
        K.mul_acc(acc, ct.parts[i], s_pow, dt.q, dt.r0, dt.r1)
        if i + 1 < ct.size:
            s_pow = K.mul(s_pow, s, dt.q, dt.r0, dt.r1)
    K.ntt_inverse(acc, dt.q, dt.ipsi, dt.ipsip, dt.ninv, dt.ninvp)
    return acc


def ckks_decrypt(sk: SecretKey, params: HeParams, ct: CkksCiphertext, width: int | None = None) -> np.ndarray:
    """Decrypt and return the first ``width`` slots (all slots by default)."""
    instrument.bump("decrypt")
    ctx = _ctx_for(params, sk.params_id)
    if ct.params_id != sk.params_id:
        raise ParamsMismatchError("ciphertext and secret key parameters differ")
    moduli = params.data_moduli[: ct.level + 1]
    log_q = sum(math.log2(q) for q in moduli)
    if math.log2(ct.scale) >= log_q - _HEADROOM_BITS:
        raise NoiseBudgetExhausted(
            f"scale 2^{math.log2(ct.scale):.1f} leaves no headroom at level {ct.level}"
        )
    coeffs_rns = _dot_secret(ctx, ct, sk)
    dt = ctx.tables(range(ct.level + 1))
    inv_table = np.zeros((ct.level + 1, ct.level + 1), dtype=np.uint64)
    for i, qi in enumerate(moduli):
        for j in range(i):
            inv_table[i, j] = pow(moduli[j], -1, qi)
    coeffs = K.garner_to_float(coeffs_rns, dt.q, inv_table, dt.r0, dt.r1)
    out = decode(params, coeffs, ct.scale)
    return out if width is None else out[:width]


def _drop_to(ct: CkksCiphertext, level: int) -> CkksCiphertext:
    if level == ct.level:
        return ct
    return CkksCiphertext(_frozen(np.ascontiguousarray(ct.parts[:, : level + 1])), level, ct.scale, ct.params_id)


def _align(params, a: CkksCiphertext, b: CkksCiphertext):
    ctx = _ctx_for(params, a.params_id)
    if b.params_id != a.params_id:
        raise ParamsMismatchError("ciphertexts were produced under different parameters")
    level = min(a.level, b.level)
    a, b = _drop_to(a, level), _drop_to(b, level)
    if not math.isclose(a.scale, b.scale, rel_tol=1e-9):
        raise ParamsMismatchError(f"scale mismatch: {a.scale} vs {b.scale}")
    return ctx, a, b


def ckks_add(params: HeParams, a: CkksCiphertext, b: CkksCiphertext) -> CkksCiphertext:
    ctx, a, b = _align(params, a, b)
    dt = ctx.tables(range(a.level + 1))
    size = max(a.size, b.size)
    parts = []
    for i in range(size):
        if i < a.size and i < b.size:
            parts.append(K.add(a.parts[i], b.parts[i], dt.q))
        else:
            parts.append((a if i < a.size else b).parts[i].copy())
    return CkksCiphertext(_frozen(np.stack(parts)), a.level, a.scale, a.params_id)


def ckks_relinearize(params: HeParams, ct: CkksCiphertext, relin: KeySwitchKey) -> CkksCiphertext:
    if ct.size == 2:
        return ct
    ctx = _ctx_for(params, ct.params_id)
    if relin is None:
        raise MissingKeyError("relinearization key not available")
    if relin.params_id != ct.params_id:
        raise ParamsMismatchError("relinearization key parameters differ")
    dt = ctx.tables(range(ct.level + 1))
    d0, d1 = key_switch(ctx, ct.parts[2], relin, ct.level)
    c0 = K.add(ct.parts[0], d0, dt.q)
    c1 = K.add(ct.parts[1], d1, dt.q)
    return CkksCiphertext(_frozen(np.stack([c0, c1])), ct.level, ct.scale, ct.params_id)


def ckks_rescale(params: HeParams, ct: CkksCiphertext) -> CkksCiphertext:
    """Divide by the top prime of the current level, consuming one level."""
    ctx = _ctx_for(params, ct.params_id)
    if ct.level == 0:
        raise LevelError("cannot rescale at level 0")
    q_last = params.data_moduli[ct.level]
    dt = ctx.tables(range(ct.level))
    parts = [mod_down(ctx, ct.parts[i], q_last, dt) for i in range(ct.size)]
    return CkksCiphertext(_frozen(np.stack(parts)), ct.level - 1, ct.scale / q_last, ct.params_id)


def ckks_multiply(
    params: HeParams,
    a: CkksCiphertext,
    b: CkksCiphertext,
    relin: KeySwitchKey | None = None,
    rescale: bool = True,
) -> CkksCiphertext:
    """Slot-wise product; relinearized when a key is given, then optionally rescaled."""
    ctx, a, b = _align(params, a, b)
    if a.level < 1:
        raise LevelError("multiplication needs level >= 1")
    if a.size != 2 or b.size != 2:
        raise ValueError("multiply expects relinearized operands")
    dt = ctx.tables(range(a.level + 1))
    q, r0, r1 = dt.q, dt.r0, dt.r1
    a0, a1 = a.parts
    b0, b1 = b.parts
    d0 = K.mul(a0, b0, q, r0, r1)
    d1 = K.mul(a0, b1, q, r0, r1)
    K.mul_acc(d1, a1, b0, q, r0, r1)
    d2 = K.mul(a1, b1, q, r0, r1)
    out = CkksCiphertext(_frozen(np.stack([d0, d1, d2])), a.level, a.scale * b.scale, a.params_id)
    if relin is not None:
        out = ckks_relinearize(params, out, relin)
    if rescale:
        out = ckks_rescale(params, out)
    return out


def _rotate_once(params, ctx, ct: CkksCiphertext, g: int, key: KeySwitchKey) -> CkksCiphertext:
    perm = ctx.galois_permutation(g)
    c0 = np.ascontiguousarray(ct.parts[0][:, perm])
    c1 = np.ascontiguousarray(ct.parts[1][:, perm])
    dt = ctx.tables(range(ct.level + 1))
    d0, d1 = key_switch(ctx, c1, key, ct.level)
    return CkksCiphertext(_frozen(np.stack([K.add(c0, d0, dt.q), d1])), ct.level, ct.scale, ct.params_id)


def ckks_rotate(params: HeParams, ct: CkksCiphertext, steps: int, galois: GaloisKeys) -> CkksCiphertext:
    """Cyclic left rotation: output slot i holds input slot (i + steps) mod slots."""
    ctx = _ctx_for(params, ct.params_id)
    if ct.size != 2:
        raise ValueError("rotation expects a relinearized ciphertext")
    slots = params.slot_count
    steps %= slots
    if steps == 0:
        return ct
    if galois is None:
        raise MissingKeyError("no Galois keys supplied")
    if galois.params_id != ct.params_id:
        raise ParamsMismatchError("Galois key parameters differ")
    g = ctx.galois_element(steps)
    if g in galois.keys:
        return _rotate_once(params, ctx, ct, g, galois.keys[g])
    bit = 0
    while steps:
        if steps & 1:
            gb = ctx.galois_element(1 << bit)
            if gb not in galois.keys:
                raise MissingKeyError(f"missing rotation key for step {1 << bit}")
            ct = _rotate_once(params, ctx, ct, gb, galois.keys[gb])
        steps >>= 1
        bit += 1
    return ct


def ckks_slot_sum(params: HeParams, ct: CkksCiphertext, width: int, galois: GaloisKeys) -> CkksCiphertext:
    """Slot 0 of the result holds the sum of the first ``width`` input slots."""
    if width < 1 or width > params.slot_count:
        raise ValueError(f"width {width} outside 1..{params.slot_count}")
    span = 1
    while span < width:
        ct = ckks_add(params, ct, ckks_rotate(params, ct, span, galois))
        span <<= 1
    return ct
