"""Exact encryption of small integer vectors (BFV, coefficient encoding).

Only encryption and decryption are provided; values occupy polynomial
coefficients, so a vector can hold up to N entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hefed.errors import EncodingError, NoiseBudgetExhausted, ParamsError, ParamsMismatchError
from hefed.he import _kernels as K
from hefed.he import instrument
from hefed.he.keys import PublicKey, SecretKey, _frozen, make_rng, sample_error, sample_ternary, small_to_ntt
from hefed.he.params import HeParams, Scheme, get_context


@dataclass(frozen=True, eq=False)
class BfvCiphertext:
    parts: np.ndarray  # (2, moduli, N) uint64, NTT form
    params_id: bytes
    level: int = 0
    scale: float = 0.0

    def __eq__(self, other):
        if not isinstance(other, BfvCiphertext):
            return NotImplemented
        return self.params_id == other.params_id and bool(np.array_equal(self.parts, other.parts))

    __hash__ = None


def _ctx_for(params: HeParams, params_id: bytes):
    if params.scheme != Scheme.BFV:
        raise ParamsError("BFV operation on non-BFV parameters")
    if params_id != params.digest:
        raise ParamsMismatchError("object does not belong to these parameters")
    return get_context(params)


def bfv_encrypt(pk: PublicKey, params: HeParams, values, rng=None, seed=None) -> BfvCiphertext:
    ctx = _ctx_for(params, pk.params_id)
    t = params.plain_modulus
    v = np.asarray(values, dtype=np.int64).ravel()
    if v.size > ctx.n:
        raise EncodingError(f"vector of length {v.size} exceeds ring degree {ctx.n}")
    bad = np.nonzero((v < 0) | (v >= t))[0]
    if bad.size:
        raise EncodingError(f"value {int(v[bad[0]])} at index {int(bad[0])} outside [0, {t})")
    rng = rng if rng is not None else make_rng(seed)
    tab = ctx.full
    m = np.zeros(ctx.n, dtype=np.int64)
    m[: v.size] = v
    delta = math.prod(params.coeff_modulus) // t
    delta_res = np.array([delta % q for q in tab.moduli], dtype=np.uint64)
    dm = K.mul_scalar(K.from_signed(m, tab.q), delta_res, tab.q, tab.r0, tab.r1)
    K.ntt_forward(dm, tab.q, tab.psi, tab.psip)
    u = small_to_ntt(sample_ternary(rng, ctx.n), tab)
    e0 = small_to_ntt(sample_error(rng, ctx.n), tab)
    e1 = small_to_ntt(sample_error(rng, ctx.n), tab)
    c0 = K.add(K.add(K.mul(pk.data[0], u, tab.q, tab.r0, tab.r1), e0, tab.q), dm, tab.q)
    c1 = K.add(K.mul(pk.data[1], u, tab.q, tab.r0, tab.r1), e1, tab.q)
    return BfvCiphertext(_frozen(np.stack([c0, c1])), params.digest)


def _phase(params: HeParams, sk: SecretKey, ct: BfvCiphertext) -> list[int]:
    """Centered integer coefficients of c0 + c1*s mod Q."""
    ctx = get_context(params)
    tab = ctx.full
    acc = ct.parts[0].copy()
    K.mul_acc(acc, ct.parts[1], sk.s, tab.q, tab.r0, tab.r1)
    K.ntt_inverse(acc, tab.q, tab.ipsi, tab.ipsip, tab.ninv, tab.ninvp)
    big_q = math.prod(tab.moduli)
    x = np.zeros(ctx.n, dtype=object)
    for r, q in enumerate(tab.moduli):
        basis = (big_q // q) * pow(big_q // q, -1, q)
        x = x + acc[r].astype(object) * basis
    x = x % big_q
    half = big_q // 2
    return [int(c) - big_q if c > half else int(c) for c in x]


def _decode_phase(params: HeParams, phase: list[int]):
    t = params.plain_modulus
    big_q = math.prod(params.coeff_modulus)
    msg = []
    worst = 0
    for x in phase:
        num = t * x
        m = (2 * num + big_q) // (2 * big_q)  # round(t*x/Q)
        worst = max(worst, abs(num - m * big_q))
        msg.append(m % t)
    return msg, worst


def noise_budget(params: HeParams, sk: SecretKey, ct: BfvCiphertext) -> int:
    """Remaining invariant-noise budget in bits; 0 means decryption is unreliable."""
    _ctx_for(params, sk.params_id)
    _, worst = _decode_phase(params, _phase(params, sk, ct))
    return _budget_bits(params, worst)


def _budget_bits(params: HeParams, worst: int) -> int:
    # worst is max |t*x - m*Q|, i.e. Q times the invariant noise; rounding keeps it <= Q/2
    big_q = math.prod(params.coeff_modulus)
    if worst == 0:
        return big_q.bit_length()
    return max(0, int(math.floor(math.log2(big_q) - math.log2(worst) - 1)))


def bfv_decrypt(sk: SecretKey, params: HeParams, ct: BfvCiphertext, width: int | None = None) -> list[int]:
    """Exact decryption of the first ``width`` coefficients."""
    instrument.bump("decrypt")
    _ctx_for(params, sk.params_id)
    if ct.params_id != sk.params_id:
        raise ParamsMismatchError("ciphertext and secret key parameters differ")
    msg, worst = _decode_phase(params, _phase(params, sk, ct))
    if _budget_bits(params, worst) == 0:
        raise NoiseBudgetExhausted("BFV noise budget exhausted; plaintext unrecoverable")
    return msg if width is None else msg[:width]
