"""Key material, key generation and key switching."""

from __future__ import annotations

import secrets
from dataclasses import dataclass, field

import numpy as np

from hefed.errors import MissingKeyError, ParamsMismatchError
from hefed.he import _kernels as K
from hefed.he import instrument
from hefed.he.params import Context, HeParams, Scheme, get_context

ERROR_STDDEV = 3.2
ERROR_BOUND = 19


def make_rng(seed: bytes | None = None) -> np.random.Generator:
    if seed is None:
        return np.random.default_rng(secrets.randbits(256))
    if len(seed) != 32:
        raise ValueError("rng seed must be 32 bytes")
    return np.random.default_rng(int.from_bytes(seed, "little"))


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def sample_ternary(rng, n: int) -> np.ndarray:
    return rng.integers(-1, 2, size=n, dtype=np.int64)


def sample_error(rng, n: int) -> np.ndarray:
    e = np.rint(rng.normal(0.0, ERROR_STDDEV, size=n))
    return np.clip(e, -ERROR_BOUND, ERROR_BOUND).astype(np.int64)


def sample_uniform(rng, tables) -> np.ndarray:
    out = np.empty((len(tables.moduli), tables.psi.shape[1]), dtype=np.uint64)
    for r, q in enumerate(tables.moduli):
        out[r] = rng.integers(0, q, size=out.shape[1], dtype=np.uint64)
    return out


def small_to_ntt(x: np.ndarray, tables) -> np.ndarray:
    out = K.from_signed(x, tables.q)
    K.ntt_forward(out, tables.q, tables.psi, tables.psip)
    return out


@dataclass(frozen=True, eq=False)
class SecretKey:
    params_id: bytes
    s: np.ndarray  # NTT form over the full modulus chain


@dataclass(frozen=True, eq=False)
class PublicKey:
    params_id: bytes
    data: np.ndarray  # (2, data moduli, N): (-a*s + e, a)


@dataclass(frozen=True, eq=False)
class KeySwitchKey:
    """One (b_j, a_j) pair per RNS digit, over data moduli plus the special prime."""

    params_id: bytes
    data: np.ndarray  # (digits, 2, K, N)
    _by_level: dict = field(default_factory=dict, repr=False, compare=False)

    def at_level(self, level: int, ctx: Context):
        """Key rows for moduli 0..level plus the special prime, with Shoup companions."""
        cached = self._by_level.get(level)
        if cached is None:
            rows = list(range(level + 1)) + [len(ctx.full.moduli) - 1]
            t = ctx.tables(rows)
            data = np.ascontiguousarray(self.data[: level + 1][:, :, rows])
            comp = np.empty_like(data)
            for j in range(data.shape[0]):
                for part in range(2):
                    comp[j, part] = K.shoup_companion(data[j, part], t.q, t.r0, t.r1, t.c64, t.qinv)
            cached = (data, comp)
            self._by_level[level] = cached
        return cached


@dataclass(frozen=True, eq=False)
class GaloisKeys:
    params_id: bytes
    keys: dict  # galois element -> KeySwitchKey

    @property
    def elements(self) -> list[int]:
        return sorted(self.keys)


@dataclass(frozen=True, eq=False)
class KeyBundle:
    params: HeParams
    public_key: PublicKey
    secret_key: SecretKey | None = None
    relin_key: KeySwitchKey | None = None
    galois_keys: GaloisKeys | None = None

    @property
    def params_id(self) -> bytes:
        return self.params.digest

    def public_only(self) -> "KeyBundle":
        return KeyBundle(self.params, self.public_key, None, self.relin_key, self.galois_keys)


def check_params(params_id: bytes, *objs) -> None:
    for o in objs:
        if o is not None and o.params_id != params_id:
            raise ParamsMismatchError("operands were produced under different parameters")


def _gen_switch_key(ctx: Context, rng, s: np.ndarray, s_new: np.ndarray) -> KeySwitchKey:
    """Key that switches a component decrypting under ``s_new`` to ``s``."""
    params = ctx.params
    full = ctx.full
    n_data = len(params.data_moduli)
    special = params.coeff_modulus[-1]
    digits = np.empty((n_data, 2, len(full.moduli), ctx.n), dtype=np.uint64)
    for j in range(n_data):
        a = sample_uniform(rng, full)
        e = small_to_ntt(sample_error(rng, ctx.n), full)
        b = K.sub(e, K.mul(a, s, full.q, full.r0, full.r1), full.q)
        qj = full.moduli[j]
        gadget = np.array([special % qj], dtype=np.uint64)
        row = K.mul_scalar(s_new[j : j + 1], gadget, full.q[j : j + 1], full.r0[j : j + 1], full.r1[j : j + 1])
        b[j] = K.add(b[j : j + 1], row, full.q[j : j + 1])[0]
        digits[j, 0] = b
        digits[j, 1] = a
    return KeySwitchKey(params.digest, _frozen(digits))


def power_of_two_steps(slots: int) -> list[int]:
    return [1 << i for i in range(slots.bit_length() - 1)]


def keygen(params: HeParams, rng_seed: bytes | None = None) -> KeyBundle:
    """Generate a complete key bundle; a fixed seed makes it bit-reproducible."""
    ctx = get_context(params)
    rng = make_rng(rng_seed)
    full = ctx.full
    s_small = sample_ternary(rng, ctx.n)
    s = small_to_ntt(s_small, full)
    data_rows = list(range(len(params.data_moduli)))
    dt = ctx.tables(data_rows)
    a = sample_uniform(rng, dt)
    e = small_to_ntt(sample_error(rng, ctx.n), dt)
    b = K.sub(e, K.mul(a, s[data_rows], dt.q, dt.r0, dt.r1), dt.q)
    pk = PublicKey(params.digest, _frozen(np.stack([b, a])))
    sk = SecretKey(params.digest, _frozen(s))
    if params.scheme == Scheme.BFV:
        return KeyBundle(params, pk, sk)
    s2 = K.mul(s, s, full.q, full.r0, full.r1)
    relin = _gen_switch_key(ctx, rng, s, s2)
    gal = {}
    for step in power_of_two_steps(params.slot_count):
        g = ctx.galois_element(step)
        perm = ctx.galois_permutation(g)
        gal[g] = _gen_switch_key(ctx, rng, s, np.ascontiguousarray(s[:, perm]))
    return KeyBundle(params, pk, sk, relin, GaloisKeys(params.digest, gal))


def key_switch(ctx: Context, c: np.ndarray, key: KeySwitchKey, level: int) -> tuple[np.ndarray, np.ndarray]:
    """Re-express a component ``c`` (NTT form, moduli 0..level) under the base secret.

    Returns the pair (delta0, delta1) to add onto the ciphertext parts.
    """
    if key is None:
        raise MissingKeyError("key-switching key not available")
    n_mod = len(ctx.params.coeff_modulus)
    sp = n_mod - 1
    data_rows = list(range(level + 1))
    target = data_rows + [sp]
    tt = ctx.tables(target)
    dt = ctx.tables(data_rows)
    kdata, kcomp = key.at_level(level, ctx)

    coeffs = c.copy()
    K.ntt_inverse(coeffs, dt.q, dt.ipsi, dt.ipsip, dt.ninv, dt.ninvp)

    acc0 = np.zeros((len(target), ctx.n), dtype=np.uint64)
    acc1 = np.zeros_like(acc0)
    lifted = np.empty_like(acc0)
    for j in data_rows:
        others = [r for r in range(len(target)) if r != j]
        ot = ctx.tables([target[r] for r in others])
        x = K.lift_row_unsigned(coeffs[j], ot.q, ot.b64)
        K.ntt_forward(x, ot.q, ot.psi, ot.psip)
        lifted[others] = x
        lifted[j] = c[j]
        K.mul_acc_shoup(acc0, lifted, kdata[j, 0], kcomp[j, 0], tt.q)
        K.mul_acc_shoup(acc1, lifted, kdata[j, 1], kcomp[j, 1], tt.q)
    special = ctx.params.coeff_modulus[-1]
    return mod_down(ctx, acc0, special, dt), mod_down(ctx, acc1, special, dt)


def mod_down(ctx: Context, a: np.ndarray, last_q: int, dt) -> np.ndarray:
    """Divide-and-round by the modulus of the last row, dropping it."""
    lt = ctx.tables([ctx.full.moduli.index(last_q)])
    last = a[-1:].copy()
    K.ntt_inverse(last, lt.q, lt.ipsi, lt.ipsip, lt.ninv, lt.ninvp)
    lifted = K.lift_row_fast(last[0], np.uint64(last_q), dt.q, dt.b64)
    K.ntt_forward(lifted, dt.q, dt.psi, dt.psip)
    inv = np.array([pow(last_q, -1, q) for q in dt.moduli], dtype=np.uint64)
    return K.divide_round_last(a[:-1], lifted, inv, dt.q, dt.r0, dt.r1)


def secret_loaded() -> None:
    instrument.bump("secret_key_load")
