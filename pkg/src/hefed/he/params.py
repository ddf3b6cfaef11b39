"""Parameter sets and the per-parameter arithmetic context."""

from __future__ import annotations

import enum
import functools
import hashlib
import json
from dataclasses import dataclass

import numpy as np
from sympy import isprime

from hefed.errors import ParamsError

DEFAULT_SCALE = 2.0**40
VOCAB_WIDTH = 72


class Scheme(enum.IntEnum):
    CKKS = 1
    BFV = 2


@dataclass(frozen=True)
class HeParams:
    """A validated parameter set.

    For CKKS the last modulus is the special key-switching prime and is never
    part of a ciphertext; the remaining moduli form the rescaling chain. BFV
    ciphertexts use every modulus.
    """

    scheme: Scheme
    ring_degree: int
    coeff_modulus_bits: tuple[int, ...]
    coeff_modulus: tuple[int, ...]
    scale: float = 0.0
    plain_modulus: int = 0
    profile: str = "custom"
    secure: bool = True

    def __post_init__(self):
        n = self.ring_degree
        if n < 8 or n & (n - 1):
            raise ParamsError(f"ring degree {n} is not a power of two >= 8")
        if len(self.coeff_modulus) != len(self.coeff_modulus_bits):
            raise ParamsError("modulus chain and bit sizes disagree")
        if len(set(self.coeff_modulus)) != len(self.coeff_modulus):
            raise ParamsError("modulus chain has repeated primes")
        for q in self.coeff_modulus:
            if q >= 1 << 61 or (q - 1) % (2 * n):
                raise ParamsError(f"modulus {q} is not an NTT-friendly prime below 2^61")
        if self.scheme == Scheme.CKKS:
            if n // 2 < VOCAB_WIDTH:
                raise ParamsError(f"{n // 2} slots cannot hold {VOCAB_WIDTH} entries")
            if len(self.coeff_modulus) < 3:
                raise ParamsError("CKKS needs at least two data primes and a special prime")
            if self.scale <= 0:
                raise ParamsError("CKKS scale must be positive")
        else:
            if self.plain_modulus <= 127:
                raise ParamsError("BFV plain modulus must exceed 127 to hold ASCII")

    @property
    def slot_count(self) -> int:
        return self.ring_degree // 2

    @property
    def data_moduli(self) -> tuple[int, ...]:
        if self.scheme == Scheme.CKKS:
            return self.coeff_modulus[:-1]
        return self.coeff_modulus

    @property
    def max_level(self) -> int:
        return len(self.data_moduli) - 1

    @functools.cached_property
    def digest(self) -> bytes:
        doc = {
            "scheme": self.scheme.name,
            "n": self.ring_degree,
            "moduli": [str(q) for q in self.coeff_modulus],
            "scale": float(self.scale).hex(),
            "t": self.plain_modulus,
        }
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).digest()

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme.name,
            "ring_degree": self.ring_degree,
            "coeff_modulus_bits": list(self.coeff_modulus_bits),
            "coeff_modulus": [str(q) for q in self.coeff_modulus],
            "scale": self.scale,
            "plain_modulus": self.plain_modulus,
            "profile": self.profile,
            "secure": self.secure,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HeParams":
        return cls(
            scheme=Scheme[d["scheme"]],
            ring_degree=int(d["ring_degree"]),
            coeff_modulus_bits=tuple(int(b) for b in d["coeff_modulus_bits"]),
            coeff_modulus=tuple(int(q) for q in d["coeff_modulus"]),
            scale=float(d["scale"]),
            plain_modulus=int(d["plain_modulus"]),
            profile=d.get("profile", "custom"),
            secure=bool(d.get("secure", True)),
        )


def ntt_primes(bit_sizes, n: int) -> tuple[int, ...]:
    """Largest distinct primes q < 2**bits with q = 1 (mod 2n), one per entry."""
    step = 2 * n
    taken: set[int] = set()
    out = []
    for bits in bit_sizes:
        c = (1 << bits) + 1 - step
        c -= (c - 1) % step
        while c in taken or not isprime(c):
            c -= step
            if c < step:
                raise ParamsError(f"no {bits}-bit NTT prime for n={n}")
        taken.add(c)
        out.append(c)
    return tuple(out)


PROFILES = ("ckks_default", "bfv_default", "test_small")


@functools.lru_cache(maxsize=None)
def gen_params(profile: str = "ckks_default", scheme: str | None = None) -> HeParams:
    """Build a named parameter set.

    ``test_small`` shrinks the ring for fast tests and is flagged insecure; it
    produces CKKS parameters unless ``scheme="bfv"`` is passed.
    """
    if profile == "ckks_default":
        n, bits = 8192, (60, 40, 40, 60)
        return HeParams(Scheme.CKKS, n, bits, ntt_primes(bits, n), DEFAULT_SCALE, 0, profile)
    if profile == "bfv_default":
        n, bits = 4096, (36, 36, 37)
        return HeParams(Scheme.BFV, n, bits, ntt_primes(bits, n), 0.0, 65537, profile)
    if profile == "test_small":
        if (scheme or "ckks").lower() == "bfv":
            n, bits = 64, (36, 36, 37)
            return HeParams(Scheme.BFV, n, bits, ntt_primes(bits, n), 0.0, 65537, profile, False)
        n, bits = 256, (60, 40, 40, 60)
        return HeParams(Scheme.CKKS, n, bits, ntt_primes(bits, n), DEFAULT_SCALE, 0, profile, False)
    raise ParamsError(f"unknown parameter profile {profile!r}")


def require_secure(params: HeParams, allow_insecure: bool = False) -> None:
    if not params.secure and not allow_insecure:
        raise ParamsError(
            f"profile {params.profile!r} is insecure; pass --insecure-params to use it"
        )


def _bitrev(x: int, bits: int) -> int:
    return int(format(x, f"0{bits}b")[::-1], 2) if bits else 0


def _root_of_unity(q: int, order: int) -> int:
    """Smallest primitive ``order``-th root of unity mod q (order a power of two)."""
    e = (q - 1) // order
    for g in range(2, 10_000):
        w = pow(g, e, q)
        if pow(w, order // 2, q) == q - 1:
            return w
    raise ParamsError(f"no primitive {order}-th root mod {q}")


class ModulusTables:
    """Stacked per-modulus constants for a subset of the chain."""

    def __init__(self, moduli, n: int):
        bits = n.bit_length() - 1
        self.moduli = tuple(moduli)
        k = len(moduli)
        self.q = np.array(moduli, dtype=np.uint64)
        self.r0 = np.empty(k, dtype=np.uint64)
        self.r1 = np.empty(k, dtype=np.uint64)
        self.psi = np.empty((k, n), dtype=np.uint64)
        self.psip = np.empty((k, n), dtype=np.uint64)
        self.ipsi = np.empty((k, n), dtype=np.uint64)
        self.ipsip = np.empty((k, n), dtype=np.uint64)
        self.ninv = np.empty(k, dtype=np.uint64)
        self.ninvp = np.empty(k, dtype=np.uint64)
        self.b64 = np.array([(1 << 64) // q for q in moduli], dtype=np.uint64)
        self.c64 = np.array([(1 << 64) % q for q in moduli], dtype=np.uint64)
        self.qinv = np.array([pow(q, -1, 1 << 64) for q in moduli], dtype=np.uint64)
        rev = [_bitrev(i, bits) for i in range(n)]
        for r, q in enumerate(moduli):
            ratio = (1 << 128) // q
            self.r0[r] = ratio & ((1 << 64) - 1)
            self.r1[r] = ratio >> 64
            psi = _root_of_unity(q, 2 * n)
            ipsi = pow(psi, -1, q)
            pw = [1] * n
            ipw = [1] * n
            for i in range(1, n):
                pw[i] = pw[i - 1] * psi % q
                ipw[i] = ipw[i - 1] * ipsi % q
            fw = [pw[rev[i]] for i in range(n)]
            iw = [ipw[rev[i]] for i in range(n)]
            self.psi[r] = fw
            self.psip[r] = [(w << 64) // q for w in fw]
            self.ipsi[r] = iw
            self.ipsip[r] = [(w << 64) // q for w in iw]
            ninv = pow(n, -1, q)
            self.ninv[r] = ninv
            self.ninvp[r] = (ninv << 64) // q

    def subset(self, rows) -> "ModulusTables":
        sub = object.__new__(ModulusTables)
        rows = list(rows)
        sub.moduli = tuple(self.moduli[i] for i in rows)
        for name in ("q", "r0", "r1", "b64", "c64", "qinv", "ninv", "ninvp", "psi", "psip", "ipsi", "ipsip"):
            setattr(sub, name, np.ascontiguousarray(getattr(self, name)[rows]))
        return sub


class Context:
    """Precomputed tables for one parameter set; shared and read-only."""

    def __init__(self, params: HeParams):
        self.params = params
        n = params.ring_degree
        self.n = n
        self.full = ModulusTables(params.coeff_modulus, n)
        self._subsets: dict[tuple[int, ...], ModulusTables] = {}
        self._perms: dict[int, np.ndarray] = {}
        bits = n.bit_length() - 1
        # NTT slot i holds the evaluation at psi**exponent[i]
        self.ntt_exponent = np.array([2 * _bitrev(i, bits) + 1 for i in range(n)], dtype=np.int64)
        self._exp_to_index = np.empty(2 * n, dtype=np.int64)
        self._exp_to_index[self.ntt_exponent] = np.arange(n)
        if params.scheme == Scheme.CKKS:
            m = 2 * n
            slots = n // 2
            five = np.empty(slots, dtype=np.int64)
            acc = 1
            for j in range(slots):
                five[j] = acc
                acc = acc * 5 % m
            self.slot_index = (five - 1) // 2
            self.conj_index = (m - five - 1) // 2
            self.psi_pows = np.exp(1j * np.pi * np.arange(n) / n)

    def tables(self, rows) -> ModulusTables:
        key = tuple(rows)
        t = self._subsets.get(key)
        if t is None:
            t = self.full.subset(key)
            self._subsets[key] = t
        return t

    def galois_permutation(self, g: int) -> np.ndarray:
        """Index map so that ``a_ntt[:, perm]`` is the NTT form of a(X**g)."""
        perm = self._perms.get(g)
        if perm is None:
            target = (self.ntt_exponent * g) % (2 * self.n)
            perm = self._exp_to_index[target]
            self._perms[g] = perm
        return perm

    def galois_element(self, steps: int) -> int:
        return pow(5, steps % (self.n // 2), 2 * self.n)


@functools.lru_cache(maxsize=16)
def get_context(params: HeParams) -> Context:
    return Context(params)
