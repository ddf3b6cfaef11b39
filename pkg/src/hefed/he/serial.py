"""Versioned binary frames for ciphertexts and key material.

Layout (little-endian)::

    magic "HEF1" | version u8 | scheme u8 | kind u8 | params_digest[32]
    | level u16 | scale f64 | payload_len u64 | payload

Ciphertext payloads hold, for each part, the residues of every modulus of the
current level in chain order, N u64 words each (NTT form).
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from hefed.errors import FrameError, ParamsMismatchError, TruncatedFrameError
from hefed.he.bfv import BfvCiphertext
from hefed.he.ckks import CkksCiphertext
from hefed.he.keys import GaloisKeys, KeySwitchKey, PublicKey, SecretKey, _frozen, secret_loaded
from hefed.he.params import HeParams, Scheme

MAGIC = b"HEF1"
VERSION = 1
HEADER = struct.Struct("<4sBBB32sHdQ")


class Kind(enum.IntEnum):
    CT = 1
    PK = 2
    SK = 3
    RELIN = 4
    GALOIS = 5


@dataclass(frozen=True)
class FrameHeader:
    version: int
    scheme: Scheme
    kind: Kind
    params_digest: bytes
    level: int
    scale: float
    payload_len: int

    @property
    def frame_len(self) -> int:
        return HEADER.size + self.payload_len


def _pack(scheme: Scheme, kind: Kind, digest: bytes, level: int, scale: float, payload: bytes) -> bytes:
    return HEADER.pack(MAGIC, VERSION, int(scheme), int(kind), digest, level, scale, len(payload)) + payload


def _words(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<u8").tobytes()


def parse_header(buf, offset: int = 0) -> FrameHeader:
    view = memoryview(buf)[offset:]
    if len(view) < HEADER.size:
        raise TruncatedFrameError(f"frame header needs {HEADER.size} bytes, got {len(view)}")
    magic, version, scheme, kind, digest, level, scale, plen = HEADER.unpack_from(view)
    if magic != MAGIC:
        raise FrameError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FrameError(f"unsupported frame version {version}")
    try:
        scheme = Scheme(scheme)
        kind = Kind(kind)
    except ValueError as exc:
        raise FrameError(str(exc)) from None
    if len(view) < HEADER.size + plen:
        raise TruncatedFrameError(f"frame payload needs {plen} bytes, got {len(view) - HEADER.size}")
    return FrameHeader(version, scheme, kind, bytes(digest), level, scale, plen)


def split_frames(buf) -> list[bytes]:
    """Cut a concatenation of frames into individual frames."""
    out = []
    off = 0
    while off < len(buf):
        h = parse_header(buf, off)
        out.append(bytes(buf[off : off + h.frame_len]))
        off += h.frame_len
    return out


def _rows(payload, moduli, n, lead: tuple[int, ...]) -> np.ndarray:
    arr = np.frombuffer(payload, dtype="<u8").astype(np.uint64).reshape(lead + (len(moduli), n))
    q = np.array(moduli, dtype=np.uint64)[:, None]
    if np.any(arr >= q):
        raise FrameError("residue out of range for its modulus")
    return _frozen(arr)


# -- encoding ---------------------------------------------------------------

def serialize_ct(ct) -> bytes:
    if isinstance(ct, CkksCiphertext):
        return _pack(Scheme.CKKS, Kind.CT, ct.params_id, ct.level, ct.scale, _words(ct.parts))
    if isinstance(ct, BfvCiphertext):
        return _pack(Scheme.BFV, Kind.CT, ct.params_id, 0, 0.0, _words(ct.parts))
    raise TypeError(f"not a ciphertext: {type(ct).__name__}")


def serialize_key(params: HeParams, key) -> bytes:
    d = params.digest
    top = params.max_level
    if isinstance(key, PublicKey):
        return _pack(params.scheme, Kind.PK, d, top, 0.0, _words(key.data))
    if isinstance(key, SecretKey):
        return _pack(params.scheme, Kind.SK, d, top, 0.0, _words(key.s))
    if isinstance(key, KeySwitchKey):
        return _pack(params.scheme, Kind.RELIN, d, top, 0.0, _words(key.data))
    if isinstance(key, GaloisKeys):
        parts = [struct.pack("<I", len(key.keys))]
        for g in key.elements:
            parts.append(struct.pack("<I", g))
            parts.append(_words(key.keys[g].data))
        return _pack(params.scheme, Kind.GALOIS, d, top, 0.0, b"".join(parts))
    raise TypeError(f"not key material: {type(key).__name__}")


# -- decoding ---------------------------------------------------------------

def _check(h: FrameHeader, params: HeParams, kind: Kind | None):
    if kind is not None and h.kind != kind:
        raise FrameError(f"expected {kind.name} frame, got {h.kind.name}")
    if h.params_digest != params.digest:
        raise ParamsMismatchError("frame was produced under different parameters")
    if h.scheme != params.scheme:
        raise FrameError("frame scheme does not match parameters")


def deserialize_ct(buf, params: HeParams):
    h = parse_header(buf)
    _check(h, params, Kind.CT)
    payload = memoryview(buf)[HEADER.size : h.frame_len]
    n = params.ring_degree
    if params.scheme == Scheme.BFV:
        # BFV has no modulus switching here; the level field is always 0
        if h.level != 0:
            raise FrameError("BFV ciphertext must carry level 0")
        moduli = params.data_moduli
    elif h.level > params.max_level:
        raise FrameError(f"level {h.level} above maximum {params.max_level}")
    else:
        moduli = params.data_moduli[: h.level + 1]
    per_part = len(moduli) * n * 8
    if h.payload_len % per_part or h.payload_len // per_part not in (2, 3):
        raise FrameError("ciphertext payload has unexpected size")
    parts = _rows(payload, moduli, n, (h.payload_len // per_part,))
    if params.scheme == Scheme.CKKS:
        if not h.scale > 0:
            raise FrameError("CKKS ciphertext with non-positive scale")
        return CkksCiphertext(parts, h.level, h.scale, h.params_digest)
    return BfvCiphertext(parts, h.params_digest)


def _switch_key_shape(params: HeParams):
    return len(params.data_moduli), len(params.coeff_modulus) * params.ring_degree * 8 * 2


def deserialize_key(buf, params: HeParams):
    h = parse_header(buf)
    _check(h, params, None)
    payload = memoryview(buf)[HEADER.size : h.frame_len]
    n = params.ring_degree
    try:
        if h.kind == Kind.PK:
            return PublicKey(h.params_digest, _rows(payload, params.data_moduli, n, (2,)))
        if h.kind == Kind.SK:
            secret_loaded()
            return SecretKey(h.params_digest, _rows(payload, params.coeff_modulus, n, ()))
        if h.kind == Kind.RELIN:
            digits, _ = _switch_key_shape(params)
            return KeySwitchKey(h.params_digest, _rows(payload, params.coeff_modulus, n, (digits, 2)))
        if h.kind == Kind.GALOIS:
            digits, per_digit = _switch_key_shape(params)
            (count,) = struct.unpack_from("<I", payload)
            off = 4
            keys = {}
            for _ in range(count):
                (g,) = struct.unpack_from("<I", payload, off)
                off += 4
                size = digits * per_digit
                keys[g] = KeySwitchKey(
                    h.params_digest, _rows(payload[off : off + size], params.coeff_modulus, n, (digits, 2))
                )
                off += size
            if off != h.payload_len:
                raise FrameError("trailing bytes in Galois key payload")
            return GaloisKeys(h.params_digest, keys)
    except (ValueError, struct.error) as exc:
        raise FrameError(f"malformed {h.kind.name} payload: {exc}") from None
    raise FrameError(f"frame kind {h.kind.name} is not key material")
