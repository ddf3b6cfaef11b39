"""Leveled homomorphic encryption: CKKS for search vectors, BFV for stored fields."""

from hefed.he.bfv import BfvCiphertext, bfv_decrypt, bfv_encrypt, noise_budget
from hefed.he.ckks import (
    CkksCiphertext,
    ckks_add,
    ckks_decrypt,
    ckks_encrypt,
    ckks_multiply,
    ckks_relinearize,
    ckks_rescale,
    ckks_rotate,
    ckks_slot_sum,
)
from hefed.he.keys import GaloisKeys, KeyBundle, KeySwitchKey, PublicKey, SecretKey, keygen
from hefed.he.params import PROFILES, HeParams, Scheme, gen_params, require_secure
from hefed.he.serial import (
    Kind,
    deserialize_ct,
    deserialize_key,
    parse_header,
    serialize_ct,
    serialize_key,
    split_frames,
)


def public_frames(bundle: KeyBundle) -> bytes:
    """Public key followed by any evaluation keys, as concatenated frames."""
    out = [serialize_key(bundle.params, bundle.public_key)]
    if bundle.relin_key is not None:
        out.append(serialize_key(bundle.params, bundle.relin_key))
    if bundle.galois_keys is not None:
        out.append(serialize_key(bundle.params, bundle.galois_keys))
    return b"".join(out)


def secret_frame(bundle: KeyBundle) -> bytes:
    return serialize_key(bundle.params, bundle.secret_key)


def bundle_from_frames(params: HeParams, public: bytes, secret: bytes | None = None) -> KeyBundle:
    pk = relin = galois = None
    for frame in split_frames(public):
        key = deserialize_key(frame, params)
        if isinstance(key, PublicKey):
            pk = key
        elif isinstance(key, KeySwitchKey):
            relin = key
        elif isinstance(key, GaloisKeys):
            galois = key
        else:
            raise ValueError("secret material found among public frames")
    if pk is None:
        raise ValueError("public frames lack a public key")
    sk = deserialize_key(secret, params) if secret is not None else None
    if sk is not None and not isinstance(sk, SecretKey):
        raise ValueError("secret frame does not hold a secret key")
    return KeyBundle(params, pk, sk, relin, galois)


def encrypted_dot(params: HeParams, a: CkksCiphertext, b: CkksCiphertext, bundle: KeyBundle, width: int) -> CkksCiphertext:
    """slot 0 of the result ~ <a, b> over the first ``width`` slots."""
    prod = ckks_multiply(params, a, b, bundle.relin_key, rescale=True)
    return ckks_slot_sum(params, prod, width, bundle.galois_keys)


__all__ = [
    "PROFILES",
    "BfvCiphertext",
    "CkksCiphertext",
    "GaloisKeys",
    "HeParams",
    "KeyBundle",
    "KeySwitchKey",
    "Kind",
    "PublicKey",
    "Scheme",
    "SecretKey",
    "bfv_decrypt",
    "bfv_encrypt",
    "bundle_from_frames",
    "ckks_add",
    "ckks_decrypt",
    "ckks_encrypt",
    "ckks_multiply",
    "ckks_relinearize",
    "ckks_rescale",
    "ckks_rotate",
    "ckks_slot_sum",
    "deserialize_ct",
    "deserialize_key",
    "encrypted_dot",
    "gen_params",
    "keygen",
    "noise_budget",
    "parse_header",
    "public_frames",
    "require_secure",
    "secret_frame",
    "serialize_ct",
    "serialize_key",
    "split_frames",
]
