"""Directory-backed key management with an audited secret-access choke point.

Layout::

    <root>/<key_id>/public.hef    public key + evaluation keys (frames)
    <root>/<key_id>/secret.hef    secret key frame (authority store only)
    <root>/<key_id>/meta.json
    <root>/audit.jsonl
    <root>/authority.json         salted hash of the authority credential
"""

from __future__ import annotations

import hashlib
import hmac
import json
import os
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from hefed import he
from hefed.errors import AccessDeniedError, DuplicateKeyError, KeyNotFoundError, KeystoreError
from hefed.he.params import HeParams, Scheme, require_secure

FEDERATION = "__federation__"


@dataclass(frozen=True)
class KeyRecord:
    key_id: int
    agency_id: str
    scheme: Scheme
    params: HeParams
    created_at: str
    has_secret: bool


class Keystore:
    """Key bundles keyed by integer id.

    Secret material is released only to callers presenting the authority
    credential, whose salted hash lives in ``authority.json``. Passing
    ``authority_token`` to a store without that file sets it up. A store with
    no credential file can never release secrets. ``on_read`` is an optional
    callback receiving every key file path that is read.
    """

    def __init__(self, root: str | Path, authority_token: str | None = None, on_read=None):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()
        self._audit_lock = threading.Lock()
        self._on_read = on_read
        if authority_token is not None and not self.authority_path.exists():
            self.set_authority_token(authority_token)

    @property
    def authority_path(self) -> Path:
        return self.root / "authority.json"

    @staticmethod
    def _hash_token(token: str, salt: bytes) -> bytes:
        return hashlib.scrypt(token.encode(), salt=salt, n=2**14, r=8, p=1, dklen=32)

    def set_authority_token(self, token: str, force: bool = False) -> None:
        if not token:
            raise KeystoreError("authority credential must be non-empty")
        if self.authority_path.exists() and not force:
            raise KeystoreError("authority credential already set")
        salt = os.urandom(16)
        doc = {"salt": salt.hex(), "scrypt": self._hash_token(token, salt).hex()}
        tmp = self.authority_path.with_suffix(".tmp")
        fd = os.open(tmp, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
        with os.fdopen(fd, "w") as fh:
            json.dump(doc, fh)
        os.replace(tmp, self.authority_path)

    # -- internals -----------------------------------------------------------

    def _dir(self, key_id: int) -> Path:
        return self.root / str(int(key_id))

    def _read(self, path: Path) -> bytes:
        if self._on_read is not None:
            self._on_read(str(path))
        return path.read_bytes()

    def _authorize(self, credential: str | None, key_id: int, action: str, requester: str) -> None:
        # the only path through which secret material leaves the store
        ok = credential is not None and self._check_credential(credential)
        self.log_event(key_id, requester, action if ok else f"{action}:denied")
        if not ok:
            raise AccessDeniedError(f"credential rejected for secret key {key_id}")

    def _check_credential(self, credential: str) -> bool:
        if not self.authority_path.exists():
            return False
        doc = json.loads(self.authority_path.read_text())
        got = self._hash_token(credential, bytes.fromhex(doc["salt"]))
        return hmac.compare_digest(got, bytes.fromhex(doc["scrypt"]))

    def _next_id(self) -> int:
        ids = [int(p.name) for p in self.root.iterdir() if p.is_dir() and p.name.isdigit()]
        return max(ids, default=0) + 1

    def _create(self, agency_id: str, bundle: he.KeyBundle) -> int:
        with self._write_lock:
            key_id = self._next_id()
            d = self._dir(key_id)
            d.mkdir()
            (d / "public.hef").write_bytes(he.public_frames(bundle))
            (d / "secret.hef").write_bytes(he.secret_frame(bundle))
            meta = {
                "key_id": key_id,
                "agency_id": agency_id,
                "scheme": bundle.params.scheme.name,
                "params": bundle.params.to_dict(),
                "params_digest": bundle.params.digest.hex(),
                "created_at": datetime.now(timezone.utc).isoformat(),
                "public_sha256": hashlib.sha256((d / "public.hef").read_bytes()).hexdigest(),
            }
            (d / "meta.json").write_text(json.dumps(meta, indent=2))
        self.log_event(key_id, agency_id, "create")
        return key_id

    def _find(self, agency_id: str, scheme: Scheme) -> int | None:
        for rec in self.list_keys():
            if rec.agency_id == agency_id and rec.scheme == scheme:
                return rec.key_id
        return None

    # -- public API ----------------------------------------------------------

    def create_federation_ckks_keys(
        self, params: HeParams, *, force: bool = False, allow_insecure: bool = False, seed: bytes | None = None
    ) -> int:
        """One CKKS bundle for the whole federation; its secret stays authority-side."""
        if params.scheme != Scheme.CKKS:
            raise KeystoreError("federation keys must use CKKS parameters")
        require_secure(params, allow_insecure)
        if not force and self._find(FEDERATION, Scheme.CKKS) is not None:
            raise DuplicateKeyError("federation CKKS key already exists (use --force)")
        return self._create(FEDERATION, he.keygen(params, seed))

    def register_agency_bfv_keys(
        self, agency_id: str, params: HeParams, *, force: bool = False, allow_insecure: bool = False, seed: bytes | None = None
    ) -> int:
        if params.scheme != Scheme.BFV:
            raise KeystoreError("agency field keys must use BFV parameters")
        require_secure(params, allow_insecure)
        if not force and self._find(agency_id, Scheme.BFV) is not None:
            raise DuplicateKeyError(f"agency {agency_id!r} already has a BFV key (use --force)")
        return self._create(agency_id, he.keygen(params, seed))

    def record(self, key_id: int) -> KeyRecord:
        meta_path = self._dir(key_id) / "meta.json"
        if not meta_path.exists():
            raise KeyNotFoundError(f"No key found with id = {key_id}")
        meta = json.loads(meta_path.read_text())
        return KeyRecord(
            key_id=int(meta["key_id"]),
            agency_id=meta["agency_id"],
            scheme=Scheme[meta["scheme"]],
            params=HeParams.from_dict(meta["params"]),
            created_at=meta["created_at"],
            has_secret=(self._dir(key_id) / "secret.hef").exists(),
        )

    def list_keys(self) -> list[KeyRecord]:
        ids = sorted(int(p.name) for p in self.root.iterdir() if p.is_dir() and p.name.isdigit())
        return [self.record(i) for i in ids]

    def params(self, key_id: int) -> HeParams:
        return self.record(key_id).params

    def fetch_public(self, key_id: int) -> bytes:
        path = self._dir(key_id) / "public.hef"
        if not path.exists():
            raise KeyNotFoundError(f"No public key found with id = {key_id}")
        return self._read(path)

    def fetch_secret(self, key_id: int, credential: str | None, requester: str = "authority") -> bytes:
        self.record(key_id)  # not-found before credential check reveals nothing secret
        self._authorize(credential, key_id, "fetch_secret", requester)
        path = self._dir(key_id) / "secret.hef"
        if not path.exists():
            raise KeyNotFoundError(f"key {key_id} has no secret half in this store")
        return self._read(path)

    def public_bundle(self, key_id: int) -> he.KeyBundle:
        return he.bundle_from_frames(self.params(key_id), self.fetch_public(key_id))

    def full_bundle(self, key_id: int, credential: str | None, requester: str = "authority") -> he.KeyBundle:
        secret = self.fetch_secret(key_id, credential, requester)
        return he.bundle_from_frames(self.params(key_id), self.fetch_public(key_id), secret)

    def federation_key_id(self) -> int:
        key_id = self._find(FEDERATION, Scheme.CKKS)
        if key_id is None:
            raise KeyNotFoundError("no federation CKKS key has been created")
        return key_id

    def agency_key_id(self, agency_id: str) -> int:
        key_id = self._find(agency_id, Scheme.BFV)
        if key_id is None:
            raise KeyNotFoundError(f"agency {agency_id!r} has no BFV key")
        return key_id

    # -- audit ---------------------------------------------------------------

    @property
    def audit_path(self) -> Path:
        return self.root / "audit.jsonl"

    def log_event(self, key_id: int, requester: str, action: str, **extra) -> None:
        entry = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "monotonic_ns": time.monotonic_ns(),
            "key_id": int(key_id),
            "requester": requester,
            "action": action,
        }
        entry.update(extra)
        line = (json.dumps(entry) + "\n").encode()
        with self._audit_lock:
            fd = os.open(self.audit_path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o600)
            try:
                os.write(fd, line)
            finally:
                os.close(fd)

    def audit_entries(self) -> list[dict]:
        if not self.audit_path.exists():
            return []
        return [json.loads(l) for l in self.audit_path.read_text().splitlines() if l.strip()]
