"""Per-agency storage of hybrid-encrypted crime reports.

File layout (little-endian)::

    header: "HSTR" | version u16 | agency_len u16 | agency utf-8
            | bfv_key_id u64 | federation_key_id u64
    row:    row_len u32 | crc32 u32 | id u64 | encryption_key_id u64
            | 8 x (blob_len u32 | blob)

``row_len`` counts the bytes after itself; the CRC covers everything after
the CRC field. Rows are only ever appended.
"""

from __future__ import annotations

import abc
import os
import struct
import threading
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from hefed import codec, he
from hefed.errors import CorruptRowError, FrameError, HefedError, RecordNotFoundError, StoreError

MAGIC = b"HSTR"
VERSION = 1
BLOB_FIELDS = (
    "crime_type",
    "location",
    "description",
    "date",
    "time",
    "criminal_name",
    "encrypted_crime_type",
)


@dataclass(frozen=True)
class EncryptedRecord:
    id: int
    encryption_key_id: int
    crime_type: bytes
    location: bytes
    description: bytes
    date: bytes
    time: bytes
    criminal_name: bytes
    encrypted_crime_type: bytes

    def blobs(self) -> list[bytes]:
        return [getattr(self, f) for f in BLOB_FIELDS]


class RecordStore(abc.ABC):
    """Append-only table of encrypted rows with dense ids from 1."""

    agency_id: str
    bfv_key_id: int
    federation_key_id: int

    @abc.abstractmethod
    def append(self, encryption_key_id: int, blobs: list[bytes]) -> int: ...

    @abc.abstractmethod
    def rows(self) -> Iterator[EncryptedRecord | CorruptRowError]:
        """Snapshot of all rows in id order; corrupt rows appear as errors."""

    @abc.abstractmethod
    def get(self, record_id: int) -> EncryptedRecord: ...

    @abc.abstractmethod
    def __len__(self) -> int: ...

    def ids(self) -> list[int]:
        return [r.id if isinstance(r, EncryptedRecord) else r.record_id for r in self.rows()]


class MemoryRecordStore(RecordStore):
    def __init__(self, agency_id: str, bfv_key_id: int = 0, federation_key_id: int = 0):
        self.agency_id = agency_id
        self.bfv_key_id = bfv_key_id
        self.federation_key_id = federation_key_id
        self._rows: list[EncryptedRecord] = []
        self._lock = threading.Lock()

    def append(self, encryption_key_id, blobs):
        with self._lock:
            rid = len(self._rows) + 1
            self._rows.append(EncryptedRecord(rid, encryption_key_id, *blobs))
            return rid

    def rows(self):
        return iter(list(self._rows))

    def get(self, record_id):
        if not 1 <= record_id <= len(self._rows):
            raise RecordNotFoundError(record_id)
        return self._rows[record_id - 1]

    def __len__(self):
        return len(self._rows)


_ROW_HEAD = struct.Struct("<II")
_ROW_IDS = struct.Struct("<QQ")


def _encode_row(rid: int, key_id: int, blobs: list[bytes]) -> bytes:
    if len(blobs) != len(BLOB_FIELDS):
        raise StoreError(f"expected {len(BLOB_FIELDS)} blobs, got {len(blobs)}")
    body = [_ROW_IDS.pack(rid, key_id)]
    for b in blobs:
        body.append(struct.pack("<I", len(b)))
        body.append(b)
    body = b"".join(body)
    return _ROW_HEAD.pack(len(body) + 4, zlib.crc32(body)) + body


def _decode_row(body: bytes) -> EncryptedRecord:
    rid, key_id = _ROW_IDS.unpack_from(body)
    off = _ROW_IDS.size
    blobs = []
    for _ in BLOB_FIELDS:
        (n,) = struct.unpack_from("<I", body, off)
        off += 4
        if off + n > len(body):
            raise StoreError("blob overruns row")
        blobs.append(bytes(body[off : off + n]))
        off += n
    if off != len(body):
        raise StoreError("trailing bytes in row")
    return EncryptedRecord(rid, key_id, *blobs)


class FileRecordStore(RecordStore):
    """Single-file store; one writer, any number of readers."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        if not self.path.exists():
            raise StoreError(f"store file not found: {self.path}")
        self._lock = threading.Lock()
        with open(self.path, "rb") as fh:
            head = fh.read(8)
            if len(head) < 8 or head[:4] != MAGIC:
                raise StoreError(f"{self.path} is not an encrypted record store")
            version, alen = struct.unpack("<HH", head[4:])
            if version != VERSION:
                raise StoreError(f"unsupported store version {version}")
            self.agency_id = fh.read(alen).decode("utf-8")
            self.bfv_key_id, self.federation_key_id = struct.unpack("<QQ", fh.read(16))
            self._data_start = fh.tell()
        self._offsets: list[tuple[int, int]] = []  # (offset, length incl. header)
        self._scanned_to = self._data_start
        self._refresh()

    @classmethod
    def create(cls, path: str | Path, agency_id: str, bfv_key_id: int, federation_key_id: int) -> "FileRecordStore":
        path = Path(path)
        if path.exists():
            raise StoreError(f"store already exists: {path}")
        path.parent.mkdir(parents=True, exist_ok=True)
        a = agency_id.encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(MAGIC + struct.pack("<HH", VERSION, len(a)) + a + struct.pack("<QQ", bfv_key_id, federation_key_id))
        return cls(path)

    def _refresh(self) -> int:
        """Index rows appended since the last look; return the snapshot size."""
        with self._lock:
            size = os.path.getsize(self.path)
            with open(self.path, "rb") as fh:
                fh.seek(self._scanned_to)
                off = self._scanned_to
                while off + 4 <= size:
                    (n,) = struct.unpack("<I", fh.read(4))
                    if off + 4 + n > size:
                        break  # partially written tail
                    self._offsets.append((off, 4 + n))
                    fh.seek(n, os.SEEK_CUR)
                    off += 4 + n
                self._scanned_to = off
            return len(self._offsets)

    def _read_row(self, fh, off: int, length: int) -> EncryptedRecord:
        fh.seek(off)
        raw = fh.read(length)
        (crc,) = struct.unpack_from("<I", raw, 4)
        body = raw[8:]
        if zlib.crc32(body) != crc:
            rid = struct.unpack_from("<Q", body)[0] if len(body) >= 8 else -1
            raise CorruptRowError(rid, "checksum mismatch")
        try:
            return _decode_row(body)
        except (struct.error, StoreError) as exc:
            raise CorruptRowError(-1, str(exc)) from None

    def append(self, encryption_key_id: int, blobs: list[bytes]) -> int:
        self._refresh()
        with self._lock:
            rid = len(self._offsets) + 1
            row = _encode_row(rid, encryption_key_id, blobs)
            fd = os.open(self.path, os.O_WRONLY | os.O_APPEND)
            try:
                os.write(fd, row)
                os.fsync(fd)
            finally:
                os.close(fd)
            self._offsets.append((self._scanned_to, len(row)))
            self._scanned_to += len(row)
            return rid

    def rows(self):
        count = self._refresh()
        snapshot = self._offsets[:count]
        with open(self.path, "rb") as fh:
            for i, (off, length) in enumerate(snapshot, 1):
                try:
                    rec = self._read_row(fh, off, length)
                except CorruptRowError as exc:
                    yield CorruptRowError(i, exc.reason)
                    continue
                yield rec

    def get(self, record_id: int) -> EncryptedRecord:
        self._refresh()
        if not 1 <= record_id <= len(self._offsets):
            raise RecordNotFoundError(record_id)
        off, length = self._offsets[record_id - 1]
        with open(self.path, "rb") as fh:
            try:
                return self._read_row(fh, off, length)
            except CorruptRowError as exc:
                raise CorruptRowError(record_id, exc.reason) from None

    def __len__(self):
        return self._refresh()


def open_store(path: str | Path) -> FileRecordStore:
    return FileRecordStore(path)


# -- operations --------------------------------------------------------------

def encrypt_record(
    rec: codec.PlainRecord,
    agency_keys: he.KeyBundle,
    federation_keys: he.KeyBundle,
    vocab: codec.CrimeVocabulary,
    rng=None,
) -> list[bytes]:
    """Hybrid-encrypt one record into the seven blob columns."""
    vec = codec.vectorize_crime_type(rec.crime_type, vocab)
    fparams = federation_keys.params
    ckks_blob = he.serialize_ct(he.ckks_encrypt(federation_keys.public_key, fparams, vec, fparams.scale, rng=rng))
    blobs = [ckks_blob]
    for name in codec.BFV_FIELDS:
        codes = codec.string_to_ascii_vec(getattr(rec, name), codec.FIELD_LENGTH, field=name)
        ct = he.bfv_encrypt(agency_keys.public_key, agency_keys.params, codes, rng=rng)
        blobs.append(he.serialize_ct(ct))
    blobs.append(ckks_blob)  # same blob again in encrypted_crime_type
    return blobs


def ingest_record(
    store: RecordStore,
    rec: codec.PlainRecord,
    agency_keys: he.KeyBundle,
    federation_keys: he.KeyBundle,
    vocab: codec.CrimeVocabulary,
    encryption_key_id: int | None = None,
    rng=None,
) -> int:
    key_id = store.bfv_key_id if encryption_key_id is None else encryption_key_id
    return store.append(key_id, encrypt_record(rec, agency_keys, federation_keys, vocab, rng))


def scan_encrypted_vectors(
    store: RecordStore, params: he.HeParams, errors: list | None = None
) -> Iterator[tuple[int, he.CkksCiphertext]]:
    """Yield (id, searchable vector) per row; unreadable rows go to ``errors``."""
    for row in store.rows():
        if isinstance(row, CorruptRowError):
            if errors is not None:
                errors.append(row)
            continue
        try:
            ct = he.deserialize_ct(row.encrypted_crime_type, params)
        except (FrameError, HefedError) as exc:
            if errors is not None:
                errors.append(CorruptRowError(row.id, str(exc)))
            continue
        yield row.id, ct


def fetch_encrypted_fields(store: RecordStore, ids: list[int]) -> list[EncryptedRecord]:
    return [store.get(int(i)) for i in ids]


def decrypt_record(
    row: EncryptedRecord,
    agency_keys: he.KeyBundle,
    federation_keys: he.KeyBundle,
    vocab: codec.CrimeVocabulary,
) -> dict:
    """Authority-side decryption of one row into plain field strings."""
    out = {}
    for name in codec.BFV_FIELDS:
        ct = he.deserialize_ct(getattr(row, name), agency_keys.params)
        codes = he.bfv_decrypt(agency_keys.secret_key, agency_keys.params, ct, codec.FIELD_LENGTH)
        out[name] = codec.ascii_vec_to_string(codes)
    fp = federation_keys.params
    vec = he.ckks_decrypt(federation_keys.secret_key, fp, he.deserialize_ct(row.encrypted_crime_type, fp), len(vocab))
    out["crime_vector"] = np.asarray(vec)
    return out
