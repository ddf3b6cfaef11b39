"""Length-prefixed binary messages exchanged between federator and nodes.

Every message is ``total_len u32 | msg_type u8 | request_id[16] | body`` with
``total_len`` counting the bytes that follow it. Integers are little-endian.
"""

from __future__ import annotations

import enum
import socket
import struct
from dataclasses import dataclass

from hefed.agency_store import BLOB_FIELDS, EncryptedRecord
from hefed.errors import ProtocolError

PROTOCOL_VERSION = 1
DIGEST_LEN = 32
REQUEST_ID_LEN = 16
MAX_MESSAGE = 1 << 31
_PREFIX = struct.Struct("<IB16s")


class MsgType(enum.IntEnum):
    PING = 0x01
    QUERY = 0x02
    SCORES = 0x03
    FETCH = 0x04
    RECORDS = 0x05
    ERROR = 0x7F


class ErrorCode(enum.IntEnum):
    PARAMS_MISMATCH = 1
    MALFORMED_QUERY = 2
    NOT_FOUND = 3
    UNSUPPORTED_VERSION = 4
    BAD_REQUEST = 5
    INTERNAL = 6


class RemoteError(ProtocolError):
    def __init__(self, code: int, message: str):
        try:
            code = ErrorCode(code)
        except ValueError:
            pass
        name = code.name if isinstance(code, ErrorCode) else str(code)
        super().__init__(f"{name}: {message}")
        self.code = code
        self.message = message


@dataclass(frozen=True)
class QueryEnvelope:
    protocol_version: int
    federation_params_digest: bytes
    encrypted_query: bytes
    request_id: bytes


@dataclass
class ScoreResponse:
    request_id: bytes
    scores: list  # (record_id, encrypted score frame)
    node_id: str
    elapsed: float


# -- framing -----------------------------------------------------------------

def encode_message(msg_type: int, request_id: bytes, body: bytes = b"") -> bytes:
    if len(request_id) != REQUEST_ID_LEN:
        raise ProtocolError("request id must be 16 bytes")
    total = 1 + REQUEST_ID_LEN + len(body)
    if total > MAX_MESSAGE:
        raise ProtocolError("message too large")
    return _PREFIX.pack(total, int(msg_type), request_id) + body


def decode_message(buf: bytes) -> tuple[MsgType, bytes, bytes]:
    if len(buf) < _PREFIX.size:
        raise ProtocolError("message shorter than its prefix")
    total, mtype, rid = _PREFIX.unpack_from(buf)
    if total != len(buf) - 4:
        raise ProtocolError(f"length field {total} disagrees with {len(buf) - 4} bytes")
    try:
        mtype = MsgType(mtype)
    except ValueError:
        raise ProtocolError(f"unknown message type 0x{mtype:02x}") from None
    return mtype, rid, buf[_PREFIX.size :]


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    while n:
        chunk = sock.recv(min(n, 1 << 20))
        if not chunk:
            raise ConnectionError("connection closed mid-message")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_message(sock: socket.socket) -> tuple[MsgType, bytes, bytes] | None:
    """Read one message; None on a clean EOF between messages."""
    first = sock.recv(4)
    if not first:
        return None
    if len(first) < 4:
        first += _recv_exact(sock, 4 - len(first))
    (total,) = struct.unpack("<I", first)
    if total < 1 + REQUEST_ID_LEN or total > MAX_MESSAGE:
        raise ProtocolError(f"bad message length {total}")
    return decode_message(first + _recv_exact(sock, total))


def send_message(sock: socket.socket, msg_type: int, request_id: bytes, body: bytes = b"") -> None:
    sock.sendall(encode_message(msg_type, request_id, body))


# -- bodies ------------------------------------------------------------------

class _Reader:
    def __init__(self, buf: bytes):
        self.buf = memoryview(buf)
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.buf):
            raise ProtocolError("body truncated")
        out = bytes(self.buf[self.off : self.off + n])
        self.off += n
        return out

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def done(self):
        if self.off != len(self.buf):
            raise ProtocolError(f"{len(self.buf) - self.off} trailing body bytes")


def encode_ping(version: int = PROTOCOL_VERSION, node_id: str = "") -> bytes:
    nid = node_id.encode("utf-8")
    return struct.pack("<HH", version, len(nid)) + nid


def decode_ping(body: bytes) -> tuple[int, str]:
    r = _Reader(body)
    version, n = r.unpack("<HH")
    try:
        node_id = r.take(n).decode("utf-8")
    except UnicodeDecodeError:
        raise ProtocolError("node id is not UTF-8") from None
    r.done()
    return version, node_id


def encode_query(params_digest: bytes, ct: bytes) -> bytes:
    if len(params_digest) != DIGEST_LEN:
        raise ProtocolError("params digest must be 32 bytes")
    return params_digest + struct.pack("<Q", len(ct)) + ct


def decode_query(body: bytes) -> tuple[bytes, bytes]:
    r = _Reader(body)
    digest = r.take(DIGEST_LEN)
    (n,) = r.unpack("<Q")
    ct = r.take(n)
    r.done()
    return digest, ct


def encode_scores(scores) -> bytes:
    out = [struct.pack("<I", len(scores))]
    for rid, ct in scores:
        out.append(struct.pack("<QQ", rid, len(ct)))
        out.append(ct)
    return b"".join(out)


def decode_scores(body: bytes) -> list[tuple[int, bytes]]:
    r = _Reader(body)
    (count,) = r.unpack("<I")
    out = []
    for _ in range(count):
        rid, n = r.unpack("<QQ")
        out.append((rid, r.take(n)))
    r.done()
    return out


def encode_fetch(ids) -> bytes:
    ids = list(ids)
    return struct.pack("<I", len(ids)) + b"".join(struct.pack("<Q", int(i)) for i in ids)


def decode_fetch(body: bytes) -> list[int]:
    r = _Reader(body)
    (count,) = r.unpack("<I")
    ids = [r.unpack("<Q")[0] for _ in range(count)]
    r.done()
    return ids


def encode_records(records) -> bytes:
    out = [struct.pack("<I", len(records))]
    for rec in records:
        out.append(struct.pack("<QQ", rec.id, rec.encryption_key_id))
        for blob in rec.blobs():
            out.append(struct.pack("<Q", len(blob)))
            out.append(blob)
    return b"".join(out)


def decode_records(body: bytes) -> list[EncryptedRecord]:
    r = _Reader(body)
    (count,) = r.unpack("<I")
    out = []
    for _ in range(count):
        rid, key_id = r.unpack("<QQ")
        blobs = []
        for _ in BLOB_FIELDS:
            (n,) = r.unpack("<Q")
            blobs.append(r.take(n))
        out.append(EncryptedRecord(rid, key_id, *blobs))
    r.done()
    return out


def encode_error(code: int, message: str) -> bytes:
    return struct.pack("<H", int(code)) + message.encode("utf-8")


def decode_error(body: bytes) -> tuple[int, str]:
    if len(body) < 2:
        raise ProtocolError("error body truncated")
    (code,) = struct.unpack_from("<H", body)
    return code, body[2:].decode("utf-8", errors="replace")
