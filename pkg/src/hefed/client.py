"""Blocking client for the node protocol."""

from __future__ import annotations

import socket
import time
import uuid

from hefed.agency_store import EncryptedRecord
from hefed.errors import ProtocolError
from hefed.protocol import (
    PROTOCOL_VERSION,
    MsgType,
    QueryEnvelope,
    RemoteError,
    ScoreResponse,
    decode_error,
    decode_ping,
    decode_records,
    decode_scores,
    encode_fetch,
    encode_ping,
    encode_query,
    read_message,
    send_message,
)


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, _, port = endpoint.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint must be host:port, got {endpoint!r}")
    return host, int(port)


class NodeClient:
    def __init__(self, endpoint: str, timeout: float = 60.0):
        self.endpoint = endpoint
        self.timeout = timeout
        self._sock: socket.socket | None = None

    def __enter__(self):
        self.connect()
        return self

    def __exit__(self, *exc):
        self.close()

    def connect(self):
        if self._sock is None:
            self._sock = socket.create_connection(parse_endpoint(self.endpoint), timeout=self.timeout)
        return self

    def close(self):
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def _call(self, mtype: MsgType, rid: bytes, body: bytes, expect: MsgType) -> bytes:
        self.connect()
        send_message(self._sock, mtype, rid, body)
        msg = read_message(self._sock)
        if msg is None:
            raise ConnectionError("node closed the connection")
        rtype, rrid, rbody = msg
        if rtype == MsgType.ERROR:
            raise RemoteError(*decode_error(rbody))
        if rtype != expect or rrid != rid:
            raise ProtocolError(f"unexpected reply {rtype.name}")
        return rbody

    def ping(self) -> tuple[int, str]:
        body = self._call(MsgType.PING, uuid.uuid4().bytes, encode_ping(PROTOCOL_VERSION), MsgType.PING)
        return decode_ping(body)

    def query(self, env: QueryEnvelope) -> ScoreResponse:
        start = time.monotonic()
        body = self._call(
            MsgType.QUERY, env.request_id, encode_query(env.federation_params_digest, env.encrypted_query), MsgType.SCORES
        )
        return ScoreResponse(env.request_id, decode_scores(body), "", time.monotonic() - start)

    def fetch(self, ids) -> list[EncryptedRecord]:
        body = self._call(MsgType.FETCH, uuid.uuid4().bytes, encode_fetch(ids), MsgType.RECORDS)
        return decode_records(body)
