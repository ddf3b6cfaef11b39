"""Per-agency search service.

The node holds only the federation's public and evaluation keys. It scores an
encrypted query against every stored vector and returns the encrypted scores;
it never sees a secret key and never decrypts.
"""

from __future__ import annotations

import json
import logging
import os
import signal
import socketserver
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from hefed import he
from hefed.agency_store import FileRecordStore, RecordStore, fetch_encrypted_fields, scan_encrypted_vectors
from hefed.errors import FrameError, HefedError, ParamsMismatchError, ProtocolError, RecordNotFoundError, StoreError
from hefed.he import instrument
from hefed.he.params import VOCAB_WIDTH, require_secure
from hefed.keystore import Keystore
from hefed.protocol import (
    PROTOCOL_VERSION,
    ErrorCode,
    MsgType,
    QueryEnvelope,
    ScoreResponse,
    decode_fetch,
    decode_ping,
    decode_query,
    encode_error,
    encode_message,
    encode_ping,
    encode_records,
    encode_scores,
    read_message,
)

log = logging.getLogger(__name__)

INSTRUMENT_ENV = "HEFED_INSTRUMENT"


class NodeError(HefedError):
    def __init__(self, code: ErrorCode, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class NodeConfig:
    node_id: str
    store_path: str
    keystore_dir: str
    federation_key_id: int | None = None
    host: str = "127.0.0.1"
    port: int = 0
    workers: int = 1
    width: int = VOCAB_WIDTH
    allow_insecure: bool = False


class SearchNode:
    def __init__(self, node_id: str, store: RecordStore, eval_keys: he.KeyBundle, workers: int = 1, width: int = VOCAB_WIDTH):
        if eval_keys.params.scheme != he.Scheme.CKKS:
            raise HefedError("search node needs CKKS evaluation keys")
        self.node_id = node_id
        self.store = store
        self.keys = eval_keys.public_only()
        self.params = eval_keys.params
        self.workers = max(1, int(workers))
        self.width = width

    @classmethod
    def from_config(cls, cfg: NodeConfig, key_reads: list | None = None) -> "SearchNode":
        path = Path(cfg.store_path)
        if not path.exists():
            raise StoreError(f"store file not found: {path}")
        store = FileRecordStore(path)
        ks = Keystore(cfg.keystore_dir, on_read=key_reads.append if key_reads is not None else None)
        key_id = cfg.federation_key_id if cfg.federation_key_id is not None else store.federation_key_id
        keys = ks.public_bundle(key_id)
        require_secure(keys.params, cfg.allow_insecure)
        return cls(cfg.node_id, store, keys, cfg.workers, cfg.width)

    # -- operations ------------------------------------------------------------

    def _score(self, query: he.CkksCiphertext, item) -> tuple[int, bytes]:
        rid, ct = item
        return rid, he.serialize_ct(he.encrypted_dot(self.params, query, ct, self.keys, self.width))

    def handle_query(self, env: QueryEnvelope) -> ScoreResponse:
        start = time.monotonic()
        if env.federation_params_digest != self.params.digest:
            raise NodeError(ErrorCode.PARAMS_MISMATCH, "query parameters differ from this node's federation key")
        try:
            query = he.deserialize_ct(env.encrypted_query, self.params)
        except ParamsMismatchError as exc:
            raise NodeError(ErrorCode.PARAMS_MISMATCH, str(exc)) from None
        except FrameError as exc:
            raise NodeError(ErrorCode.MALFORMED_QUERY, str(exc)) from None
        if not isinstance(query, he.CkksCiphertext) or query.level != self.params.max_level or query.size != 2:
            raise NodeError(ErrorCode.MALFORMED_QUERY, "query must be a fresh top-level CKKS ciphertext")
        errors: list = []
        items = list(scan_encrypted_vectors(self.store, self.params, errors))
        for err in errors:
            log.error("node %s skipped %s", self.node_id, err)
        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                scores = list(pool.map(lambda it: self._score(query, it), items))
        else:
            scores = [self._score(query, it) for it in items]
        elapsed = time.monotonic() - start
        log.info("node %s scored %d records in %.3fs", self.node_id, len(scores), elapsed)
        return ScoreResponse(env.request_id, scores, self.node_id, elapsed)

    def handle_fetch(self, ids: list[int]):
        try:
            return fetch_encrypted_fields(self.store, ids)
        except RecordNotFoundError as exc:
            raise NodeError(ErrorCode.NOT_FOUND, str(exc)) from None

    def dispatch(self, mtype: MsgType, rid: bytes, body: bytes) -> bytes:
        """Turn one request message into its encoded reply."""
        try:
            if mtype == MsgType.PING:
                version, _ = decode_ping(body)
                if version < 1:
                    raise NodeError(ErrorCode.UNSUPPORTED_VERSION, f"protocol version {version} unsupported")
                agreed = min(version, PROTOCOL_VERSION)
                return encode_message(MsgType.PING, rid, encode_ping(agreed, self.node_id))
            if mtype == MsgType.QUERY:
                try:
                    digest, ct = decode_query(body)
                except ProtocolError as exc:
                    raise NodeError(ErrorCode.MALFORMED_QUERY, str(exc)) from None
                resp = self.handle_query(QueryEnvelope(PROTOCOL_VERSION, digest, ct, rid))
                return encode_message(MsgType.SCORES, rid, encode_scores(resp.scores))
            if mtype == MsgType.FETCH:
                ids = decode_fetch(body)
                return encode_message(MsgType.RECORDS, rid, encode_records(self.handle_fetch(ids)))
            raise NodeError(ErrorCode.BAD_REQUEST, f"unexpected message {mtype.name}")
        except NodeError as exc:
            return encode_message(MsgType.ERROR, rid, encode_error(exc.code, str(exc)))
        except ProtocolError as exc:
            return encode_message(MsgType.ERROR, rid, encode_error(ErrorCode.BAD_REQUEST, str(exc)))
        except Exception as exc:  # keep the connection usable
            log.exception("request failed")
            return encode_message(MsgType.ERROR, rid, encode_error(ErrorCode.INTERNAL, str(exc)))


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        node: SearchNode = self.server.node
        while True:
            try:
                msg = read_message(self.request)
            except (ConnectionError, OSError):
                return
            except ProtocolError as exc:
                self.request.sendall(
                    encode_message(MsgType.ERROR, bytes(16), encode_error(ErrorCode.BAD_REQUEST, str(exc)))
                )
                return
            if msg is None:
                return
            self.request.sendall(node.dispatch(*msg))


class NodeServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, node: SearchNode, host: str = "127.0.0.1", port: int = 0):
        self.node = node
        super().__init__((host, port), _Handler)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]

    def start(self) -> "NodeServer":
        self._thread = threading.Thread(target=self.serve_forever, name=f"node-{self.node.node_id}", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


def serve(cfg: NodeConfig, block: bool = True) -> NodeServer:
    """Start a node; when ``block`` is set, run until SIGINT/SIGTERM."""
    key_reads: list[str] = []
    node = SearchNode.from_config(cfg, key_reads)
    server = NodeServer(node, cfg.host, cfg.port)
    log.info("node %s listening on %s:%d", cfg.node_id, *server.address)
    if not block:
        return server.start()
    stop = threading.Event()

    def _on_signal(signum, frame):
        stop.set()

    signal.signal(signal.SIGINT, _on_signal)
    signal.signal(signal.SIGTERM, _on_signal)
    server.start()
    print(f"listening {server.address[0]}:{server.address[1]}", flush=True)
    try:
        stop.wait()
    finally:
        server.stop()
        report = os.environ.get(INSTRUMENT_ENV)
        if report:
            Path(report).write_text(
                json.dumps({"counters": instrument.snapshot(), "key_files_read": key_reads}, indent=2)
            )
    return server
