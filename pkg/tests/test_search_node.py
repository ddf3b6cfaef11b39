import ast
import threading
import uuid
from pathlib import Path

import pytest

from hefed import codec, he
from hefed.agency_store import MemoryRecordStore, ingest_record
from hefed.client import NodeClient
from hefed.errors import ParamsError, StoreError
from hefed.federator import build_query, decrypt_score
from hefed.protocol import (
    ErrorCode,
    MsgType,
    QueryEnvelope,
    RemoteError,
    decode_error,
    decode_message,
    encode_fetch,
    encode_query,
)
from hefed.search_node import NodeConfig, NodeServer, SearchNode
from nodeproc import NodeProcess

VOCAB = codec.default_vocabulary()
RID = bytes(16)


@pytest.fixture(scope="module")
def node(small_ckks, small_bfv):
    store = MemoryRecordStore("agency-x", 2, 1)
    for crime in ["Arson", "Identity Theft", "Credit Card Fraud", "Parking"]:
        ingest_record(store, codec.PlainRecord(crime, "Reno", "d", "t", "x", "y"), small_bfv, small_ckks, VOCAB)
    return SearchNode("agency-x", store, small_ckks.public_only())


def error_of(reply):
    mtype, _, body = decode_message(reply)
    assert mtype == MsgType.ERROR
    return decode_error(body)


def test_scores_match_plaintext(node, small_ckks):
    for term, expected in [("Arson", [1, 0, 0, 0]), ("Fraud", [0, 0, 1, 0]), ("Parking", [0, 0, 0, 0])]:
        resp = node.handle_query(build_query(term, VOCAB, small_ckks))
        assert [rid for rid, _ in resp.scores] == [1, 2, 3, 4]
        got = [decrypt_score(small_ckks, blob) for _, blob in resp.scores]
        assert all(abs(g - e) < 1e-3 for g, e in zip(got, expected))


def test_node_holds_no_secret(node):
    assert node.keys.secret_key is None


def test_params_mismatch(node, small_ckks):
    env = build_query("Arson", VOCAB, small_ckks)
    reply = node.dispatch(MsgType.QUERY, RID, encode_query(bytes(32), env.encrypted_query))
    assert error_of(reply)[0] == ErrorCode.PARAMS_MISMATCH


def test_malformed_query(node, small_ckks):
    digest = small_ckks.params.digest
    assert error_of(node.dispatch(MsgType.QUERY, RID, encode_query(digest, b"junk")))[0] == ErrorCode.MALFORMED_QUERY
    assert error_of(node.dispatch(MsgType.QUERY, RID, b"\x01"))[0] == ErrorCode.MALFORMED_QUERY
    # a ciphertext below the top level is refused
    ct = he.ckks_encrypt(small_ckks.public_key, small_ckks.params, [1.0])
    low = he.ckks_multiply(small_ckks.params, ct, ct, small_ckks.relin_key)
    reply = node.dispatch(MsgType.QUERY, RID, encode_query(digest, he.serialize_ct(low)))
    assert error_of(reply)[0] == ErrorCode.MALFORMED_QUERY


def test_fetch_not_found(node):
    assert error_of(node.dispatch(MsgType.FETCH, RID, encode_fetch([99])))[0] == ErrorCode.NOT_FOUND


def test_unexpected_message(node):
    assert error_of(node.dispatch(MsgType.SCORES, RID, b""))[0] == ErrorCode.BAD_REQUEST


def test_server_ping_query_fetch_over_tcp(node, small_ckks):
    server = NodeServer(node).start()
    try:
        endpoint = "%s:%d" % server.address
        with NodeClient(endpoint, 30) as c:
            assert c.ping() == (1, "agency-x")
            resp = c.query(build_query("Identity Theft", VOCAB, small_ckks))
            assert len(resp.scores) == 4 and resp.elapsed > 0
            rows = c.fetch([2, 4])
            assert [r.id for r in rows] == [2, 4]
            with pytest.raises(RemoteError) as exc:
                c.fetch([7])
            assert exc.value.code == ErrorCode.NOT_FOUND
            assert c.ping()[1] == "agency-x"  # connection survives an error reply
    finally:
        server.stop()


def test_concurrent_queries_are_independent(node, small_ckks):
    server = NodeServer(node).start()
    endpoint = "%s:%d" % server.address
    terms = ["Arson", "Identity Theft", "Fraud", "Parking"] * 2
    results = {}

    def run(i, term):
        env = build_query(term, VOCAB, small_ckks)
        with NodeClient(endpoint, 60) as c:
            resp = c.query(env)
        assert resp.request_id == env.request_id
        results[i] = [round(decrypt_score(small_ckks, b)) for _, b in resp.scores]

    try:
        threads = [threading.Thread(target=run, args=(i, t)) for i, t in enumerate(terms)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    finally:
        server.stop()
    expected = {"Arson": [1, 0, 0, 0], "Identity Theft": [0, 1, 0, 0], "Fraud": [0, 0, 1, 0], "Parking": [0, 0, 0, 0]}
    assert results == {i: expected[t] for i, t in enumerate(terms)}


def test_parallel_workers_same_scores(node, small_ckks):
    par = SearchNode("p", node.store, small_ckks.public_only(), workers=3)
    env = build_query("Fraud", VOCAB, small_ckks)
    a = [round(decrypt_score(small_ckks, b), 3) for _, b in node.handle_query(env).scores]
    b = [round(decrypt_score(small_ckks, b), 3) for _, b in par.handle_query(env).scores]
    assert a == b


def test_from_config_errors(tmp_path, small_federation):
    cfg = small_federation.node_config("agency-1")
    missing = NodeConfig("a", str(tmp_path / "none.hstr"), cfg.keystore_dir, cfg.federation_key_id)
    with pytest.raises(StoreError, match="none.hstr"):
        SearchNode.from_config(missing)
    cfg.allow_insecure = False
    with pytest.raises(ParamsError):
        SearchNode.from_config(cfg)


def test_source_never_touches_secret_material():
    src = Path(__import__("hefed.search_node").search_node.__file__).read_text()
    tree = ast.parse(src)
    names = {n.attr for n in ast.walk(tree) if isinstance(n, ast.Attribute)}
    names |= {n.id for n in ast.walk(tree) if isinstance(n, ast.Name)}
    forbidden = {"ckks_decrypt", "bfv_decrypt", "fetch_secret", "full_bundle", "secret_key", "decrypt_record"}
    assert not names & forbidden


def test_instrumented_node_process(small_federation, tmp_path):
    dep = small_federation
    report = tmp_path / "instrument.json"
    node = NodeProcess(dep.config.path, "agency-1", report)
    try:
        keys = dep.keystore.public_bundle(dep.config.federation_key_id)
        with NodeClient(node.endpoint, 60) as c:
            resp = c.query(build_query("Identity Theft", VOCAB, keys))
            c.fetch([r for r, _ in resp.scores][:3])
        assert len(resp.scores) == 20
    finally:
        assert node.stop() == 0
    data = node.report()
    assert data["counters"].get("decrypt", 0) == 0
    assert data["counters"].get("secret_key_load", 0) == 0
    assert data["key_files_read"] and not any(p.endswith("secret.hef") for p in data["key_files_read"])


def test_query_envelope_request_id_roundtrip(node, small_ckks):
    env = build_query("Arson", VOCAB, small_ckks)
    rid = uuid.uuid4().bytes
    resp = node.handle_query(QueryEnvelope(1, env.federation_params_digest, env.encrypted_query, rid))
    assert resp.request_id == rid and resp.node_id == "agency-x"
