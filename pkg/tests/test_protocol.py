import socket
import struct
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hefed import protocol as P
from hefed.agency_store import BLOB_FIELDS, EncryptedRecord
from hefed.errors import ProtocolError

GOLDEN = Path(__file__).parent / "golden"
RID = bytes(range(16))


def golden(name):
    return (GOLDEN / f"{name}.bin").read_bytes()


def prefix(mtype, body_len):
    return struct.pack("<I", 1 + 16 + body_len) + bytes([mtype]) + RID


def test_ping_golden_by_hand():
    body = struct.pack("<HH", 1, 8) + b"agency-1"
    assert golden("msg_ping") == prefix(0x01, len(body)) + body


def test_fetch_golden_by_hand():
    body = struct.pack("<I3Q", 3, 1, 14, 35)
    assert golden("msg_fetch") == prefix(0x04, len(body)) + body


def test_error_golden_by_hand():
    body = struct.pack("<H", 1) + b"params differ"
    assert golden("msg_error") == prefix(0x7F, len(body)) + body


def test_query_golden_layout():
    from hefed import he

    ct = golden("frame_ckks_ct")
    body = he.gen_params("test_small").digest + struct.pack("<Q", len(ct)) + ct
    assert golden("msg_query") == prefix(0x02, len(body)) + body


def test_scores_golden_layout():
    ct = golden("frame_ckks_ct")
    body = struct.pack("<I", 2) + struct.pack("<QQ", 1, len(ct)) + ct + struct.pack("<QQ", 2, 3) + b"xyz"
    assert golden("msg_scores") == prefix(0x03, len(body)) + body


def test_records_golden_layout():
    blobs = [b"ct", b"loc", b"desc", b"d", b"t", b"name", b"ct"]
    body = struct.pack("<IQQ", 1, 14, 2) + b"".join(struct.pack("<Q", len(b)) + b for b in blobs)
    assert golden("msg_records") == prefix(0x05, len(body)) + body


@pytest.mark.parametrize("name", ["msg_ping", "msg_query", "msg_scores", "msg_fetch", "msg_records", "msg_error"])
def test_golden_messages_roundtrip(name):
    buf = golden(name)
    mtype, rid, body = P.decode_message(buf)
    assert rid == RID
    codec = {
        P.MsgType.PING: (P.decode_ping, lambda v: P.encode_ping(*v)),
        P.MsgType.QUERY: (P.decode_query, lambda v: P.encode_query(*v)),
        P.MsgType.SCORES: (P.decode_scores, P.encode_scores),
        P.MsgType.FETCH: (P.decode_fetch, P.encode_fetch),
        P.MsgType.RECORDS: (P.decode_records, P.encode_records),
        P.MsgType.ERROR: (P.decode_error, lambda v: P.encode_error(*v)),
    }[mtype]
    assert P.encode_message(mtype, rid, codec[1](codec[0](body))) == buf


def test_six_message_types():
    assert {m.value for m in P.MsgType} == {1, 2, 3, 4, 5, 0x7F}


blob = st.binary(max_size=64)


@given(st.lists(st.tuples(st.integers(0, 2**64 - 1), blob), max_size=8))
def test_scores_roundtrip(scores):
    assert P.decode_scores(P.encode_scores(scores)) == scores


@given(st.lists(st.integers(0, 2**64 - 1), max_size=50))
def test_fetch_roundtrip(ids):
    assert P.decode_fetch(P.encode_fetch(ids)) == ids


@given(st.lists(st.tuples(st.integers(1, 2**40), st.integers(0, 2**40), st.lists(blob, min_size=7, max_size=7)), max_size=4))
def test_records_roundtrip(rows):
    recs = [EncryptedRecord(i, k, *b) for i, k, b in rows]
    assert P.decode_records(P.encode_records(recs)) == recs
    assert len(BLOB_FIELDS) == 7


@given(st.integers(0, 65535), st.text(max_size=40))
def test_ping_and_error_roundtrip(v, text):
    assert P.decode_ping(P.encode_ping(v, text)) == (v, text)
    assert P.decode_error(P.encode_error(v, text)) == (v, text)


@given(st.binary(max_size=200))
def test_decoders_never_crash_unexpectedly(junk):
    for dec in (P.decode_ping, P.decode_query, P.decode_scores, P.decode_fetch, P.decode_records):
        try:
            dec(junk)
        except ProtocolError:
            pass


def test_length_mismatch_rejected():
    buf = golden("msg_fetch")
    with pytest.raises(ProtocolError, match="length"):
        P.decode_message(buf + b"\x00")
    with pytest.raises(ProtocolError):
        P.decode_message(buf[:10])


def test_unknown_type_rejected():
    buf = bytearray(golden("msg_fetch"))
    buf[4] = 0x42
    with pytest.raises(ProtocolError, match="unknown"):
        P.decode_message(bytes(buf))


def test_trailing_body_bytes_rejected():
    with pytest.raises(ProtocolError, match="trailing"):
        P.decode_fetch(P.encode_fetch([1]) + b"\x00")


def test_request_id_length_enforced():
    with pytest.raises(ProtocolError):
        P.encode_message(P.MsgType.PING, b"short", b"")


def test_socket_read_and_eof():
    a, b = socket.socketpair()
    with a, b:
        P.send_message(a, P.MsgType.FETCH, RID, P.encode_fetch([7]))
        assert P.read_message(b) == (P.MsgType.FETCH, RID, P.encode_fetch([7]))
        a.shutdown(socket.SHUT_WR)
        assert P.read_message(b) is None


def test_remote_error_names_code():
    err = P.RemoteError(3, "record 9 not found")
    assert err.code == P.ErrorCode.NOT_FOUND
    assert "NOT_FOUND" in str(err)
