import logging
import string

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hefed import codec
from hefed.errors import EncodingError

VOCAB = codec.default_vocabulary()
printable = st.text(alphabet=string.printable.replace("\x0b", "").replace("\x0c", ""), max_size=45)


def test_vocabulary_shape():
    assert len(VOCAB) == 72
    assert VOCAB.entries[0] == "Identity Theft"
    assert VOCAB.entries[-1] == "Illegal Drug Manufacturing"
    assert len(set(VOCAB.normalized)) == 72
    assert VOCAB.version == "v1" and len(VOCAB.digest) == 64


def test_vocabulary_digest_checked(tmp_path):
    f = tmp_path / "vocab.v2.txt"
    f.write_text("A\nB\n")
    with pytest.raises(EncodingError, match="sidecar"):
        codec.load_vocabulary(f)
    with pytest.raises(EncodingError, match="mismatch"):
        codec.load_vocabulary(f, expected_digest="0" * 64)
    import hashlib

    v = codec.load_vocabulary(f, expected_digest=hashlib.sha256(b"A\nB\n").hexdigest())
    assert v.entries == ("A", "B")


def test_duplicate_entries_rejected(tmp_path):
    import hashlib

    f = tmp_path / "dup.txt"
    f.write_bytes(b"Arson\narson\n")
    with pytest.raises(EncodingError, match="distinct"):
        codec.load_vocabulary(f, expected_digest=hashlib.sha256(b"Arson\narson\n").hexdigest())


def test_one_hot_query():
    v = codec.encode_search_term("Identity Theft", VOCAB)
    assert v.shape == (72,) and v[0] == 1 and v.sum() == 1
    assert np.array_equal(codec.encode_search_term("identity theft", VOCAB), v)


def test_unknown_term_warns_and_is_zero(caplog):
    with caplog.at_level(logging.WARNING):
        v = codec.encode_search_term("Jaywalking", VOCAB)
    assert not v.any()
    assert "not in the vocabulary" in caplog.text


def test_containment_rule():
    v = codec.vectorize_crime_type("Credit Card Fraud", VOCAB)
    names = {VOCAB.entries[i] for i in np.nonzero(v)[0]}
    assert names == {"Fraud", "Credit Card Fraud"}
    assert codec.vectorize_crime_type("Parking", VOCAB).sum() == 0


@pytest.mark.parametrize("term", VOCAB.entries)
def test_every_entry_matches_itself(term):
    q = codec.encode_search_term(term, VOCAB)
    assert float(q @ codec.vectorize_crime_type(term, VOCAB)) == 1.0


def test_label_prefers_most_specific():
    m = codec.crime_label_from_vector(codec.vectorize_crime_type("Credit Card Fraud", VOCAB), VOCAB)
    assert m.label == "Credit Card Fraud" and m.multi
    m = codec.crime_label_from_vector(codec.vectorize_crime_type("Arson", VOCAB) * 0.999, VOCAB)
    assert m.label == "Arson" and not m.multi
    assert codec.crime_label_from_vector(np.full(72, 0.2), VOCAB) is None


def test_truncation_to_30():
    text = "Bank account compromised through phishing email"
    assert len(text) == 47
    assert codec.ascii_vec_to_string(codec.string_to_ascii_vec(text)) == "Bank account compromised throu"


@given(printable)
def test_ascii_roundtrip(text):
    vec = codec.string_to_ascii_vec(text)
    assert len(vec) == 30
    assert codec.ascii_vec_to_string(vec) == text[:30]


@pytest.mark.parametrize("bad,offset", [("café", 3), ("a\0b", 1)])
def test_non_ascii_rejected_with_offset(bad, offset):
    with pytest.raises(EncodingError, match=f"'location'.*offset {offset}"):
        codec.string_to_ascii_vec(bad, field="location")


def test_decode_rejects_non_ascii_codes():
    with pytest.raises(EncodingError):
        codec.ascii_vec_to_string([65, 200])


ROW = {
    "crime_type": "Arson",
    "location": "Reno",
    "description": "Shed fire",
    "date": "2024-01-01",
    "time": "Unknown",
    "criminal_name": "Unknown",
}


def test_make_record_validation():
    assert codec.make_record(ROW).location == "Reno"
    with pytest.raises(EncodingError, match="missing"):
        codec.make_record({k: v for k, v in ROW.items() if k != "date"})
    with pytest.raises(EncodingError, match="unexpected"):
        codec.make_record({**ROW, "extra": "x"})
    with pytest.raises(EncodingError, match="string"):
        codec.make_record({**ROW, "date": 5})


def test_records_jsonl_and_csv(tmp_path):
    rec = codec.make_record(ROW)
    j = tmp_path / "r.jsonl"
    codec.write_records(j, [rec, rec])
    assert list(codec.read_records(j)) == [rec, rec]
    c = tmp_path / "r.csv"
    c.write_text(",".join(codec.RECORD_FIELDS) + "\n" + ",".join(ROW[k] for k in codec.RECORD_FIELDS) + "\n")
    assert list(codec.read_records(c)) == [rec]
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{nope\n")
    with pytest.raises(EncodingError, match="bad.jsonl:1"):
        list(codec.read_records(bad))


def test_bfv_fields_are_five():
    assert codec.BFV_FIELDS == ("location", "description", "date", "time", "criminal_name")
