"""Vocabulary handling and plaintext <-> vector encodings."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from hefed.errors import EncodingError

log = logging.getLogger(__name__)

FIELD_LENGTH = 30
VOCAB_FILE = "crime_vocabulary.v1.txt"


@dataclass(frozen=True)
class CrimeVocabulary:
    entries: tuple[str, ...]
    version: str = "v1"
    digest: str = ""

    @property
    def normalized(self) -> tuple[str, ...]:
        return tuple(e.lower() for e in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def index(self, term: str) -> int | None:
        t = term.lower()
        for i, e in enumerate(self.normalized):
            if e == t:
                return i
        return None


def load_vocabulary(path: str | Path | None = None, expected_digest: str | None = None) -> CrimeVocabulary:
    """Load the ordered vocabulary and check it against its sidecar digest."""
    if path is None:
        pkg = resources.files("hefed.data")
        raw = pkg.joinpath(VOCAB_FILE).read_bytes()
        sidecar = pkg.joinpath(VOCAB_FILE + ".sha256").read_text()
        version = VOCAB_FILE.split(".")[1]
    else:
        path = Path(path)
        raw = path.read_bytes()
        side = path.with_name(path.name + ".sha256")
        sidecar = side.read_text() if side.exists() else None
        version = path.stem.split(".")[-1] if "." in path.stem else "custom"
    digest = hashlib.sha256(raw).hexdigest()
    want = expected_digest or (sidecar.split()[0] if sidecar else None)
    if want is None:
        raise EncodingError(f"vocabulary {path} has no digest sidecar")
    if digest != want:
        raise EncodingError(f"vocabulary digest mismatch: {digest} != {want}")
    entries = tuple(line.strip() for line in raw.decode("utf-8").splitlines() if line.strip())
    if len({e.lower() for e in entries}) != len(entries):
        raise EncodingError("vocabulary entries are not distinct")
    return CrimeVocabulary(entries, version, digest)


_DEFAULT: CrimeVocabulary | None = None


def default_vocabulary() -> CrimeVocabulary:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_vocabulary()
    return _DEFAULT


def encode_search_term(term: str, vocab: CrimeVocabulary) -> np.ndarray:
    """One-hot query vector by case-insensitive equality; all zeros if unknown."""
    t = term.lower()
    vec = np.array([1.0 if t == e else 0.0 for e in vocab.normalized])
    if not vec.any():
        log.warning("search term %r is not in the vocabulary; it will match nothing", term)
    return vec


def vectorize_crime_type(crime_type: str, vocab: CrimeVocabulary) -> np.ndarray:
    """Record vector: slot i is set when entry i occurs inside the crime type."""
    c = crime_type.lower()
    return np.array([1.0 if e in c else 0.0 for e in vocab.normalized])


def check_ascii(text: str, field: str = "value") -> None:
    for i, ch in enumerate(text):
        if ord(ch) >= 128:
            raise EncodingError(f"field {field!r}: non-ASCII character {ch!r} at offset {i}")
        if ch == "\0":
            raise EncodingError(f"field {field!r}: NUL character at offset {i}")


def string_to_ascii_vec(text: str, max_length: int = FIELD_LENGTH, field: str = "value") -> list[int]:
    check_ascii(text, field)
    codes = [ord(c) for c in text[:max_length]]
    return codes + [0] * (max_length - len(codes))


def ascii_vec_to_string(vec) -> str:
    out = []
    for i, v in enumerate(vec):
        v = int(v)
        if v == 0:
            break
        if not 0 < v < 128:
            raise EncodingError(f"code {v} at offset {i} is not ASCII")
        out.append(chr(v))
    return "".join(out)


class LabelMatch(NamedTuple):
    label: str
    score: float
    multi: bool


def crime_label_from_vector(vec, vocab: CrimeVocabulary) -> LabelMatch | None:
    """Binarize at 0.5 and name the most specific (longest) set entry.

    A record of "Credit Card Fraud" also sets "Fraud"; the longer entry wins.
    """
    v = np.asarray(vec, dtype=float)[: len(vocab)]
    hits = np.nonzero(v > 0.5)[0]
    if hits.size == 0:
        return None
    i = int(max(hits, key=lambda h: (len(vocab.entries[h]), -h)))
    return LabelMatch(vocab.entries[i], float(v[i]), hits.size > 1)


@dataclass(frozen=True)
class PlainRecord:
    crime_type: str
    location: str
    description: str
    date: str
    time: str
    criminal_name: str

    def to_dict(self) -> dict:
        return asdict(self)


RECORD_FIELDS = tuple(f.name for f in fields(PlainRecord))
BFV_FIELDS = RECORD_FIELDS[1:]


def make_record(data: dict) -> PlainRecord:
    """Validate one ingestion row: exactly the six fields, ASCII, no NUL."""
    keys = set(data)
    if keys != set(RECORD_FIELDS):
        missing = sorted(set(RECORD_FIELDS) - keys)
        extra = sorted(keys - set(RECORD_FIELDS))
        raise EncodingError(f"record fields wrong (missing {missing}, unexpected {extra})")
    for name in RECORD_FIELDS:
        if not isinstance(data[name], str):
            raise EncodingError(f"field {name!r} must be a string")
        check_ascii(data[name], name)
    return PlainRecord(**{k: data[k] for k in RECORD_FIELDS})


def read_records(path: str | Path) -> Iterator[PlainRecord]:
    """Yield records from a JSON-lines file, or CSV when the suffix is .csv."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".csv":
        for row in csv.DictReader(io.StringIO(text)):
            yield make_record(row)
        return
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EncodingError(f"{path}:{lineno}: {exc}") from None
        yield make_record(data)


def write_records(path: str | Path, records: Iterable[PlainRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict()) + "\n")
