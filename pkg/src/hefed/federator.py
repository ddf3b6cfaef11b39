"""Query client and decryption authority for the federation."""

from __future__ import annotations

import concurrent.futures as cf
import json
import logging
import socket
import time
import uuid
from dataclasses import asdict, dataclass, field

import numpy as np

from hefed import codec, he
from hefed.agency_store import EncryptedRecord, decrypt_record
from hefed.client import NodeClient
from hefed.errors import ConfigError, HefedError
from hefed.keystore import Keystore
from hefed.protocol import PROTOCOL_VERSION, ErrorCode, QueryEnvelope, RemoteError, ScoreResponse

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.01
FILTER_FIELDS = ("location", "date", "criminal_name")


@dataclass(frozen=True)
class AgencyEntry:
    agency_id: str
    endpoint: str
    bfv_key_id: int
    store_path: str | None = None


@dataclass(frozen=True)
class AgencyRegistry:
    agencies: tuple[AgencyEntry, ...]
    federation_ckks_key_id: int

    def __post_init__(self):
        ids = [a.agency_id for a in self.agencies]
        if not ids:
            raise ConfigError("registry needs at least one agency")
        if len(set(ids)) != len(ids):
            raise ConfigError("agency ids must be unique")

    def get(self, agency_id: str) -> AgencyEntry:
        for a in self.agencies:
            if a.agency_id == agency_id:
                return a
        raise ConfigError(f"unknown agency {agency_id!r}")


@dataclass(frozen=True)
class AgencyError:
    agency_id: str
    code: str
    message: str


@dataclass(frozen=True)
class ScoredMatch:
    agency_id: str
    record_id: int
    score: float


@dataclass(frozen=True)
class ResultRecord:
    agency_id: str
    record_id: int
    score: float
    crime_label: str | None
    location: str
    description: str
    date: str
    time: str
    criminal_name: str

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DispatchResult:
    responses: dict[str, ScoreResponse] = field(default_factory=dict)
    errors: list[AgencyError] = field(default_factory=list)


# -- query construction ------------------------------------------------------

def build_query(term: str, vocab: codec.CrimeVocabulary, federation_keys: he.KeyBundle, rng=None) -> QueryEnvelope:
    """One-hot encode the term and encrypt it under the federation key."""
    params = federation_keys.params
    vec = codec.encode_search_term(term, vocab)
    ct = he.ckks_encrypt(federation_keys.public_key, params, vec, params.scale, rng=rng)
    return QueryEnvelope(PROTOCOL_VERSION, params.digest, he.serialize_ct(ct), uuid.uuid4().bytes)


# -- fan-out -----------------------------------------------------------------

def _query_one(entry: AgencyEntry, env: QueryEnvelope, timeout: float) -> ScoreResponse:
    with NodeClient(entry.endpoint, timeout) as client:
        resp = client.query(env)
    resp.node_id = entry.agency_id
    return resp


def _classify(exc: BaseException) -> tuple[str, str]:
    if isinstance(exc, RemoteError):
        code = exc.code.name if isinstance(exc.code, ErrorCode) else str(exc.code)
        return code, exc.message
    if isinstance(exc, (socket.timeout, TimeoutError)):
        return "TIMEOUT", str(exc) or "timed out"
    if isinstance(exc, (ConnectionError, OSError)):
        return "CONNECT_FAIL", str(exc)
    return "ERROR", str(exc)


def dispatch(env: QueryEnvelope, registry: AgencyRegistry, timeout: float = 120.0) -> DispatchResult:
    """Send the query to every agency at once; failures become per-agency errors."""
    result = DispatchResult()
    pool = cf.ThreadPoolExecutor(max_workers=len(registry.agencies))
    futures = {pool.submit(_query_one, a, env, timeout): a for a in registry.agencies}
    done, pending = cf.wait(futures, timeout=timeout)
    for fut in done:
        agency = futures[fut]
        exc = fut.exception()
        if exc is None:
            result.responses[agency.agency_id] = fut.result()
        else:
            code, msg = _classify(exc)
            result.errors.append(AgencyError(agency.agency_id, code, msg))
    for fut in pending:
        agency = futures[fut]
        fut.cancel()
        result.errors.append(AgencyError(agency.agency_id, "TIMEOUT", f"no reply within {timeout}s"))
    pool.shutdown(wait=False, cancel_futures=True)
    result.errors.sort(key=lambda e: e.agency_id)
    return result


# -- authority side ----------------------------------------------------------

def decrypt_score(federation_keys: he.KeyBundle, blob: bytes) -> float:
    params = federation_keys.params
    ct = he.deserialize_ct(blob, params)
    return float(he.ckks_decrypt(federation_keys.secret_key, params, ct, 1)[0])


def resolve_matches(
    responses: dict[str, ScoreResponse],
    federation_keys: he.KeyBundle,
    threshold: float = DEFAULT_THRESHOLD,
    errors: list | None = None,
    all_scores: dict | None = None,
) -> list[ScoredMatch]:
    """Decrypt slot 0 of every score and keep those strictly above the threshold."""
    if federation_keys.secret_key is None:
        raise HefedError("resolving matches needs the federation secret key")
    matches = []
    for agency_id, resp in responses.items():
        for rid, blob in resp.scores:
            try:
                score = decrypt_score(federation_keys, blob)
            except HefedError as exc:
                if errors is not None:
                    errors.append(AgencyError(agency_id, "UNDECRYPTABLE", f"record {rid}: {exc}"))
                continue
            if all_scores is not None:
                all_scores[(agency_id, rid)] = score
            if score > threshold:
                matches.append(ScoredMatch(agency_id, int(rid), score))
    matches.sort(key=lambda m: (-m.score, m.agency_id, m.record_id))
    return matches


def decrypt_rows(
    rows: list[EncryptedRecord],
    agency_id: str,
    agency_keys: he.KeyBundle,
    federation_keys: he.KeyBundle,
    vocab: codec.CrimeVocabulary,
    scores: dict[int, float] | None = None,
    keystore: Keystore | None = None,
) -> list[ResultRecord]:
    out = []
    for row in rows:
        plain = decrypt_record(row, agency_keys, federation_keys, vocab)
        if keystore is not None:
            keystore.log_event(row.encryption_key_id, "authority", "decrypt_record", agency=agency_id, record_id=row.id)
        label = codec.crime_label_from_vector(plain.pop("crime_vector"), vocab)
        out.append(
            ResultRecord(
                agency_id=agency_id,
                record_id=row.id,
                score=(scores or {}).get(row.id, float("nan")),
                crime_label=label.label if label else None,
                **plain,
            )
        )
    return out


def fetch_and_decrypt(
    matches: list[ScoredMatch],
    registry: AgencyRegistry,
    keystore: Keystore,
    credential: str | None,
    federation_keys: he.KeyBundle,
    vocab: codec.CrimeVocabulary,
    timeout: float = 120.0,
    errors: list | None = None,
) -> list[ResultRecord]:
    """Fetch matched rows per agency and decrypt them with that agency's BFV key."""
    if not matches:
        return []
    by_agency: dict[str, dict[int, float]] = {}
    for m in matches:
        by_agency.setdefault(m.agency_id, {})[m.record_id] = m.score
    results = []
    for agency_id, scores in by_agency.items():
        entry = registry.get(agency_id)
        try:
            with NodeClient(entry.endpoint, timeout) as client:
                rows = client.fetch(sorted(scores))
        except (RemoteError, OSError, HefedError) as exc:
            if errors is None:
                raise
            errors.append(AgencyError(agency_id, *_classify(exc)))
            continue
        key_ids = {r.encryption_key_id for r in rows} or {entry.bfv_key_id}
        agency_keys = {k: keystore.full_bundle(k, credential, requester=f"authority:{agency_id}") for k in key_ids}
        for row in rows:
            results.extend(
                decrypt_rows([row], agency_id, agency_keys[row.encryption_key_id], federation_keys, vocab, scores, keystore)
            )
    order = {(m.agency_id, m.record_id): i for i, m in enumerate(matches)}
    results.sort(key=lambda r: order[(r.agency_id, r.record_id)])
    return results


def post_filter(results: list[ResultRecord], filters: dict[str, str] | None) -> list[ResultRecord]:
    """Keep results whose fields equal every filter value, ignoring case."""
    filters = filters or {}
    for name in filters:
        if name not in FILTER_FIELDS:
            raise ValueError(f"cannot filter on {name!r}; choose from {', '.join(FILTER_FIELDS)}")
    want = {k: v.lower() for k, v in filters.items()}
    return [r for r in results if all(getattr(r, k).lower() == v for k, v in want.items())]


# -- plaintext reference -----------------------------------------------------

def plaintext_search(
    term: str, federation: dict[str, list[codec.PlainRecord]], vocab: codec.CrimeVocabulary
) -> set[tuple[str, int]]:
    """Linear scan with the same equality/containment rule, over plaintext rows."""
    q = codec.encode_search_term(term, vocab)
    hits = set()
    for agency_id, rows in federation.items():
        for i, rec in enumerate(rows, 1):
            if float(np.dot(q, codec.vectorize_crime_type(rec.crime_type, vocab))) > DEFAULT_THRESHOLD:
                hits.add((agency_id, i))
    return hits


# -- rendering ---------------------------------------------------------------

_TEXT_FIELDS = (
    ("Agency", "agency_id"),
    ("Record ID", "record_id"),
    ("Crime Type", "crime_label"),
    ("Score", "score"),
    ("Location", "location"),
    ("Description", "description"),
    ("Date", "date"),
    ("Time", "time"),
    ("Criminal Name", "criminal_name"),
)


def render_text(results: list[ResultRecord]) -> str:
    lines = ["====="]
    for r in results:
        for label, attr in _TEXT_FIELDS:
            value = getattr(r, attr)
            if attr == "score":
                value = f"{value:.6f}"
            lines.append(f"{label}: {value if value is not None else 'Unknown'}")
        lines.append("=====")
    return "\n".join(lines) + "\n"


def render_json(results: list[ResultRecord]) -> str:
    return "".join(json.dumps(r.to_dict()) + "\n" for r in results)


# -- orchestration -----------------------------------------------------------

@dataclass
class SearchOutcome:
    term: str
    results: list[ResultRecord]
    matches: list[ScoredMatch]
    errors: list[AgencyError]
    timings: dict[str, float]
    scores: dict = field(default_factory=dict)

    @property
    def partial(self) -> bool:
        return bool(self.errors)


class Federator:
    """Client plus decryption authority, bound to a registry and keystore."""

    def __init__(
        self,
        registry: AgencyRegistry,
        keystore: Keystore,
        credential: str | None,
        vocab: codec.CrimeVocabulary | None = None,
        threshold: float = DEFAULT_THRESHOLD,
        timeout: float = 120.0,
    ):
        self.registry = registry
        self.keystore = keystore
        self.credential = credential
        self.vocab = vocab or codec.default_vocabulary()
        self.threshold = threshold
        self.timeout = timeout
        self._public = keystore.public_bundle(registry.federation_ckks_key_id)
        self._full: he.KeyBundle | None = None

    @property
    def public_keys(self) -> he.KeyBundle:
        return self._public

    def authority_keys(self) -> he.KeyBundle:
        if self._full is None:
            self._full = self.keystore.full_bundle(self.registry.federation_ckks_key_id, self.credential)
        return self._full

    def search(self, term: str, filters: dict[str, str] | None = None, rng=None) -> SearchOutcome:
        post_filter([], filters)  # reject bad filter fields before any network traffic
        authority = self.authority_keys()  # fail on a bad credential before fanning out
        t0 = time.monotonic()
        env = build_query(term, self.vocab, self._public, rng)
        t1 = time.monotonic()
        sent = dispatch(env, self.registry, self.timeout)
        t2 = time.monotonic()
        errors = list(sent.errors)
        scores: dict = {}
        matches = resolve_matches(sent.responses, authority, self.threshold, errors, scores)
        t3 = time.monotonic()
        results = fetch_and_decrypt(
            matches, self.registry, self.keystore, self.credential, authority, self.vocab, self.timeout, errors
        )
        results = post_filter(results, filters)
        t4 = time.monotonic()
        timings = {"encrypt": t1 - t0, "dispatch": t2 - t1, "resolve": t3 - t2, "fetch_decrypt": t4 - t3, "total": t4 - t0}
        return SearchOutcome(term, results, matches, errors, timings, scores)
