"""Plaintext versus encrypted search latency on a seeded local federation."""

from __future__ import annotations

import csv
import json
import statistics
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from hefed import codec
from hefed.agency_store import MemoryRecordStore, ingest_record
from hefed.deploy import Deployment, derive_seed, provision
from hefed.federator import Federator, plaintext_search
from hefed.fixture import ANCHOR_TERM
from hefed.he.keys import make_rng

DEFAULT_TERMS = (ANCHOR_TERM, "Burglary", "Fraud", "Robbery", "Homicide")


@dataclass
class BenchReport:
    records: int
    agencies: int
    profile: str
    term: str
    repeats: int
    workers: int
    plaintext_query_s: float
    encrypted_query_s: float
    ingest_s: float
    decrypt_s: float
    overhead_ratio: float
    matches_plain: int
    matches_encrypted: int
    status: str = "OK"
    mismatch: list = field(default_factory=list)
    phases: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.status != "OK"

    def to_dict(self) -> dict:
        return asdict(self)


CSV_COLUMNS = [
    "records", "agencies", "profile", "term", "repeats", "workers", "plaintext_query_s",
    "encrypted_query_s", "ingest_s", "decrypt_s", "overhead_ratio", "matches_plain",
    "matches_encrypted", "status",
]


def _median_time(fn, repeats: int):
    times, result = [], None
    for _ in range(repeats):
        start = time.monotonic()
        result = fn()
        times.append(time.monotonic() - start)
    return statistics.median(times), result


def _time_ingest(dep: Deployment, repeats: int, seed) -> float:
    """Median of encrypting and inserting the whole fixture into throwaway stores."""
    vocab = codec.default_vocabulary()
    fed_keys = dep.keystore.public_bundle(dep.config.federation_key_id)
    runs = [dep.ingest_s]
    for r in range(1, repeats):
        total = 0.0
        for entry in dep.config.agencies:
            agency_keys = dep.keystore.public_bundle(entry.bfv_key_id)
            store = MemoryRecordStore(entry.agency_id, entry.bfv_key_id, dep.config.federation_key_id)
            rng = make_rng(derive_seed(seed, f"{entry.agency_id}:bench:{r}"))
            start = time.monotonic()
            for rec in dep.plaintext[entry.agency_id]:
                ingest_record(store, rec, agency_keys, fed_keys, vocab, rng=rng)
            total += time.monotonic() - start
        runs.append(total)
    return statistics.median(runs)


def bench_terms(
    records_per_agency: int,
    n_agencies: int,
    terms,
    repeats: int = 3,
    seed: int = 0,
    profile: str = "ckks_default",
    allow_insecure: bool = False,
    workers: int = 1,
    workdir: str | Path | None = None,
) -> list[BenchReport]:
    """One deployment, one report per term."""
    repeats = max(3, int(repeats))
    token = "bench-authority"
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        dep = provision(tmp, n_agencies, records_per_agency, seed, token, profile, allow_insecure=allow_insecure)
        dep.config.workers = workers
        ingest_s = _time_ingest(dep, repeats, seed)
        vocab = codec.default_vocabulary()
        reports = []
        with dep:
            dep.start_nodes()
            fed = Federator(dep.config.registry(), dep.keystore, token, vocab)
            fed.search(terms[0])  # warm-up: JIT, key loading
            for term in terms:
                plain_s, plain = _median_time(lambda: plaintext_search(term, dep.plaintext, vocab), repeats)
                outcomes = [fed.search(term) for _ in range(repeats)]
                enc_s = statistics.median(o.timings["total"] for o in outcomes)
                phases = {k: statistics.median(o.timings[k] for o in outcomes) for k in outcomes[0].timings}
                got = {(r.agency_id, r.record_id) for r in outcomes[-1].results}
                diff = sorted(plain ^ got)
                if any(o.errors for o in outcomes):
                    diff += [("error", f"{e.agency_id}:{e.code}") for o in outcomes for e in o.errors]
                reports.append(
                    BenchReport(
                        records=records_per_agency,
                        agencies=n_agencies,
                        profile=profile,
                        term=term,
                        repeats=repeats,
                        workers=workers,
                        plaintext_query_s=plain_s,
                        encrypted_query_s=enc_s,
                        ingest_s=ingest_s,
                        decrypt_s=phases["fetch_decrypt"],
                        overhead_ratio=enc_s / plain_s if plain_s > 0 else float("inf"),
                        matches_plain=len(plain),
                        matches_encrypted=len(got),
                        status="FAILED" if diff else "OK",
                        mismatch=[list(x) for x in diff],
                        phases=phases,
                    )
                )
    return reports


def run_bench(records_per_agency: int, n_agencies: int, term: str = ANCHOR_TERM, **kw) -> BenchReport:
    return bench_terms(records_per_agency, n_agencies, [term], **kw)[0]


# -- output ------------------------------------------------------------------

def render_table(reports: list[BenchReport]) -> str:
    head = f"{'records':>7} {'agencies':>8} {'term':<24} {'plain_s':>10} {'enc_s':>9} {'ingest_s':>9} {'decrypt_s':>9} {'ratio':>10} {'matches':>9} status"
    lines = [head, "-" * len(head)]
    for r in reports:
        lines.append(
            f"{r.records:>7} {r.agencies:>8} {r.term[:24]:<24} {r.plaintext_query_s:>10.6f} {r.encrypted_query_s:>9.3f} "
            f"{r.ingest_s:>9.3f} {r.decrypt_s:>9.3f} {r.overhead_ratio:>10.0f} "
            f"{f'{r.matches_plain}/{r.matches_encrypted}':>9} {r.status}"
        )
        if r.mismatch:
            lines.append(f"  mismatch: {r.mismatch}")
    return "\n".join(lines)


def append_csv(path: str | Path, reports: list[BenchReport]) -> None:
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, extrasaction="ignore")
        if new:
            writer.writeheader()
        for r in reports:
            writer.writerow(r.to_dict())


def write_json(path: str | Path, reports: list[BenchReport]) -> None:
    Path(path).write_text(json.dumps([r.to_dict() for r in reports], indent=2) + "\n")
