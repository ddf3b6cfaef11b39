"""Deterministic synthetic crime reports shaped like a small agency table."""

from __future__ import annotations

import random

from hefed.codec import CrimeVocabulary, PlainRecord, default_vocabulary

ANCHOR_TERM = "Identity Theft"

# (row id, location, description, date, time, criminal name) for agency 1
_ANCHOR_ROWS = [
    (1, "Portland", "Bank account compromised through phishing email", "2024-02-23", "14:35", "Unknown"),
    (14, "Detroit", "Mail stolen from multiple residences", "2024-02-15", "06:50", "Unknown"),
    (35, "Jacksonville", "Victim's information used to file tax return", "2024-02-22", "Unknown", "Unknown"),
    (57, "Orlando", "Hotel rooms booked with stolen information", "2024-01-14", "18:30", "Unknown"),
    (71, "Scottsdale", "Medical services billed under victim's name", "2024-02-19", "11:25", "Unknown"),
    (83, "Santa Ana", "Multiple accounts opened using stolen identity", "2024-02-28", "Unknown", "Unknown"),
]
# a second Portland identity-theft report lives in agency 2
_SECOND_AGENCY_ROW = (9, "Portland", "Credit profile opened with forged documents", "2024-01-30", "09:10", "Marcus Hale")

CITIES = [
    "Portland", "Detroit", "Jacksonville", "Orlando", "Scottsdale", "Santa Ana", "Seattle",
    "Austin", "Denver", "Phoenix", "Boston", "Chicago", "Atlanta", "Miami", "Tucson",
    "Omaha", "Reno", "Boise", "Tampa", "Dallas", "Fresno", "Spokane", "Eugene", "Salem",
]
FIRST = ["James", "Maria", "Robert", "Linda", "David", "Ana", "Kevin", "Grace", "Omar", "Lucy", "Tyler", "Nina"]
LAST = ["Smith", "Garcia", "Nguyen", "Brown", "Lee", "Walker", "Reyes", "Patel", "Kim", "Lopez", "Hill", "Ward"]
DETAILS = [
    "reported by a neighbor after midnight",
    "suspect fled before officers arrived",
    "victim filed report the following day",
    "captured on a nearby security camera",
    "incident occurred near a transit station",
    "witness provided a partial description",
    "second report at this address this month",
    "evidence collected and sent to the lab",
]


def _date(rng: random.Random) -> str:
    month = rng.choice([1, 2])
    return f"2024-{month:02d}-{rng.randint(1, 28):02d}"


def _time(rng: random.Random) -> str:
    if rng.random() < 0.25:
        return "Unknown"
    return f"{rng.randint(0, 23):02d}:{rng.choice(range(0, 60, 5)):02d}"


def _name(rng: random.Random) -> str:
    if rng.random() < 0.45:
        return "Unknown"
    return f"{rng.choice(FIRST)} {rng.choice(LAST)}"


def _random_record(rng: random.Random, vocab: CrimeVocabulary) -> PlainRecord:
    crime = rng.choice([e for e in vocab.entries if e != ANCHOR_TERM])
    return PlainRecord(
        crime_type=crime,
        location=rng.choice(CITIES),
        description=f"{crime} {rng.choice(DETAILS)}",
        date=_date(rng),
        time=_time(rng),
        criminal_name=_name(rng),
    )


def agency_id_for(index: int) -> str:
    return f"agency-{index + 1}"


def generate_agency_records(
    agency_index: int, n_records: int, seed: int = 0, vocab: CrimeVocabulary | None = None
) -> list[PlainRecord]:
    """Records for one agency; agency 1 carries exactly six identity-theft rows."""
    vocab = vocab or default_vocabulary()
    rng = random.Random(f"{seed}:{agency_index}")
    rows = [_random_record(rng, vocab) for _ in range(n_records)]
    pinned = []
    if agency_index == 0:
        pinned = _ANCHOR_ROWS
    elif agency_index == 1:
        pinned = [_SECOND_AGENCY_ROW]
    for rid, loc, desc, date, time, name in pinned:
        if rid <= n_records:
            rows[rid - 1] = PlainRecord(ANCHOR_TERM, loc, desc, date, time, name)
    return rows


def generate_federation(
    n_agencies: int, n_records: int, seed: int = 0, vocab: CrimeVocabulary | None = None
) -> dict[str, list[PlainRecord]]:
    return {agency_id_for(i): generate_agency_records(i, n_records, seed, vocab) for i in range(n_agencies)}
