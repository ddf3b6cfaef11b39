"""Process-wide counters used to audit which cryptographic paths ran."""

import threading
from collections import Counter

_lock = threading.Lock()
_counts: Counter = Counter()


def bump(name: str) -> None:
    with _lock:
        _counts[name] += 1


def snapshot() -> dict:
    with _lock:
        return dict(_counts)


def reset() -> None:
    with _lock:
        _counts.clear()
