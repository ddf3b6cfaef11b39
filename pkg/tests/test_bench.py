import json

import pytest

from hefed import bench, plotting

SMALL = dict(profile="test_small", allow_insecure=True)


@pytest.mark.parametrize("records", [25, 100])
@pytest.mark.parametrize("agencies", [1, 3])
def test_correctness_gate_matrix(records, agencies):
    reports = bench.bench_terms(records, agencies, list(bench.DEFAULT_TERMS), **SMALL)
    assert len(reports) == 5
    for r in reports:
        assert r.status == "OK", r.mismatch
        assert r.matches_plain == r.matches_encrypted
        assert r.encrypted_query_s > r.plaintext_query_s
        assert r.overhead_ratio > 1 and r.repeats >= 3


def test_empty_agency_is_valid():
    r = bench.run_bench(0, 1, "Arson", **SMALL)
    assert r.status == "OK" and r.matches_plain == r.matches_encrypted == 0


def test_same_seed_same_counts():
    a = bench.run_bench(30, 2, "Identity Theft", seed=7, **SMALL)
    b = bench.run_bench(30, 2, "Identity Theft", seed=7, **SMALL)
    assert (a.matches_plain, a.matches_encrypted) == (b.matches_plain, b.matches_encrypted)


def test_mismatch_marks_failed(monkeypatch):
    real = bench.plaintext_search

    def wrong(term, fed, vocab):
        return real(term, fed, vocab) | {("agency-1", 999)}

    monkeypatch.setattr(bench, "plaintext_search", wrong)
    r = bench.run_bench(10, 1, "Identity Theft", **SMALL)
    assert r.failed and ["agency-1", 999] in r.mismatch


def test_outputs(tmp_path):
    reports = bench.bench_terms(10, 1, ["Arson", "Identity Theft"], **SMALL)
    reports += bench.bench_terms(20, 1, ["Arson", "Identity Theft"], **SMALL)
    bench.write_json(tmp_path / "r.json", reports)
    assert len(json.loads((tmp_path / "r.json").read_text())) == 4
    bench.append_csv(tmp_path / "r.csv", reports[:2])
    bench.append_csv(tmp_path / "r.csv", reports[2:])
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].split(",") == bench.CSV_COLUMNS and len(lines) == 5
    table = bench.render_table(reports)
    assert table.count("OK") == 4
    figs = plotting.write_figures(reports, tmp_path / "figs")
    assert [f.name for f in figs] == ["bench_phases.png", "bench_scaling.png"]
    assert all(f.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n" for f in figs)


def test_single_size_has_no_scaling_plot(tmp_path):
    reports = bench.bench_terms(5, 1, ["Arson"], **SMALL)
    assert [f.name for f in plotting.write_figures(reports, tmp_path)] == ["bench_phases.png"]
