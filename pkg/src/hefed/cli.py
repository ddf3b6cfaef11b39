"""Command-line entry point: ``hefed <subcommand>``.

Exit codes: 0 success, 1 usage, 2 partial federation failure, 3 crypto or
config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from hefed import codec, fixture, he
from hefed.agency_store import FileRecordStore, ingest_record
from hefed.config import CONFIG_ENV, DEFAULT_CONFIG, TOKEN_ENV, FederationConfig, load_config, save_config
from hefed.deploy import derive_seed
from hefed.errors import ConfigError, HefedError
from hefed.federator import FILTER_FIELDS, AgencyEntry, Federator, render_json, render_text
from hefed.he.keys import make_rng
from hefed.keystore import Keystore

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL, EXIT_ERROR = 0, 1, 2, 3

log = logging.getLogger("hefed")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _filter_arg(text: str) -> tuple[str, str]:
    name, sep, value = text.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"filter must be field=value, got {text!r}")
    if name not in FILTER_FIELDS:
        raise argparse.ArgumentTypeError(f"cannot filter on {name!r}; choose from {', '.join(FILTER_FIELDS)}")
    return name, value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hefed", description="Federated search over homomorphically encrypted crime records.")
    p.add_argument("--config", default=os.environ.get(CONFIG_ENV, DEFAULT_CONFIG), help="federation config file")
    p.add_argument("--insecure-params", action="store_true", help="allow the small test_small parameter profile")
    p.add_argument("--seed", type=int, default=None, help="seed all randomness (reproducible, not secure)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    k = sub.add_parser("keygen", help="create the federation CKKS key or an agency BFV key")
    k.add_argument("--scheme", choices=["ckks", "bfv"], required=True)
    k.add_argument("--agency", help="agency id (required for bfv)")
    k.add_argument("--profile", help="parameter profile (default: ckks_default / bfv_default)")
    k.add_argument("--force", action="store_true", help="create a new key even if one exists")

    s = sub.add_parser("init-store", help="create an empty encrypted store for an agency")
    s.add_argument("--agency", required=True)
    s.add_argument("--store", help="store path (default: stores/<agency>.hstr)")

    i = sub.add_parser("ingest", help="encrypt and append plaintext records")
    i.add_argument("--agency", required=True)
    i.add_argument("--input", required=True, help="JSONL or CSV file of records")

    v = sub.add_parser("serve", help="run an agency search node")
    v.add_argument("--agency", required=True)
    v.add_argument("--listen", default="127.0.0.1:0", help="host:port")
    v.add_argument("--workers", type=int, default=None)

    q = sub.add_parser("query", help="search every agency for a crime type")
    q.add_argument("term")
    q.add_argument("--filter", action="append", type=_filter_arg, default=[], metavar="FIELD=VALUE")
    q.add_argument("--threshold", type=float, default=None)
    q.add_argument("--timeout", type=float, default=None)
    q.add_argument("--json", action="store_true", help="line-delimited JSON output")

    b = sub.add_parser("bench", help="plaintext versus encrypted latency on a seeded fixture")
    b.add_argument("--records", type=int, action="append", help="records per agency (repeatable)")
    b.add_argument("--agencies", type=int, action="append", help="number of agencies (repeatable)")
    b.add_argument("--term", action="append", help="query term (repeatable)")
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--profile", default="ckks_default")
    b.add_argument("--out", default="bench_out", help="directory for report.json and figures")
    b.add_argument("--csv", help="append one row per run to this CSV file")
    b.add_argument("--json", action="store_true", help="print the JSON report instead of the table")

    g = sub.add_parser("gen-fixture", help="write seeded plaintext records, one JSONL file per agency")
    g.add_argument("--records", type=int, required=True)
    g.add_argument("--agencies", type=int, default=3)
    g.add_argument("--out", default="fixture")
    return p


# -- helpers -----------------------------------------------------------------

def _credential() -> str | None:
    return os.environ.get(TOKEN_ENV)


def _load_or_new(path: str) -> FederationConfig:
    if Path(path).exists():
        return load_config(path)
    return FederationConfig(keystore_dir=str(Path(path).parent / "keys"), path=path)


def _store_path(cfg: FederationConfig, agency: str) -> str:
    return str(Path(cfg.path or DEFAULT_CONFIG).parent / "stores" / f"{agency}.hstr")


# -- subcommands -------------------------------------------------------------

def cmd_keygen(args, out) -> int:
    cfg = _load_or_new(args.config)
    allow = args.insecure_params or cfg.insecure_params
    ks = Keystore(cfg.keystore_dir, authority_token=_credential())
    if args.scheme == "ckks":
        if args.agency:
            raise UsageError("the CKKS key is federation-wide; drop --agency")
        params = he.gen_params(args.profile or "ckks_default")
        if params.scheme != he.Scheme.CKKS:
            raise UsageError(f"profile {args.profile!r} is not a CKKS profile")
        key_id = ks.create_federation_ckks_keys(params, force=args.force, allow_insecure=allow, seed=derive_seed(args.seed, "federation"))
        cfg.federation_key_id = key_id
        if not ks.authority_path.exists():
            print(f"warning: no authority credential set; export {TOKEN_ENV} before keygen to enable decryption", file=sys.stderr)
    else:
        if not args.agency:
            raise UsageError("keygen --scheme bfv needs --agency")
        profile = args.profile or "bfv_default"
        params = he.gen_params(profile, scheme="bfv")
        if params.scheme != he.Scheme.BFV:
            raise UsageError(f"profile {profile!r} is not a BFV profile")
        key_id = ks.register_agency_bfv_keys(
            args.agency, params, force=args.force, allow_insecure=allow, seed=derive_seed(args.seed, args.agency)
        )
        prev = next((a for a in cfg.agencies if a.agency_id == args.agency), None)
        cfg.upsert_agency(
            AgencyEntry(args.agency, prev.endpoint if prev else "", key_id, prev.store_path if prev else _store_path(cfg, args.agency))
        )
    cfg.insecure_params = allow
    save_config(cfg, args.config)
    print(f"{args.scheme} key {key_id} ({params.profile}) written to {cfg.keystore_dir}", file=out)
    return EXIT_OK


def _open_or_create_store(cfg: FederationConfig, agency: str, path: str | None = None) -> FileRecordStore:
    entry = cfg.agency(agency)
    path = path or entry.store_path or _store_path(cfg, agency)
    if Path(path).exists():
        return FileRecordStore(path)
    if cfg.federation_key_id is None:
        raise ConfigError("no federation key in config; run keygen --scheme ckks first")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    store = FileRecordStore.create(path, agency, entry.bfv_key_id, cfg.federation_key_id)
    cfg.upsert_agency(AgencyEntry(agency, entry.endpoint, entry.bfv_key_id, str(path)))
    return store


def cmd_init_store(args, out) -> int:
    cfg = load_config(args.config)
    store = _open_or_create_store(cfg, args.agency, args.store)
    save_config(cfg, args.config)
    print(f"store {store.path} holds {len(store)} records", file=out)
    return EXIT_OK


def cmd_ingest(args, out) -> int:
    cfg = load_config(args.config)
    store = _open_or_create_store(cfg, args.agency)
    save_config(cfg, args.config)
    ks = Keystore(cfg.keystore_dir)
    agency_keys = ks.public_bundle(store.bfv_key_id)
    fed_keys = ks.public_bundle(store.federation_key_id)
    allow = args.insecure_params or cfg.insecure_params
    he.require_secure(agency_keys.params, allow)
    he.require_secure(fed_keys.params, allow)
    vocab = codec.default_vocabulary()
    rng = make_rng(derive_seed(args.seed, f"{args.agency}:ingest:{len(store)}"))
    records = list(codec.read_records(args.input))
    start = time.monotonic()
    for rec in records:
        ingest_record(store, rec, agency_keys, fed_keys, vocab, rng=rng)
    print(f"ingested {len(records)} records into {store.path} in {time.monotonic() - start:.2f}s", file=out)
    return EXIT_OK


def cmd_serve(args, out) -> int:
    from hefed.search_node import NodeConfig, serve

    cfg = load_config(args.config)
    entry = cfg.agency(args.agency)
    host, _, port = args.listen.rpartition(":")
    if not port.isdigit():
        raise UsageError(f"--listen must be host:port, got {args.listen!r}")
    node_cfg = NodeConfig(
        node_id=args.agency,
        store_path=entry.store_path or _store_path(cfg, args.agency),
        keystore_dir=cfg.keystore_dir,
        federation_key_id=cfg.federation_key_id,
        host=host or "127.0.0.1",
        port=int(port),
        workers=args.workers or cfg.workers,
        allow_insecure=args.insecure_params or cfg.insecure_params,
    )
    serve(node_cfg, block=True)
    return EXIT_OK


def cmd_query(args, out) -> int:
    cfg = load_config(args.config)
    ks = Keystore(cfg.keystore_dir)
    fed = Federator(
        cfg.registry(),
        ks,
        _credential(),
        threshold=cfg.threshold if args.threshold is None else args.threshold,
        timeout=cfg.timeout if args.timeout is None else args.timeout,
    )
    he.require_secure(fed.public_keys.params, args.insecure_params or cfg.insecure_params)
    rng = make_rng(derive_seed(args.seed, f"query:{args.term}")) if args.seed is not None else None
    outcome = fed.search(args.term, dict(args.filter), rng=rng)
    out.write(render_json(outcome.results) if args.json else render_text(outcome.results))
    for err in outcome.errors:
        print(f"agency {err.agency_id}: {err.code}: {err.message}", file=sys.stderr)
    log.info("query took %.3fs", outcome.timings["total"])
    return EXIT_PARTIAL if outcome.partial else EXIT_OK


def cmd_bench(args, out) -> int:
    from hefed import bench, plotting

    records = args.records or [100]
    agencies = args.agencies or [3]
    terms = args.term or list(bench.DEFAULT_TERMS[:1])
    reports = []
    for n_agencies in agencies:
        for n in records:
            log.info("bench %d records x %d agencies", n, n_agencies)
            reports += bench.bench_terms(
                n, n_agencies, terms, args.repeats, args.seed or 0, args.profile,
                allow_insecure=args.insecure_params, workers=args.workers,
            )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    bench.write_json(outdir / "report.json", reports)
    figures = plotting.write_figures(reports, outdir)
    if args.csv:
        bench.append_csv(args.csv, reports)
    if args.json:
        out.write(json.dumps([r.to_dict() for r in reports], indent=2) + "\n")
    else:
        print(bench.render_table(reports), file=out)
        print(f"report: {outdir / 'report.json'}; figures: {', '.join(str(f) for f in figures)}", file=out)
    return EXIT_ERROR if any(r.failed for r in reports) else EXIT_OK


def cmd_gen_fixture(args, out) -> int:
    if args.records < 0 or args.agencies < 1:
        raise UsageError("--records must be >= 0 and --agencies >= 1")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    fed = fixture.generate_federation(args.agencies, args.records, args.seed or 0)
    for agency_id, rows in fed.items():
        codec.write_records(outdir / f"{agency_id}.jsonl", rows)
        print(f"{outdir / f'{agency_id}.jsonl'}: {len(rows)} records", file=out)
    return EXIT_OK


COMMANDS = {
    "keygen": cmd_keygen,
    "init-store": cmd_init_store,
    "ingest": cmd_ingest,
    "serve": cmd_serve,
    "query": cmd_query,
    "bench": cmd_bench,
    "gen-fixture": cmd_gen_fixture,
}


def run(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"hefed: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"hefed: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HefedError, OSError) as exc:
        print(f"hefed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())
