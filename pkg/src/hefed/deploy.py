"""Stand up a complete local federation: keys, encrypted stores and nodes."""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field
from pathlib import Path

from hefed import codec, fixture, he
from hefed.agency_store import FileRecordStore, ingest_record
from hefed.config import FederationConfig, save_config
from hefed.federator import AgencyEntry
from hefed.he.keys import make_rng
from hefed.keystore import Keystore
from hefed.search_node import NodeConfig, NodeServer, SearchNode


def derive_seed(seed: int | None, label: str) -> bytes | None:
    if seed is None:
        return None
    return hashlib.sha256(f"hefed:{seed}:{label}".encode()).digest()


@dataclass
class Deployment:
    config: FederationConfig
    keystore: Keystore
    plaintext: dict[str, list[codec.PlainRecord]]
    ingest_s: float = 0.0
    servers: list[NodeServer] = field(default_factory=list)

    def node_config(self, agency_id: str, port: int = 0) -> NodeConfig:
        entry = self.config.agency(agency_id)
        return NodeConfig(
            node_id=agency_id,
            store_path=entry.store_path,
            keystore_dir=self.config.keystore_dir,
            federation_key_id=self.config.federation_key_id,
            port=port,
            workers=self.config.workers,
            allow_insecure=self.config.insecure_params,
        )

    def start_nodes(self) -> list[NodeServer]:
        """Start one in-process node per agency on ephemeral ports."""
        self.stop_nodes()
        for entry in list(self.config.agencies):
            server = NodeServer(SearchNode.from_config(self.node_config(entry.agency_id))).start()
            host, port = server.address
            self.config.upsert_agency(AgencyEntry(entry.agency_id, f"{host}:{port}", entry.bfv_key_id, entry.store_path))
            self.servers.append(server)
        order = {e.agency_id: i for i, e in enumerate(sorted(self.config.agencies, key=lambda a: a.agency_id))}
        self.config.agencies.sort(key=lambda a: order[a.agency_id])
        return self.servers

    def stop_nodes(self) -> None:
        for s in self.servers:
            s.stop()
        self.servers = []

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop_nodes()


def provision(
    root: str | Path,
    n_agencies: int = 3,
    records_per_agency: int = 100,
    seed: int | None = 0,
    token: str = "authority",
    profile: str = "ckks_default",
    bfv_profile: str | None = None,
    allow_insecure: bool = False,
    records: dict[str, list[codec.PlainRecord]] | None = None,
) -> Deployment:
    """Generate keys and encrypted stores for a seeded fixture under ``root``.

    ``profile="test_small"`` selects the small ring for both schemes.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    vocab = codec.default_vocabulary()
    ckks_params = he.gen_params(profile)
    bfv_params = he.gen_params(bfv_profile or ("test_small" if profile == "test_small" else "bfv_default"),
                               scheme="bfv" if profile == "test_small" else None)
    ks = Keystore(root / "keys", authority_token=token)
    fed_id = ks.create_federation_ckks_keys(
        ckks_params, allow_insecure=allow_insecure, seed=derive_seed(seed, "federation")
    )
    fed_keys = ks.public_bundle(fed_id)
    if records is None:
        records = fixture.generate_federation(n_agencies, records_per_agency, seed or 0, vocab)
    cfg = FederationConfig(keystore_dir=str(root / "keys"), federation_key_id=fed_id, insecure_params=allow_insecure)
    (root / "stores").mkdir(exist_ok=True)
    ingest_s = 0.0
    for agency_id, rows in records.items():
        bfv_id = ks.register_agency_bfv_keys(
            agency_id, bfv_params, allow_insecure=allow_insecure, seed=derive_seed(seed, agency_id)
        )
        agency_keys = ks.public_bundle(bfv_id)
        store_path = root / "stores" / f"{agency_id}.hstr"
        store = FileRecordStore.create(store_path, agency_id, bfv_id, fed_id)
        rng = make_rng(derive_seed(seed, f"{agency_id}:encrypt"))
        start = time.monotonic()
        for rec in rows:
            ingest_record(store, rec, agency_keys, fed_keys, vocab, rng=rng)
        ingest_s += time.monotonic() - start
        cfg.upsert_agency(AgencyEntry(agency_id, "", bfv_id, str(store_path)))
    save_config(cfg, root / "hefed.json")
    cfg.path = str(root / "hefed.json")
    return Deployment(cfg, ks, records, ingest_s)
