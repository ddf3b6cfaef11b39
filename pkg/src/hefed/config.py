"""Federation config file: agencies, endpoints, key ids and query defaults.

Example::

    {
      "keystore": "keys",
      "federation_key_id": 1,
      "threshold": 0.01,
      "timeout": 120,
      "agencies": [
        {"id": "agency-1", "endpoint": "127.0.0.1:7001",
         "store": "stores/agency-1.hstr", "bfv_key_id": 2}
      ]
    }

Relative paths resolve against the config file's directory. Environment
overrides: ``HEFED_AUTHORITY_TOKEN`` supplies the authority credential and
``HEFED_ENDPOINT_<AGENCY>`` (upper-cased, ``-`` as ``_``) replaces an endpoint.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from hefed.errors import ConfigError
from hefed.federator import DEFAULT_THRESHOLD, AgencyEntry, AgencyRegistry

TOKEN_ENV = "HEFED_AUTHORITY_TOKEN"
CONFIG_ENV = "HEFED_CONFIG"
DEFAULT_CONFIG = "hefed.json"


def endpoint_env_var(agency_id: str) -> str:
    return "HEFED_ENDPOINT_" + re.sub(r"[^A-Za-z0-9]", "_", agency_id).upper()


@dataclass
class FederationConfig:
    keystore_dir: str
    federation_key_id: int | None = None
    agencies: list[AgencyEntry] = field(default_factory=list)
    threshold: float = DEFAULT_THRESHOLD
    timeout: float = 120.0
    workers: int = 1
    insecure_params: bool = False
    path: str | None = None

    def agency(self, agency_id: str) -> AgencyEntry:
        for a in self.agencies:
            if a.agency_id == agency_id:
                return a
        raise ConfigError(f"agency {agency_id!r} is not in the config")

    def upsert_agency(self, entry: AgencyEntry) -> None:
        self.agencies = [a for a in self.agencies if a.agency_id != entry.agency_id] + [entry]

    def registry(self) -> AgencyRegistry:
        if self.federation_key_id is None:
            raise ConfigError("config has no federation_key_id; run keygen --scheme ckks first")
        return AgencyRegistry(tuple(self.agencies), self.federation_key_id)

    def to_dict(self) -> dict:
        return {
            "keystore": self.keystore_dir,
            "federation_key_id": self.federation_key_id,
            "threshold": self.threshold,
            "timeout": self.timeout,
            "workers": self.workers,
            "insecure_params": self.insecure_params,
            "agencies": [
                {"id": a.agency_id, "endpoint": a.endpoint, "store": a.store_path, "bfv_key_id": a.bfv_key_id}
                for a in self.agencies
            ],
        }


def _resolve(base: Path, p: str | None) -> str | None:
    if p is None:
        return None
    path = Path(p)
    return str(path if path.is_absolute() else base / path)


def parse_config(doc: dict, base: Path = Path("."), env: dict | None = None) -> FederationConfig:
    env = os.environ if env is None else env
    try:
        agencies = []
        for a in doc.get("agencies", []):
            aid = str(a["id"])
            endpoint = env.get(endpoint_env_var(aid), a.get("endpoint", ""))
            agencies.append(AgencyEntry(aid, endpoint, int(a.get("bfv_key_id", 0)), _resolve(base, a.get("store"))))
        ids = [a.agency_id for a in agencies]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate agency id in config")
        fed = doc.get("federation_key_id")
        return FederationConfig(
            keystore_dir=_resolve(base, doc.get("keystore", "keys")),
            federation_key_id=None if fed is None else int(fed),
            agencies=agencies,
            threshold=float(doc.get("threshold", DEFAULT_THRESHOLD)),
            timeout=float(doc.get("timeout", 120.0)),
            workers=int(doc.get("workers", 1)),
            insecure_params=bool(doc.get("insecure_params", False)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad config: {exc}") from None


def load_config(path: str | Path, env: dict | None = None) -> FederationConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return replace(parse_config(doc, path.parent, env), path=str(path))


def save_config(cfg: FederationConfig, path: str | Path) -> None:
    """Write paths relative to the config's directory where possible."""
    path = Path(path)
    base = path.parent.resolve()

    def rel(p):
        if p is None:
            return None
        try:
            return str(Path(p).resolve().relative_to(base))
        except ValueError:
            return str(p)

    doc = cfg.to_dict()
    doc["keystore"] = rel(cfg.keystore_dir)
    for a in doc["agencies"]:
        a["store"] = rel(a["store"])
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(doc, indent=2) + "\n")
    os.replace(tmp, path)
