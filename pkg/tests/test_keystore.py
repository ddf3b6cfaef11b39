import json
import os
import stat
import threading

import pytest

from hefed import he
from hefed.errors import AccessDeniedError, DuplicateKeyError, KeyNotFoundError, KeystoreError, ParamsError
from hefed.keystore import FEDERATION, Keystore

SMALL = he.gen_params("test_small")
SMALL_BFV = he.gen_params("test_small", scheme="bfv")


@pytest.fixture
def ks(tmp_path):
    return Keystore(tmp_path / "keys", authority_token="tok")


def test_create_and_lookup(ks):
    fid = ks.create_federation_ckks_keys(SMALL, allow_insecure=True, seed=b"\x01" * 32)
    aid = ks.register_agency_bfv_keys("agency-1", SMALL_BFV, allow_insecure=True)
    assert (fid, aid) == (1, 2)
    assert ks.federation_key_id() == fid and ks.agency_key_id("agency-1") == aid
    recs = ks.list_keys()
    assert [r.agency_id for r in recs] == [FEDERATION, "agency-1"]
    assert ks.params(fid) == SMALL and ks.params(aid) == SMALL_BFV
    meta = json.loads((ks.root / "1" / "meta.json").read_text())
    assert meta["params_digest"] == SMALL.digest.hex()


def test_duplicate_refused_without_force(ks):
    ks.create_federation_ckks_keys(SMALL, allow_insecure=True)
    with pytest.raises(DuplicateKeyError):
        ks.create_federation_ckks_keys(SMALL, allow_insecure=True)
    assert ks.create_federation_ckks_keys(SMALL, allow_insecure=True, force=True) == 2


def test_insecure_needs_opt_in(ks):
    with pytest.raises(ParamsError):
        ks.create_federation_ckks_keys(SMALL)


def test_scheme_checked(ks):
    with pytest.raises(KeystoreError):
        ks.create_federation_ckks_keys(SMALL_BFV, allow_insecure=True)
    with pytest.raises(KeystoreError):
        ks.register_agency_bfv_keys("a", SMALL, allow_insecure=True)


def test_missing_public_key_message(ks):
    with pytest.raises(KeyNotFoundError, match=r"^No public key found with id = 99$"):
        ks.fetch_public(99)


def test_public_bundle_has_no_secret(ks):
    fid = ks.create_federation_ckks_keys(SMALL, allow_insecure=True)
    pub = ks.public_bundle(fid)
    assert pub.secret_key is None and pub.relin_key is not None and pub.galois_keys is not None


def test_secret_needs_credential_and_is_audited(ks):
    fid = ks.create_federation_ckks_keys(SMALL, allow_insecure=True)
    with pytest.raises(AccessDeniedError):
        ks.fetch_secret(fid, "wrong")
    with pytest.raises(AccessDeniedError):
        ks.fetch_secret(fid, None)
    full = ks.full_bundle(fid, "tok", requester="tester")
    assert full.secret_key is not None
    actions = [(e["action"], e["requester"]) for e in ks.audit_entries()]
    assert actions == [
        ("create", FEDERATION),
        ("fetch_secret:denied", "authority"),
        ("fetch_secret:denied", "authority"),
        ("fetch_secret", "tester"),
    ]


def test_store_without_credential_file_never_releases(tmp_path):
    ks = Keystore(tmp_path / "k")
    fid = ks.create_federation_ckks_keys(SMALL, allow_insecure=True)
    with pytest.raises(AccessDeniedError):
        ks.fetch_secret(fid, "anything")


def test_credential_persists_across_instances(ks):
    fid = ks.create_federation_ckks_keys(SMALL, allow_insecure=True)
    again = Keystore(ks.root)
    assert again.fetch_secret(fid, "tok")
    # a later token argument does not replace the stored one
    assert Keystore(ks.root, authority_token="other").fetch_secret(fid, "tok")
    with pytest.raises(KeystoreError):
        again.set_authority_token("new")
    again.set_authority_token("new", force=True)
    with pytest.raises(AccessDeniedError):
        again.fetch_secret(fid, "tok")


def test_credential_file_is_private_and_hashed(ks):
    mode = stat.S_IMODE(os.stat(ks.authority_path).st_mode)
    assert mode == 0o600
    assert "tok" not in ks.authority_path.read_text()


def test_on_read_sees_every_key_file(tmp_path):
    reads = []
    ks = Keystore(tmp_path / "k", authority_token="t", on_read=reads.append)
    fid = ks.create_federation_ckks_keys(SMALL, allow_insecure=True)
    ks.public_bundle(fid)
    assert reads and all(r.endswith("public.hef") for r in reads)
    ks.fetch_secret(fid, "t")
    assert reads[-1].endswith("secret.hef")


def test_unknown_key(ks):
    with pytest.raises(KeyNotFoundError):
        ks.fetch_secret(5, "tok")
    with pytest.raises(KeyNotFoundError):
        ks.agency_key_id("nobody")
    with pytest.raises(KeyNotFoundError):
        ks.federation_key_id()


def test_audit_log_is_whole_lines_under_threads(ks):
    def worker(i):
        for j in range(50):
            ks.log_event(i, f"t{i}", "probe", n=j, pad="x" * 300)

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    entries = ks.audit_entries()
    assert len(entries) == 400
    assert all(set(e) >= {"timestamp", "monotonic_ns", "key_id", "requester", "action"} for e in entries)
