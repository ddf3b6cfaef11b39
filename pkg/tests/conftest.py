import pytest

from hefed import he
from hefed.deploy import provision

SMALL_SEED = bytes(range(32))
TOKEN = "test-authority-token"


@pytest.fixture(scope="session")
def small_ckks():
    params = he.gen_params("test_small")
    return he.keygen(params, SMALL_SEED)


@pytest.fixture(scope="session")
def small_bfv():
    params = he.gen_params("test_small", scheme="bfv")
    return he.keygen(params, SMALL_SEED)


@pytest.fixture(scope="session")
def default_ckks():
    return he.keygen(he.gen_params("ckks_default"), b"\x11" * 32)


@pytest.fixture(scope="session")
def default_bfv():
    return he.keygen(he.gen_params("bfv_default"), b"\x22" * 32)


@pytest.fixture(scope="session")
def small_federation(tmp_path_factory):
    """Three agencies x 20 records at test_small, nodes running in-process."""
    root = tmp_path_factory.mktemp("small_fed")
    dep = provision(root, 3, 20, seed=5, token=TOKEN, profile="test_small", allow_insecure=True)
    dep.start_nodes()
    yield dep
    dep.stop_nodes()


# acceptance criteria report one PASS/FAIL line each at the end of the run
_CRITERIA: dict[str, str] = {}


@pytest.fixture
def criterion():
    def record(name: str, ok: bool, detail: str = ""):
        line = f"{name}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else "")
        _CRITERIA[name] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for name in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":")) if s.split()[1].rstrip(":").isdigit() else 99):
            terminalreporter.write_line(_CRITERIA[name])
