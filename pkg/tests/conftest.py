import pytest

from labelforge import fixtures
from labelforge.store import SnapshotStore


@pytest.fixture
def table_history():
    return fixtures.time_table_history()


@pytest.fixture
def table_store(tmp_path, table_history):
    store = SnapshotStore(tmp_path / "table")
    store.add(table_history)
    return store


@pytest.fixture(scope="session")
def handlabeled():
    return fixtures.handlabeled_2019()


@pytest.fixture(scope="session")
def amd():
    return fixtures.amd_correctness()


@pytest.fixture
def hl_store(tmp_path, handlabeled):
    _, by_date = handlabeled
    store = SnapshotStore(tmp_path / "hl")
    for snaps in by_date.values():
        store.add(snaps.values())
    return store
