import os
import random

import pytest
from hypothesis import HealthCheck, settings

from verkledb.commitment import get_pedersen
from verkledb.storage import StorageConfig
from verkledb.trie import DBConfig, VerkleDB

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def ped():
    return get_pedersen("test", b"verkledb")


@pytest.fixture
def rng():
    return random.Random(1234)


def fast_storage(**kw) -> StorageConfig:
    kw.setdefault("sync", False)
    return StorageConfig(**kw)


@pytest.fixture
def make_db(tmp_path):
    opened = []

    def factory(name="db", **kw):
        kw.setdefault("storage", fast_storage())
        db = VerkleDB.create(str(tmp_path / name), DBConfig(**kw))
        opened.append(db)
        return db

    yield factory
    for db in opened:
        try:
            db.close(checkpoint=False)
        except Exception:
            pass


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import summary_lines

    lines = summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
