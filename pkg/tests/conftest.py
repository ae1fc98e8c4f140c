import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import repogen  # noqa: E402
from wiaszz import open_repository  # noqa: E402


@pytest.fixture(scope="session")
def fixture_root(tmp_path_factory):
    return tmp_path_factory.mktemp("fixtures")


def _fixture(name, root):
    return repogen.BUILDERS[name](root / name)


@pytest.fixture(scope="session")
def wi_layout(fixture_root):
    return _fixture("wi_layout", fixture_root)


@pytest.fixture(scope="session")
def blame_layout(fixture_root):
    return _fixture("blame_layout", fixture_root)


@pytest.fixture(scope="session")
def insertion_fix(fixture_root):
    return _fixture("insertion_fix", fixture_root)


@pytest.fixture(scope="session")
def no_overlap(fixture_root):
    return _fixture("no_overlap", fixture_root)


@pytest.fixture(scope="session")
def misc(fixture_root):
    return _fixture("misc", fixture_root)


@pytest.fixture
def repo_of():
    return lambda fx: open_repository(fx.path)


@pytest.fixture(scope="session")
def partial(fixture_root):
    return _fixture("partial", fixture_root)
