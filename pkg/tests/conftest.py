import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from causalgames.cli import resolve_game


@pytest.fixture(scope="session")
def job_market():
    return resolve_game("job_market")


@pytest.fixture(scope="session")
def effortville():
    return resolve_game("effortville")


@pytest.fixture(scope="session")
def prisoners():
    return resolve_game("prisoners_dilemma")


@pytest.fixture(scope="session")
def stackelberg():
    return resolve_game("stackelberg")
