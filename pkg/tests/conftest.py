from pathlib import Path

import pytest

from mbdiag.config import reset_settings
from mbdiag.model_core import load_model, random_model

FIXTURES = Path(__file__).resolve().parent.parent / "mbdiag" / "fixtures"


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    for name in ("MBDIAG_THREADS", "MBDIAG_LOG_LEVEL", "MBDIAG_DENOMINATOR_TOL", "MBDIAG_SECTOR_CAP"):
        monkeypatch.delenv(name, raising=False)
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def sample_model_path():
    return str(FIXTURES / "sample_model.json")


@pytest.fixture
def sample_model(sample_model_path):
    return load_model(sample_model_path)


@pytest.fixture
def one_electron_model():
    return random_model(7, 2, 2, 2, 1)


@pytest.fixture
def two_electron_model():
    return random_model(8, 2, 2, 2, 2)
