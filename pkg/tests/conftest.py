from __future__ import annotations

import numpy as np
import pytest

from app.config import get_settings
from app.model.dataset import make_dataset
from app.schemas.architecture import NetworkArchitecture


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Point logs and outputs at a temp dir and run ensembles in-process."""
    monkeypatch.setenv("LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("OUTPUT_DIR", str(tmp_path / "runs"))
    monkeypatch.setenv("WORKERS", "1")
    get_settings.cache_clear()
    yield get_settings()
    get_settings.cache_clear()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def small_shallow() -> NetworkArchitecture:
    return NetworkArchitecture.shallow(3)


@pytest.fixture
def small_data():
    return make_dataset(10)
