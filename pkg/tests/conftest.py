import json
from pathlib import Path

import numpy as np
import pytest

FROZEN = Path(__file__).parent / "oracles" / "frozen.json"


@pytest.fixture(scope="session")
def frozen():
    """Reference values computed without compgrad (see oracles/freeze.py)."""
    return json.loads(FROZEN.read_text())


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path, monkeypatch):
    # never read or write the user's oracle cache from tests
    monkeypatch.setenv("COMPGRAD_CACHE", str(tmp_path / "cache"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
