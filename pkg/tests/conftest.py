"""Shared fixtures"""
from pathlib import Path

import numpy as np
import pytest

from lpreach.core.config import SolverConfig

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "lpreach" / "scenarios"


@pytest.fixture
def config() -> SolverConfig:
    return SolverConfig()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def scenario_dir() -> Path:
    return SCENARIO_DIR


@pytest.fixture
def write_json(tmp_path):
    """Write text to a JSON file under tmp_path and return its path"""

    def _write(name: str, text: str) -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write
