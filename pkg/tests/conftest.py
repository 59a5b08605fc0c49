"""Shared fixtures and dataset discovery for the test suite.

Real-data tests look for IDX files under MPSCLASSIFY_DATA_DIR (default:
<repo>/data), expecting <dir>/mnist and <dir>/fashion-mnist with the four
standard files each, optionally gzipped. They skip with instructions when
the files are absent; everything else runs self-contained.
"""

import os
from pathlib import Path

import numpy as np
import pytest

from mpsclassify.dataset import SPLIT_FILES, find_idx_file


def data_root() -> Path:
    env = os.environ.get("MPSCLASSIFY_DATA_DIR")
    if env:
        return Path(env)
    return Path(__file__).resolve().parent.parent / "data"


def require_dataset(name: str) -> Path:
    base = data_root() / name
    missing = [
        stem
        for pair in SPLIT_FILES.values()
        for stem in pair
        if find_idx_file(base, stem) is None
    ]
    if missing:
        pytest.skip(
            f"{name} IDX files not found under {base} (missing {missing}); "
            f"set MPSCLASSIFY_DATA_DIR or place the files there; see README "
            f"for the manual fetch instructions"
        )
    return base


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
