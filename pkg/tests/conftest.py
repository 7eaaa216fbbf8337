"""Shared builders for the test suite."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

from matchforge.tabular import ColumnSchema, Dataset

sys.path.insert(0, str(Path(__file__).parent))  # makes `import oracles` work


def build_dataset(treatment, outcome, continuous=None, categorical=None, missing=None):
    """Small Dataset from plain lists; covariates given as {name: values}."""
    continuous = continuous or {}
    categorical = categorical or {}
    columns = [ColumnSchema(n, "continuous") for n in continuous]
    columns += [ColumnSchema(n, "categorical") for n in categorical]
    columns += [ColumnSchema("t", "treatment"), ColumnSchema("y", "outcome")]
    values = {n: np.asarray(v, dtype=float) for n, v in continuous.items()}
    values |= {n: np.asarray(v, dtype=object) for n, v in categorical.items()}
    values["t"] = np.asarray(treatment, dtype=float)
    values["y"] = np.asarray(outcome, dtype=float)
    return Dataset(columns, values, missing)


@pytest.fixture
def rng():
    return np.random.default_rng(20260818)
