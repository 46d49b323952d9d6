from __future__ import annotations

import pytest

from scripts import dataset
from scripts.fixtures import make_discrete_fixture, make_fixture


@pytest.fixture(scope="session")
def mixed_dataset() -> dataset.Dataset:
    """5000 行，3 连续 + 3 离散特征，1 个受保护列。"""
    frame, schema = make_fixture(n_rows=5000, seed=11)
    return dataset.from_frame(frame, schema)


@pytest.fixture(scope="session")
def small_dataset() -> dataset.Dataset:
    frame, schema = make_fixture(n_rows=600, seed=3)
    return dataset.from_frame(frame, schema)


@pytest.fixture(scope="session")
def intersectional_dataset() -> dataset.Dataset:
    frame, schema = make_fixture(n_rows=1200, n_protected=2, seed=4)
    return dataset.from_frame(frame, schema)


@pytest.fixture(scope="session")
def discrete_dataset() -> dataset.Dataset:
    frame, schema = make_discrete_fixture(n_rows=600, seed=5)
    return dataset.from_frame(frame, schema)
