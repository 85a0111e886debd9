# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.
"""caplab unittest fixtures"""

import os
from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path

import pytest

from caplab.problem import (
    DatasetDistribution,
    ExplicitDistribution,
    HypothesisSpace,
    IIDDistribution,
    InstanceSpace,
    LossFunction,
    partial_lookup_tables,
)


@dataclass
class Problem:
    """A small learning problem shared by several test modules."""

    space: InstanceSpace
    dist: DatasetDistribution
    hypotheses: HypothesisSpace
    loss: LossFunction


@pytest.fixture
def tmp_cwd(tmp_path: Path) -> Iterator[Path]:
    """Same as tmp_path, but chdir to the tmp folder too."""
    orig = os.getcwd()
    try:
        os.chdir(str(tmp_path))
        yield tmp_path
    finally:
        os.chdir(orig)


@pytest.fixture
def examples_path() -> Iterator[Path]:
    """Path to the caplab example configs"""
    yield Path(__file__).parent.parent / "src" / "caplab" / "docs" / "examples"


@pytest.fixture
def anchor() -> Problem:
    """Two features, two labels, both features trained, labels uniform.

    The memorizer maps the four datasets onto four distinct full tables.
    """
    space = InstanceSpace(2, 2)
    return Problem(
        space,
        ExplicitDistribution.fixed_features(space, [0, 1], [[0.5, 0.5], [0.5, 0.5]]),
        partial_lookup_tables(space),
        LossFunction.zero_one(2),
    )


@pytest.fixture
def iid_small() -> Problem:
    """|X| = |Y| = 2, n = 2, uniform IID examples (16 datasets)."""
    space = InstanceSpace(2, 2)
    return Problem(
        space,
        IIDDistribution.uniform(space, 2),
        partial_lookup_tables(space),
        LossFunction.zero_one(2),
    )


@pytest.fixture
def noisy() -> Problem:
    """Eight uniform features, label 1 with probability 1/4, one example.

    Tables assign at most one feature besides the 256 deterministic tables.
    """
    space = InstanceSpace(8, 2)
    return Problem(
        space,
        IIDDistribution.from_conditional(space, [0.125] * 8, [[0.75, 0.25]] * 8, 1),
        partial_lookup_tables(space, max_assigned=1),
        LossFunction.zero_one(2),
    )
