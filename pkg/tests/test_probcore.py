# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.
"""caplab probability core tests"""

import logging
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from caplab.probcore import (
    JointDistribution,
    SimplexVector,
    as_simplex,
    entropy,
    kl_divergence,
    mutual_information,
    pointwise_mi,
)
from caplab.util import INFINITE, NEGATIVE_INFINITE, DomainError, ValidationError

LOG = logging.getLogger(__name__)

WEIGHTS = st.one_of(st.just(0.0), st.floats(min_value=1e-3, max_value=1.0))


@st.composite
def simplices(draw, min_dim: int = 1, max_dim: int = 8):
    """Random probability vectors, some with zero entries."""
    weights = np.array(draw(st.lists(WEIGHTS, min_size=min_dim, max_size=max_dim)))
    assume(weights.sum() > 0.1)
    return weights / weights.sum()


@st.composite
def joints(draw, max_rows: int = 5, max_cols: int = 5):
    """Random joint mass matrices."""
    rows = draw(st.integers(1, max_rows))
    cols = draw(st.integers(1, max_cols))
    size = rows * cols
    flat = np.array(draw(st.lists(WEIGHTS, min_size=size, max_size=size)))
    assume(flat.sum() > 0.1)
    return JointDistribution((flat / flat.sum()).reshape(rows, cols))


@pytest.mark.parametrize(
    "probs",
    [
        [],
        [[0.5, 0.5]],
        [0.5, 0.6],
        [1.5, -0.5],
        [float("nan"), 1.0],
        [float("inf"), 0.0],
    ],
)
def test_simplex_rejects(probs) -> None:
    """test that invalid probability vectors are rejected"""
    with pytest.raises(ValidationError):
        SimplexVector(probs)


def test_simplex_clips_tolerance() -> None:
    """test that entries within tolerance of the simplex are repaired"""
    vec = SimplexVector([1.0 + 1e-12, -1e-12])
    assert vec.probs.min() == 0.0
    assert vec.probs.sum() == 1.0
    assert vec.is_point_mass
    with pytest.raises(ValueError):
        vec.probs[0] = 0.5


def test_simplex_constructors() -> None:
    """test uniform and point mass vectors"""
    uniform = SimplexVector.uniform(4)
    assert uniform.dim == len(uniform) == 4
    assert uniform[2] == 0.25
    assert not uniform.is_point_mass
    mass = SimplexVector.point_mass(3, 1)
    assert mass.is_point_mass
    assert mass.probs.tolist() == [0.0, 1.0, 0.0]
    assert mass == SimplexVector([0, 1, 0])
    assert hash(mass) == hash(SimplexVector([0, 1, 0]))
    assert as_simplex(mass) is mass
    assert as_simplex([0.0, 1.0, 0.0]) == mass
    with pytest.raises(ValidationError):
        SimplexVector.uniform(0)
    with pytest.raises(ValidationError):
        SimplexVector.point_mass(3, 3)


def test_entropy_known_values() -> None:
    """test entropy of simple distributions"""
    assert entropy([1.0]) == 0.0
    assert entropy(SimplexVector.point_mass(5, 2)) == 0.0
    assert entropy(SimplexVector.uniform(8)) == pytest.approx(3.0)
    assert entropy([0.5, 0.5, 0.0]) == pytest.approx(1.0)
    h_quarter = -(0.25 * math.log2(0.25) + 0.75 * math.log2(0.75))
    assert entropy([0.25, 0.75]) == pytest.approx(h_quarter)


@given(simplices())
def test_entropy_range(probs) -> None:
    """test 0 <= H(p) <= log2 dim"""
    value = entropy(probs)
    assert 0.0 <= value <= math.log2(len(probs))


def test_kl_known_values() -> None:
    """test divergences with and without support mismatch"""
    assert kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(1.0)
    assert kl_divergence([0.5, 0.5], [1.0, 0.0]) == INFINITE
    # zero mass in p never contributes
    assert kl_divergence([1.0, 0.0], [0.25, 0.75]) == pytest.approx(2.0)
    with pytest.raises(ValidationError, match="dimension mismatch"):
        kl_divergence([1.0], [0.5, 0.5])


@given(simplices(min_dim=3, max_dim=3), simplices(min_dim=3, max_dim=3))
def test_kl_nonnegative(p, q) -> None:
    """test D(p || q) >= 0 and D(p || p) == 0"""
    assert kl_divergence(p, q) >= 0.0
    assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-9)


def test_joint_from_channel() -> None:
    """test that p(d, g) = p(d) p(g | d)"""
    joint = JointDistribution.from_channel([0.25, 0.75], [[1.0, 0.0], [0.5, 0.5]])
    assert joint.shape == (2, 2)
    assert joint.mass.tolist() == [[0.25, 0.0], [0.375, 0.375]]
    assert joint.row_marginal.probs.tolist() == [0.25, 0.75]
    assert joint.col_marginal.probs.tolist() == [0.625, 0.375]
    with pytest.raises(ValidationError):
        JointDistribution.from_channel([1.0], [[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ValidationError):
        JointDistribution([[0.5, 0.6]])


def test_mutual_information_known_values() -> None:
    """test independent and noiseless joints"""
    independent = JointDistribution(np.outer([0.3, 0.7], [0.1, 0.4, 0.5]))
    assert mutual_information(independent) == pytest.approx(0.0, abs=1e-12)
    for size in (1, 2, 4, 8):
        noiseless = JointDistribution(np.eye(size) / size)
        assert mutual_information(noiseless) == pytest.approx(math.log2(size))


@given(joints())
def test_mutual_information_identity(joint) -> None:
    """test I = H(rows) + H(cols) - H(rows, cols) and symmetry"""
    value = mutual_information(joint)
    by_entropy = (
        entropy(joint.row_marginal)
        + entropy(joint.col_marginal)
        - entropy(joint.mass.ravel())
    )
    assert value == pytest.approx(by_entropy, abs=1e-7)
    assert value == pytest.approx(
        mutual_information(JointDistribution(joint.mass.T)), abs=1e-9
    )
    assert 0.0 <= value <= min(
        entropy(joint.row_marginal), entropy(joint.col_marginal)
    )


@given(joints())
def test_pointwise_mi_averages_to_mi(joint) -> None:
    """test that the expected lift is the mutual information"""
    total = 0.0
    rows, cols = joint.shape
    for d_idx in range(rows):
        for g_idx in range(cols):
            cell = joint.mass[d_idx, g_idx]
            if cell > 0:
                total += cell * pointwise_mi(joint, d_idx, g_idx)
    assert total == pytest.approx(mutual_information(joint), abs=1e-7)


def test_pointwise_mi_edges() -> None:
    """test zero cells and zero marginals"""
    joint = JointDistribution([[0.5, 0.0, 0.0], [0.0, 0.5, 0.0]])
    assert pointwise_mi(joint, 0, 0) == pytest.approx(1.0)
    assert pointwise_mi(joint, 0, 1) == NEGATIVE_INFINITE
    with pytest.raises(DomainError):
        pointwise_mi(joint, 0, 2)


@pytest.mark.parametrize("d_idx, g_idx", [(-1, 0), (0, -1), (2, 0), (0, 3)])
def test_pointwise_mi_bad_index(d_idx: int, g_idx: int) -> None:
    """test that indices outside the joint are rejected, negative ones included"""
    joint = JointDistribution([[0.25, 0.25, 0.0], [0.0, 0.25, 0.25]])
    with pytest.raises(ValidationError, match="outside a 2x3 joint"):
        pointwise_mi(joint, d_idx, g_idx)
