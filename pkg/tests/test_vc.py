# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.
"""caplab VC machinery tests"""

import logging

import pytest

from caplab.learners import FiniteERM, Memorizer
from caplab.problem import (
    ExplicitDistribution,
    InstanceSpace,
    LossFunction,
    threshold_classifiers,
)
from caplab.util import CapacityLimitError, ValidationError
from caplab.vc import (
    BoundStatus,
    ClassifierClass,
    growth_function,
    index,
    vc_capacity_bound_check,
    vc_dimension,
)

LOG = logging.getLogger(__name__)
pytestmark = pytest.mark.usefixtures("tmp_cwd")  # pylint: disable=invalid-name


def test_classifier_class() -> None:
    """test construction, de-duplication and validation"""
    cls = ClassifierClass([(0, 1), (0, 1), (1, 1)], 2)
    assert len(cls) == 2
    assert cls.n_features == 2
    assert cls.binary
    assert cls.restrict(1, [1, 0, 1]) == (1, 1, 1)
    assert len(cls.as_hypothesis_space()) == 2
    with pytest.raises(ValidationError):
        ClassifierClass([], 2)
    with pytest.raises(ValidationError, match="disagree"):
        ClassifierClass([(0,), (0, 1)], 2)
    with pytest.raises(ValidationError, match="out of range"):
        ClassifierClass([(0, 2)], 2)
    with pytest.raises(ValidationError):
        ClassifierClass.thresholds(0)


def test_from_hypotheses(anchor) -> None:
    """test that only deterministic hypotheses become classifiers"""
    cls = ClassifierClass.from_hypotheses(anchor.hypotheses)
    assert cls.classifiers == ((0, 0), (0, 1), (1, 0), (1, 1))


@pytest.mark.parametrize("r", [1, 2, 3, 4, 5])
def test_threshold_growth(r: int) -> None:
    """test m(r) = r + 1 for thresholds"""
    assert growth_function(ClassifierClass.thresholds(5), r) == r + 1


def test_threshold_vc_dimension() -> None:
    """test that thresholds shatter one point but never two"""
    cls = ClassifierClass.thresholds(5)
    assert len(cls) == 6
    assert index(cls, [1, 3]) == 3
    assert index(cls, [3, 1]) == 3
    assert index(cls, [2, 2]) == 2
    assert vc_dimension(cls) == 1


def test_full_tables() -> None:
    """test that full tables shatter every set of distinct features"""
    cls = ClassifierClass.full_tables(InstanceSpace(3, 2))
    assert [growth_function(cls, r) for r in (1, 2, 3, 4)] == [2, 4, 8, 8]
    assert vc_dimension(cls) == 3
    ternary = ClassifierClass.full_tables(InstanceSpace(2, 3))
    assert growth_function(ternary, 2) == 9
    with pytest.raises(ValidationError, match="binary"):
        vc_dimension(ternary)


def test_index_and_growth_errors() -> None:
    """test invalid samples and the enumeration cap"""
    cls = ClassifierClass.thresholds(5)
    with pytest.raises(ValidationError):
        index(cls, [])
    with pytest.raises(ValidationError):
        index(cls, [5])
    with pytest.raises(ValidationError):
        growth_function(cls, 0)
    with pytest.raises(CapacityLimitError):
        growth_function(cls, 3, cap=10)


def test_memorizer_bound_holds(anchor) -> None:
    """test the memorizer anchor meets log2 m(n) with equality"""
    learner = Memorizer(anchor.space, anchor.hypotheses, 2)
    cls = ClassifierClass.full_tables(anchor.space)
    check = vc_capacity_bound_check(learner, anchor.dist, cls)
    assert check.status is BoundStatus.HOLDS
    assert check.holds
    assert check.capacity == pytest.approx(2.0)
    assert check.bound == 2.0
    assert check.log2_vc_dimension == 1.0
    sup_check = vc_capacity_bound_check(learner, anchor.dist, cls, sup=True)
    assert sup_check.status is BoundStatus.HOLDS
    assert sup_check.capacity == pytest.approx(2.0)


def test_erm_thresholds_bound_holds() -> None:
    """test ERM over thresholds on three fixed points"""
    space = InstanceSpace(5, 2)
    dist = ExplicitDistribution.fixed_features(space, [0, 2, 4], [[0.5, 0.5]] * 5)
    learner = FiniteERM(threshold_classifiers(5), LossFunction.zero_one(2))
    check = vc_capacity_bound_check(learner, dist, ClassifierClass.thresholds(5))
    assert check.status is BoundStatus.HOLDS
    assert check.bound == 2.0
    assert 0.0 < check.capacity <= 2.0 + 1e-9
    assert check.log2_vc_dimension == 0.0
    assert check.to_dict()["status"] == "HOLDS"


def test_bound_not_applicable(anchor, iid_small) -> None:
    """test the two NOT_APPLICABLE cases"""
    learner = Memorizer(iid_small.space, iid_small.hypotheses, 2)
    check = vc_capacity_bound_check(
        learner, iid_small.dist, ClassifierClass.full_tables(iid_small.space)
    )
    assert check.status is BoundStatus.NOT_APPLICABLE
    assert check.capacity is None
    assert "feature sequence" in check.reason
    learner = Memorizer(anchor.space, anchor.hypotheses, 2)
    check = vc_capacity_bound_check(learner, anchor.dist, ClassifierClass.thresholds(2))
    assert check.status is BoundStatus.NOT_APPLICABLE
    assert "pattern" in check.reason
    assert check.bound == pytest.approx(1.584962500721156)
