# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.
"""Brute-force shattering machinery for finite classifier classes.

Samples are multisets of feature values. Repeated features never add
patterns, so maxima over multisets equal the classical growth function.
"""
from __future__ import annotations

import enum
import itertools
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import Any, Optional

from .capacity import distributional_capacity, sup_capacity
from .learners import Learner, Mode, build_channel
from .problem import (
    DatasetDistribution,
    Hypothesis,
    HypothesisSpace,
    InstanceSpace,
)
from .util import (
    DEFAULT_ENUMERATION_CAP,
    TOLERANCE,
    CapacityLimitError,
    ValidationError,
    quantity,
)

LOG = logging.getLogger(__name__)

Labeling = tuple[int, ...]


class ClassifierClass:
    """Finite set of deterministic classifiers X -> Y.

    Duplicates are dropped, keeping the first occurrence.
    """

    def __init__(self, classifiers: Iterable[Sequence[int]], n_labels: int) -> None:
        unique: dict[Labeling, None] = {}
        for labeling in classifiers:
            unique.setdefault(tuple(int(y) for y in labeling), None)
        self.classifiers: tuple[Labeling, ...] = tuple(unique)
        if not self.classifiers:
            raise ValidationError("classifier class must be non-empty")
        widths = {len(c) for c in self.classifiers}
        if len(widths) != 1:
            raise ValidationError("classifiers disagree on |X|")
        if any(not 0 <= y < n_labels for c in self.classifiers for y in c):
            raise ValidationError("classifier label out of range")
        self.n_features = widths.pop()
        self.n_labels = n_labels

    @property
    def binary(self) -> bool:
        return self.n_labels == 2

    def __len__(self) -> int:
        return len(self.classifiers)

    @classmethod
    def from_hypotheses(cls, hypotheses: HypothesisSpace) -> ClassifierClass:
        """Deterministic members of a hypothesis space."""
        labelings = [h.labels() for h in hypotheses if h.is_deterministic]
        if not labelings:
            raise ValidationError("hypothesis space has no deterministic members")
        return cls(labelings, hypotheses.n_labels)

    @classmethod
    def thresholds(cls, n_points: int) -> ClassifierClass:
        """c_t(x) = 1 iff x >= t on ordered points 0..n_points-1, t = 0..n_points."""
        if n_points < 1:
            raise ValidationError(f"need at least one point, got {n_points}")
        return cls(
            (
                [int(x >= threshold) for x in range(n_points)]
                for threshold in range(n_points + 1)
            ),
            2,
        )

    @classmethod
    def full_tables(cls, space: InstanceSpace) -> ClassifierClass:
        return cls(
            itertools.product(range(space.n_labels), repeat=space.n_features),
            space.n_labels,
        )

    def as_hypothesis_space(self) -> HypothesisSpace:
        return HypothesisSpace(
            Hypothesis.from_assignment(c, self.n_labels) for c in self.classifiers
        )

    def restrict(self, classifier: int, sample: Sequence[int]) -> Labeling:
        labeling = self.classifiers[classifier]
        return tuple(labeling[x] for x in sample)


def index(cls: ClassifierClass, sample: Sequence[int]) -> int:
    """Number of distinct labelings the class induces on `sample`."""
    if not sample:
        raise ValidationError("sample must be non-empty")
    if any(not 0 <= x < cls.n_features for x in sample):
        raise ValidationError("sample feature out of range")
    return len({tuple(c[x] for x in sample) for c in cls.classifiers})


def growth_function(
    cls: ClassifierClass, r: int, cap: int = DEFAULT_ENUMERATION_CAP
) -> int:
    """Largest index over every size-r multiset of features.

    Raises:
        CapacityLimitError: More than `cap` samples to enumerate.
    """
    if r < 1:
        raise ValidationError(f"sample size must be >= 1, got {r}")
    total = math.comb(cls.n_features + r - 1, r)
    if total > cap:
        raise CapacityLimitError(
            f"growth function needs {quantity(total, 'sample')}, over the "
            f"enumeration cap {cap}"
        )
    ceiling = min(len(cls), cls.n_labels**r)
    best = 0
    for sample in itertools.combinations_with_replacement(range(cls.n_features), r):
        best = max(best, index(cls, sample))
        if best == ceiling:
            break
    return best


def vc_dimension(cls: ClassifierClass, cap: int = DEFAULT_ENUMERATION_CAP) -> int:
    """Largest r <= |X| whose growth function equals 2^r (0 if none).

    Raises:
        ValidationError: The class is not binary.
    """
    if not cls.binary:
        raise ValidationError("VC dimension needs a binary classifier class")
    dimension = 0
    for r in range(1, cls.n_features + 1):
        if 2**r > len(cls):
            break
        if growth_function(cls, r, cap) != 2**r:
            break
        dimension = r
    return dimension


class BoundStatus(enum.Enum):
    HOLDS = "HOLDS"
    VIOLATED = "VIOLATED"
    NOT_APPLICABLE = "NOT_APPLICABLE"


@dataclass(frozen=True)
class VCBoundCheck:
    status: BoundStatus
    capacity: Optional[float]
    bound: float
    log2_vc_dimension: Optional[float]
    reason: str = ""

    @property
    def holds(self) -> bool:
        return self.status is BoundStatus.HOLDS

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status.value,
            "capacity": self.capacity,
            "bound": self.bound,
            "log2_vc_dimension": self.log2_vc_dimension,
            "reason": self.reason,
        }


def _pattern(
    cls: ClassifierClass, features: Sequence[int], labels: Labeling
) -> Labeling:
    # restriction of the lowest-index classifier closest to the observed labels
    best: Optional[tuple[int, Labeling]] = None
    for c in range(len(cls)):
        restricted = cls.restrict(c, features)
        distance = sum(a != b for a, b in zip(restricted, labels))
        if best is None or distance < best[0]:
            best = (distance, restricted)
    assert best is not None
    return best[1]


def vc_capacity_bound_check(
    learner: Learner,
    dist: DatasetDistribution,
    cls: ClassifierClass,
    sup: bool = False,
    mode: Mode = Mode.AVERAGED,
    cap: int = DEFAULT_ENUMERATION_CAP,
    n_jobs: int = 1,
) -> VCBoundCheck:
    """Check capacity <= log2 m(n) for learners whose output is a function of the
    class's labeling pattern on the training features.

    The pattern of a dataset is the restriction to its features of the
    lowest-index classifier nearest (in Hamming distance) to its labels. The
    check applies when every considered dataset shares one feature sequence and
    equal patterns give equal channel rows; otherwise it is NOT_APPLICABLE.
    Considered datasets are those with positive probability, or the whole
    support in sup mode.
    """
    ch = build_channel(learner, dist, mode, cap=cap, n_jobs=n_jobs)
    assert ch.input_support is not None
    bound = math.log2(growth_function(cls, dist.n, cap))
    log2_vc = None
    if cls.binary:
        dimension = vc_dimension(cls, cap)
        log2_vc = math.log2(dimension) if dimension > 0 else None
    considered = [
        i for i in range(ch.n_inputs) if sup or ch.input_probs.probs[i] > 0.0
    ]
    feature_sequences = {ch.input_support[i].features for i in considered}
    if len(feature_sequences) != 1:
        return VCBoundCheck(
            BoundStatus.NOT_APPLICABLE,
            None,
            bound,
            log2_vc,
            "datasets do not share one feature sequence",
        )
    rows_by_pattern: dict[Labeling, int] = {}
    for i in considered:
        dataset = ch.input_support[i]
        pattern = _pattern(cls, dataset.features, dataset.labels)
        first = rows_by_pattern.setdefault(pattern, i)
        if abs(ch.rows[first] - ch.rows[i]).max() > TOLERANCE:
            return VCBoundCheck(
                BoundStatus.NOT_APPLICABLE,
                None,
                bound,
                log2_vc,
                "learner output is not a function of the restriction pattern",
            )
    capacity = sup_capacity(ch).value if sup else distributional_capacity(ch)
    if capacity <= bound + TOLERANCE:
        status = BoundStatus.HOLDS
    else:
        status = BoundStatus.VIOLATED
        LOG.warning("capacity %.6f exceeds log2 m(n) = %.6f", capacity, bound)
    return VCBoundCheck(status, capacity, bound, log2_vc)
