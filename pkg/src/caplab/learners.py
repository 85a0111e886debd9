# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.
"""Reference learning algorithms expressed as exact channels.

A learner maps a dataset to one distribution over the hypothesis space per
iteration. Internal randomness is folded into those distributions, so every
learner is a deterministic function of its input dataset.
"""
from __future__ import annotations

import abc
import enum
import itertools
import logging
import math
from collections.abc import Iterator, Sequence
from importlib.metadata import EntryPoint, entry_points
from typing import Any, Optional

import numpy as np
from joblib import Parallel, delayed
from numpy.typing import ArrayLike, NDArray
from scipy.special import softmax

from .probcore import JointDistribution, SimplexLike, SimplexVector, as_simplex
from .problem import (
    UNIFORM,
    Assignment,
    Dataset,
    DatasetDistribution,
    HypothesisSpace,
    InstanceSpace,
    LossFunction,
    last_labels,
)
from .util import (
    DEFAULT_ENUMERATION_CAP,
    TOLERANCE,
    ConfigError,
    ConstructionError,
    ValidationError,
    quantity,
)

LOG = logging.getLogger(__name__)

ENTRY_POINT_GROUP = "caplab_learners"
# only check membership of every reachable table up front below this count
EAGER_CHECK_LIMIT = 1 << 14
ERM_TIE_TOLERANCE = 1e-12


class Mode(enum.Enum):
    """How per-iteration distributions collapse into one channel row."""

    FINAL = "FINAL"
    AVERAGED = "AVERAGED"


class Learner(abc.ABC):
    """Base class for learners.

    Subclasses set `name` (the key used in configs and in the `caplab_learners`
    entry-point group) and `params` (the config parameters they accept).
    """

    name: str = ""
    params: tuple[str, ...] = ()

    def __init__(self, hypotheses: HypothesisSpace) -> None:
        self.hypotheses = hypotheses

    @property
    def iterations(self) -> int:
        """Number of emitted distributions per dataset."""
        return 1

    @abc.abstractmethod
    def emit(self, dataset: Dataset) -> list[SimplexVector]:
        """Distribution over hypotheses at every iteration.

        Args:
            dataset: Training dataset.

        Returns:
            `iterations` simplex vectors over `hypotheses`.
        """

    def collapse(self, dataset: Dataset, mode: Mode = Mode.AVERAGED) -> SimplexVector:
        """Single row for `dataset`: the last iteration (FINAL) or the mean over
        all iterations (AVERAGED)."""
        vectors = self.emit(dataset)
        if mode is Mode.FINAL or len(vectors) == 1:
            return vectors[-1]
        return SimplexVector(np.mean([v.probs for v in vectors], axis=0))

    def at_iteration(self, dataset: Dataset, iteration: int) -> SimplexVector:
        """Distribution emitted at 1-based `iteration`."""
        if not 1 <= iteration <= self.iterations:
            raise ValidationError(
                f"iteration {iteration} outside [1, {self.iterations}] for {self.name}"
            )
        return self.emit(dataset)[iteration - 1]

    @classmethod
    def from_config(
        cls,
        space: InstanceSpace,
        hypotheses: HypothesisSpace,
        loss: LossFunction,
        n: int,
        params: dict[str, Any],
    ) -> Learner:
        """Build a learner from experiment config parameters.

        Raises:
            ConfigError: Unknown parameter names.
        """
        unknown = sorted(set(params) - set(cls.params))
        if unknown:
            raise ConfigError(f"learner {cls.name} does not accept {unknown}")
        return cls._build(space, hypotheses, loss, n, params)

    @classmethod
    @abc.abstractmethod
    def _build(
        cls,
        space: InstanceSpace,
        hypotheses: HypothesisSpace,
        loss: LossFunction,
        n: int,
        params: dict[str, Any],
    ) -> Learner:
        """Subclass construction from validated parameters."""


def _reachable_assignments(space: InstanceSpace, max_rows: int) -> Iterator[Assignment]:
    # tables with between 1 and max_rows assigned rows, uniform elsewhere
    for rows in range(1, min(max_rows, space.n_features) + 1):
        for features in itertools.combinations(range(space.n_features), rows):
            for labels in itertools.product(range(space.n_labels), repeat=rows):
                assignment: list[Optional[int]] = [UNIFORM] * space.n_features
                for feature, label in zip(features, labels):
                    assignment[feature] = label
                yield tuple(assignment)


def _reachable_count(space: InstanceSpace, max_rows: int) -> int:
    return sum(
        math.comb(space.n_features, rows) * space.n_labels**rows
        for rows in range(1, min(max_rows, space.n_features) + 1)
    )


class _TableLearner(Learner):
    """Learners whose output is a point mass on a (partial) lookup table."""

    def __init__(
        self, space: InstanceSpace, hypotheses: HypothesisSpace, n: Optional[int] = None
    ) -> None:
        super().__init__(hypotheses)
        if hypotheses.n_features != space.n_features:
            raise ConstructionError("hypothesis space does not match |X|")
        if hypotheses.n_labels != space.n_labels:
            raise ConstructionError("hypothesis space does not match |Y|")
        self.space = space
        self._cache: dict[Assignment, int] = {}
        if n is not None and _reachable_count(space, n) <= EAGER_CHECK_LIMIT:
            for assignment in _reachable_assignments(space, n):
                self._lookup(assignment)

    def _lookup(self, assignment: Assignment) -> int:
        idx = self._cache.get(assignment)
        if idx is None:
            try:
                idx = self.hypotheses.index_of_assignment(assignment)
            except ConstructionError:
                raise ConstructionError(
                    f"{self.name} needs the table {list(assignment)} "
                    "(None = uniform row) in its hypothesis space"
                ) from None
            self._cache[assignment] = idx
        return idx

    @abc.abstractmethod
    def table_for(self, dataset: Dataset) -> Assignment:
        """Assignment of labels (or UNIFORM) to every feature."""

    def emit(self, dataset: Dataset) -> list[SimplexVector]:
        idx = self._lookup(self.table_for(dataset))
        return [SimplexVector.point_mass(len(self.hypotheses), idx)]


class Memorizer(_TableLearner):
    """Look-up table of the training set; uniform guessing elsewhere.

    Conflicting labels for one feature keep the last occurrence.
    """

    name = "memorizer"

    def table_for(self, dataset: Dataset) -> Assignment:
        seen = last_labels(dataset)
        return tuple(seen.get(x, UNIFORM) for x in range(self.space.n_features))

    @classmethod
    def _build(
        cls,
        space: InstanceSpace,
        hypotheses: HypothesisSpace,
        loss: LossFunction,
        n: int,
        params: dict[str, Any],
    ) -> Learner:
        return cls(space, hypotheses, n)


class AntiLearner(_TableLearner):
    """Predicts the loss-maximizing label on every trained feature.

    For each trained feature the predicted label is the lowest label that
    maximizes the loss against the last-seen true label.
    """

    name = "anti_learner"

    def __init__(
        self,
        space: InstanceSpace,
        hypotheses: HypothesisSpace,
        loss: LossFunction,
        n: Optional[int] = None,
    ) -> None:
        if loss.bounded_above is None:
            raise ConstructionError("anti_learner needs a loss that is bounded above")
        if loss.n_labels != space.n_labels:
            raise ConstructionError("loss does not match |Y|")
        self.loss = loss
        super().__init__(space, hypotheses, n)

    def table_for(self, dataset: Dataset) -> Assignment:
        seen = last_labels(dataset)
        return tuple(
            self.loss.maximal_label(seen[x]) if x in seen else UNIFORM
            for x in range(self.space.n_features)
        )

    @classmethod
    def _build(
        cls,
        space: InstanceSpace,
        hypotheses: HypothesisSpace,
        loss: LossFunction,
        n: int,
        params: dict[str, Any],
    ) -> Learner:
        return cls(space, hypotheses, loss, n)


class UniformGuesser(Learner):
    """Ignores the data: uniform over the hypothesis space."""

    name = "uniform_guesser"

    def __init__(self, hypotheses: HypothesisSpace) -> None:
        super().__init__(hypotheses)
        self._uniform = SimplexVector.uniform(len(hypotheses))

    def emit(self, dataset: Dataset) -> list[SimplexVector]:
        return [self._uniform]

    @classmethod
    def _build(
        cls,
        space: InstanceSpace,
        hypotheses: HypothesisSpace,
        loss: LossFunction,
        n: int,
        params: dict[str, Any],
    ) -> Learner:
        return cls(hypotheses)


class ConstantLearner(Learner):
    """Always outputs the hypothesis at `index`."""

    name = "constant"
    params = ("index",)

    def __init__(self, hypotheses: HypothesisSpace, index: int = 0) -> None:
        super().__init__(hypotheses)
        if not 0 <= index < len(hypotheses):
            raise ConstructionError(f"constant hypothesis index {index} out of range")
        self.index = index
        self._vector = SimplexVector.point_mass(len(hypotheses), index)

    def emit(self, dataset: Dataset) -> list[SimplexVector]:
        return [self._vector]

    @classmethod
    def _build(
        cls,
        space: InstanceSpace,
        hypotheses: HypothesisSpace,
        loss: LossFunction,
        n: int,
        params: dict[str, Any],
    ) -> Learner:
        return cls(hypotheses, int(params.get("index", 0)))


class _RiskLearner(Learner):
    def __init__(self, hypotheses: HypothesisSpace, loss: LossFunction) -> None:
        super().__init__(hypotheses)
        if loss.n_labels != hypotheses.n_labels:
            raise ConstructionError("loss does not match |Y|")
        self.loss = loss
        self._losses = loss.loss_matrix(hypotheses)

    def empirical_risks(self, dataset: Dataset) -> NDArray[np.float64]:
        """R̂_d(g) for every hypothesis."""
        result: NDArray[np.float64] = self._losses[:, dataset.instance_indices].mean(
            axis=1
        )
        return result


class FiniteERM(_RiskLearner):
    """Empirical risk minimizer; ties go to the lowest hypothesis index."""

    name = "finite_erm"

    def minimizer(self, dataset: Dataset) -> int:
        risks = self.empirical_risks(dataset)
        return int(np.flatnonzero(risks <= risks.min() + ERM_TIE_TOLERANCE)[0])

    def emit(self, dataset: Dataset) -> list[SimplexVector]:
        return [SimplexVector.point_mass(len(self.hypotheses), self.minimizer(dataset))]

    @classmethod
    def _build(
        cls,
        space: InstanceSpace,
        hypotheses: HypothesisSpace,
        loss: LossFunction,
        n: int,
        params: dict[str, Any],
    ) -> Learner:
        return cls(hypotheses, loss)


class GibbsERM(_RiskLearner):
    """Gibbs posterior P(g | d) proportional to exp(-beta * R̂_d(g)).

    beta = 0 is the uniform guesser; large beta concentrates on the ERM
    hypotheses.
    """

    name = "gibbs_erm"
    params = ("beta",)

    def __init__(
        self, hypotheses: HypothesisSpace, loss: LossFunction, beta: float
    ) -> None:
        if not beta >= 0 or math.isinf(beta):
            raise ValidationError(f"beta must be finite and >= 0, got {beta}")
        super().__init__(hypotheses, loss)
        self.beta = float(beta)

    def emit(self, dataset: Dataset) -> list[SimplexVector]:
        return [SimplexVector(softmax(-self.beta * self.empirical_risks(dataset)))]

    @classmethod
    def _build(
        cls,
        space: InstanceSpace,
        hypotheses: HypothesisSpace,
        loss: LossFunction,
        n: int,
        params: dict[str, Any],
    ) -> Learner:
        if "beta" not in params:
            raise ConfigError("gibbs_erm needs a 'beta' parameter")
        return cls(hypotheses, loss, float(params["beta"]))


class IterativeMemorizer(Memorizer):
    """Memorizes one more example per iteration.

    Iteration i (1-based) memorizes the first min(i, len(d)) examples.
    """

    name = "iterative_memorizer"

    def __init__(
        self, space: InstanceSpace, hypotheses: HypothesisSpace, n: int
    ) -> None:
        if n < 1:
            raise ValidationError(f"iterative_memorizer needs n >= 1, got {n}")
        self.n = n
        super().__init__(space, hypotheses, n)

    @property
    def iterations(self) -> int:
        return self.n

    def emit(self, dataset: Dataset) -> list[SimplexVector]:
        size = len(self.hypotheses)
        return [
            SimplexVector.point_mass(
                size, self._lookup(self.table_for(dataset.prefix(i)))
            )
            for i in range(1, self.n + 1)
        ]


LEARNERS: dict[str, type[Learner]] = {
    cls.name: cls
    for cls in (
        Memorizer,
        AntiLearner,
        UniformGuesser,
        ConstantLearner,
        FiniteERM,
        GibbsERM,
        IterativeMemorizer,
    )
}


def iter_entry_points(group: str) -> Iterator[EntryPoint]:
    """Entry points registered for `group`."""
    assert group
    yield from entry_points().select(group=group)


def available_learners() -> dict[str, type[Learner]]:
    """Built-in learners plus any registered in the `caplab_learners` group."""
    learners = dict(LEARNERS)
    for entry_point in iter_entry_points(ENTRY_POINT_GROUP):
        if entry_point.name in learners:
            continue
        try:
            learner_cls = entry_point.load()
            assert learner_cls.name == entry_point.name, (
                "entry_point name mismatch, check setup.cfg and "
                f"{learner_cls.__name__}.name"
            )
        except Exception as exc:  # pylint: disable=broad-except
            LOG.warning("error loading learner %s: %s", entry_point.name, exc)
            continue
        learners[entry_point.name] = learner_cls
    return learners


class Channel:
    """Conditional distribution P(G | d) over a finite input support.

    Rows index the input datasets (when known), columns the hypotheses.
    """

    def __init__(
        self,
        rows: ArrayLike,
        input_probs: SimplexLike,
        input_support: Optional[Sequence[Dataset]] = None,
        mode: Mode = Mode.AVERAGED,
        iteration: Optional[int] = None,
    ) -> None:
        matrix = np.array(rows, dtype=np.float64)
        if matrix.ndim != 2 or matrix.size == 0:
            raise ValidationError(f"channel rows must be a matrix, got {matrix.shape}")
        matrix = np.vstack([SimplexVector(row).probs for row in matrix])
        matrix.flags.writeable = False
        self.rows = matrix
        self.input_probs = as_simplex(input_probs)
        if self.input_probs.dim != matrix.shape[0]:
            raise ValidationError(
                f"{quantity(self.input_probs.dim, 'input probability')} for "
                f"{quantity(matrix.shape[0], 'row')}"
            )
        self.input_support = None if input_support is None else tuple(input_support)
        if self.input_support is not None and len(self.input_support) != len(matrix):
            raise ValidationError("input support does not match the channel rows")
        self.mode = mode
        self.iteration = iteration

    @property
    def n_inputs(self) -> int:
        return int(self.rows.shape[0])

    @property
    def n_outputs(self) -> int:
        return int(self.rows.shape[1])

    def row(self, index: int) -> SimplexVector:
        return SimplexVector(self.rows[index])

    def joint(self) -> JointDistribution:
        return JointDistribution.from_channel(self.input_probs, self.rows)

    def output_marginal(self) -> SimplexVector:
        return SimplexVector(self.input_probs.probs @ self.rows)

    @property
    def is_deterministic(self) -> bool:
        return bool(np.all(np.abs(self.rows.max(axis=1) - 1.0) <= TOLERANCE))

    def with_input(self, input_probs: SimplexLike) -> Channel:
        """Same rows under a different input distribution."""
        return Channel(
            self.rows, input_probs, self.input_support, self.mode, self.iteration
        )

    def dataset_index(self, dataset: Dataset) -> int:
        if self.input_support is None:
            raise ValidationError("channel has no dataset support attached")
        try:
            return self.input_support.index(dataset)
        except ValueError:
            raise ValidationError("dataset is not in the channel support") from None


def learner_rows(
    learner: Learner,
    datasets: Sequence[Dataset],
    mode: Mode = Mode.AVERAGED,
    iteration: Optional[int] = None,
    n_jobs: int = 1,
) -> NDArray[np.float64]:
    """Channel rows for `datasets`, in order."""

    def _row(dataset: Dataset) -> NDArray[np.float64]:
        if iteration is not None:
            return learner.at_iteration(dataset, iteration).probs
        return learner.collapse(dataset, mode).probs

    if iteration is not None and not 1 <= iteration <= learner.iterations:
        raise ValidationError(
            f"iteration {iteration} outside [1, {learner.iterations}] for "
            f"{learner.name}"
        )
    rows = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_row)(dataset) for dataset in datasets
    )
    return np.vstack(rows)


def build_channel(
    learner: Learner,
    dist: DatasetDistribution,
    mode: Mode = Mode.AVERAGED,
    iteration: Optional[int] = None,
    cap: int = DEFAULT_ENUMERATION_CAP,
    n_jobs: int = 1,
) -> Channel:
    """Exact channel of `learner` over the support of `dist`.

    Args:
        learner: Learner to evaluate.
        dist: Dataset distribution; its support must be enumerable.
        mode: Collapse rule for multi-iteration learners.
        iteration: Use the rows of this single iteration instead of `mode`.
        cap: Enumeration cap on the support size.
        n_jobs: Worker threads for row construction.

    Returns:
        The channel, rows in support order.

    Raises:
        CapacityLimitError: The support exceeds `cap`.
    """
    datasets, probs = dist.support(cap)
    LOG.debug(
        "Building %s channel over %s", learner.name, quantity(len(datasets), "dataset")
    )
    rows = learner_rows(learner, datasets, mode, iteration, n_jobs)
    return Channel(rows, probs, datasets, mode, iteration)
