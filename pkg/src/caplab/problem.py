# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.
"""Finite learning problems: instance spaces, datasets, hypotheses, losses and
distributions over datasets.

An instance z is a (feature, label) pair and is also addressed by its flat index
`feature * n_labels + label`.
"""
from __future__ import annotations

import abc
import itertools
import json
import logging
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass
from typing import Any, Optional, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .probcore import SimplexLike, SimplexVector, as_simplex
from .util import (
    DEFAULT_ENUMERATION_CAP,
    CapacityLimitError,
    ConstructionError,
    ValidationError,
    quantity,
)

LOG = logging.getLogger(__name__)

# marks a row that predicts uniformly over labels
UNIFORM = None

Assignment = tuple[Optional[int], ...]


@dataclass(frozen=True)
class InstanceSpace:
    """Finite feature and label alphabets."""

    n_features: int
    n_labels: int

    def __post_init__(self) -> None:
        if self.n_features < 1 or self.n_labels < 1:
            raise ValidationError(
                f"instance space needs n_features >= 1 and n_labels >= 1, got "
                f"({self.n_features}, {self.n_labels})"
            )

    @property
    def n_instances(self) -> int:
        """|Z| = |X| * |Y|"""
        return self.n_features * self.n_labels

    def instance_index(self, feature: int, label: int) -> int:
        return feature * self.n_labels + label

    def instance(self, index: int) -> tuple[int, int]:
        feature, label = divmod(index, self.n_labels)
        return feature, label

    def to_dict(self) -> dict[str, int]:
        return {"n_features": self.n_features, "n_labels": self.n_labels}


@dataclass(frozen=True)
class Dataset:
    """An ordered sequence of (feature, label) examples."""

    space: InstanceSpace
    examples: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        examples = tuple((int(x), int(y)) for x, y in self.examples)
        object.__setattr__(self, "examples", examples)
        if not examples:
            raise ValidationError("a dataset needs at least one example")
        for feature, label in examples:
            if not 0 <= feature < self.space.n_features:
                raise ValidationError(f"feature {feature} out of range")
            if not 0 <= label < self.space.n_labels:
                raise ValidationError(f"label {label} out of range")

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(self.examples)

    @property
    def features(self) -> tuple[int, ...]:
        return tuple(x for x, _ in self.examples)

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(y for _, y in self.examples)

    @property
    def instance_indices(self) -> NDArray[np.int64]:
        return np.array(
            [self.space.instance_index(x, y) for x, y in self.examples], dtype=np.int64
        )

    def prefix(self, length: int) -> Dataset:
        """The first `length` examples (at least one)."""
        return Dataset(self.space, self.examples[: max(length, 1)])

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.space.to_dict(),
            "examples": [list(example) for example in self.examples],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Dataset:
        space = InstanceSpace(int(data["n_features"]), int(data["n_labels"]))
        return cls(space, tuple(tuple(example) for example in data["examples"]))

    def dumps(self) -> str:
        """Serialize to JSON."""
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> Dataset:
        """Deserialize from JSON written by `dumps()`."""
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class Hypothesis:
    """A row-stochastic predictor: row x is a distribution over labels."""

    prediction: NDArray[np.float64]

    def __post_init__(self) -> None:
        arr = np.array(self.prediction, dtype=np.float64)
        if arr.ndim != 2:
            raise ValidationError(f"prediction must be a matrix, got {arr.shape}")
        rows = np.vstack([SimplexVector(row).probs for row in arr])
        rows.flags.writeable = False
        object.__setattr__(self, "prediction", rows)

    @classmethod
    def from_assignment(
        cls, assignment: Sequence[Optional[int]], n_labels: int
    ) -> Hypothesis:
        """Build a table hypothesis: an int entry is a point-mass row, `UNIFORM`
        a uniform row."""
        rows = np.full((len(assignment), n_labels), 1.0 / n_labels)
        for feature, label in enumerate(assignment):
            if label is not UNIFORM:
                rows[feature] = 0.0
                rows[feature, label] = 1.0
        return cls(rows)

    @property
    def n_features(self) -> int:
        return int(self.prediction.shape[0])

    @property
    def n_labels(self) -> int:
        return int(self.prediction.shape[1])

    @property
    def is_deterministic(self) -> bool:
        return bool(np.all(np.isclose(self.prediction.max(axis=1), 1.0)))

    def labels(self) -> tuple[int, ...]:
        """Predicted label per feature (deterministic hypotheses only)."""
        if not self.is_deterministic:
            raise ValidationError("hypothesis is not deterministic")
        return tuple(int(label) for label in self.prediction.argmax(axis=1))

    def key(self) -> bytes:
        return self.prediction.tobytes()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Hypothesis):
            return NotImplemented
        return (
            self.prediction.shape == other.prediction.shape
            and self.key() == other.key()
        )

    def __hash__(self) -> int:
        return hash(self.key())


class HypothesisSpace:
    """An ordered, finite, non-empty list of hypotheses over one instance space."""

    def __init__(self, hypotheses: Iterable[Hypothesis]) -> None:
        self.hypotheses: tuple[Hypothesis, ...] = tuple(hypotheses)
        if not self.hypotheses:
            raise ValidationError("hypothesis space must be non-empty")
        shape = self.hypotheses[0].prediction.shape
        if any(h.prediction.shape != shape for h in self.hypotheses):
            raise ValidationError("hypotheses disagree on the instance space")
        self._index: dict[bytes, int] = {}
        for idx, hyp in enumerate(self.hypotheses):
            self._index.setdefault(hyp.key(), idx)

    def __len__(self) -> int:
        return len(self.hypotheses)

    def __getitem__(self, index: int) -> Hypothesis:
        return self.hypotheses[index]

    def __iter__(self) -> Iterator[Hypothesis]:
        return iter(self.hypotheses)

    @property
    def n_features(self) -> int:
        return self.hypotheses[0].n_features

    @property
    def n_labels(self) -> int:
        return self.hypotheses[0].n_labels

    def find(self, hypothesis: Hypothesis) -> Optional[int]:
        """Index of the first equal hypothesis, or None."""
        return self._index.get(hypothesis.key())

    def index_of(self, hypothesis: Hypothesis) -> int:
        """Index of the first equal hypothesis.

        Raises:
            ConstructionError: The hypothesis is not in this space.
        """
        idx = self.find(hypothesis)
        if idx is None:
            raise ConstructionError("hypothesis is not a member of the space")
        return idx

    def index_of_assignment(self, assignment: Sequence[Optional[int]]) -> int:
        return self.index_of(Hypothesis.from_assignment(assignment, self.n_labels))


def table_assignments(
    space: InstanceSpace, max_assigned: Optional[int] = None
) -> Iterator[Assignment]:
    """Canonical order of table assignments.

    All deterministic tables come first (lexicographic, feature 0 most
    significant), then the mixed tables with at least one `UNIFORM` row in
    lexicographic order with `UNIFORM` sorting after every label. With
    `max_assigned`, mixed tables with more deterministic rows are skipped.
    """
    labels = range(space.n_labels)
    yield from itertools.product(labels, repeat=space.n_features)
    choices = [*labels, UNIFORM]
    for assignment in itertools.product(choices, repeat=space.n_features):
        assigned = sum(label is not UNIFORM for label in assignment)
        if assigned == space.n_features:
            continue
        if max_assigned is not None and assigned > max_assigned:
            continue
        yield assignment


def lookup_tables(space: InstanceSpace) -> HypothesisSpace:
    """All |Y|^|X| deterministic lookup tables."""
    return HypothesisSpace(
        Hypothesis.from_assignment(assignment, space.n_labels)
        for assignment in itertools.product(
            range(space.n_labels), repeat=space.n_features
        )
    )


def partial_lookup_tables(
    space: InstanceSpace, max_assigned: Optional[int] = None
) -> HypothesisSpace:
    """Deterministic tables followed by tables with uniform rows.

    This is the space memorizing learners need: any dataset maps to a table
    that is deterministic on trained features and uniform elsewhere.
    """
    return HypothesisSpace(
        Hypothesis.from_assignment(assignment, space.n_labels)
        for assignment in table_assignments(space, max_assigned)
    )


def threshold_classifiers(n_points: int) -> HypothesisSpace:
    """Binary thresholds on ordered points: h_t(x) = 1 iff x >= t, t = 0..n."""
    return HypothesisSpace(
        Hypothesis.from_assignment(
            [int(x >= threshold) for x in range(n_points)], 2
        )
        for threshold in range(n_points + 1)
    )


class LossFunction:
    """Per-instance loss of a stochastic hypothesis.

    `table[predicted, true]` is the deterministic loss; a stochastic prediction
    row incurs its expectation.
    """

    def __init__(self, table: ArrayLike, bounded_above: Optional[float] = None) -> None:
        arr = np.array(table, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValidationError(f"loss table must be square, got {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0:
            raise ValidationError("loss table entries must be finite and >= 0")
        if bounded_above is not None and arr.max() > bounded_above:
            raise ValidationError(
                f"loss table exceeds its declared bound {bounded_above}"
            )
        arr.flags.writeable = False
        self.table = arr
        self.bounded_above = bounded_above

    @classmethod
    def zero_one(cls, n_labels: int) -> LossFunction:
        return cls(1.0 - np.eye(n_labels), bounded_above=1.0)

    @property
    def n_labels(self) -> int:
        return int(self.table.shape[0])

    def instance_losses(self, hypothesis: Hypothesis) -> NDArray[np.float64]:
        """Expected loss of `hypothesis` at every (feature, label), |X| x |Y|."""
        if hypothesis.n_labels != self.n_labels:
            raise ValidationError("loss and hypothesis disagree on |Y|")
        result: NDArray[np.float64] = hypothesis.prediction @ self.table
        return result

    def loss_matrix(self, hypotheses: HypothesisSpace) -> NDArray[np.float64]:
        """|G| x |Z| table of expected losses (flat instance index)."""
        return np.vstack([self.instance_losses(h).ravel() for h in hypotheses])

    def __call__(self, hypothesis: Hypothesis, feature: int, label: int) -> float:
        return float(self.instance_losses(hypothesis)[feature, label])

    def maximal_label(self, true_label: int) -> int:
        """Lowest predicted label that maximizes the loss against `true_label`."""
        column = self.table[:, true_label]
        return int(np.flatnonzero(column == column.max())[0])

    def to_dict(self) -> dict[str, Any]:
        return {"table": self.table.tolist(), "bounded_above": self.bounded_above}


class DatasetDistribution(abc.ABC):
    """A distribution over Z^n for fixed n."""

    kind: str

    def __init__(self, space: InstanceSpace, n: int) -> None:
        if n < 1:
            raise ValidationError(f"dataset length must be >= 1, got {n}")
        self.space = space
        self.n = n

    @abc.abstractmethod
    def support(
        self, cap: int = DEFAULT_ENUMERATION_CAP
    ) -> tuple[list[Dataset], SimplexVector]:
        """Enumerate the support with its probabilities.

        Raises:
            CapacityLimitError: The support is larger than `cap`.
        """

    @abc.abstractmethod
    def instance_marginal(self) -> SimplexVector:
        """Distribution of a single example over flat instance indices."""

    @abc.abstractmethod
    def sample(self, rng: np.random.Generator) -> Dataset:
        """Draw one dataset."""

    @abc.abstractmethod
    def probability(self, dataset: Dataset) -> float:
        """Probability of one dataset."""

    @abc.abstractmethod
    def to_dict(self) -> dict[str, Any]:
        """Serializable description."""


class IIDDistribution(DatasetDistribution):
    """n examples drawn independently from a base distribution over Z."""

    kind = "iid"

    def __init__(self, space: InstanceSpace, base: SimplexLike, n: int) -> None:
        super().__init__(space, n)
        self.base = as_simplex(base)
        if self.base.dim != space.n_instances:
            raise ValidationError(
                f"base has {self.base.dim} entries, instance space has "
                f"{space.n_instances}"
            )

    @classmethod
    def uniform(cls, space: InstanceSpace, n: int) -> IIDDistribution:
        return cls(space, SimplexVector.uniform(space.n_instances), n)

    @classmethod
    def from_conditional(
        cls,
        space: InstanceSpace,
        feature_probs: SimplexLike,
        label_given_feature: ArrayLike,
        n: int,
    ) -> IIDDistribution:
        """Base P(x, y) = P(x) P(y | x)."""
        px = as_simplex(feature_probs).probs
        cond = _label_table(space, label_given_feature)
        return cls(space, (px[:, None] * cond).ravel(), n)

    def support(
        self, cap: int = DEFAULT_ENUMERATION_CAP
    ) -> tuple[list[Dataset], SimplexVector]:
        datasets = enumerate_datasets(self.space, self.n, cap)
        base = self.base.probs
        probs = np.array([np.prod(base[d.instance_indices]) for d in datasets])
        return datasets, SimplexVector(probs)

    def instance_marginal(self) -> SimplexVector:
        return self.base

    def sample(self, rng: np.random.Generator) -> Dataset:
        draws = rng.choice(self.space.n_instances, size=self.n, p=self.base.probs)
        return Dataset(self.space, tuple(self.space.instance(int(z)) for z in draws))

    def probability(self, dataset: Dataset) -> float:
        if len(dataset) != self.n:
            return 0.0
        return float(np.prod(self.base.probs[dataset.instance_indices]))

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "n": self.n, "base": self.base.probs.tolist()}


class ExplicitDistribution(DatasetDistribution):
    """Finite list of datasets with explicit probabilities."""

    kind = "explicit"

    def __init__(self, support: Sequence[Dataset], probs: SimplexLike) -> None:
        datasets = list(support)
        if not datasets:
            raise ValidationError("explicit distribution needs a non-empty support")
        super().__init__(datasets[0].space, len(datasets[0]))
        for dataset in datasets:
            if dataset.space != self.space or len(dataset) != self.n:
                raise ValidationError(
                    "support datasets must share one instance space and length"
                )
        self.datasets = datasets
        self.probs = as_simplex(probs)
        if self.probs.dim != len(datasets):
            raise ValidationError("probabilities do not match the support size")

    @classmethod
    def point_mass(cls, dataset: Dataset) -> ExplicitDistribution:
        return cls([dataset], [1.0])

    @classmethod
    def fixed_features(
        cls,
        space: InstanceSpace,
        features: Sequence[int],
        label_given_feature: ArrayLike,
    ) -> ExplicitDistribution:
        """Fixed feature sequence, each label drawn from P(y | x) independently."""
        cond = _label_table(space, label_given_feature)
        datasets = []
        probs = []
        for labels in itertools.product(range(space.n_labels), repeat=len(features)):
            datasets.append(Dataset(space, tuple(zip(features, labels))))
            probs.append(
                float(np.prod([cond[x, y] for x, y in zip(features, labels)]))
            )
        return cls(datasets, probs)

    def support(
        self, cap: int = DEFAULT_ENUMERATION_CAP
    ) -> tuple[list[Dataset], SimplexVector]:
        if len(self.datasets) > cap:
            raise CapacityLimitError(
                f"support of {quantity(len(self.datasets), 'dataset')} exceeds the "
                f"enumeration cap {cap}; use Monte Carlo (ldm) mode instead"
            )
        return list(self.datasets), self.probs

    def instance_marginal(self) -> SimplexVector:
        counts = np.zeros((len(self.datasets), self.space.n_instances))
        for row, dataset in enumerate(self.datasets):
            np.add.at(counts[row], dataset.instance_indices, 1.0 / self.n)
        return SimplexVector(self.probs.probs @ counts)

    def sample(self, rng: np.random.Generator) -> Dataset:
        return self.datasets[int(rng.choice(len(self.datasets), p=self.probs.probs))]

    def probability(self, dataset: Dataset) -> float:
        return float(
            sum(p for d, p in zip(self.datasets, self.probs.probs) if d == dataset)
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "support": [[list(z) for z in d.examples] for d in self.datasets],
            "probs": self.probs.probs.tolist(),
        }


class EmpiricalDistribution(ExplicitDistribution):
    """Uniform weights over a list of observed datasets."""

    kind = "empirical"

    def __init__(self, support: Sequence[Dataset]) -> None:
        datasets = list(support)
        if not datasets:
            raise ValidationError("empirical distribution needs a non-empty support")
        super().__init__(datasets, SimplexVector.uniform(len(datasets)))

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "support": [[list(z) for z in d.examples] for d in self.datasets],
        }


def _label_table(space: InstanceSpace, table: ArrayLike) -> NDArray[np.float64]:
    arr = np.array(table, dtype=np.float64)
    if arr.shape != (space.n_features, space.n_labels):
        raise ValidationError(
            f"label table must be {space.n_features}x{space.n_labels}, got {arr.shape}"
        )
    return np.vstack([SimplexVector(row).probs for row in arr])


def enumerate_datasets(
    space: InstanceSpace, n: int, cap: int = DEFAULT_ENUMERATION_CAP
) -> list[Dataset]:
    """Every dataset of length n in lexicographic order.

    Raises:
        CapacityLimitError: |Z|^n exceeds `cap`.
    """
    if n < 1:
        raise ValidationError(f"dataset length must be >= 1, got {n}")
    total = space.n_instances**n
    if total > cap:
        raise CapacityLimitError(
            f"enumerating |Z|^n = {space.n_instances}^{n} datasets exceeds the "
            f"enumeration cap {cap}; use Monte Carlo (ldm) mode instead"
        )
    LOG.debug("Enumerating %s", quantity(total, "dataset"))
    instances = [space.instance(z) for z in range(space.n_instances)]
    return [
        Dataset(space, examples)
        for examples in itertools.product(instances, repeat=n)
    ]


InstanceMarginal = Union[DatasetDistribution, SimplexVector]


def population_risk(
    hypothesis: Hypothesis, dist: InstanceMarginal, loss: LossFunction
) -> float:
    """R(g) = E_z[loss(g, z)] under the instance marginal of `dist`."""
    if isinstance(dist, DatasetDistribution):
        marginal = dist.instance_marginal()
    else:
        marginal = dist
    losses = loss.instance_losses(hypothesis).ravel()
    if marginal.dim != losses.size:
        raise ValidationError("instance marginal does not match the hypothesis")
    return max(float(marginal.probs @ losses), 0.0)


def empirical_risk(
    hypothesis: Hypothesis, dataset: Dataset, loss: LossFunction
) -> float:
    """Mean expected loss of `hypothesis` over the examples of `dataset`."""
    losses = loss.instance_losses(hypothesis)
    return float(np.mean([losses[x, y] for x, y in dataset.examples]))


def sample_dataset(dist: DatasetDistribution, seed: int) -> Dataset:
    """Deterministic draw of one dataset for a given seed."""
    return dist.sample(np.random.default_rng(seed))


def last_labels(dataset: Dataset) -> dict[int, int]:
    """Map each trained feature to its last-seen label."""
    seen: dict[int, int] = {}
    for feature, label in dataset.examples:
        seen[feature] = label
    return seen


def is_function_consistent(dataset: Dataset) -> bool:
    """True if no feature appears with two different labels."""
    seen: dict[int, int] = {}
    for feature, label in dataset.examples:
        if seen.setdefault(feature, label) != label:
            return False
    return True
