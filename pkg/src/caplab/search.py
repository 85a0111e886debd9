# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.
"""Learning as search over the hypothesis space.

Inductive orientation, entropic expressivity, target vectors, per-query success,
algorithmic bias and the bias/expressivity trade-off.
"""
from __future__ import annotations

import csv
import enum
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .capacity import distributional_capacity
from .learners import Channel, Learner, Mode, build_channel
from .probcore import SimplexLike, SimplexVector, as_simplex, entropy, kl_divergence
from .problem import (
    Dataset,
    DatasetDistribution,
    HypothesisSpace,
    InstanceMarginal,
    LossFunction,
    population_risk,
)
from .util import DEFAULT_ENUMERATION_CAP, ValidationError

LOG = logging.getLogger(__name__)


class Provenance(enum.Enum):
    EXACT = "EXACT"
    LDM_ESTIMATE = "LDM_ESTIMATE"


@dataclass(frozen=True)
class TargetVector:
    """Binary indicator over hypotheses."""

    bits: tuple[int, ...]
    epsilon: Optional[float] = None

    def __post_init__(self) -> None:
        bits = tuple(int(b) for b in self.bits)
        if not bits:
            raise ValidationError("target vector must be non-empty")
        if any(b not in (0, 1) for b in bits):
            raise ValidationError("target vector entries must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    @property
    def array(self) -> NDArray[np.float64]:
        return np.array(self.bits, dtype=np.float64)

    @property
    def norm_sq(self) -> int:
        """||t||^2, the number of target hypotheses."""
        return sum(self.bits)

    @property
    def degenerate(self) -> bool:
        """All-zeros or all-ones: every bias bound is vacuous."""
        return self.norm_sq in (0, len(self.bits))

    @property
    def baseline(self) -> float:
        """p = ||t||^2 / |G|, the success rate of uniform sampling."""
        return self.norm_sq / len(self.bits)

    def __len__(self) -> int:
        return len(self.bits)


@dataclass(frozen=True)
class Orientation:
    """Expected average distribution of a learner over the hypothesis space."""

    vector: SimplexVector
    provenance: Provenance = Provenance.EXACT
    mode: Mode = Mode.AVERAGED
    k: Optional[int] = None
    seed: Optional[int] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "vector": self.vector.probs.tolist(),
            "provenance": self.provenance.value,
            "mode": self.mode.value,
            "K": self.k,
            "seed": self.seed,
        }


def _vector(o: Orientation | SimplexLike) -> SimplexVector:
    return o.vector if isinstance(o, Orientation) else as_simplex(o)


def target_from_risk(
    hypotheses: HypothesisSpace,
    marginal: InstanceMarginal,
    loss: LossFunction,
    epsilon: float,
) -> TargetVector:
    """Hypotheses with population risk strictly below `epsilon`."""
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be > 0, got {epsilon}")
    bits = tuple(int(population_risk(g, marginal, loss) < epsilon) for g in hypotheses)
    target = TargetVector(bits, epsilon)
    if target.degenerate:
        LOG.warning(
            "target vector for epsilon=%g is degenerate (%d of %d hypotheses)",
            epsilon,
            target.norm_sq,
            len(target),
        )
    return target


def orientation_given_f(
    learner: Learner, dataset: Dataset, mode: Mode = Mode.AVERAGED
) -> Orientation:
    """Average over iterations of the learner's output given one dataset
    (FINAL mode keeps the last iteration only)."""
    return Orientation(learner.collapse(dataset, mode), Provenance.EXACT, mode)


def orientation(
    learner: Learner,
    dist: DatasetDistribution,
    mode: Mode = Mode.AVERAGED,
    cap: int = DEFAULT_ENUMERATION_CAP,
    n_jobs: int = 1,
) -> Orientation:
    """Support-weighted average of `orientation_given_f`.

    Raises:
        CapacityLimitError: The support is too large to enumerate.
    """
    ch = build_channel(learner, dist, mode, cap=cap, n_jobs=n_jobs)
    return Orientation(ch.output_marginal(), Provenance.EXACT, mode)


def entropic_expressivity(o: Orientation | SimplexLike) -> float:
    """Entropy of the orientation, in bits."""
    return entropy(_vector(o))


def expected_entropic_expressivity(ch: Channel) -> float:
    """E_D[H(row_D)] over the channel inputs."""
    row_entropies = np.array([entropy(row) for row in ch.rows])
    return float(ch.input_probs.probs @ row_entropies)


def _check_dims(vector: SimplexVector, t: TargetVector) -> None:
    if vector.dim != len(t):
        raise ValidationError(
            f"orientation has {vector.dim} entries, target has {len(t)}"
        )


def per_query_success(o: Orientation | SimplexLike, t: TargetVector) -> float:
    """q = t . P, the chance one query lands in the target."""
    vector = _vector(o)
    _check_dims(vector, t)
    return min(max(float(t.array @ vector.probs), 0.0), 1.0)


def bias(o: Orientation | SimplexLike, t: TargetVector) -> float:
    """t . P - ||t||^2 / |G|: success over the uniform-sampling baseline."""
    return per_query_success(o, t) - t.baseline


@dataclass(frozen=True)
class TradeoffReport:
    """Slacks of the two bias/expressivity inequalities (both should be >= 0).

    expressivity_bound_slack = log2|G| - 2 bias^2 - H(P)
    bias_bound_slack = sqrt(KL(P || U) / 2) - bias
    """

    bias: float
    expressivity: float
    expressivity_bound_slack: float
    bias_bound_slack: float

    def to_dict(self) -> dict[str, float]:
        return {
            "bias": self.bias,
            "expressivity": self.expressivity,
            "expressivity_bound_slack": self.expressivity_bound_slack,
            "bias_bound_slack": self.bias_bound_slack,
        }


def tradeoff_check(o: Orientation | SimplexLike, t: TargetVector) -> TradeoffReport:
    """Evaluate both sides of the bias/expressivity trade-off."""
    vector = _vector(o)
    value = bias(vector, t)
    expressivity = entropic_expressivity(vector)
    divergence = kl_divergence(vector, SimplexVector.uniform(vector.dim))
    pinsker = math.sqrt(0.5 * divergence)
    return TradeoffReport(
        bias=value,
        expressivity=expressivity,
        expressivity_bound_slack=math.log2(vector.dim) - 2 * value**2 - expressivity,
        bias_bound_slack=pinsker - value,
    )


@dataclass(frozen=True)
class ExpressivityDecomposition:
    """I(G; D) = H(P_D) - E_D[H(P_F)] for one input distribution."""

    expressivity: float
    expected_expressivity: float
    capacity: float
    input_probs: SimplexVector

    @property
    def difference(self) -> float:
        return self.expressivity - self.expected_expressivity

    def to_dict(self) -> dict[str, Any]:
        return {
            "expressivity": self.expressivity,
            "expected_expressivity": self.expected_expressivity,
            "difference": self.difference,
            "capacity": self.capacity,
        }


def expressivity_decomposition(
    ch: Channel, input_probs: Optional[SimplexLike] = None
) -> ExpressivityDecomposition:
    """Entropic expressivity, expected expressivity and capacity of a channel.

    With `input_probs` (for example the achieving input of `sup_capacity`) the
    rows are evaluated under that distribution instead.
    """
    if input_probs is not None:
        ch = ch.with_input(input_probs)
    return ExpressivityDecomposition(
        expressivity=entropy(ch.output_marginal()),
        expected_expressivity=expected_entropic_expressivity(ch),
        capacity=distributional_capacity(ch),
        input_probs=ch.input_probs,
    )


def write_orientations_csv(
    path: Path, orientations: Sequence[tuple[str, Orientation]]
) -> None:
    """One row per labelled orientation: label, provenance, mode, then one
    column per hypothesis index."""
    if not orientations:
        raise ValidationError("no orientations to write")
    dim = orientations[0][1].vector.dim
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["label", "provenance", "mode", *range(dim)])
        for label, o in orientations:
            writer.writerow(
                [
                    label,
                    o.provenance.value,
                    o.mode.value,
                    *map(repr, o.vector.probs.tolist()),
                ]
            )


def as_target(bits: ArrayLike, epsilon: Optional[float] = None) -> TargetVector:
    return TargetVector(tuple(int(b) for b in np.asarray(bits).ravel()), epsilon)
