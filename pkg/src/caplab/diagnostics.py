# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.
"""Overfitting and underfitting verdicts, and the capacity bound suite.

Every comparison is strict, so boundary cases resolve to NO. Model overfitting
can only be certified against the raw encoding length; below it the verdict is
UNKNOWN or NO_UNDER_PROXY, never a plain NO.
"""
from __future__ import annotations

import enum
import hashlib
import logging
import math
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from .capacity import (
    distributional_capacity,
    pointwise_transfer,
    time_indexed_capacity,
)
from .complexity import ComplexityReport, dataset_complexity
from .ldm import LDM, estimate_capacity, ldm_orientation
from .learners import Channel, Learner, Mode, build_channel
from .probcore import SimplexVector, kl_divergence
from .problem import (
    Dataset,
    DatasetDistribution,
    Hypothesis,
    LossFunction,
    empirical_risk,
    population_risk,
)
from .search import (
    TargetVector,
    bias,
    expected_entropic_expressivity,
    per_query_success,
)
from .util import (
    DEFAULT_ENUMERATION_CAP,
    NEGATIVE_INFINITE,
    TOLERANCE,
    ValidationError,
    summary_header,
)

LOG = logging.getLogger(__name__)

# risk differences below this are treated as ties
RISK_TOLERANCE = 1e-12


class VerdictKind(enum.Enum):
    OBSERVATIONAL_OVERFIT = "OBSERVATIONAL_OVERFIT"
    CAPACITY_OVERFIT = "CAPACITY_OVERFIT"
    UNDERFIT_AT_I = "UNDERFIT_AT_I"
    MODEL_OVERFIT = "MODEL_OVERFIT"


class Decision(enum.Enum):
    YES = "YES"
    NO = "NO"
    UNKNOWN = "UNKNOWN"
    NO_UNDER_PROXY = "NO_UNDER_PROXY"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    decision: Decision
    lhs: float
    rhs: float
    degree: Optional[float] = None
    variant: str = ""
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "decision": self.decision.value,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "degree": self.degree,
            "variant": self.variant,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class BoundReport:
    bound_name: str
    lhs: float
    rhs: float
    inputs_digest: str
    statistical: bool = False

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def holds(self) -> bool:
        return self.slack >= -TOLERANCE

    def to_dict(self) -> dict[str, Any]:
        return {
            "bound_name": self.bound_name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "holds": self.holds,
            "inputs_digest": self.inputs_digest,
            "statistical": self.statistical,
        }


def observational_overfit(
    hypothesis: Hypothesis,
    dataset: Dataset,
    dist: DatasetDistribution,
    loss: LossFunction,
) -> Verdict:
    """YES iff population risk is strictly above empirical risk."""
    population = population_risk(hypothesis, dist, loss)
    empirical = empirical_risk(hypothesis, dataset, loss)
    overfit = population - empirical > RISK_TOLERANCE
    decision = Decision.YES if overfit else Decision.NO
    return Verdict(VerdictKind.OBSERVATIONAL_OVERFIT, decision, population, empirical)


def capacity_overfit(c_ad: float, expected_cd: float, slack: float = 0.0) -> Verdict:
    """YES iff capacity exceeds expected dataset complexity plus `slack`.

    The degree c_ad - expected_cd is reported either way. `slack` absorbs the
    reference-machine constant of the complexity proxy.
    """
    decision = Decision.YES if c_ad > expected_cd + slack else Decision.NO
    return Verdict(
        VerdictKind.CAPACITY_OVERFIT,
        decision,
        c_ad,
        expected_cd,
        degree=c_ad - expected_cd,
        detail=f"slack={slack}",
    )


def underfit_at(
    learner: Learner,
    iteration: int,
    dist: DatasetDistribution,
    expected_cd: float,
    sup: bool = False,
    cap: int = DEFAULT_ENUMERATION_CAP,
    n_jobs: int = 1,
) -> Verdict:
    """YES iff the capacity at `iteration` is strictly below `expected_cd`.

    `sup` selects the supremum over inputs on the support instead of the
    capacity under `dist`; the variant is recorded on the verdict.
    """
    value = time_indexed_capacity(learner, iteration, dist, sup, cap, n_jobs)
    return Verdict(
        VerdictKind.UNDERFIT_AT_I,
        Decision.YES if value < expected_cd else Decision.NO,
        value,
        expected_cd,
        variant="sup" if sup else "distributional",
        detail=f"i={iteration}",
    )


def model_overfit_decision(transfer: float, report: ComplexityReport) -> Decision:
    """YES above the raw encoding length, NO_UNDER_PROXY at or below the proxy
    C_D, UNKNOWN in between."""
    if transfer > report.raw_bits:
        return Decision.YES
    if transfer <= report.c_d:
        return Decision.NO_UNDER_PROXY
    return Decision.UNKNOWN


def model_overfit(ch: Channel, g_idx: int, d_idx: int) -> Verdict:
    """Compare the information one model carries about one dataset with the
    dataset's complexity.

    Raises:
        DomainError: p(g) or p(d) is zero.
    """
    if ch.input_support is None:
        raise ValidationError("model_overfit needs a channel with dataset support")
    transfer = pointwise_transfer(ch, g_idx, d_idx)
    report = dataset_complexity(ch.input_support[d_idx])
    return Verdict(
        VerdictKind.MODEL_OVERFIT,
        model_overfit_decision(transfer, report),
        transfer,
        report.c_d,
        detail=f"raw_bits={report.raw_bits} winning_program={report.winning_program}",
    )


def inputs_digest(*arrays: Any) -> str:
    """Short SHA-512 digest identifying the inputs of a bound."""
    hasher = hashlib.sha512()
    for arr in arrays:
        hasher.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        hasher.update(b"|")
    return hasher.hexdigest()[:32]


def _log2_count(count: int) -> float:
    return math.log2(count) if count > 0 else NEGATIVE_INFINITE


def _expressivity_bounds(
    capacity: float,
    orientation: SimplexVector,
    expected_h: float,
    t: TargetVector,
    digest: str,
    statistical: bool,
) -> list[BoundReport]:
    size = orientation.dim
    value = bias(orientation, t)
    reports = [
        BoundReport(
            "bias_expressivity",
            capacity,
            math.log2(size) - 2 * value**2 - expected_h,
            digest,
            statistical,
        )
    ]
    success = per_query_success(orientation, t)
    rows = (
        (0.0, "minimum_bias", _log2_count(size - t.norm_sq)),
        (t.baseline, "zero_bias", math.log2(size)),
        (1.0, "maximum_bias", _log2_count(t.norm_sq)),
    )
    for regime, name, ceiling in rows:
        if abs(success - regime) <= TOLERANCE:
            reports.append(
                BoundReport(name, capacity, ceiling - expected_h, digest, statistical)
            )
    return reports


def channel_bound_suite(ch: Channel, t: TargetVector) -> list[BoundReport]:
    """Bias/expressivity bound, the bias-regime bounds that apply, and the
    divergence bound max_d KL(P(G | d) || P(G)) for one exact channel."""
    if len(t) != ch.n_outputs:
        raise ValidationError("target does not match the hypothesis space")
    digest = inputs_digest(ch.rows, ch.input_probs.probs, t.array)
    capacity = distributional_capacity(ch)
    marginal = ch.output_marginal()
    reports = _expressivity_bounds(
        capacity, marginal, expected_entropic_expressivity(ch), t, digest, False
    )
    positive = np.flatnonzero(ch.input_probs.probs > 0.0)
    divergence = max(kl_divergence(ch.rows[i], marginal) for i in positive)
    reports.append(BoundReport("max_divergence", capacity, divergence, digest))
    return reports


def bound_suite(
    learner: Learner,
    dist: DatasetDistribution,
    t: TargetVector,
    mode: Mode = Mode.AVERAGED,
    cap: int = DEFAULT_ENUMERATION_CAP,
    n_jobs: int = 1,
) -> list[BoundReport]:
    """Exact bound suite over the enumerated support of `dist`."""
    ch = build_channel(learner, dist, mode, cap=cap, n_jobs=n_jobs)
    return channel_bound_suite(ch, t)


def ldm_bound_suite(m: LDM, t: TargetVector) -> list[BoundReport]:
    """The same bounds evaluated on LDM estimates; every report is statistical."""
    estimate = estimate_capacity(m)
    orientation = ldm_orientation(m).vector
    digest = inputs_digest(m.rows, t.array)
    reports = _expressivity_bounds(
        estimate.capacity_hat, orientation, estimate.mean_h_rows, t, digest, True
    )
    divergence = max(kl_divergence(row, orientation) for row in m.rows)
    reports.append(
        BoundReport("max_divergence", estimate.capacity_hat, divergence, digest, True)
    )
    return reports


def log_summary(verdicts: list[Verdict], reports: list[BoundReport]) -> None:
    """Log verdicts and bound reports after the standard summary header."""
    summary_header()
    for verdict in verdicts:
        LOG.info(
            "%s%s: %s (%.6g vs %.6g)",
            verdict.kind.value,
            f"[{verdict.variant}]" if verdict.variant else "",
            verdict.decision.value,
            verdict.lhs,
            verdict.rhs,
        )
    for report in reports:
        LOG.info(
            "%s%s: %s slack=%.6g",
            report.bound_name,
            " (statistical)" if report.statistical else "",
            "holds" if report.holds else "VIOLATED",
            report.slack,
        )
