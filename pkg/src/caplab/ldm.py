# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.
"""Labeling distribution matrix (LDM) estimates of capacity.

Row k of the matrix is the learner's orientation given the k-th sampled dataset;
columns are hypotheses. The column mean estimates the orientation under the
dataset distribution, so H(column mean) - mean(H(rows)) estimates I(G; D)
without enumerating the support.
"""
from __future__ import annotations

import csv
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from joblib import Parallel, delayed
from numpy.typing import NDArray
from scipy.special import entr

from .learners import Learner, Mode
from .probcore import LN2, SimplexVector, entropy
from .problem import Dataset, DatasetDistribution, sample_dataset
from .search import Orientation, Provenance
from .util import TOLERANCE, ValidationError, derive_seed, quantity

LOG = logging.getLogger(__name__)

DEFAULT_BOOTSTRAP = 1000
DEFAULT_CONFIDENCE = 0.95


class LDM:
    """K sampled orientation rows over the hypothesis space."""

    def __init__(
        self,
        rows: NDArray[np.float64],
        seeds: Sequence[int],
        mode: Mode = Mode.AVERAGED,
        master_seed: int | None = None,
    ) -> None:
        matrix = np.array(rows, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] < 1:
            raise ValidationError("an LDM needs at least one row")
        matrix = np.vstack([SimplexVector(row).probs for row in matrix])
        matrix.flags.writeable = False
        if len(seeds) != matrix.shape[0]:
            raise ValidationError("one seed per LDM row is required")
        self.rows = matrix
        self.seeds = tuple(int(s) for s in seeds)
        self.mode = mode
        self.master_seed = master_seed

    @property
    def k(self) -> int:
        return int(self.rows.shape[0])

    def prefix(self, k: int) -> LDM:
        """First `k` rows."""
        if not 1 <= k <= self.k:
            raise ValidationError(f"prefix size {k} outside [1, {self.k}]")
        return LDM(self.rows[:k], self.seeds[:k], self.mode, self.master_seed)

    def write_csv(self, path: Path) -> None:
        """K rows x |G| columns, header = hypothesis indices."""
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(range(self.rows.shape[1]))
            for row in self.rows:
                writer.writerow(map(repr, row.tolist()))


def build_ldm(
    learner: Learner,
    dist: DatasetDistribution,
    k: int,
    master_seed: int,
    mode: Mode = Mode.AVERAGED,
    n_jobs: int = 1,
) -> LDM:
    """Sample K datasets and record the learner's orientation for each.

    Row k uses the dataset drawn with seed derive_seed(master_seed, "ldm", k).
    """
    if k < 1:
        raise ValidationError(f"K must be >= 1, got {k}")
    seeds = [derive_seed(master_seed, "ldm", index) for index in range(k)]
    datasets = [sample_dataset(dist, seed) for seed in seeds]
    unique: dict[Dataset, int] = {}
    for dataset in datasets:
        unique.setdefault(dataset, len(unique))
    LOG.debug(
        "LDM of %s from %s",
        quantity(k, "row"),
        quantity(len(unique), "distinct dataset"),
    )
    computed = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(learner.collapse)(dataset, mode) for dataset in unique
    )
    rows = np.vstack([computed[unique[dataset]].probs for dataset in datasets])
    return LDM(rows, seeds, mode, master_seed)


@dataclass(frozen=True)
class CapacityEstimate:
    """H(column mean) - mean(H(rows)), with both components."""

    capacity_hat: float
    h_mean_row: float
    mean_h_rows: float
    clipped: bool
    k: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "capacity_hat": self.capacity_hat,
            "h_mean_row": self.h_mean_row,
            "mean_h_rows": self.mean_h_rows,
            "clipped": self.clipped,
            "K": self.k,
            "provenance": Provenance.LDM_ESTIMATE.value,
        }


def _row_entropies(rows: NDArray[np.float64]) -> NDArray[np.float64]:
    result: NDArray[np.float64] = entr(rows).sum(axis=1) / LN2
    return result


def _components(
    rows: NDArray[np.float64], weights: NDArray[np.float64]
) -> tuple[float, float]:
    # weighted H(mean row) and mean H(row)
    mean_row = weights @ rows
    return (
        float(entr(mean_row).sum() / LN2),
        float(weights @ _row_entropies(rows)),
    )


def estimate_capacity(m: LDM) -> CapacityEstimate:
    """Plug-in capacity estimate from an LDM.

    Small negative values caused by rounding are clipped to 0 with a warning.
    """
    h_mean_row = entropy(SimplexVector(m.rows.mean(axis=0)))
    mean_h_rows = float(_row_entropies(m.rows).mean())
    value = h_mean_row - mean_h_rows
    clipped = value < 0.0
    if clipped:
        if value < -TOLERANCE:
            LOG.warning("LDM capacity estimate %.3g clipped to 0", value)
        value = 0.0
    return CapacityEstimate(value, h_mean_row, mean_h_rows, clipped, m.k)


def ldm_orientation(m: LDM) -> Orientation:
    """Column mean of the LDM as an orientation estimate."""
    return Orientation(
        SimplexVector(m.rows.mean(axis=0)),
        Provenance.LDM_ESTIMATE,
        m.mode,
        m.k,
        m.master_seed,
    )


@dataclass(frozen=True)
class TracePoint:
    k: int
    capacity_hat: float
    ci_low: float
    ci_high: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "K": self.k,
            "capacity_hat": self.capacity_hat,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
        }


def bootstrap_interval(
    m: LDM,
    resamples: int = DEFAULT_BOOTSTRAP,
    confidence: float = DEFAULT_CONFIDENCE,
    seed: int = 0,
) -> tuple[float, float]:
    """Bias-corrected percentile bootstrap interval for the capacity estimate.

    Rows are resampled with replacement. The percentile interval is shifted by
    minus twice the bootstrap bias (mean of replicates minus the estimate) and
    clipped at 0. The plug-in estimate is biased low, so the bias is negative
    and the interval moves up.

    Args:
        m: The LDM.
        resamples: Number of bootstrap replicates.
        confidence: Two-sided coverage level.
        seed: Seed of the resampling generator.

    Returns:
        (low, high)
    """
    if resamples < 1:
        raise ValidationError(f"bootstrap needs >= 1 resample, got {resamples}")
    if not 0.0 < confidence < 1.0:
        raise ValidationError(f"confidence must be in (0, 1), got {confidence}")
    unique_rows, counts = np.unique(m.rows, axis=0, return_counts=True)
    estimate = estimate_capacity(m).capacity_hat
    if unique_rows.shape[0] == 1:
        return estimate, estimate
    rng = np.random.default_rng(seed)
    draws = rng.multinomial(m.k, counts / m.k, size=resamples)
    replicates = np.empty(resamples)
    for index, draw in enumerate(draws):
        h_mean, mean_h = _components(unique_rows, draw / m.k)
        replicates[index] = max(h_mean - mean_h, 0.0)
    alpha = (1.0 - confidence) / 2.0
    low, high = np.quantile(replicates, [alpha, 1.0 - alpha])
    shift = 2.0 * (float(replicates.mean()) - estimate)
    return max(float(low) - shift, 0.0), max(float(high) - shift, 0.0)


def convergence_trace(
    learner: Learner,
    dist: DatasetDistribution,
    schedule: Sequence[int],
    master_seed: int,
    bootstrap_b: int = DEFAULT_BOOTSTRAP,
    confidence: float = DEFAULT_CONFIDENCE,
    mode: Mode = Mode.AVERAGED,
    n_jobs: int = 1,
) -> list[TracePoint]:
    """Capacity estimates with bootstrap intervals along an increasing K schedule.

    One LDM of size max(schedule) is built and its prefixes are reused, so every
    point of the trace shares rows with the earlier ones.
    """
    if not schedule:
        raise ValidationError("K schedule must be non-empty")
    if any(b <= a for a, b in zip(schedule, schedule[1:])) or schedule[0] < 1:
        raise ValidationError(f"K schedule must be increasing and >= 1: {schedule}")
    full = build_ldm(learner, dist, schedule[-1], master_seed, mode, n_jobs)
    trace = []
    for k in schedule:
        prefix = full.prefix(k)
        estimate = estimate_capacity(prefix)
        low, high = bootstrap_interval(
            prefix,
            bootstrap_b,
            confidence,
            derive_seed(master_seed, "bootstrap", k),
        )
        trace.append(TracePoint(k, estimate.capacity_hat, low, high))
        LOG.debug(
            "K=%d capacity_hat=%.6f CI=[%.6f, %.6f]",
            k,
            estimate.capacity_hat,
            low,
            high,
        )
    return trace


def write_trace_csv(path: Path, trace: Sequence[TracePoint]) -> None:
    """Columns K, capacity_hat, ci_low, ci_high."""
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["K", "capacity_hat", "ci_low", "ci_high"])
        for point in trace:
            writer.writerow(
                [
                    point.k,
                    repr(float(point.capacity_hat)),
                    repr(float(point.ci_low)),
                    repr(float(point.ci_high)),
                ]
            )
