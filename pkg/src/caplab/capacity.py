# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.
"""Capacity of learners viewed as channels from datasets to hypotheses.

Covers distributional capacity I(G; D), the supremum over input distributions
(computed with the Blahut-Arimoto iteration), the IID-constrained supremum,
capacity at a single iteration, and pointwise information transfer.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Optional, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import minimize_scalar
from scipy.special import rel_entr

from .learners import Channel, Learner, Mode, build_channel, learner_rows
from .probcore import (
    LN2,
    JointDistribution,
    SimplexVector,
    mutual_information,
    pointwise_mi,
)
from .problem import DatasetDistribution, InstanceSpace, enumerate_datasets
from .util import (
    DEFAULT_ENUMERATION_CAP,
    INFINITE,
    TOLERANCE,
    PreconditionError,
    ValidationError,
    derive_seed,
    quantity,
)

LOG = logging.getLogger(__name__)

DEFAULT_MAX_ITER = 10**5
# floor for output marginals so unreachable outputs do not produce inf
_TINY = np.finfo(np.float64).tiny


@dataclass(frozen=True)
class CapacityResult:
    """Outcome of a capacity optimization.

    `value` is the best certified lower bound. `upper` is the matching upper
    bound for the unconstrained supremum and None for the IID search, which only
    certifies a lower bound.
    """

    value: float
    lower: float
    upper: Optional[float]
    achieving_input: Optional[SimplexVector]
    iterations_used: int
    converged: bool
    mode: Mode
    constraint: str = "support"
    achieving_base: Optional[SimplexVector] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "lower": self.lower,
            "upper": self.upper,
            "iterations_used": self.iterations_used,
            "converged": self.converged,
            "mode": self.mode.value,
            "constraint": self.constraint,
            "achieving_input": (
                None
                if self.achieving_input is None
                else self.achieving_input.probs.tolist()
            ),
            "achieving_base": (
                None
                if self.achieving_base is None
                else self.achieving_base.probs.tolist()
            ),
        }


def distributional_capacity(ch: Channel) -> float:
    """I(G; D) of a channel under its own input distribution, in bits."""
    return mutual_information(ch.joint())


def _row_divergences(rows: NDArray[np.float64], output: NDArray[np.float64]) -> Any:
    # D(row_d || output) for every row, in bits
    return rel_entr(rows, np.maximum(output, _TINY)[None, :]).sum(axis=1) / LN2


def sup_capacity(
    ch_rows: Union[Channel, ArrayLike],
    tol: float = TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
) -> CapacityResult:
    """Supremum of I(G; D) over every input distribution on the support.

    Blahut-Arimoto iteration. With input p and output marginal q = p W, every
    step has I(p) <= C <= max_d D(W_d || q); iteration stops once that bracket
    is narrower than `tol`.

    Args:
        ch_rows: Channel, or row-stochastic matrix of P(G | d).
        tol: Bracket width at which the result counts as converged.
        max_iter: Iteration limit.

    Returns:
        The capacity with its bracket and achieving input distribution.

    Raises:
        ValidationError: No rows, or tol is not positive.
    """
    if isinstance(ch_rows, Channel):
        rows = ch_rows.rows
        mode = ch_rows.mode
    else:
        rows = np.array(ch_rows, dtype=np.float64)
        mode = Mode.AVERAGED
        if rows.ndim != 2 or rows.shape[0] == 0:
            raise ValidationError("capacity needs a non-empty channel")
        rows = np.vstack([SimplexVector(row).probs for row in rows])
    if rows.shape[0] == 0:
        raise ValidationError("capacity needs a non-empty channel")
    if not tol > 0:
        raise ValidationError(f"tolerance must be > 0, got {tol}")

    probs = np.full(rows.shape[0], 1.0 / rows.shape[0])
    lower = upper = 0.0
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        divergences = _row_divergences(rows, probs @ rows)
        lower = max(float(probs @ divergences), 0.0)
        upper = float(divergences.max())
        if upper - lower <= tol:
            converged = True
            break
        LOG.debug("sup_capacity iteration %d: [%.12f, %.12f]", iteration, lower, upper)
        probs = probs * np.exp2(divergences - upper)
        probs /= probs.sum()
    if not converged:
        LOG.warning(
            "sup_capacity did not converge after %s, bracket [%.12f, %.12f]",
            quantity(max_iter, "iteration"),
            lower,
            upper,
        )
    return CapacityResult(
        value=lower,
        lower=lower,
        upper=upper,
        achieving_input=SimplexVector(probs),
        iterations_used=iteration,
        converged=converged,
        mode=mode,
    )


def _iid_objective(
    rows: NDArray[np.float64], instance_idx: NDArray[np.int64], base: Any
) -> float:
    probs = np.prod(np.asarray(base)[instance_idx], axis=1)
    probs = probs / probs.sum()
    return mutual_information(JointDistribution.from_channel(probs, rows))


def _vertex_step(
    rows: NDArray[np.float64],
    instance_idx: NDArray[np.int64],
    base: NDArray[np.float64],
    vertex: int,
) -> tuple[float, NDArray[np.float64]]:
    # best mix (1 - t) base + t e_vertex with every entry kept >= 0
    weight = base[vertex]
    target = np.zeros_like(base)
    target[vertex] = 1.0

    def _mixed(t: float) -> NDArray[np.float64]:
        mixed = np.clip((1.0 - t) * base + t * target, 0.0, None)
        result: NDArray[np.float64] = mixed / mixed.sum()
        return result

    res = minimize_scalar(
        lambda t: -_iid_objective(rows, instance_idx, _mixed(t)),
        bounds=(-weight / (1.0 - weight), 1.0),
        method="bounded",
        options={"xatol": 1e-10},
    )
    return -float(res.fun), _mixed(float(res.x))


def iid_sup_capacity(
    learner: Learner,
    space: InstanceSpace,
    n: int,
    starts: int = 8,
    seed: int = 0,
    tol: float = TOLERANCE,
    mode: Mode = Mode.AVERAGED,
    max_sweeps: int = 200,
    cap: int = DEFAULT_ENUMERATION_CAP,
    n_jobs: int = 1,
) -> CapacityResult:
    """Best I(G; D) found over IID distributions of n examples.

    Multi-start coordinate ascent on the base distribution over instances. Each
    coordinate step mixes the base toward one vertex of the simplex by a factor
    chosen with a bounded scalar search, and is kept only if it improves. The
    first start is uniform, the rest are Dirichlet draws seeded from `seed`.

    The value is a lower bound on the IID supremum, which is itself bounded by
    `sup_capacity` over the same support.
    """
    if starts < 1:
        raise ValidationError(f"starts must be >= 1, got {starts}")
    datasets = enumerate_datasets(space, n, cap)
    rows = learner_rows(learner, datasets, mode, n_jobs=n_jobs)
    instance_idx = np.vstack([d.instance_indices for d in datasets])
    size = space.n_instances

    best_value = -1.0
    best_base = np.full(size, 1.0 / size)
    total_sweeps = 0
    converged = True
    for start in range(starts):
        if start == 0:
            base = np.full(size, 1.0 / size)
        else:
            rng = np.random.default_rng(derive_seed(seed, "iid_sup", start))
            base = rng.dirichlet(np.ones(size))
        value = _iid_objective(rows, instance_idx, base)
        for _ in range(max_sweeps):
            total_sweeps += 1
            improved = False
            for vertex in range(size):
                if base[vertex] >= 1.0 - 1e-15:
                    continue
                candidate, mixed = _vertex_step(rows, instance_idx, base, vertex)
                if candidate > value + tol:
                    base = mixed
                    value = candidate
                    improved = True
            if not improved:
                break
        else:
            converged = False
        LOG.debug("iid_sup_capacity start %d: %.12f", start, value)
        if value > best_value:
            best_value, best_base = value, base

    probs = np.prod(best_base[instance_idx], axis=1)
    best_value = max(best_value, 0.0)
    return CapacityResult(
        value=best_value,
        lower=best_value,
        upper=None,
        achieving_input=SimplexVector(probs / probs.sum()),
        iterations_used=total_sweeps,
        converged=converged,
        mode=mode,
        constraint="iid",
        achieving_base=SimplexVector(best_base),
    )


def time_indexed_capacity(
    learner: Learner,
    iteration: int,
    dist: DatasetDistribution,
    sup: bool = False,
    cap: int = DEFAULT_ENUMERATION_CAP,
    n_jobs: int = 1,
) -> float:
    """Capacity of the channel formed by the iteration-`iteration` rows.

    Args:
        learner: Learner to evaluate.
        iteration: 1-based iteration.
        dist: Dataset distribution (its support is used in sup mode).
        sup: Return the supremum over inputs on the support instead of I(G; D).

    Raises:
        ValidationError: `iteration` outside [1, learner.iterations].
    """
    ch = build_channel(learner, dist, iteration=iteration, cap=cap, n_jobs=n_jobs)
    if sup:
        return sup_capacity(ch).value
    return distributional_capacity(ch)


def pointwise_transfer(ch: Channel, g_idx: int, d_idx: int) -> float:
    """Pointwise information log2[p(g | d) / p(g)] between one hypothesis and one
    dataset.

    Raises:
        DomainError: p(d) or p(g) is zero.
    """
    return pointwise_mi(ch.joint(), d_idx, g_idx)


def deterministic_surprisal(ch: Channel, g_idx: int) -> float:
    """Surprisal -log2 P(S) of the set S of datasets mapped to hypothesis g.

    Raises:
        PreconditionError: Some row is not a point mass.
    """
    if not ch.is_deterministic:
        raise PreconditionError("deterministic_surprisal needs a deterministic channel")
    if not 0 <= g_idx < ch.n_outputs:
        raise ValidationError(f"hypothesis index {g_idx} out of range")
    preimage = np.abs(ch.rows[:, g_idx] - 1.0) <= TOLERANCE
    mass = float(ch.input_probs.probs[preimage].sum())
    if mass <= 0.0:
        return INFINITE
    # + 0.0 normalizes -0.0
    return -math.log2(min(mass, 1.0)) + 0.0
