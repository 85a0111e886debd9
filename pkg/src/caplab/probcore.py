# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.
"""Exact discrete probability primitives.

All information quantities are in bits. `0 * log 0` is taken to be 0, and
absolute-continuity failures return the `INFINITE` / `NEGATIVE_INFINITE`
sentinels instead of raising.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import entr, rel_entr

from .util import INFINITE, NEGATIVE_INFINITE, TOLERANCE, DomainError, ValidationError

LOG = logging.getLogger(__name__)

LN2 = math.log(2.0)


class SimplexVector:
    """A probability vector: non-negative entries summing to 1.

    Inputs within `TOLERANCE` of the simplex are clipped and renormalized so the
    stored vector is exact.
    """

    __slots__ = ("_probs",)

    def __init__(self, probs: ArrayLike, tol: float = TOLERANCE) -> None:
        arr = np.array(probs, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValidationError(
                f"simplex vector must be a non-empty 1-D array, got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValidationError("simplex vector has non-finite entries")
        if arr.min() < -tol:
            raise ValidationError(
                f"simplex vector has a negative entry ({arr.min()!r})"
            )
        total = arr.sum()
        if abs(total - 1.0) > tol:
            raise ValidationError(f"simplex vector sums to {total!r}, not 1")
        arr = np.clip(arr, 0.0, None)
        arr /= arr.sum()
        arr.flags.writeable = False
        self._probs = arr

    @classmethod
    def uniform(cls, dim: int) -> SimplexVector:
        """Uniform distribution over `dim` outcomes."""
        if dim < 1:
            raise ValidationError(f"dimension must be >= 1, got {dim}")
        return cls(np.full(dim, 1.0 / dim))

    @classmethod
    def point_mass(cls, dim: int, index: int) -> SimplexVector:
        """Degenerate distribution on outcome `index`."""
        if not 0 <= index < dim:
            raise ValidationError(f"point mass index {index} out of range for {dim}")
        arr = np.zeros(dim)
        arr[index] = 1.0
        return cls(arr)

    @property
    def probs(self) -> NDArray[np.float64]:
        """Read-only view of the probabilities."""
        return self._probs

    @property
    def dim(self) -> int:
        return int(self._probs.size)

    @property
    def is_point_mass(self) -> bool:
        return bool(np.isclose(self._probs.max(), 1.0, rtol=0.0, atol=TOLERANCE))

    def __len__(self) -> int:
        return self.dim

    def __getitem__(self, index: int) -> float:
        return float(self._probs[index])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SimplexVector):
            return NotImplemented
        return bool(np.array_equal(self._probs, other._probs))

    def __hash__(self) -> int:
        return hash(self._probs.tobytes())

    def __repr__(self) -> str:
        return f"SimplexVector({self._probs.tolist()!r})"

    def allclose(self, other: SimplexVector, atol: float = TOLERANCE) -> bool:
        """Compare two vectors entrywise within `atol`."""
        return self.dim == other.dim and bool(
            np.allclose(self._probs, other._probs, rtol=0.0, atol=atol)
        )


SimplexLike = Union[SimplexVector, Sequence[float], NDArray[np.float64]]


def as_simplex(value: SimplexLike) -> SimplexVector:
    """Coerce a sequence or array to a SimplexVector (validating it)."""
    if isinstance(value, SimplexVector):
        return value
    return SimplexVector(value)


class JointDistribution:
    """Joint distribution over (dataset index, hypothesis index).

    Rows index datasets, columns index hypotheses.
    """

    __slots__ = ("_mass", "_row_marginal", "_col_marginal")

    def __init__(self, mass: ArrayLike, tol: float = TOLERANCE) -> None:
        arr = np.array(mass, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValidationError(
                f"joint mass must be a non-empty matrix, got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValidationError("joint mass has non-finite entries")
        if arr.min() < -tol:
            raise ValidationError(
                f"joint mass has a negative entry ({arr.min()!r})"
            )
        total = arr.sum()
        if abs(total - 1.0) > tol:
            raise ValidationError(f"joint mass sums to {total!r}, not 1")
        arr = np.clip(arr, 0.0, None)
        arr /= arr.sum()
        arr.flags.writeable = False
        self._mass = arr
        self._row_marginal = SimplexVector(arr.sum(axis=1))
        self._col_marginal = SimplexVector(arr.sum(axis=0))

    @classmethod
    def from_channel(
        cls, input_probs: SimplexLike, rows: ArrayLike
    ) -> JointDistribution:
        """Build p(d, g) = p(d) * p(g | d).

        Args:
            input_probs: Distribution over the rows (datasets).
            rows: Row-stochastic matrix of conditionals p(g | d).

        Returns:
            The joint distribution.
        """
        probs = as_simplex(input_probs).probs
        cond = np.asarray(rows, dtype=np.float64)
        if cond.ndim != 2 or cond.shape[0] != probs.size:
            raise ValidationError(
                f"channel shape {cond.shape} does not match {probs.size} inputs"
            )
        return cls(probs[:, None] * cond)

    @property
    def mass(self) -> NDArray[np.float64]:
        return self._mass

    @property
    def row_marginal(self) -> SimplexVector:
        return self._row_marginal

    @property
    def col_marginal(self) -> SimplexVector:
        return self._col_marginal

    @property
    def shape(self) -> tuple[int, int]:
        rows, cols = self._mass.shape
        return int(rows), int(cols)


def entropy(p: SimplexLike) -> float:
    """Shannon entropy in bits.

    Args:
        p: Probability vector.

    Returns:
        -sum(p log2 p), within [0, log2(dim)].
    """
    vec = as_simplex(p)
    value = float(entr(vec.probs).sum() / LN2)
    return min(max(value, 0.0), math.log2(vec.dim))


def kl_divergence(p: SimplexLike, q: SimplexLike) -> float:
    """Kullback-Leibler divergence D(p || q) in bits.

    Args:
        p: First distribution.
        q: Reference distribution.

    Returns:
        The divergence, or INFINITE if p puts mass where q has none.

    Raises:
        ValidationError: The vectors have different dimensions.
    """
    pv, qv = as_simplex(p), as_simplex(q)
    if pv.dim != qv.dim:
        raise ValidationError(f"dimension mismatch: {pv.dim} vs {qv.dim}")
    if np.any((pv.probs > 0) & (qv.probs == 0)):
        return INFINITE
    return max(float(rel_entr(pv.probs, qv.probs).sum() / LN2), 0.0)


def mutual_information(joint: JointDistribution) -> float:
    """Mutual information between the row and column variables, in bits."""
    mass = joint.mass
    outer = np.outer(joint.row_marginal.probs, joint.col_marginal.probs)
    # rel_entr(0, .) == 0, and outer > 0 wherever mass > 0
    value = float(rel_entr(mass, outer).sum() / LN2)
    ceiling = min(entropy(joint.row_marginal), entropy(joint.col_marginal))
    return min(max(value, 0.0), ceiling)


def pointwise_mi(joint: JointDistribution, d_idx: int, g_idx: int) -> float:
    """Pointwise mutual information (lift) of one cell, in bits.

    Args:
        joint: Joint distribution.
        d_idx: Row index.
        g_idx: Column index.

    Returns:
        log2[p(d, g) / (p(d) p(g))]; NEGATIVE_INFINITE when p(d, g) = 0.

    Raises:
        ValidationError: An index is outside the joint.
        DomainError: Either marginal is zero.
    """
    rows, cols = joint.mass.shape
    if not (0 <= d_idx < rows and 0 <= g_idx < cols):
        raise ValidationError(
            f"cell (d={d_idx}, g={g_idx}) outside a {rows}x{cols} joint"
        )
    p_d = joint.row_marginal[d_idx]
    p_g = joint.col_marginal[g_idx]
    if p_d <= 0.0 or p_g <= 0.0:
        raise DomainError(f"zero marginal at (d={d_idx}, g={g_idx})")
    cell = float(joint.mass[d_idx, g_idx])
    if cell <= 0.0:
        return NEGATIVE_INFINITE
    return math.log2(cell / (p_d * p_g))
