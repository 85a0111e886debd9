# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.
"""Dataset complexity.

`raw_encoding_bits` is the cost of storing every example with a fixed-width
code. `program_complexity_proxy` is the length of the shortest program from a
small fixed family that reproduces the dataset; it is an upper-bound proxy for
the shortest-program length, never the Kolmogorov complexity itself. The
reference-machine constant is absorbed into a 2-bit family tag.
"""
from __future__ import annotations

import enum
import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from .problem import Dataset, DatasetDistribution, is_function_consistent
from .util import (
    DEFAULT_ENUMERATION_CAP,
    INFINITE,
    ValidationError,
    derive_seed,
    encoding_width,
)

LOG = logging.getLogger(__name__)

TAG_BITS = 2


class ProgramFamily(enum.Enum):
    """Program families, in tie-break order."""

    CONSTANT = "CONSTANT"
    MAJORITY_EXCEPTIONS = "MAJORITY_EXCEPTIONS"
    FULL_TABLE = "FULL_TABLE"


@dataclass(frozen=True)
class Program:
    """A program mapping features to labels.

    `default` answers every feature missing from `table`.
    """

    family: ProgramFamily
    default: Optional[int]
    table: tuple[tuple[int, int], ...]
    bits: float

    def run(self, feature: int) -> int:
        for known, label in self.table:
            if known == feature:
                return label
        if self.default is None:
            raise ValidationError(f"program has no output for feature {feature}")
        return self.default

    def reproduces(self, dataset: Dataset) -> bool:
        return all(self.run(x) == y for x, y in dataset.examples)

    def to_dict(self) -> dict[str, Any]:
        return {
            "family": self.family.value,
            "default": self.default,
            "table": [list(entry) for entry in self.table],
            "bits": self.bits,
        }


def raw_encoding_bits(dataset: Dataset) -> int:
    """n * (ceil(log2|X|) + ceil(log2|Y|))."""
    space = dataset.space
    return len(dataset) * (
        encoding_width(space.n_features) + encoding_width(space.n_labels)
    )


def candidate_programs(dataset: Dataset) -> list[Program]:
    """Every family member that reproduces `dataset`, in family order.

    Empty when a feature appears with two different labels.
    """
    if not is_function_consistent(dataset):
        return []
    space = dataset.space
    width_x = encoding_width(space.n_features)
    width_y = encoding_width(space.n_labels)
    mapping = dict(dataset.examples)
    programs = []

    labels = set(mapping.values())
    if len(labels) == 1:
        programs.append(
            Program(ProgramFamily.CONSTANT, labels.pop(), (), TAG_BITS + width_y)
        )

    # majority over distinct features, lowest label on ties
    votes = Counter(mapping.values())
    top = max(votes.values())
    majority = min(label for label, count in votes.items() if count == top)
    exceptions = tuple(sorted((x, y) for x, y in mapping.items() if y != majority))
    programs.append(
        Program(
            ProgramFamily.MAJORITY_EXCEPTIONS,
            majority,
            exceptions,
            TAG_BITS + width_y + len(exceptions) * (width_x + width_y),
        )
    )

    # dense label table over all of X; untrained features get label 0
    dense = tuple((x, mapping.get(x, 0)) for x in range(space.n_features))
    programs.append(
        Program(
            ProgramFamily.FULL_TABLE,
            None,
            dense,
            TAG_BITS + space.n_features * width_y,
        )
    )
    return programs


@dataclass(frozen=True)
class ProxyResult:
    bits: float
    program: Optional[Program]

    @property
    def winning_program(self) -> Optional[str]:
        return None if self.program is None else self.program.family.value


def program_complexity_proxy(dataset: Dataset) -> ProxyResult:
    """Shortest reproducing program of the family; INFINITE when none exists.

    Equal costs go to the earlier family.
    """
    best: Optional[Program] = None
    for program in candidate_programs(dataset):
        if best is None or program.bits < best.bits:
            best = program
    if best is None:
        return ProxyResult(INFINITE, None)
    return ProxyResult(best.bits, best)


@dataclass(frozen=True)
class ComplexityReport:
    raw_bits: float
    program_bits: float
    c_d: float
    winning_program: Optional[str]
    program: Optional[Program]

    def to_dict(self) -> dict[str, Any]:
        return {
            "raw_bits": self.raw_bits,
            "program_bits_proxy": self.program_bits,
            "c_d": self.c_d,
            "winning_program": self.winning_program,
        }


def dataset_complexity(dataset: Dataset) -> ComplexityReport:
    """C_D = min(raw encoding, program proxy)."""
    raw = float(raw_encoding_bits(dataset))
    proxy = program_complexity_proxy(dataset)
    if proxy.bits < raw:
        return ComplexityReport(
            raw, proxy.bits, proxy.bits, proxy.winning_program, proxy.program
        )
    return ComplexityReport(raw, proxy.bits, raw, "RAW", None)


@dataclass(frozen=True)
class ExpectedComplexity:
    value: float
    standard_error: float
    exact: bool
    n_samples: Optional[int]

    def to_dict(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "standard_error": self.standard_error,
            "exact": self.exact,
            "n_samples": self.n_samples,
        }


def expected_dataset_complexity(
    dist: DatasetDistribution,
    samples: Optional[int] = None,
    seed: int = 0,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> ExpectedComplexity:
    """E_D[C_D], exact over the support or Monte Carlo over `samples` draws.

    Args:
        dist: Dataset distribution.
        samples: Monte Carlo sample count; None enumerates the support.
        seed: Master seed; draw k uses derive_seed(seed, "complexity", k).
        cap: Enumeration cap for the exact path.

    Returns:
        The expectation, with a standard error (0 when exact).
    """
    if samples is None:
        datasets, probs = dist.support(cap)
        values = np.array([dataset_complexity(d).c_d for d in datasets])
        return ExpectedComplexity(float(probs.probs @ values), 0.0, True, None)
    if samples < 1:
        raise ValidationError(f"samples must be >= 1, got {samples}")
    rng_seeds = (derive_seed(seed, "complexity", k) for k in range(samples))
    values = np.array(
        [
            dataset_complexity(dist.sample(np.random.default_rng(s))).c_d
            for s in rng_seeds
        ]
    )
    error = float(values.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return ExpectedComplexity(float(values.mean()), error, False, samples)
