# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.
"""Miscellaneous caplab utility functions"""

import hashlib
import logging
import math

LOG = logging.getLogger(__name__)

INFINITE = math.inf
NEGATIVE_INFINITE = -math.inf
TOLERANCE = 1e-9
DEFAULT_ENUMERATION_CAP = 1 << 20


class CapLabError(Exception):
    """caplab error type."""


class ValidationError(CapLabError):
    """An input object or parameter is invalid."""


class DomainError(ValidationError):
    """A pointwise quantity was requested outside its domain (zero marginal)."""


class PreconditionError(ValidationError):
    """An operation precondition does not hold."""


class ConstructionError(ValidationError):
    """A learner cannot be built from the given ingredients."""


class ConfigError(ValidationError):
    """An experiment configuration is malformed."""


class ProgramError(ValidationError):
    """A counter program is malformed."""


class CapacityLimitError(CapLabError):
    """An exact computation would exceed the configured enumeration cap."""


def summary_header() -> None:
    """Log a standard header for the caplab summary."""
    LOG.info("=== CAPLAB SUMMARY ===")


def derive_seed(master: int, stream_label: str, counter: int) -> int:
    """Derive an independent seed for one Monte Carlo stream.

    The seed is the first 8 bytes (big-endian) of
    SHA-256(f"{master}:{stream_label}:{counter}") masked to 63 bits, so any
    implementation can reproduce the derivation.

    Args:
        master: Master seed of the experiment.
        stream_label: Name of the stream (eg. "ldm", "bootstrap").
        counter: Index within the stream.

    Returns:
        Non-negative integer seed.
    """
    digest = hashlib.sha256(f"{master}:{stream_label}:{counter}".encode()).digest()
    return int.from_bytes(digest[:8], "big") & ((1 << 63) - 1)


def encoding_width(count: int) -> int:
    """Number of bits of a fixed-width code for `count` symbols (ceil(log2)).

    Args:
        count: Alphabet size, at least 1.

    Returns:
        ceil(log2(count)), which is 0 for a singleton alphabet.
    """
    if count < 1:
        raise ValidationError(f"alphabet size must be >= 1, got {count}")
    return (count - 1).bit_length()


def quantity(amount: int, unit: str) -> object:
    """Convert a quantity to a string, with correct pluralization.
    Formatting is delayed until str() since this is usually used for logging.

    Args:
        amount: Amount to represent
        unit: The units of the amount to print (eg. "dataset")

    Returns:
        object: A string-able object representing the amount with units,
                pluralized if necessary.
    """

    class _:
        def __str__(self) -> str:
            result = f"{amount} {unit}"
            if amount != 1:
                result += "s"
            return result

    return _()
