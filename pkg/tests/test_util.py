# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.
"""caplab utility tests"""

import hashlib
import logging
import math
import random

import numpy as np
import pytest
from scipy.stats import chisquare

from caplab import util

LOG = logging.getLogger(__name__)
pytestmark = pytest.mark.usefixtures("tmp_cwd")  # pylint: disable=invalid-name


def test_error_hierarchy() -> None:
    """test that every validation error shares the caplab root"""
    for exc in (
        util.DomainError,
        util.PreconditionError,
        util.ConstructionError,
        util.ConfigError,
        util.ProgramError,
    ):
        assert issubclass(exc, util.ValidationError)
        assert issubclass(exc, util.CapLabError)
    assert issubclass(util.CapacityLimitError, util.CapLabError)
    assert not issubclass(util.CapacityLimitError, util.ValidationError)


def test_derive_seed_reference() -> None:
    """test that derive_seed follows the documented hash construction"""
    digest = hashlib.sha256(b"42:ldm:7").digest()
    expected = int.from_bytes(digest[:8], "big") & ((1 << 63) - 1)
    assert util.derive_seed(42, "ldm", 7) == expected
    assert util.derive_seed(42, "ldm", 7) == util.derive_seed(42, "ldm", 7)


def test_derive_seed_streams() -> None:
    """test that derived seeds differ across counters, labels and masters"""
    for _ in range(1000):
        master = random.randint(0, (1 << 63) - 1)
        try:
            seeds = {
                util.derive_seed(master, "ldm", 0),
                util.derive_seed(master, "ldm", 1),
                util.derive_seed(master, "bootstrap", 0),
                util.derive_seed(master + 1, "ldm", 0),
            }
            assert len(seeds) == 4
            assert all(0 <= seed < (1 << 63) for seed in seeds)
        except Exception:
            LOG.debug("master = %d", master)
            raise


def test_derive_seed_uniformity() -> None:
    """chi-square smoke test on the first draw of each derived stream"""
    draws = [
        np.random.default_rng(util.derive_seed(0, "ldm", counter)).random()
        for counter in range(10000)
    ]
    counts, _ = np.histogram(draws, bins=10, range=(0.0, 1.0))
    assert chisquare(counts).pvalue > 0.001


@pytest.mark.parametrize(
    "count, width",
    [(1, 0), (2, 1), (3, 2), (4, 2), (5, 3), (8, 3), (9, 4), (256, 8), (257, 9)],
)
def test_encoding_width(count: int, width: int) -> None:
    """test fixed-width code lengths"""
    assert util.encoding_width(count) == width


def test_encoding_width_random() -> None:
    """test encoding_width against math.log2 on random sizes"""
    for _ in range(10000):
        count = random.randint(2, 1 << 40)
        try:
            assert 2 ** util.encoding_width(count) >= count
            assert 2 ** (util.encoding_width(count) - 1) < count
            if count < (1 << 50):
                assert util.encoding_width(count) == math.ceil(math.log2(count))
        except Exception:
            LOG.debug("count = %d", count)
            raise


def test_encoding_width_rejects_empty() -> None:
    """test that an empty alphabet has no code"""
    with pytest.raises(util.ValidationError):
        util.encoding_width(0)


def test_quantity() -> None:
    """test pluralization"""
    assert str(util.quantity(1, "bit")) == "1 bit"
    assert str(util.quantity(0, "bit")) == "0 bits"
    assert str(util.quantity(3, "dataset")) == "3 datasets"


def test_summary_header(caplog: pytest.LogCaptureFixture) -> None:
    """test that the summary header is logged"""
    with caplog.at_level(logging.INFO):
        util.summary_header()
    assert "CAPLAB SUMMARY" in caplog.text
