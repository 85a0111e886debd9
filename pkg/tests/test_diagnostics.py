# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.
"""caplab overfitting diagnostics and bound suite tests"""

import logging
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from caplab.capacity import distributional_capacity
from caplab.complexity import ComplexityReport, expected_dataset_complexity
from caplab.diagnostics import (
    BoundReport,
    Decision,
    VerdictKind,
    bound_suite,
    capacity_overfit,
    channel_bound_suite,
    inputs_digest,
    ldm_bound_suite,
    log_summary,
    model_overfit,
    model_overfit_decision,
    observational_overfit,
    underfit_at,
)
from caplab.ldm import build_ldm
from caplab.learners import Channel, IterativeMemorizer, Memorizer, build_channel
from caplab.problem import UNIFORM, Dataset
from caplab.search import TargetVector, target_from_risk
from caplab.util import ValidationError

LOG = logging.getLogger(__name__)
pytestmark = pytest.mark.usefixtures("tmp_cwd")  # pylint: disable=invalid-name

H_QUARTER = -(0.25 * math.log2(0.25) + 0.75 * math.log2(0.75))

WEIGHTS = st.one_of(st.just(0.0), st.floats(min_value=1e-3, max_value=1.0))


@st.composite
def channels_with_targets(draw):
    """Random exact channels, some rows point masses, with a matching target."""
    n_rows = draw(st.integers(1, 4))
    n_cols = draw(st.integers(2, 6))
    rows = []
    for _ in range(n_rows):
        if draw(st.booleans()):
            row = [0.0] * n_cols
            row[draw(st.integers(0, n_cols - 1))] = 1.0
        else:
            row = draw(st.lists(WEIGHTS, min_size=n_cols, max_size=n_cols))
            assume(sum(row) > 0.0)
        rows.append(row)
    inputs = draw(st.lists(WEIGHTS, min_size=n_rows, max_size=n_rows))
    assume(sum(inputs) > 0.0)
    matrix = np.array(rows)
    channel = Channel(
        matrix / matrix.sum(axis=1, keepdims=True), np.array(inputs) / sum(inputs)
    )
    bits = draw(st.lists(st.integers(0, 1), min_size=n_cols, max_size=n_cols))
    return channel, TargetVector(tuple(bits))


def _report(raw: float, c_d: float) -> ComplexityReport:
    return ComplexityReport(raw, c_d, c_d, "CONSTANT", None)


def test_observational_overfit(anchor) -> None:
    """test population against empirical risk"""
    data = Dataset(anchor.space, ((0, 1), (1, 1)))
    memorized = anchor.hypotheses[anchor.hypotheses.index_of_assignment((1, 1))]
    verdict = observational_overfit(memorized, data, anchor.dist, anchor.loss)
    assert verdict.kind is VerdictKind.OBSERVATIONAL_OVERFIT
    assert verdict.decision is Decision.YES
    assert verdict.lhs == pytest.approx(0.5)
    assert verdict.rhs == 0.0
    uniform = anchor.hypotheses.index_of_assignment((UNIFORM, UNIFORM))
    guess = anchor.hypotheses[uniform]
    tie = observational_overfit(guess, data, anchor.dist, anchor.loss)
    assert tie.decision is Decision.NO


def test_capacity_overfit(noisy) -> None:
    """test the capacity verdict on the noisy memorizer"""
    learner = Memorizer(noisy.space, noisy.hypotheses, 1)
    capacity = distributional_capacity(build_channel(learner, noisy.dist))
    assert capacity == pytest.approx(3.0 + H_QUARTER)
    expected = expected_dataset_complexity(noisy.dist).value
    verdict = capacity_overfit(capacity, expected)
    assert verdict.decision is Decision.YES
    assert verdict.degree == pytest.approx(H_QUARTER)
    assert capacity_overfit(capacity, expected, slack=1.0).decision is Decision.NO
    # strict comparison
    boundary = capacity_overfit(3.0, 3.0)
    assert boundary.decision is Decision.NO
    assert boundary.degree == 0.0
    assert boundary.to_dict()["kind"] == "CAPACITY_OVERFIT"


def test_underfit_at(anchor) -> None:
    """test underfitting verdicts along the iterative memorizer"""
    learner = IterativeMemorizer(anchor.space, anchor.hypotheses, 2)
    first = underfit_at(learner, 1, anchor.dist, 1.5)
    assert first.decision is Decision.YES
    assert first.lhs == pytest.approx(1.0)
    assert first.variant == "distributional"
    assert first.detail == "i=1"
    second = underfit_at(learner, 2, anchor.dist, 1.5, sup=True)
    assert second.decision is Decision.NO
    assert second.lhs == pytest.approx(2.0)
    assert second.variant == "sup"
    assert underfit_at(learner, 1, anchor.dist, 0.5).decision is Decision.NO


@pytest.mark.parametrize(
    "transfer, decision",
    [
        (5.0, Decision.YES),
        (4.0, Decision.UNKNOWN),
        (3.5, Decision.UNKNOWN),
        (3.0, Decision.NO_UNDER_PROXY),
        (-math.inf, Decision.NO_UNDER_PROXY),
    ],
)
def test_model_overfit_bands(transfer: float, decision: Decision) -> None:
    """test the YES / UNKNOWN / NO_UNDER_PROXY bands"""
    assert model_overfit_decision(transfer, _report(4.0, 3.0)) is decision


def test_model_overfit(noisy) -> None:
    """test model overfitting on rare and common single-example datasets"""
    learner = Memorizer(noisy.space, noisy.hypotheses, 1)
    channel = build_channel(learner, noisy.dist)
    rare = channel.dataset_index(Dataset(noisy.space, ((0, 1),)))
    common = channel.dataset_index(Dataset(noisy.space, ((0, 0),)))
    verdict = model_overfit(channel, int(np.argmax(channel.rows[rare])), rare)
    assert verdict.kind is VerdictKind.MODEL_OVERFIT
    assert verdict.decision is Decision.YES
    assert verdict.lhs == pytest.approx(5.0)
    assert verdict.rhs == 3.0
    assert "raw_bits=4.0" in verdict.detail
    verdict = model_overfit(channel, int(np.argmax(channel.rows[common])), common)
    assert verdict.decision is Decision.UNKNOWN
    assert verdict.lhs == pytest.approx(math.log2(32 / 3))
    with pytest.raises(ValidationError, match="dataset support"):
        model_overfit(Channel([[1.0]], [1.0]), 0, 0)


def test_bound_report() -> None:
    """test slack and the tolerance of holds"""
    assert BoundReport("x", 1.0, 2.0, "d").slack == 1.0
    assert BoundReport("x", 1.0, 1.0 - 1e-12, "d").holds
    assert not BoundReport("x", 1.0, 0.5, "d").holds
    assert BoundReport("x", 1.0, 2.0, "d", True).to_dict()["statistical"]


def test_inputs_digest() -> None:
    """test that the digest identifies its inputs"""
    first = inputs_digest(np.eye(2), [0.5, 0.5])
    assert len(first) == 32
    assert first == inputs_digest(np.eye(2), np.array([0.5, 0.5]))
    assert first != inputs_digest(np.eye(2), [0.25, 0.75])
    assert first != inputs_digest([0.5, 0.5], np.eye(2))


def test_exact_bound_suite(noisy) -> None:
    """test the exact bound suite on the noisy memorizer"""
    learner = Memorizer(noisy.space, noisy.hypotheses, 1)
    target = target_from_risk(noisy.hypotheses, noisy.dist, noisy.loss, 0.3)
    reports = bound_suite(learner, noisy.dist, target)
    assert [r.bound_name for r in reports] == [
        "bias_expressivity",
        "minimum_bias",
        "max_divergence",
    ]
    assert all(r.holds for r in reports)
    assert not any(r.statistical for r in reports)
    assert len({r.inputs_digest for r in reports}) == 1
    divergence = reports[-1]
    assert divergence.lhs == pytest.approx(3.0 + H_QUARTER)
    assert divergence.rhs == pytest.approx(5.0)


def test_bias_regimes(anchor) -> None:
    """test that only the regime matching the success probability is reported"""
    learner = Memorizer(anchor.space, anchor.hypotheses, 2)
    channel = build_channel(learner, anchor.dist)
    everything = TargetVector((1,) * 9)
    names = [r.bound_name for r in channel_bound_suite(channel, everything)]
    # success 1 is also the baseline of the all-ones target
    assert names == [
        "bias_expressivity",
        "zero_bias",
        "maximum_bias",
        "max_divergence",
    ]
    reachable = TargetVector((1, 1, 1, 1, 0, 0, 0, 0, 0))
    reports = channel_bound_suite(channel, reachable)
    assert [r.bound_name for r in reports] == [
        "bias_expressivity",
        "maximum_bias",
        "max_divergence",
    ]
    for report in reports:
        assert report.holds
    zero = TargetVector((1, 0, 0, 0, 0, 0, 0, 0, 1))
    names = [r.bound_name for r in channel_bound_suite(channel, zero)]
    assert "zero_bias" not in names
    with pytest.raises(ValidationError, match="target"):
        channel_bound_suite(channel, TargetVector((1, 0)))


def test_ldm_bound_suite(anchor) -> None:
    """test that LDM bounds are marked statistical"""
    learner = Memorizer(anchor.space, anchor.hypotheses, 2)
    matrix = build_ldm(learner, anchor.dist, 400, 1)
    target = TargetVector((1, 0, 0, 0, 0, 0, 0, 0, 0))
    reports = ldm_bound_suite(matrix, target)
    assert reports[0].bound_name == "bias_expressivity"
    assert reports[-1].bound_name == "max_divergence"
    assert all(r.statistical for r in reports)
    assert all(r.holds for r in reports)


def test_log_summary(caplog: pytest.LogCaptureFixture) -> None:
    """test the summary log lines"""
    with caplog.at_level(logging.INFO):
        log_summary(
            [capacity_overfit(2.0, 1.0)],
            [BoundReport("max_divergence", 1.0, 0.5, "d", True)],
        )
    assert "CAPLAB SUMMARY" in caplog.text
    assert "CAPACITY_OVERFIT: YES" in caplog.text
    assert "max_divergence (statistical): VIOLATED" in caplog.text


@settings(deadline=None)
@given(channels_with_targets())
def test_channel_bounds_hold(case) -> None:
    """test that every exact bound holds on arbitrary channels and targets"""
    channel, target = case
    reports = channel_bound_suite(channel, target)
    assert reports[0].bound_name == "bias_expressivity"
    assert reports[-1].bound_name == "max_divergence"
    for report in reports:
        assert not report.statistical
        assert report.holds, report.to_dict()
