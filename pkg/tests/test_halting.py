# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.
"""caplab halting demo tests"""

import logging
from pathlib import Path

import pytest

from caplab.diagnostics import Decision
from caplab.halting import (
    APrime,
    CounterProgram,
    Instruction,
    Op,
    Phase,
    build_a_prime,
    load_corpus,
    load_program,
    overfit_iff_halts,
    parse_program,
    run_bounded,
    standard_corpus,
)
from caplab.problem import (
    UNIFORM,
    Dataset,
    ExplicitDistribution,
    IIDDistribution,
    InstanceSpace,
    LossFunction,
    lookup_tables,
    partial_lookup_tables,
)
from caplab.util import ConstructionError, PreconditionError, ProgramError

LOG = logging.getLogger(__name__)
pytestmark = pytest.mark.usefixtures("tmp_cwd")  # pylint: disable=invalid-name

COUNTDOWN = """
# counts register 0 down to zero
JZ 0 3
dec 0   # lower case is fine
JMP 0
HALT
"""
FOREVER = "INC 0\nJMP 0\n"


def _demo(program: CounterProgram, registers: tuple[int, int]) -> APrime:
    space = InstanceSpace(2, 2)
    return build_a_prime(
        program,
        registers,
        Dataset(space, ((0, 1),)),
        space,
        partial_lookup_tables(space),
        LossFunction.zero_one(2),
    )


def test_parse_program() -> None:
    """test parsing comments, case and operands"""
    program = parse_program(COUNTDOWN)
    assert len(program) == 4
    assert program.instructions[0] == Instruction(Op.JZ, (0, 3))
    assert program.instructions[1] == Instruction(Op.DEC, (0,))
    assert str(program) == "JZ 0 3\nDEC 0\nJMP 0\nHALT"
    assert parse_program(str(program)).instructions == program.instructions


@pytest.mark.parametrize(
    "text, message",
    [
        ("", "at least one"),
        ("# only a comment\n", "at least one"),
        ("NOP\nHALT", "unknown opcode"),
        ("INC x\nHALT", "bad operand"),
        ("INC\nHALT", "takes 1 operands"),
        ("JZ 0\nHALT", "takes 2 operands"),
        ("HALT 1", "takes 0 operands"),
        ("INC 2\nHALT", "no register 2"),
        ("JMP 5", "out of range"),
        ("INC 0", "HALT or JMP"),
    ],
)
def test_program_errors(text: str, message: str) -> None:
    """test that malformed programs are rejected"""
    with pytest.raises(ProgramError, match=message):
        parse_program(text)


def test_run_bounded() -> None:
    """test step counting, budgets and DEC at zero"""
    program = parse_program(COUNTDOWN)
    assert run_bounded(program, (5, 0), 100).halted
    assert run_bounded(program, (5, 0), 100).steps == 17
    # exactly enough budget
    assert run_bounded(program, (5, 0), 17).halted
    short = run_bounded(program, (5, 0), 16)
    assert not short.halted
    assert short.steps == 16
    assert run_bounded(parse_program("HALT"), (0, 0), 1).steps == 1
    assert not run_bounded(parse_program("HALT"), (0, 0), 0).halted
    # DEC 0 then the zero test still sees zero
    dec_at_zero = parse_program("DEC 0\nJZ 0 3\nJMP 2\nHALT")
    assert run_bounded(dec_at_zero, (0, 0), 10).steps == 3
    forever = run_bounded(parse_program(FOREVER), (0, 0), 1000)
    assert not forever.halted
    assert forever.steps == 1000
    with pytest.raises(ProgramError, match="budget"):
        run_bounded(program, (0, 0), -1)
    for registers in ((0,), (0, -1), (0, 0, 0)):
        with pytest.raises(ProgramError, match="non-negative"):
            run_bounded(program, registers, 10)


def test_load_program(tmp_path: Path) -> None:
    """test the input and steps header comments"""
    path = tmp_path / "sample.cm"
    path.write_text("# input: 4 1\n# steps: never\nINC 1\nJMP 0\n")
    entry = load_program(path)
    assert entry.name == "sample"
    assert entry.registers == (4, 1)
    assert entry.expected_steps is None
    path.write_text("#steps:2\nINC 0\nHALT\n")
    entry = load_program(path)
    assert entry.registers == (0, 0)
    assert entry.expected_steps == 2
    path.write_text("# input: 1\nHALT\n")
    with pytest.raises(ProgramError, match="input needs 2"):
        load_program(path)


def test_load_corpus(tmp_path: Path) -> None:
    """test that the corpus is sorted by name and ignores other files"""
    (tmp_path / "b.cm").write_text("HALT\n")
    (tmp_path / "a.cm").write_text("JMP 0\n")
    (tmp_path / "notes.txt").write_text("INC 0\n")
    assert [entry.name for entry in load_corpus(tmp_path)] == ["a", "b"]


def test_standard_corpus() -> None:
    """test every built-in program against its recorded step count"""
    corpus = standard_corpus()
    assert len(corpus) == 24
    assert any(entry.expected_steps is None for entry in corpus)
    for entry in corpus:
        try:
            if entry.expected_steps is None:
                assert not run_bounded(entry.program, entry.registers, 5000).halted
            else:
                steps = entry.expected_steps
                result = run_bounded(entry.program, entry.registers, steps)
                assert result.halted
                assert result.steps == steps
                assert not run_bounded(entry.program, entry.registers, steps - 1).halted
        except AssertionError:
            LOG.debug("corpus entry %s failed", entry.name)
            raise


def test_a_prime_phases() -> None:
    """test that the model switches from anti to memorized when the program halts"""
    demo = _demo(parse_program(COUNTDOWN), (2, 0))
    hypotheses = demo.hypotheses
    assert demo.anti_index == hypotheses.index_of_assignment((0, UNIFORM))
    assert demo.memorized_index == hypotheses.index_of_assignment((1, UNIFORM))
    assert demo.phase(7) is Phase.ANTI
    assert demo.phase(8) is Phase.MEMORIZED
    assert demo.phase(100) is Phase.MEMORIZED
    assert demo.model(0) == hypotheses[demo.anti_index]
    assert demo.model(8) == hypotheses[demo.memorized_index]


def test_a_prime_needs_tables() -> None:
    """test that full tables alone cannot host the memorized model"""
    space = InstanceSpace(2, 2)
    with pytest.raises(ConstructionError):
        build_a_prime(
            parse_program("HALT"),
            (0, 0),
            Dataset(space, ((0, 1),)),
            space,
            lookup_tables(space),
            LossFunction.zero_one(2),
        )


@pytest.mark.parametrize("budget", [0, 1, 7, 8, 50])
def test_overfit_iff_halts(budget: int) -> None:
    """test that the verdict follows the halting flag at every budget"""
    demo = _demo(parse_program(COUNTDOWN), (2, 0))
    space = demo.train_set.space
    dist = IIDDistribution.uniform(space, 1)
    check = overfit_iff_halts(demo, dist, LossFunction.zero_one(2), budget)
    assert check.agree
    assert check.halts_within_budget == (budget >= 8)
    if check.halts_within_budget:
        assert check.verdict.decision is Decision.YES
        assert check.verdict.lhs == pytest.approx(0.5)
        assert check.verdict.rhs == 0.0
    else:
        assert check.verdict.decision is Decision.NO
        assert check.verdict.rhs == 1.0
    assert check.to_dict()["budget"] == budget
    assert check.to_dict()["agree"]


def test_overfit_iff_halts_corpus() -> None:
    """test agreement over the built-in corpus"""
    space = InstanceSpace(2, 2)
    dist = IIDDistribution.uniform(space, 1)
    for entry in standard_corpus():
        try:
            demo = _demo(entry.program, entry.registers)
            check = overfit_iff_halts(demo, dist, LossFunction.zero_one(2), 200)
            assert check.agree
            expected = entry.expected_steps is not None and entry.expected_steps <= 200
            assert check.halts_within_budget == expected
        except AssertionError:
            LOG.debug("corpus entry %s disagrees", entry.name)
            raise


def test_overfit_iff_halts_preconditions() -> None:
    """test the consistency and untrained-mass preconditions"""
    space = InstanceSpace(2, 2)
    loss = LossFunction.zero_one(2)
    demo = _demo(parse_program("HALT"), (0, 0))
    trained_only = ExplicitDistribution.point_mass(Dataset(space, ((0, 1),)))
    with pytest.raises(PreconditionError, match="outside the training"):
        overfit_iff_halts(demo, trained_only, loss, 10)
    conflicting = APrime(
        demo.program,
        demo.registers,
        Dataset(space, ((0, 1), (0, 0))),
        demo.hypotheses,
        demo.anti_index,
        demo.memorized_index,
    )
    with pytest.raises(PreconditionError, match="two labels"):
        overfit_iff_halts(conflicting, IIDDistribution.uniform(space, 2), loss, 10)


@pytest.mark.parametrize("text, halts", [("HALT", True), ("JMP 0", False)])
def test_overfit_iff_halts_noisy_trained_feature(text: str, halts: bool) -> None:
    """test agreement when all mass sits on the trained feature with noisy labels"""
    space = InstanceSpace(2, 2)
    demo = _demo(parse_program(text), (0, 0))
    dist = IIDDistribution.from_conditional(
        space, [1, 0], [[0.25, 0.75], [0.5, 0.5]], 1
    )
    check = overfit_iff_halts(demo, dist, LossFunction.zero_one(2), 10)
    assert check.agree
    assert check.halts_within_budget == halts
    if halts:
        assert check.verdict.decision is Decision.YES
        assert check.verdict.lhs == pytest.approx(0.25)
        assert check.verdict.rhs == 0.0
    else:
        assert check.verdict.decision is Decision.NO
        assert check.verdict.lhs == pytest.approx(0.75)
        assert check.verdict.rhs == 1.0


def test_phase_monotone_in_budget() -> None:
    """test that no corpus program leaves the memorized phase once it is reached"""
    budgets = [0, 1, 2, 5, 10, 50, 100, 500, 1000, 5000]
    for entry in standard_corpus():
        demo = _demo(entry.program, entry.registers)
        phases = [demo.phase(budget) for budget in budgets]
        try:
            first = phases.index(Phase.MEMORIZED) if Phase.MEMORIZED in phases else None
            if first is None:
                assert entry.expected_steps is None or entry.expected_steps > 5000
            else:
                assert all(phase is Phase.MEMORIZED for phase in phases[first:])
                assert entry.expected_steps is not None
                assert entry.expected_steps <= budgets[first]
            if entry.expected_steps is not None:
                assert demo.phase(entry.expected_steps - 1) is Phase.ANTI
                assert demo.phase(entry.expected_steps) is Phase.MEMORIZED
        except AssertionError:
            LOG.debug("corpus entry %s changes phase out of order", entry.name)
            raise
