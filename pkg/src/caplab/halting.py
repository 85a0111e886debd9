# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.
"""Step-bounded demonstration that a learner can overfit exactly when a program
halts.

Programs are two-counter machines. The wrapped learner predicts maximally wrong
labels on its training set until the program halts, then switches to memorizing
the training set. At a fixed step budget, the observational overfitting verdict
of its current model equals the "halted within budget" flag. Budgets make all
of this decidable; the demo shows the mechanism of the reduction, nothing more.
"""
from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .diagnostics import Decision, Verdict, observational_overfit
from .learners import AntiLearner, Memorizer
from .problem import (
    Dataset,
    DatasetDistribution,
    Hypothesis,
    HypothesisSpace,
    InstanceSpace,
    LossFunction,
    is_function_consistent,
)
from .util import PreconditionError, ProgramError, quantity

LOG = logging.getLogger(__name__)

N_REGISTERS = 2
PROGRAMS_PATH = Path(__file__).parent / "docs" / "programs"
_HEADER = re.compile(r"^#\s*(?P<key>input|steps)\s*:\s*(?P<value>.*?)\s*$")


class Op(enum.Enum):
    INC = "INC"
    DEC = "DEC"
    JZ = "JZ"
    JMP = "JMP"
    HALT = "HALT"


# operand layout per opcode: "r" register, "a" address
_OPERANDS = {Op.INC: "r", Op.DEC: "r", Op.JZ: "ra", Op.JMP: "a", Op.HALT: ""}


@dataclass(frozen=True)
class Instruction:
    op: Op
    args: tuple[int, ...] = ()

    def __str__(self) -> str:
        return " ".join([self.op.value, *map(str, self.args)])


class CounterProgram:
    """A validated two-counter machine program.

    Raises:
        ProgramError: Bad operands, out-of-range addresses or registers, or a
                      last instruction that could fall off the end.
    """

    def __init__(self, instructions: list[Instruction]) -> None:
        if not instructions:
            raise ProgramError("program must have at least one instruction")
        for address, instruction in enumerate(instructions):
            layout = _OPERANDS[instruction.op]
            if len(instruction.args) != len(layout):
                raise ProgramError(
                    f"{address}: {instruction.op.value} takes {len(layout)} operands"
                )
            for kind, value in zip(layout, instruction.args):
                if kind == "r" and not 0 <= value < N_REGISTERS:
                    raise ProgramError(f"{address}: no register {value}")
                if kind == "a" and not 0 <= value < len(instructions):
                    raise ProgramError(f"{address}: jump target {value} out of range")
        if instructions[-1].op not in (Op.HALT, Op.JMP):
            raise ProgramError("last instruction must be HALT or JMP")
        self.instructions = tuple(instructions)

    def __len__(self) -> int:
        return len(self.instructions)

    def __str__(self) -> str:
        return "\n".join(map(str, self.instructions))


def parse_program(text: str) -> CounterProgram:
    """Parse one instruction per line; `#` starts a comment.

    Raises:
        ProgramError: Unknown opcode or non-integer operand.
    """
    instructions = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, *operands = line.split()
        try:
            op = Op(name.upper())
        except ValueError:
            raise ProgramError(f"line {lineno}: unknown opcode {name!r}") from None
        try:
            args = tuple(int(value) for value in operands)
        except ValueError:
            raise ProgramError(f"line {lineno}: bad operand in {line!r}") from None
        instructions.append(Instruction(op, args))
    return CounterProgram(instructions)


@dataclass(frozen=True)
class RunResult:
    halted: bool
    steps: int


def run_bounded(
    program: CounterProgram, registers: tuple[int, ...], budget: int
) -> RunResult:
    """Execute at most `budget` instructions (HALT counts as one).

    DEC on a zero register leaves it at zero.
    """
    if budget < 0:
        raise ProgramError(f"budget must be >= 0, got {budget}")
    if len(registers) != N_REGISTERS or min(registers) < 0:
        raise ProgramError(f"input must be {N_REGISTERS} non-negative counters")
    regs = list(registers)
    pc = 0
    steps = 0
    while steps < budget:
        instruction = program.instructions[pc]
        steps += 1
        op, args = instruction.op, instruction.args
        if op is Op.HALT:
            return RunResult(True, steps)
        if op is Op.INC:
            regs[args[0]] += 1
            pc += 1
        elif op is Op.DEC:
            regs[args[0]] = max(regs[args[0]] - 1, 0)
            pc += 1
        elif op is Op.JZ:
            pc = args[1] if regs[args[0]] == 0 else pc + 1
        else:
            pc = args[0]
    return RunResult(False, steps)


@dataclass(frozen=True)
class CorpusEntry:
    """A program with its input and known step count (None: never halts)."""

    name: str
    program: CounterProgram
    registers: tuple[int, int]
    expected_steps: Optional[int]


def load_program(path: Path) -> CorpusEntry:
    """Read a `.cm` file with optional `# input: a b` and `# steps: k|never`
    header comments."""
    text = path.read_text()
    registers = (0, 0)
    expected: Optional[int] = None
    for line in text.splitlines():
        match = _HEADER.match(line.strip())
        if match is None:
            continue
        if match["key"] == "input":
            values = tuple(int(v) for v in match["value"].split())
            if len(values) != N_REGISTERS:
                raise ProgramError(f"{path.name}: input needs {N_REGISTERS} values")
            registers = (values[0], values[1])
        elif match["value"] != "never":
            expected = int(match["value"])
    return CorpusEntry(path.stem, parse_program(text), registers, expected)


def load_corpus(directory: Path) -> list[CorpusEntry]:
    """Every `*.cm` program in `directory`, sorted by name."""
    entries = [load_program(path) for path in sorted(directory.glob("*.cm"))]
    LOG.debug("Loaded %s from %s", quantity(len(entries), "program"), directory)
    return entries


def standard_corpus() -> list[CorpusEntry]:
    """The built-in corpus of halting and non-halting programs."""
    return load_corpus(PROGRAMS_PATH)


class Phase(enum.Enum):
    ANTI = "ANTI"
    MEMORIZED = "MEMORIZED"


@dataclass(frozen=True)
class APrime:
    """Learner that runs `program` and memorizes `train_set` once it halts.

    Before halting its model is the anti-learner's output on the training set.
    """

    program: CounterProgram
    registers: tuple[int, int]
    train_set: Dataset
    hypotheses: HypothesisSpace
    anti_index: int
    memorized_index: int

    def phase(self, budget: int) -> Phase:
        """Phase after at most `budget` steps; monotone in the budget."""
        if run_bounded(self.program, self.registers, budget).halted:
            return Phase.MEMORIZED
        return Phase.ANTI

    def model(self, budget: int) -> Hypothesis:
        if self.phase(budget) is Phase.MEMORIZED:
            return self.hypotheses[self.memorized_index]
        return self.hypotheses[self.anti_index]


def build_a_prime(
    program: CounterProgram,
    registers: tuple[int, int],
    train_set: Dataset,
    space: InstanceSpace,
    hypotheses: HypothesisSpace,
    loss: LossFunction,
) -> APrime:
    """Wrap `program` in a learner over `train_set`.

    Raises:
        ConstructionError: The hypothesis space lacks the anti-learner or
                           memorizer tables, or the loss is unbounded.
    """
    anti = AntiLearner(space, hypotheses, loss).emit(train_set)[0]
    memorized = Memorizer(space, hypotheses).emit(train_set)[0]
    return APrime(
        program,
        registers,
        train_set,
        hypotheses,
        int(anti.probs.argmax()),
        int(memorized.probs.argmax()),
    )


@dataclass(frozen=True)
class HaltingCheck:
    budget: int
    halts_within_budget: bool
    steps: int
    verdict: Verdict
    agree: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "budget": self.budget,
            "halted": self.halts_within_budget,
            "steps": self.steps,
            "verdict": self.verdict.decision.value,
            "agree": self.agree,
        }


def overfit_iff_halts(
    ap: APrime, dist: DatasetDistribution, loss: LossFunction, budget: int
) -> HaltingCheck:
    """Compare the overfitting verdict of the phase-`budget` model with the
    halting flag.

    Agreement is guaranteed for 0-1 loss: the memorized model has zero training
    error and positive risk on any instance outside the training examples,
    whether that is an untrained feature or another label on a trained one.
    The anti model has maximal training error.

    Raises:
        PreconditionError: The training set is not a function, or the instance
                           marginal puts no mass outside the training examples.
    """
    if not is_function_consistent(ap.train_set):
        raise PreconditionError("training set assigns two labels to one feature")
    marginal = dist.instance_marginal().probs
    outside = np.ones(marginal.size, dtype=bool)
    outside[ap.train_set.instance_indices] = False
    if float(marginal[outside].sum()) <= 0.0:
        raise PreconditionError(
            "the distribution must put mass outside the training examples"
        )
    run = run_bounded(ap.program, ap.registers, budget)
    verdict = observational_overfit(ap.model(budget), ap.train_set, dist, loss)
    agree = (verdict.decision is Decision.YES) == run.halted
    if not agree:
        LOG.warning("overfit verdict disagrees with halting at budget %d", budget)
    return HaltingCheck(budget, run.halted, run.steps, verdict, agree)
