"""Assemble per-line translation beams into a complete program under an
execution budget.

The default strategy follows the repair loop used for line-level program
synthesis: judge the all-top-1 program, and while it fails to compile,
advance the beam index of the earliest line implicated by the compiler
diagnostics and re-judge. A score-ordered best-first search over index
combinations is available behind a flag.
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .corpus import TestCase
from .judge import JudgeVerdict, VerdictKind
from .lexer import unpad_literals
from .translator import LineBeam

GREEDY_REPAIR = "greedy-repair"
BEST_FIRST = "best-first"

# Recognized compiler diagnostic shapes; extendable via the patterns argument.
DEFAULT_DIAGNOSTIC_PATTERNS = (
    re.compile(r"^[^:\n]+:(\d+):\d+:\s*(?:fatal\s+)?error\s*:", re.MULTILINE),
    re.compile(r"^[^:\n]+:(\d+):\s*(?:fatal\s+)?error\s*:", re.MULTILINE),
)

JudgeFn = Callable[[str, Sequence[TestCase]], JudgeVerdict]


@dataclass
class AssemblyState:
    """Search bookkeeping: the per-line candidate choice, executions spent,
    and the (degenerate, under greedy repair) score-ordered frontier."""

    choice: list[int]
    executions_used: int = 0
    frontier: list = field(default_factory=list)


@dataclass(frozen=True)
class AssemblyResult:
    success: bool
    program: str  # canonical lines joined by newlines
    verdict: JudgeVerdict
    executions_used: int
    chosen_indices: tuple[int, ...]


def error_lines(
    diagnostics: str,
    line_count: int,
    patterns: Sequence[re.Pattern] = DEFAULT_DIAGNOSTIC_PATTERNS,
) -> list[int]:
    """All 0-based program line indices implicated by error diagnostics,
    ascending; references outside the program (e.g. inside headers) are
    dropped."""
    hits: set[int] = set()
    for pattern in patterns:
        for m in pattern.finditer(diagnostics):
            idx = int(m.group(1)) - 1
            if 0 <= idx < line_count:
                hits.add(idx)
    return sorted(hits)


def first_error_line(
    diagnostics: str,
    line_count: int,
    patterns: Sequence[re.Pattern] = DEFAULT_DIAGNOSTIC_PATTERNS,
) -> int | None:
    """Smallest implicated line index, or None when the diagnostics carry no
    usable line reference (the caller then stops repairing)."""
    lines = error_lines(diagnostics, line_count, patterns)
    return lines[0] if lines else None


def _canonical_program(beams: Sequence[LineBeam], choice: Sequence[int]) -> str:
    return "\n".join(beams[i].candidates[choice[i]].text for i in range(len(beams)))


def _compile_source(beams: Sequence[LineBeam], choice: Sequence[int]) -> str:
    # literals carry boundary padding in canonical form; strip it before
    # handing the text to a real compiler
    return "\n".join(
        unpad_literals(beams[i].candidates[choice[i]].text) for i in range(len(beams))
    )


def assemble(
    beams: Sequence[LineBeam],
    tests: Sequence[TestCase],
    budget: int,
    judge: JudgeFn,
    strategy: str = GREEDY_REPAIR,
) -> AssemblyResult:
    """Search the beam combinations for a program passing all tests within
    ``budget`` compile-and-run attempts.

    One execution is one judge call (a compile plus, if it succeeds, runs
    over all test cases). Test failures terminate the default greedy search
    because only compiler diagnostics name a line to repair; the best-first
    strategy keeps exploring by summed candidate score instead.
    """
    if not beams:
        raise ValueError("assemble needs at least one line beam")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if not tests:
        raise ValueError("assemble needs at least one test case")
    if strategy == GREEDY_REPAIR:
        return _assemble_greedy(beams, tests, budget, judge)
    if strategy == BEST_FIRST:
        return _assemble_best_first(beams, tests, budget, judge)
    raise ValueError(f"unknown assembly strategy {strategy!r}")


def _result(
    beams: Sequence[LineBeam], state: AssemblyState, verdict: JudgeVerdict
) -> AssemblyResult:
    return AssemblyResult(
        success=verdict.kind is VerdictKind.ALL_PASSED,
        program=_canonical_program(beams, state.choice),
        verdict=verdict,
        executions_used=state.executions_used,
        chosen_indices=tuple(state.choice),
    )


def _assemble_greedy(
    beams: Sequence[LineBeam],
    tests: Sequence[TestCase],
    budget: int,
    judge: JudgeFn,
) -> AssemblyResult:
    state = AssemblyState(choice=[0] * len(beams))
    verdict = judge(_compile_source(beams, state.choice), tests)
    state.executions_used = 1
    while state.executions_used < budget:
        if verdict.kind is not VerdictKind.COMPILE_ERROR:
            # passed, or failed tests with no per-line repair signal
            break
        advanced = False
        for line in error_lines(verdict.diagnostics, len(beams)):
            if state.choice[line] + 1 < len(beams[line].candidates):
                state.choice[line] += 1
                advanced = True
                break
        if not advanced:
            break
        verdict = judge(_compile_source(beams, state.choice), tests)
        state.executions_used += 1
    return _result(beams, state, verdict)


def _assemble_best_first(
    beams: Sequence[LineBeam],
    tests: Sequence[TestCase],
    budget: int,
    judge: JudgeFn,
) -> AssemblyResult:
    def total_score(choice: tuple[int, ...]) -> float:
        return sum(beams[i].candidates[c].score for i, c in enumerate(choice))

    start = tuple([0] * len(beams))
    state = AssemblyState(choice=list(start))
    heapq.heappush(state.frontier, (-total_score(start), start))
    seen = {start}
    verdict: JudgeVerdict | None = None
    while state.frontier and state.executions_used < budget:
        _, choice = heapq.heappop(state.frontier)
        state.choice = list(choice)
        verdict = judge(_compile_source(beams, choice), tests)
        state.executions_used += 1
        if verdict.kind is VerdictKind.ALL_PASSED:
            break
        for i in range(len(beams)):
            if choice[i] + 1 < len(beams[i].candidates):
                neighbor = choice[:i] + (choice[i] + 1,) + choice[i + 1 :]
                if neighbor not in seen:
                    seen.add(neighbor)
                    heapq.heappush(state.frontier, (-total_score(neighbor), neighbor))
    assert verdict is not None
    return _result(beams, state, verdict)
