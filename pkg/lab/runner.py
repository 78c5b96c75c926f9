"""Run generated code against unit tests, map the outcome to a reward, estimate pass@k."""
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from minilang import DEFAULT_FUEL, Category, CompileError, CoverageTrace, ExecStatus, Program, compile_source, execute


class Outcome(str, Enum):
    PASSED_ALL = "passed-all"
    FAILED = "failed"
    RUNTIME_ERROR = "runtime-error"
    COMPILE_ERROR = "compile-error"


REWARDS = {
    Outcome.PASSED_ALL: 1.0,
    Outcome.FAILED: -0.3,
    Outcome.RUNTIME_ERROR: -0.6,
    Outcome.COMPILE_ERROR: -1.0,
}


@dataclass(frozen=True)
class CaseResult:
    status: ExecStatus
    trace: CoverageTrace
    output: Optional[tuple]
    passed: bool


@dataclass(frozen=True)
class ExecReport:
    category: Outcome
    per_test: tuple
    reward: float
    program: Optional[Program] = None

    @property
    def traces(self) -> list:
        return [case.trace for case in self.per_test]


def reward_of(category) -> float:
    return REWARDS[Outcome(category)]


def compile_error_report() -> ExecReport:
    return ExecReport(Outcome.COMPILE_ERROR, (), reward_of(Outcome.COMPILE_ERROR))


def run_tests(code: str, tests: Sequence, fuel: int = DEFAULT_FUEL) -> ExecReport:
    """Every test runs even after a failure, so coverage is complete.

    Precedence: compile-error > runtime-error > failed > passed-all.
    Needs at least one test.
    """
    if not tests:
        raise ValueError("no unit tests")
    try:
        program = compile_source(code)
    except CompileError:
        return compile_error_report()
    cases = []
    for test in tests:
        status, trace = execute(program, test.input, fuel)
        passed = status.category is Category.COMPLETED and status.output == tuple(test.expected)
        cases.append(CaseResult(status, trace, status.output, passed))
    if any(case.status.category is Category.RUNTIME_ERROR for case in cases):
        category = Outcome.RUNTIME_ERROR
    elif not all(case.passed for case in cases):
        category = Outcome.FAILED
    else:
        category = Outcome.PASSED_ALL
    return ExecReport(category, tuple(cases), reward_of(category), program)


def pass_at_k(n: int, c: int, k: int) -> float:
    """1 - C(n-c, k) / C(n, k), in product form."""
    if not 0 <= c <= n:
        raise ValueError(f"need 0 <= c <= n, got n={n}, c={c}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got n={n}, k={k}")
    if n - c < k:
        return 1.0
    return float(1.0 - np.prod(1.0 - k / np.arange(n - c + 1, n + 1)))


def mean_pass_at_k(counts: Sequence, k: int) -> float:
    """Mean pass@k over (n, c) pairs, one per task."""
    if not counts:
        return 0.0
    return float(np.mean([pass_at_k(n, c, k) for n, c in counts]))
