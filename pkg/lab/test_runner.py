"""
Tests for outcome classification, rewards and the pass@k estimator.
"""

import itertools
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from corpus import UnitTest, generate_corpus
from minilang import KEYWORDS, OPERATORS, PUNCTUATION
from runner import REWARDS, Outcome, mean_pass_at_k, pass_at_k, reward_of, run_tests

DOUBLE = "x = read ( ) ; print x * 2 ;"
TESTS = (UnitTest((1,), (2,)), UnitTest((5,), (10,)), UnitTest((0,), (0,)))


# ---------------------------------------------------------------------------
# run_tests / reward_of
# ---------------------------------------------------------------------------

def test_correct_solution_passes():
    report = run_tests(DOUBLE, TESTS)
    assert report.category is Outcome.PASSED_ALL
    assert report.reward == 1.0
    assert all(case.passed for case in report.per_test)


def test_off_by_one_fails():
    report = run_tests("x = read ( ) ; if x == 5 { x = x + 1 ; } print x * 2 ;", TESTS)
    assert report.category is Outcome.FAILED
    assert report.reward == -0.3
    assert [case.passed for case in report.per_test] == [True, False, True]


def test_division_by_zero_is_runtime_error():
    report = run_tests("x = read ( ) ; print 10 / x ;", TESTS)
    assert report.category is Outcome.RUNTIME_ERROR
    assert report.reward == -0.6


def test_unparseable_is_compile_error():
    report = run_tests("print {", TESTS)
    assert report.category is Outcome.COMPILE_ERROR
    assert report.reward == -1.0
    assert report.per_test == () and report.program is None


def test_runtime_error_dominates_failure_in_any_order():
    code = "x = read ( ) ; print 6 / ( x - 5 ) ;"
    tests = [UnitTest((1,), (99,)), UnitTest((5,), (0,)), UnitTest((7,), (3,))]
    for order in itertools.permutations(tests):
        report = run_tests(code, order)
        assert report.category is Outcome.RUNTIME_ERROR
        assert len(report.per_test) == 3


def test_empty_test_list_is_refused():
    with pytest.raises(ValueError, match="no unit tests"):
        run_tests(DOUBLE, ())
    with pytest.raises(ValueError):
        run_tests("print {", [])


def test_every_test_runs_after_a_failure():
    report = run_tests("x = read ( ) ; print x ;", TESTS)
    assert len(report.per_test) == len(TESTS)
    assert [case.output for case in report.per_test] == [(1,), (5,), (0,)]


def test_canonical_solutions_pass_their_tests():
    for inst in generate_corpus(3, 40):
        assert run_tests(inst.y, inst.tests).category is Outcome.PASSED_ALL


def test_reward_mapping_is_exact_and_injective():
    assert {o.value: reward_of(o) for o in Outcome} == {
        "passed-all": 1.0, "failed": -0.3, "runtime-error": -0.6, "compile-error": -1.0,
    }
    assert reward_of("failed") == -0.3
    assert len(set(REWARDS.values())) == len(REWARDS)


def test_random_piece_strings_are_compile_errors():
    rng = np.random.default_rng(0)
    alphabet = list(KEYWORDS + OPERATORS + PUNCTUATION) + list("abcxyz") + list("0123456789")
    categories = []
    for _ in range(1000):
        length = int(rng.integers(4, 16))
        code = " ".join(alphabet[int(i)] for i in rng.integers(0, len(alphabet), size=length))
        categories.append(run_tests(code, TESTS).category)
    assert categories.count(Outcome.COMPILE_ERROR) >= 980


# ---------------------------------------------------------------------------
# pass@k
# ---------------------------------------------------------------------------

def _enumerated(n, c, k):
    draws = list(itertools.combinations(range(n), k))
    return sum(any(i < c for i in draw) for draw in draws) / len(draws)


@pytest.mark.parametrize("n,c,k,expected", [(1, 1, 1, 1.0), (5, 2, 2, 0.7), (5, 0, 3, 0.0), (5, 0, 1, 0.0)])
def test_pass_at_k_fixtures(n, c, k, expected):
    assert pass_at_k(n, c, k) == pytest.approx(expected, abs=1e-12)


def test_pass_at_k_matches_enumeration():
    for n in range(1, 11):
        for c in range(n + 1):
            for k in range(1, n + 1):
                assert abs(pass_at_k(n, c, k) - _enumerated(n, c, k)) < 1e-9


def test_pass_at_k_monotone_in_k_and_c():
    for n in range(1, 11):
        for c in range(n + 1):
            values = [pass_at_k(n, c, k) for k in range(1, n + 1)]
            assert values == sorted(values)
        for k in range(1, n + 1):
            values = [pass_at_k(n, c, k) for c in range(n + 1)]
            assert values == sorted(values)


def test_pass_at_k_agrees_with_resampling():
    rng = np.random.default_rng(7)
    draws = 100_000
    for _ in range(20):
        n = int(rng.integers(2, 30))
        c = int(rng.integers(0, n + 1))
        k = int(rng.integers(1, n + 1))
        hits = rng.hypergeometric(c, n - c, k, size=draws) > 0 if c else np.zeros(draws, dtype=bool)
        p = pass_at_k(n, c, k)
        sigma = max(np.sqrt(p * (1 - p) / draws), 1e-12)
        assert abs(hits.mean() - p) <= 5 * sigma + 1e-12


@pytest.mark.parametrize("n,c,k", [(5, 6, 1), (5, -1, 1), (5, 2, 0), (5, 2, 6)])
def test_pass_at_k_domain(n, c, k):
    with pytest.raises(ValueError):
        pass_at_k(n, c, k)


def test_mean_pass_at_k():
    assert mean_pass_at_k([(5, 2), (5, 5), (5, 0)], 2) == pytest.approx((0.7 + 1.0 + 0.0) / 3)
    assert mean_pass_at_k([], 1) == 0.0
