import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lexrank.catalog import quad_rule
from lexrank.core import (
    EPS_RANK,
    Ordering,
    Rule,
    Rulebook,
    RulebookError,
    check_rule_stationarity,
    lex_compare,
    rank,
    rank_of,
    violations,
)


def scalar_rule(name, f, g):
    return Rule(name, lambda x: float(f(x[0])), lambda x: np.array([g(x[0])]))


SQ = scalar_rule("x2", lambda x: x * x, lambda x: 2 * x)
SQ1 = scalar_rule("xm1", lambda x: (x - 1) ** 2, lambda x: 2 * (x - 1))
HINGE = scalar_rule("hinge", lambda x: max(0.0, x) ** 2, lambda x: 2 * max(0.0, x))


def test_violations_direct_evaluation():
    rb = Rulebook((SQ, SQ1), dim=1)
    np.testing.assert_array_equal(violations(rb, [0.0]), [0.0, 1.0])


def test_violations_joint_zero():
    rb = Rulebook((quad_rule([1.0, 2.0]), quad_rule([1.0, 2.0])), dim=2)
    np.testing.assert_array_equal(violations(rb, [1.0, 2.0]), [0.0, 0.0])


def test_violations_dimension_mismatch():
    rb = Rulebook((SQ,), dim=1)
    with pytest.raises(RulebookError):
        violations(rb, [0.0, 1.0])


def test_violations_reject_negative_rule():
    rb = Rulebook((scalar_rule("neg", lambda x: -1.0, lambda x: 0.0),), dim=1)
    with pytest.raises(RulebookError):
        violations(rb, [0.0])


def test_rulebook_invariants():
    with pytest.raises(RulebookError):
        Rulebook((), dim=1)
    with pytest.raises(RulebookError):
        Rulebook((SQ,), dim=1, bounds=[[1.0, 0.0]])


@pytest.mark.parametrize(
    "v, eps, expected",
    [([0, 0, 0.5, 0, 1], EPS_RANK, 2), ([0, 0, 0, 0, 0], EPS_RANK, 5), ([1e-12, 0.3], 1e-9, 1)],
)
def test_rank_examples(v, eps, expected):
    assert rank_of(v, eps) == expected


def test_rank_rejects_negative_eps():
    with pytest.raises(RulebookError):
        rank_of([0.0], -1.0)


def test_rank_of_rulebook():
    rb = Rulebook((SQ, SQ1), dim=1)
    assert rank(rb, [0.0]) == 1
    assert rank(rb, [0.5]) == 0


@pytest.mark.parametrize(
    "a, b, expected",
    [([0, 1], [1, 0], Ordering.LESS), ([0.2, 0.3], [0.2, 0.3], Ordering.EQUAL), ([0.5, 0], [0.5, 3], Ordering.LESS)],
)
def test_lex_compare_examples(a, b, expected):
    assert lex_compare(a, b) is expected


def test_lex_compare_tie_tolerance_and_length_check():
    assert lex_compare([1e-12, 1.0], [0.0, 2.0]) is Ordering.LESS
    assert lex_compare([0.1, 1.0], [0.1 + 1e-3, 2.0], eps=1e-2) is Ordering.LESS
    with pytest.raises(RulebookError):
        lex_compare([0, 1], [0, 1, 2])


def test_stationarity_audit_examples():
    assert check_rule_stationarity(SQ, [np.array([s]) for s in (-1.0, 0.5, 2.0)]).ok
    assert check_rule_stationarity(HINGE, [np.array([s]) for s in (-1.0, 0.0, 1.0)]).ok
    broken = scalar_rule("broken", lambda x: 1 + x * x, lambda x: 2 * x)
    report = check_rule_stationarity(broken, [np.array([0.0]), np.array([1.0])])
    assert not report.ok
    assert len(report.counterexamples) == 1
    x, value, gnorm = report.counterexamples[0]
    np.testing.assert_array_equal(x, [0.0])
    assert value == 1.0 and gnorm == 0.0


def test_stationarity_audit_needs_samples():
    with pytest.raises(RulebookError):
        check_rule_stationarity(SQ, [])


# -- properties ----------------------------------------------------------------

# mix exact zeros, sub-threshold values and ordinary ones so ties actually occur
entry = st.one_of(st.just(0.0), st.just(1e-12), st.sampled_from([0.5, 1.0, 2.0]), st.floats(0, 10))
vec = st.integers(1, 5).flatmap(lambda n: st.tuples(*[st.lists(entry, min_size=n, max_size=n)] * 3))


@given(st.lists(entry, min_size=1, max_size=6))
def test_rank_n_iff_all_below_eps(v):
    assert (rank_of(v) == len(v)) == all(x <= EPS_RANK for x in v)


@given(vec)
def test_lex_compare_total_preorder(abc):
    a, b, c = abc
    assert lex_compare(a, a) is Ordering.EQUAL
    assert lex_compare(a, b) == -lex_compare(b, a)
    if lex_compare(a, b) is Ordering.LESS and lex_compare(b, c) is Ordering.LESS:
        assert lex_compare(a, c) is Ordering.LESS


@given(vec)
def test_higher_rank_is_lex_better(abc):
    # rank is the index of the first violated rule, so a decision of lower
    # rank violates a more important rule and is lexicographically worse
    a, b, _ = abc
    if rank_of(a) > rank_of(b):
        assert lex_compare(a, b) is Ordering.LESS
    elif rank_of(a) < rank_of(b):
        assert lex_compare(a, b) is Ordering.GREATER
