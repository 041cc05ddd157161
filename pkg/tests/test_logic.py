from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from asyncsl.logic import (EMP, EMPTY, FALSE, TRUE, And, Eq, Exists, Forall, FractionPerms, LogicalState, Neg, Or, Own,
                           PointsTo, Star, all_logical_states, big_product, entailment_counterexample, entails,
                           erase_logical, format_formula, implies_def, is_precise, is_precise_brute, models, satisfies,
                           sep_product, sep_residual, splits, subst)
from asyncsl.machine import Cmp, Const, MachineState, ModelConfig, Var

P4 = FractionPerms(4)
CFG = ModelConfig(vars=("x", "y"), values=(0, 1), locations=(0,))
TINY = ModelConfig(vars=("x",), values=(0, 1), locations=(0,))
HALF = Fraction(1, 2)

STATES = list(all_logical_states(CFG, P4))
TINY_STATES = list(all_logical_states(TINY, P4))


def test_permissions():
    assert P4.carrier() == (Fraction(1, 4), HALF, Fraction(3, 4), Fraction(1))
    assert P4.mul(HALF, HALF) == 1 and P4.mul(HALF, Fraction(3, 4)) is None
    assert set(P4.splits(HALF)) == {(Fraction(1, 4), Fraction(1, 4))}
    with pytest.raises(ValueError):
        FractionPerms(0)


def test_product_basics():
    a = LogicalState({"x": (1, HALF)})
    assert sep_product(a, a, P4) == LogicalState({"x": (1, Fraction(1))})
    assert sep_product(a, LogicalState({"x": (0, HALF)}), P4) is None
    full = LogicalState({"x": (1, Fraction(1))})
    assert sep_product(full, a, P4) is None
    assert sep_residual(full, a, P4) == a
    assert sep_residual(a, full, P4) is None
    assert big_product([a, a], P4) == full
    assert erase_logical(full) == MachineState({"x": 1})


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(STATES), st.sampled_from(STATES), st.sampled_from(STATES))
def test_product_is_a_partial_commutative_monoid(a, b, c):
    assert sep_product(a, EMPTY, P4) == a
    assert sep_product(a, b, P4) == sep_product(b, a, P4)
    ab, bc = sep_product(a, b, P4), sep_product(b, c, P4)
    left = None if ab is None else sep_product(ab, c, P4)
    right = None if bc is None else sep_product(a, bc, P4)
    assert left == right
    if ab is not None:
        assert sep_residual(ab, a, P4) == b


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(STATES))
def test_splits_recompose(sigma):
    seen = set()
    for a, b in splits(sigma, P4):
        assert sep_product(a, b, P4) == sigma
        seen.add((a, b))
    assert (sigma, EMPTY) in seen and (EMPTY, sigma) in seen


def test_atoms():
    x1 = LogicalState({"x": (1, Fraction(1))})
    assert satisfies(x1, Own(Fraction(1), "x"), CFG)
    assert not satisfies(x1, Own(HALF, "x"), CFG)
    assert satisfies(x1, Eq(Var("x"), Const(1)), CFG)
    assert not satisfies(EMPTY, Eq(Var("x"), Var("x")), CFG)
    c = LogicalState({}, {0: (1, HALF)})
    assert satisfies(c, PointsTo(Const(0), HALF, Const(1)), CFG)
    assert satisfies(c, PointsTo(Const(0), HALF, None), CFG)
    assert not satisfies(c, PointsTo(Const(0), Fraction(1), None), CFG)
    assert satisfies(EMPTY, EMP, CFG) and not satisfies(x1, EMP, CFG)
    assert satisfies(x1, Exists("v", Eq(Var("x"), Var("v"))), CFG)
    assert not satisfies(x1, Forall("v", Eq(Var("x"), Var("v"))), CFG)
    assert subst(PointsTo(Var("v"), 1, Var("v")), "v", 0) == PointsTo(Const(0), 1, Const(0))


def test_star_splits_the_state():
    both = LogicalState({"x": (0, Fraction(1)), "y": (1, Fraction(1))})
    f = Star(Own(Fraction(1), "x"), Own(Fraction(1), "y"))
    assert satisfies(both, f, CFG)
    assert not satisfies(both, Star(Own(Fraction(1), "x"), EMP), CFG)
    assert models(f, CFG, P4) == {LogicalState({"x": (a, Fraction(1)), "y": (b, Fraction(1))})
                                 for a in (0, 1) for b in (0, 1)}


def test_precision():
    assert not is_precise(TRUE, CFG)
    assert is_precise(EMP, CFG)
    assert is_precise(PointsTo(Const(0), 1, Const(1)), CFG)
    assert not is_precise(Or(EMP, Own(Fraction(1), "x")), CFG)
    assert is_precise(Own(Fraction(1), "x"), CFG)
    assert not is_precise(Star(Own(HALF, "x"), TRUE), TINY)


def test_entailment():
    assert entails(Own(1, "x"), Exists("v", Eq(Var("x"), Var("v"))), CFG)
    assert entailment_counterexample(Own(1, "x"), EMP, CFG) is not None
    assert entails(FALSE, EMP, CFG)
    assert implies_def(Own(HALF, "x"), Cmp("<", Var("x"), Const(1)), CFG)
    assert not implies_def(EMP, Cmp("<", Var("x"), Const(1)), CFG)


def test_format():
    f = Star(Or(EMP, Own(HALF, "x")), PointsTo(Const(0), HALF, None))
    assert format_formula(f) == "(emp || own(1/2, x)) * 0 |->{1/2} _"
    assert format_formula(Neg(Eq(Var("x"), Const(0)))) == "!(x == 0)"


# random formulas over the tiny configuration

atoms = st.sampled_from([
    EMP, TRUE, FALSE, Own(Fraction(1), "x"), Own(HALF, "x"), PointsTo(Const(0), Fraction(1), None),
    PointsTo(Const(0), HALF, Const(1)), Eq(Var("x"), Const(0)),
])
formulas = st.recursive(atoms, lambda sub: st.one_of(
    st.builds(Star, sub, sub), st.builds(And, sub, sub), st.builds(Or, sub, sub), st.builds(Neg, sub)),
    max_leaves=4)


@settings(max_examples=150, deadline=None)
@given(formulas)
def test_models_match_satisfaction(f):
    assert models(f, TINY, P4) == {s for s in TINY_STATES if satisfies(s, f, TINY, P4)}


@settings(max_examples=80, deadline=None)
@given(formulas)
def test_precision_matches_its_definition(f):
    assert is_precise(f, TINY, P4) == is_precise_brute(f, TINY, P4)


@settings(max_examples=100, deadline=None)
@given(formulas, formulas)
def test_star_commutes(f, g):
    assert models(Star(f, g), TINY, P4) == models(Star(g, f), TINY, P4)
