from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asyncsl.codesem import Atom, If, Malloc, Par, Resource, Seq, Skip, While, With
from asyncsl.logic import (EMP, FALSE, TRUE, And, Exists, Forall, Neg, Or, Own, PointsTo, Pure, Star,
                           format_formula)
from asyncsl.machine import Assign, BConst, BinOp, BoolOp, Cmp, Const, Dispose, Load, Not, Store, Var
from asyncsl.parse import (ParseError, format_context, format_program, parse_context, parse_formula, parse_program,
                           parse_proof)

from conftest import CORPUS

names = st.sampled_from(["x", "y", "z"])
exprs = st.recursive(st.one_of(st.integers(0, 9).map(Const), names.map(Var)),
                     lambda sub: st.builds(BinOp, st.sampled_from(["+", "*"]), sub, sub), max_leaves=4)
cmps = st.builds(Cmp, st.sampled_from(["==", "!=", "<", "<="]), exprs, exprs)
guards = st.recursive(st.one_of(cmps, st.booleans().map(BConst)),
                      lambda sub: st.one_of(st.builds(Not, sub),
                                            st.builds(BoolOp, st.sampled_from(["and", "or"]), sub, sub)),
                      max_leaves=3)
atoms = st.one_of(st.just(Skip()), st.builds(Assign, names, exprs).map(Atom), st.builds(Load, names, exprs).map(Atom),
                  st.builds(Store, exprs, exprs).map(Atom), st.builds(Dispose, exprs).map(Atom),
                  st.builds(Malloc, names, exprs))
locks = st.sampled_from(["r", "s"])
programs = st.recursive(atoms, lambda sub: st.one_of(
    st.builds(Seq, sub, sub), st.builds(Par, sub, sub), st.builds(While, guards, sub),
    st.builds(If, guards, sub, sub), st.builds(With, locks, guards, sub), st.builds(Resource, locks, sub)),
    max_leaves=6)

perms = st.sampled_from([Fraction(1), Fraction(1, 2), Fraction(1, 4), Fraction(3, 4)])
fatoms = st.one_of(st.sampled_from([EMP, TRUE, FALSE]), st.builds(Own, perms, names),
                   st.builds(PointsTo, exprs, perms, st.one_of(st.none(), exprs)), st.builds(Pure, cmps))
formulas = st.recursive(fatoms, lambda sub: st.one_of(
    st.builds(Star, sub, sub), st.builds(And, sub, sub), st.builds(Or, sub, sub), st.builds(Neg, sub),
    st.builds(Exists, st.sampled_from(["v", "w"]), sub), st.builds(Forall, st.sampled_from(["v", "w"]), sub)),
    max_leaves=5)


@settings(max_examples=300, deadline=None)
@given(programs)
def test_program_round_trip(c):
    assert parse_program(format_program(c)) == c


@settings(max_examples=300, deadline=None)
@given(formulas)
def test_formula_round_trip(f):
    assert parse_formula(format_formula(f)) == f


def test_precedence():
    assert parse_program("a := 1 ; b := 2 || c := 3") == Par(
        Seq(Atom(Assign("a", Const(1))), Atom(Assign("b", Const(2)))), Atom(Assign("c", Const(3))))
    assert parse_program("x := 2 * y + 1") == Atom(Assign("x", BinOp("+", BinOp("*", Const(2), Var("y")), Const(1))))
    assert parse_formula("emp * emp && x == 1 || false") == Or(And(Star(EMP, EMP), Pure(Cmp("==", Var("x"),
                                                                                              Const(1)))), FALSE)
    assert parse_formula("x > 1") == Pure(Cmp("<", Const(1), Var("x")))
    assert parse_formula("0 |->{1/2} _") == PointsTo(Const(0), Fraction(1, 2), None)


def test_context_round_trip():
    ctx = parse_context("s: own(1, y), r: 0 |-> _ * emp")
    assert [r for r, _ in ctx] == ["r", "s"]
    assert parse_context(format_context(ctx)) == ctx
    assert parse_context("") == ()


@pytest.mark.parametrize("parser, text, line, col, fragment", [
    (parse_program, "x := [y", 1, 8, "expected ']'"),
    (parse_program, "x := 1 ;", 1, 9, "expected a command"),
    (parse_program, "while x do skip", 1, 9, "expected a comparison"),
    (parse_formula, "own(2, x)", 1, 5, "permission must lie in (0, 1]"),
    (parse_formula, "x |-> ", 1, 7, "expected an expression"),
    (parse_context, "r: emp, r: emp", 1, 9, "bound twice"),
    (parse_proof, '(Afff :pre "emp" :post "emp")', 1, 2, "did you mean Aff?"),
    (parse_proof, '(Seq :pre "emp" :post "emp" (Skip :pre "emp" :post "emp" :code "skip"))', 1, 2,
     "takes 2 premise(s), got 1"),
    (parse_proof, '(Aff :pre "emp"\n :post "own(1, x" :code "x := 1")', 2, 17, "expected ')'"),
    (parse_proof, '(Aff :pre "emp" :post "emp")', 1, 2, "needs :code"),
    (parse_proof, '(Skip :pre "emp" :post "emp" :code "skip" :bogus "x")', 1, 43, "unknown field :bogus"),
])
def test_error_positions(parser, text, line, col, fragment):
    with pytest.raises(ParseError) as info:
        parser(text)
    err = info.value
    assert (err.line, err.col) == (line, col), str(err)
    assert fragment in err.msg


def test_error_mentions_source():
    with pytest.raises(ParseError) as info:
        parse_program("skip ;", "demo.prog")
    assert str(info.value).startswith("demo.prog:1:")


def test_corpus_parses():
    for path in sorted(CORPUS.glob("*.prog")):
        c = parse_program(path.read_text(), str(path))
        assert parse_program(format_program(c)) == c
    for path in sorted(CORPUS.glob("*.proof")):
        d = parse_proof(path.read_text(), str(path))
        assert d.pos == (next(i for i, l in enumerate(path.read_text().splitlines(), 1) if l.startswith("(")), 2)
