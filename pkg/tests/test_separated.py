from fractions import Fraction

from hypothesis import given, settings
from hypothesis import strategies as st

from asyncsl.ats import validate_ats
from asyncsl.graph import CODE, FRAME, materialize, validate_axioms
from asyncsl.logic import DEFAULT_PERMS, LogicalState, sep_product
from asyncsl.machine import Acquire, Assign, Const, Load, ModelConfig, Release, Store, Var
from asyncsl.parse import parse_formula
from asyncsl.separated import (HELD_C, HELD_F, SepModel, SepState, ThreePartyState, combine, compatible, is_saturated,
                               lock_step_ats, project, sep_leaf, sep_starts)

ONE = Fraction(1)
HALF = Fraction(1, 2)
SMALL = ModelConfig(vars=("x", "y"), values=(0, 1), locations=(0,), loop_bound=4)


def ls(stack=None, heap=None):
    return LogicalState(stack or {}, heap or {})


def moves(M, x):
    return {(e[1], str(e[2])): e[3] for e in M.out_edges(x)}


def test_combine_and_saturation():
    x = SepState(ls({"x": (0, ONE)}), {}, ls({"y": (1, ONE)}, {0: (0, ONE)}))
    s = combine(x)
    assert s.stack == (("x", 0), ("y", 1)) and s.heap == ((0, 0),)
    assert is_saturated(x, DEFAULT_PERMS)
    assert not is_saturated(SepState(ls({"x": (0, HALF)}), {}, ls()), DEFAULT_PERMS)


def test_moves_respect_ownership():
    x = SepState(ls({"x": (0, ONE)}), {}, ls({"y": (1, ONE)}, {0: (0, ONE)}))
    M = SepModel(SMALL, [Assign("x", Const(1)), Assign("y", Const(0)), Load("x", Const(0))])
    got = moves(M, x)
    assert set(got) == {(CODE, "x := 1"), (FRAME, "y := 0")}
    assert got[(CODE, "x := 1")].code == ls({"x": (1, ONE)})
    assert got[(FRAME, "y := 0")].frame == ls({"y": (0, ONE)}, {0: (0, ONE)})


def test_fractional_read_but_no_write():
    x = SepState(ls({"x": (1, HALF)}), {}, ls({"x": (1, HALF), "y": (0, ONE)}))
    M = SepModel(SMALL, [Assign("y", Var("x")), Assign("x", Const(0))])
    got = moves(M, x)
    assert (FRAME, "y := x") in got
    assert (CODE, "x := 0") not in got and (FRAME, "x := 0") not in got


def test_acquire_and_release_transfer_the_invariant():
    J = parse_formula("0 |-> _")
    cfg = SMALL.replace(locks=("r",))
    M = SepModel(cfg, [Acquire("r"), Release("r")], {"r": J})
    cell = ls({}, {0: (1, ONE)})
    x = SepState(ls(), {"r": cell}, ls({"x": (0, ONE), "y": (0, ONE)}))
    got = moves(M, x)
    assert set(got) == {(CODE, "P(r)"), (FRAME, "P(r)")}
    held = got[(CODE, "P(r)")]
    assert held.code == cell and held.lock("r") == HELD_C
    back = moves(M, held)
    assert set(back) == {(CODE, "V(r)")}
    assert back[(CODE, "V(r)")] == x


def test_release_needs_the_invariant():
    J = parse_formula("0 |-> _")
    cfg = SMALL.replace(locks=("r",))
    M = SepModel(cfg, [Release("r")], {"r": J})
    x = SepState(ls(), {"r": HELD_C}, ls({"x": (0, ONE), "y": (0, ONE)}, {0: (1, ONE)}))
    assert moves(M, x) == {}


def test_starts_are_saturated():
    cfg = SMALL.replace(locks=("r",))
    M = SepModel(cfg, [Store(Const(0), Const(1))], {"r": parse_formula("0 |-> _")})
    starts = sep_starts(M, parse_formula("own(1, x)"))
    assert starts
    for x in starts:
        assert is_saturated(x, DEFAULT_PERMS)
        assert dict(x.code.stack)["x"][1] == ONE


def test_leaf_and_lock_steps_are_valid():
    cfg = SMALL.replace(locks=("r",))
    M = SepModel(cfg, [Store(Const(0), Const(1)), Acquire("r"), Release("r")], {"r": parse_formula("0 |-> _")})
    leaf = sep_leaf(M, Store(Const(0), Const(1)), parse_formula("0 |-> _"), held=("r",))
    assert leaf.code_edges()
    assert validate_ats(leaf).ok
    take = lock_step_ats(M, "r", "take", parse_formula("emp"))
    give = lock_step_ats(M, "r", "release", parse_formula("0 |-> _"))
    for G in (take, give):
        assert G.code_edges()
        assert validate_ats(G).ok
    assert validate_axioms(materialize(M, [leaf.state[n] for n in leaf.initial])[0]).ok


cells = st.sampled_from(["x", "y", 0])
owners = st.sampled_from(["left", "right", "frame", "lock"])


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(cells, st.sampled_from([0, 1]), owners), unique_by=lambda t: t[0]),
       st.sampled_from(["free", "C1", "C2", "F"]))
def test_projections_are_compatible(assign, lock_tag):
    parts = {"left": ({}, {}), "right": ({}, {}), "frame": ({}, {}), "lock": ({}, {})}
    for c, v, who in assign:
        parts[who][0 if isinstance(c, str) else 1][c] = (v, ONE)
    left, right, frame, inv = (ls(*parts[k]) for k in ("left", "right", "frame", "lock"))
    if lock_tag == "free":
        lock = inv
    else:
        lock = lock_tag
        owner = {"C1": "left", "C2": "right", "F": "frame"}[lock_tag]
        merged = sep_product({"left": left, "right": right, "frame": frame}[owner], inv, DEFAULT_PERMS)
        left, right, frame = (merged if owner == k else v for k, v in
                              (("left", left), ("right", right), ("frame", frame)))
    y = ThreePartyState(left, right, (("r", lock),), frame)
    x1, x2 = project(y, "left"), project(y, "right")
    assert compatible(x1, x2) == y
    whole = project(y, "objective")
    assert combine(whole) == combine(x1) == combine(x2)
    if lock_tag in ("C1", "C2"):
        assert whole.lock("r") == HELD_C
    elif lock_tag == "F":
        assert whole.lock("r") == HELD_F
