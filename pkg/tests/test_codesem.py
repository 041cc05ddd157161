from collections import deque

import pytest
from hypothesis import given, settings, strategies as st

from asyncsl.ats import validate_ats
from asyncsl.codesem import (Atom, CodeSemantics, If, Malloc, Par, Seq, Skip, With, both_semantics, free_locks,
                             program_alphabet, program_vars)
from asyncsl.graph import CODE, check_hom
from asyncsl.machine import (ERROR, Assign, BinOp, Cmp, Const, Dispose, Load, MachineState, ModelConfig, Store, Var,
                             eval_expr, step)
from asyncsl.parse import parse_program

CFG = ModelConfig(vars=("x", "y"), values=(0, 1), locations=(0,), loop_bound=6)
X, Y = Var("x"), Var("y")


# reference interleaving interpreter

def ref_steps(c, s, cfg):
    if isinstance(c, Skip):
        return [(None, s)]
    if isinstance(c, Atom):
        return [(None, t) for t in step(s, c.instr, cfg)]
    if isinstance(c, Malloc):
        from asyncsl.machine import Alloc
        return [(None, t) for l in cfg.locations for t in step(s, Alloc(c.x, c.e, l), cfg)]
    if isinstance(c, Seq):
        return [(Seq(r, c.c2) if r is not None else c.c2, t) for r, t in ref_steps(c.c1, s, cfg)]
    if isinstance(c, Par):
        out = [(Par(r, c.c2) if r is not None else c.c2, t) for r, t in ref_steps(c.c1, s, cfg)]
        out += [(Par(c.c1, r) if r is not None else c.c1, t) for r, t in ref_steps(c.c2, s, cfg)]
        return out
    if isinstance(c, If):
        v = eval_expr(c.b, s.s, cfg)
        if v is None:
            return [(None, ERROR)]
        return [(c.c1 if v else c.c2, s)]
    raise TypeError(c)


def ref_outcomes(c, s, cfg) -> set:
    out = set()
    seen = {(c, s)}
    todo = deque(seen)
    while todo:
        c1, s1 = todo.popleft()
        if s1 is ERROR or c1 is None:
            out.add(s1)
            continue
        for nxt in ref_steps(c1, s1, cfg):
            if nxt not in seen:
                seen.add(nxt)
                todo.append(nxt)
    return out


def ats_outcomes(G, s) -> set:
    """States reached along Code edges only from the initial node over s."""
    (start,) = [n for n in G.initial if G.state[n] == s]
    g = G.graph
    seen = {start}
    todo = [start]
    out = set()
    while todo:
        n = todo.pop()
        if n in G.returning or G.state[n] is ERROR:
            out.add(G.state[n])
        for e in g.out_edges(n):
            if g.pols[e] == CODE and g.dst[e] not in seen:
                seen.add(g.dst[e])
                todo.append(g.dst[e])
    return out


atoms = st.sampled_from([
    Atom(Assign("x", Const(1))), Atom(Assign("y", X)), Atom(Assign("x", BinOp("+", X, Const(1)))),
    Atom(Store(Const(0), Y)), Atom(Load("y", Const(0))), Atom(Dispose(Const(0))), Malloc("x", Const(1)), Skip(),
])
guards = st.sampled_from([Cmp("==", X, Const(0)), Cmp("<", Y, X)])


def programs(depth=2):
    return st.recursive(atoms, lambda sub: st.one_of(
        st.builds(Seq, sub, sub), st.builds(Par, sub, sub), st.builds(If, guards, sub, sub)), max_leaves=4)


START = [MachineState({"x": 0}, {0: 1}), MachineState({"x": 1, "y": 0}, {}), MachineState({}, {0: 0})]


@settings(max_examples=40, deadline=None)
@given(programs())
def test_code_runs_match_interleavings(c):
    G = CodeSemantics.for_program(c, CFG, "S").sem(c)
    for s in START:
        assert ats_outcomes(G, s) == ref_outcomes(c, s, CFG)


@settings(max_examples=25, deadline=None)
@given(programs())
def test_semantics_are_valid_and_erasure_is_a_morphism(c):
    GS, GL, F = both_semantics(c, CFG)
    for G in (GS, GL):
        rep = validate_ats(G)
        assert rep.ok, rep.summary()
    assert check_hom(F).ok


def test_helpers():
    c = parse_program("resource r do { with r when x == 0 do y := 1 } ; with q when true do skip")
    assert free_locks(c) == {"q"}
    assert program_vars(c) == {"x", "y"}
    alpha = program_alphabet(c, CFG)
    assert {str(m) for m in alpha} >= {"nop", "P(r) when x == 0", "V(r)", "P(q)", "y := 1", "eval(x == 0)"}
    assert {str(m) for m in program_alphabet(parse_program("if y < 1 then skip else skip"), CFG)} >= {"test(y < 1)"}


def test_dead_loop_converges():
    c = parse_program("while false do skip")
    G = CodeSemantics.for_program(c, CFG, "S").sem(c)
    assert not G.truncated and G.info["iterations"] == 1 and G.info["steps"] == 2
    s = MachineState({"x": 0})
    assert ats_outcomes(G, s) == {s}


def test_loop_outcomes():
    # the environment may reset x between rounds, so the unrolling is cut off
    c = parse_program("while x < 1 do x := x + 1")
    G = CodeSemantics.for_program(c, CFG, "S").sem(c)
    assert G.truncated and G.info["steps"] == CFG.loop_bound
    assert ats_outcomes(G, MachineState({"x": 0})) == {MachineState({"x": 1})}
    assert ats_outcomes(G, MachineState({})) == {ERROR}
    assert validate_ats(G).ok


def test_divergent_loop_is_truncated():
    c = parse_program("while true do skip")
    GS, GL, F = both_semantics(c, CFG)
    assert GS.truncated and GL.truncated
    assert GS.info["steps"] == CFG.loop_bound == GL.info["steps"]
    assert validate_ats(GL).ok


def test_with_body_runs_under_the_lock():
    c = parse_program("resource r do { with r when x == 0 do x := 1 || with r when x == 0 do x := 1 }")
    G = CodeSemantics.for_program(c, CFG, "S").sem(c)
    assert validate_ats(G).ok
    # the second critical section waits forever once x = 1: only one write happens
    assert ats_outcomes(G, MachineState({"x": 0})) == set()
    d = parse_program("resource r do { with r when true do x := x + 1 || with r when true do x := x + 1 }")
    G = CodeSemantics.for_program(d, CFG.replace(values=(0, 1, 2, 3)), "S").sem(d)
    assert ats_outcomes(G, MachineState({"x": 0})) == {MachineState({"x": 2})}


def test_undeclared_lock_is_rejected():
    S = CodeSemantics(CFG, "S")
    with pytest.raises(ValueError):
        S.sem(With("r", Cmp("==", X, X), Skip()), locks=())
    with pytest.raises(ValueError):
        CodeSemantics(CFG, "Q")


@pytest.mark.parametrize("src", [
    "if x == 0 then x := 1 else y := 1",
    "resource r do { with r when x == 0 do x := 1 }",
    "while y < 1 do x := 1",
])
def test_variable_guards_keep_the_axioms(src):
    # a guard reads its variables, so writes by the environment must not
    # commute with the branch step
    c = parse_program(src)
    GS, GL, F = both_semantics(c, CFG)
    for G in (GS, GL):
        rep = validate_ats(G)
        assert rep.ok, rep.summary()
    assert check_hom(F).ok
    assert any(str(GS.graph.labels[e]).startswith(("test(", "P(r) when")) for e in GS.code_edges())
