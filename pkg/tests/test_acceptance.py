"""End-to-end acceptance checks.  Each test records one PASS/FAIL line that
is printed in the terminal summary (see conftest.py)."""
import io
import itertools
import random
import time

import pytest

from asyncsl import cli
from asyncsl.ats import validate_ats
from asyncsl.codesem import CodeSemantics
from asyncsl.graph import check_2_fibration, materialize, validate_axioms
from asyncsl.logic import (EMP, TRUE, FractionPerms, LogicalState, PointsTo, is_precise, sep_product)
from asyncsl.machine import (ERROR, Const, ModelConfig, StatefulModel, StatelessModel, all_states,
                             canonical_alphabet, residual_oracle, step)
from asyncsl.parse import parse_formula, parse_program
from asyncsl.proofs import check_derivation
from asyncsl.soundness import (check_1_soundness, check_2_soundness, check_soundness, closed_pre,
                               restrict_closed)

from conftest import ACCEPTANCE, CFG, CORPUS, bundle, corpus_programs, corpus_proof_names, proof

LIMIT_S = 60.0


def record(n: int, ok: bool, msg: str):
    ACCEPTANCE[n] = (ok, msg)
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {msg}")
    assert ok, msg


def _program(name):
    return parse_program((CORPUS / f"{name}.prog").read_text())


def test_criterion_1_write_write_race():
    t = time.time()
    own = parse_formula("own(1, x)")
    par = check_soundness(_program("par_write"), own, CFG)
    seq = check_soundness(_program("seq_write"), own, CFG)
    race = next((r for r in par.races if {r.first, r.second} == {"x := 2", "x := 3"}), None)
    stateless = race is not None and all("-τ->" in side for side in race.tile)
    dt = time.time() - t
    ok = (not par.ok and par.pairs() == {("x := 2", "x := 3")} and stateless and seq.ok and dt < LIMIT_S)
    record(1, ok, f"x:=2 || x:=3 races on (x:=2, x:=3) over a τ.τ stateless tile; x:=2 ; x:=3 is race-free "
                  f"({dt:.1f}s)")


def test_criterion_2_self_race():
    t = time.time()
    rep = check_soundness(_program("self_race"), parse_formula("own(1, x)"), CFG)
    dt = time.time() - t
    ok = not rep.ok and ("x := 1", "x := 1") in rep.pairs() and dt < LIMIT_S
    record(2, ok, f"x:=1 || x:=1 races with itself ({dt:.1f}s)")


def test_criterion_3_hidden_lock_not_code_code_2_fibration():
    t = time.time()
    c = _program("hidden_lock")
    G = CodeSemantics.for_program(c, CFG, "S").sem(c)
    res = check_2_fibration(G.getstate(), "CC", limit=10)
    labels = {(str(G.graph.labels[u]), str(G.graph.labels[w])) for u, w, _ in res.witnesses}
    dt = time.time() - t
    ok = not res.ok and ("nop", "nop") in labels and dt < LIMIT_S
    record(3, ok, f"getstate of the hidden-lock program is not a Code-Code 2-fibration, witness {sorted(labels)} "
                  f"({dt:.1f}s)")


THEOREM_PROOFS = ["aff", "seq", "par", "frame", "disj", "with"]


@pytest.mark.parametrize("name", THEOREM_PROOFS)
def test_criterion_4_theorem_instances(name):
    t = time.time()
    d = proof(name)
    rep = check_derivation(d, CFG)
    b = bundle(name)
    r1 = check_1_soundness(b, CFG)
    r2 = check_2_soundness(b, CFG)
    locks = tuple(r for r, _ in d.ctx)
    races = check_soundness(d.code, closed_pre(d), CFG, locks)
    dt = time.time() - t
    ok = rep.ok and r1.ok and r2.ok and races.ok and dt < LIMIT_S
    ACCEPTANCE.setdefault("4-parts", {})[name] = (ok, dt)
    parts = ACCEPTANCE["4-parts"]
    done = all(n in parts for n in THEOREM_PROOFS)
    msg = (f"{name}: derivation {rep.ok}, 1-soundness {r1.ok}, 2-soundness {r2.ok}, race-free {races.ok} "
           f"({dt:.1f}s)")
    print(msg)
    if done:
        del ACCEPTANCE["4-parts"]
        all_ok = all(v[0] for v in parts.values())
        ACCEPTANCE[4] = (all_ok, "valid derivations " + ", ".join(
            f"{n} ({'ok' if parts[n][0] else 'FAILED'}, {parts[n][1]:.0f}s)" for n in THEOREM_PROOFS))
    assert ok, msg


def test_criterion_5_no_abort():
    t = time.time()
    bad = []
    for name in corpus_proof_names():
        d = proof(name)
        R = restrict_closed(bundle(name).code_s, closed_pre(d), CFG)
        if any(s is ERROR for s in R.state):
            bad.append(name)
    dt = time.time() - t
    record(5, not bad, f"error state unreachable from the precondition in all {len(corpus_proof_names())} "
                       f"corpus proofs{'; fails for ' + ', '.join(bad) if bad else ''} ({dt:.1f}s)")


def footprint_tile(model: StatefulModel, s, m1, m2) -> bool:
    for s1 in step(s, m1, model.cfg):
        for s3 in step(s1, m2, model.cfg):
            if model.tiles_at((s, m1, s1), (s1, m2, s3)):
                return True
    return False


def enabled(s, m, cfg) -> bool:
    out = step(s, m, cfg)
    return bool(out) and out != [ERROR]


def test_criterion_6_footprint_tiles_match_oracle():
    t = time.time()
    cfg = CFG.replace(locks=("r",))
    model = StatefulModel(cfg)
    alphabet = canonical_alphabet(cfg, ("r",))
    rng = random.Random(20261016)
    states = [s for s in all_states(cfg, ("r",)) if s is not ERROR]
    pairs = []
    while len(pairs) < 10_000:
        s = rng.choice(states)
        m1, m2 = rng.choice(alphabet), rng.choice(alphabet)
        if enabled(s, m1, cfg) and enabled(s, m2, cfg):
            pairs.append((s, m1, m2))
    bad = [(s, m1, m2) for s, m1, m2 in pairs
           if footprint_tile(model, s, m1, m2) != (residual_oracle(s, m1, m2, cfg) is not None)]
    commuting = sum(footprint_tile(model, *p) for p in pairs)
    dt = time.time() - t
    record(6, not bad and dt < LIMIT_S,
           f"footprint tiles agree with the residual oracle on {len(pairs)} enabled pairs "
           f"({commuting} commuting, {len(bad)} disagreements, {dt:.1f}s)")


def _validate_code(name, c, GS, GL, alphabet, locks, problems) -> int:
    checked = 0
    for M in (StatefulModel(CFG, alphabet, locks), StatelessModel(CFG, locks)):
        rep = validate_axioms(materialize(M)[0])
        checked += rep.checked
        if not rep.ok:
            problems.append(f"{name} model: {rep.summary(1)}")
    for G in (GS, GL):
        rep = validate_ats(G)
        checked += rep.checked
        if not rep.ok:
            problems.append(f"{name} {G.kind}: {rep.summary(1)}")
    return checked


def test_criterion_7_axioms_on_corpus():
    t = time.time()
    problems = []
    checked = 0
    programs = corpus_programs()
    for name, c in programs.items():
        S = CodeSemantics.for_program(c, CFG, "S")
        L = CodeSemantics(CFG, "L", S.alphabet, guide=S)
        locks = S.top_locks(c)
        checked += _validate_code(name, c, S.sem(c, locks), L.sem(c, locks), S.alphabet, locks, problems)
    for name in corpus_proof_names():
        b = bundle(name)
        locks = tuple(sorted(r for r, _ in proof(name).ctx))
        checked += _validate_code(f"{name}.proof", b.derivation.code, b.code_s, b.code_l, b.semantics.alphabet,
                                  locks, problems)
        G = b.sep
        rep = validate_ats(G)
        rep.merge(validate_axioms(materialize(G.model, [G.state[n] for n in G.initial])[0]))
        checked += rep.checked
        if not rep.ok:
            problems.append(f"{name} proof: {rep.summary(1)}")
    dt = time.time() - t
    record(7, not problems and dt < LIMIT_S,
           f"models and semantics of {len(programs)} programs and {len(corpus_proof_names())} proofs satisfy "
           f"the axioms ({checked} checks, {dt:.1f}s)" + ("; " + "; ".join(problems[:3]) if problems else ""))


def _small_states(cfg: ModelConfig, perms: FractionPerms, max_cells: int = 2) -> list:
    cells = [("v", x) for x in cfg.vars] + [("l", l) for l in cfg.locations]
    out = []
    for k in range(max_cells + 1):
        for keys in itertools.combinations(cells, k):
            for vals in itertools.product(cfg.values, repeat=k):
                for ps in itertools.product(perms.carrier(), repeat=k):
                    st = {key[1]: (v, p) for key, v, p in zip(keys, vals, ps) if key[0] == "v"}
                    hp = {key[1]: (v, p) for key, v, p in zip(keys, vals, ps) if key[0] == "l"}
                    out.append(LogicalState(st, hp))
    return out


def test_criterion_8_logic_algebra():
    t = time.time()
    perms = FractionPerms(4)
    small = ModelConfig(vars=("x",), values=(0, 1), locations=(0,))
    S = _small_states(small, perms)
    prod = {(a, b): sep_product(a, b, perms) for a in S for b in S}
    comm = all(prod[(a, b)] == prod[(b, a)] for a in S for b in S)
    assoc = True
    cancel = True
    for a, b, c in itertools.product(S, repeat=3):
        ab, bc = prod[(a, b)], prod[(b, c)]
        left = None if ab is None else sep_product(ab, c, perms)
        right = None if bc is None else sep_product(a, bc, perms)
        if left != right:
            assoc = False
        ac = prod[(a, c)]
        if ab is not None and ab == ac and b != c:
            cancel = False
    pcfg = ModelConfig(vars=("x",), values=tuple(range(8)), locations=(0,))
    prec = (is_precise(TRUE, pcfg, perms), is_precise(EMP, pcfg, perms),
            is_precise(PointsTo(Const(0), 1, Const(7)), pcfg, perms))
    dt = time.time() - t
    ok = comm and assoc and cancel and prec == (False, True, True) and dt < LIMIT_S
    record(8, ok, f"commutative {comm}, associative {assoc}, cancellative {cancel} over {len(S)} states with "
                  f"<= 2 cells (d=4); precise(true, emp, 0|->7) = {prec} ({dt:.1f}s)")


def test_criterion_9_truncated_loop_exit_code():
    t = time.time()
    buf = io.StringIO()
    code = cli.main(["race", str(CORPUS / "spin.prog"), "--pre", "emp"], out=buf)
    dt = time.time() - t
    record(9, code == 3 and dt < LIMIT_S, f"`while true do skip` exits with code {code} ({dt:.1f}s)")
