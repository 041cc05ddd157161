"""Derivation trees of concurrent separation logic: rule checking, their
interpretation as ATSs over separated states, and the morphisms chi into
the stateful and stateless semantics of the code."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .ats import (Ats, empty_ats, intersection_ats, loop_step_ats, parallel_ats, restrict_initial, seq_ats, sum_ats,
                  transport, union_ats, when_filter)
from .codesem import (Atom, CodeSemantics, If, Malloc, Par, Resource, Seq, Skip, While, With, branch_instr, build_Lmap,
                      program_alphabet)
from .graph import GraphHom, ValidationReport
from .logic import (DEFAULT_PERMS, EMP, And, Emp, Eq, Exists, FractionPerms, Neg, Or, Own, PointsTo, Pure, Star,
                    bool_formula, entails, entailment_counterexample, format_formula, implies_def, is_precise, satisfies)
from .machine import NOP, Alloc, Assign, Cmp, Dispose, Load, ModelConfig, Store, Var, eval_expr, free_vars
from .separated import HELD_C, SepCompat, SepModel, combine, hide_sep, lift_sep, lock_step_ats, sep_leaf, framing

RULES = {
    "Aff": 0, "Store": 0, "Load": 0, "Seq": 2, "If": 2, "Conj": 2, "Disj": 2, "Res": 1, "With": 1,
    "Par": 2, "Frame": 1,
    "Skip": 0, "While": 1, "Alloc": 0, "Dispose": 0, "Conseq": 1,
}
EXTENSIONS = frozenset({"Skip", "While", "Alloc", "Dispose", "Conseq"})
TOP = Fraction(1)


@dataclass(frozen=True)
class Triple:
    ctx: tuple
    pre: object
    code: object
    post: object


@dataclass(eq=False)
class Derivation:
    rule: str
    ctx: tuple
    pre: object
    code: object
    post: object
    premises: tuple = ()
    pos: Optional[tuple] = None

    @property
    def triple(self) -> Triple:
        return Triple(self.ctx, self.pre, self.code, self.post)

    @property
    def extension(self) -> bool:
        return self.rule in EXTENSIONS

    def walk(self):
        yield self
        for p in self.premises:
            yield from p.walk()


@dataclass
class ProofReport(ValidationReport):
    extensions: list = field(default_factory=list)


def _star_parts(f) -> list:
    if isinstance(f, Star):
        return _star_parts(f.left) + _star_parts(f.right)
    return [f]


def _is_closed(e) -> bool:
    return not free_vars(e)


def _split_own(f, x):
    """Match own_T(x) * P (or a bare own_T(x)); returns P."""
    if f == Own(TOP, x):
        return EMP
    if isinstance(f, Star) and f.left == Own(TOP, x):
        return f.right
    return None


def check_derivation(d: Derivation, cfg: ModelConfig, perms: FractionPerms = DEFAULT_PERMS) -> ProofReport:
    rep = ProofReport()
    _check(d, cfg, perms, rep, "root")
    return rep


def _check(d: Derivation, cfg, perms, rep: ProofReport, path: str) -> None:
    rep.checked += 1
    where = f"{path}:{d.rule}"

    def bad(msg):
        rep.add(where, msg)

    if d.rule not in RULES:
        bad(f"unknown rule {d.rule}")
        return
    if d.extension:
        rep.extensions.append(where)
    if len(d.premises) != RULES[d.rule]:
        bad(f"expects {RULES[d.rule]} premise(s), got {len(d.premises)}")
        return
    for i, p in enumerate(d.premises):
        _check(p, cfg, perms, rep, f"{path}/{i}")
    ps = d.premises
    ctx_locks = {r for r, _ in d.ctx}
    if d.rule not in ("Res", "With"):
        for p in ps:
            if p.ctx != d.ctx:
                bad("premise context differs from the conclusion's")
    c = d.code
    r = d.rule
    if r == "Aff":
        if not (isinstance(c, Atom) and isinstance(c.instr, Assign)):
            bad("code must be an assignment x := E")
            return
        x, E = c.instr.x, c.instr.e
        pre, post = d.pre, d.post
        if not (isinstance(pre, And) and isinstance(pre.right, Pure) and isinstance(pre.right.cond, Cmp)
                and pre.right.cond.op == "==" and pre.right.cond.left == E):
            bad("precondition must be (own(1,x) * P) && E == v")
            return
        v = pre.right.cond.right
        P = _split_own(pre.left, x)
        if P is None or not _is_closed(v):
            bad("precondition must be (own(1,x) * P) && E == v with v a constant")
            return
        if post != And(pre.left, Eq(Var(x), v)):
            bad(f"postcondition must be {format_formula(And(pre.left, Eq(Var(x), v)))}")
    elif r == "Store":
        if not (isinstance(c, Atom) and isinstance(c.instr, Store)):
            bad("code must be a store [E] := E'")
            return
        E, E2 = c.instr.e, c.instr.e2
        if d.pre != PointsTo(E, TOP, None):
            bad("precondition must be E |-> _")
        if d.post != PointsTo(E, TOP, E2):
            bad("postcondition must be E |-> E'")
    elif r == "Load":
        if not (isinstance(c, Atom) and isinstance(c.instr, Load)):
            bad("code must be a load x := [E]")
            return
        x, E = c.instr.x, c.instr.e
        if x in free_vars(E):
            bad("side condition x not in fv(E) fails")
        pre = d.pre
        if not (isinstance(pre, Star) and isinstance(pre.left, PointsTo) and pre.left.loc == E
                and pre.left.val is not None and pre.right == Own(TOP, x)):
            bad("precondition must be E |->{p} v * own(1,x)")
            return
        want = And(pre, Eq(Var(x), pre.left.val))
        if d.post != want:
            bad(f"postcondition must be {format_formula(want)}")
    elif r == "Skip":
        if not isinstance(c, Skip):
            bad("code must be skip")
        if d.pre != d.post:
            bad("pre and post must coincide")
    elif r == "Alloc":
        if not isinstance(c, Malloc):
            bad("code must be x := malloc(E)")
            return
        x, E = c.x, c.e
        pre = d.pre
        if not (isinstance(pre, And) and pre.left == Own(TOP, x) and isinstance(pre.right, Pure)
                and isinstance(pre.right.cond, Cmp) and pre.right.cond.op == "==" and pre.right.cond.left == E
                and _is_closed(pre.right.cond.right)):
            bad("precondition must be own(1,x) && E == v")
            return
        v = pre.right.cond.right
        post = d.post
        ok = (isinstance(post, Exists) and post.var not in cfg.vars
              and post.body == And(Star(Own(TOP, x), PointsTo(Var(post.var), TOP, v)), Eq(Var(x), Var(post.var))))
        if not ok:
            bad("postcondition must be exists l. (own(1,x) * l |-> v) && x == l")
    elif r == "Dispose":
        if not (isinstance(c, Atom) and isinstance(c.instr, Dispose)):
            bad("code must be dispose(E)")
            return
        if d.pre != PointsTo(c.instr.e, TOP, None):
            bad("precondition must be E |-> _")
        if not isinstance(d.post, Emp):
            bad("postcondition must be emp")
    elif r == "Seq":
        if c != Seq(ps[0].code, ps[1].code):
            bad("code must be the sequence of the premises' codes")
        if ps[0].post != ps[1].pre and not (entails(ps[0].post, ps[1].pre, cfg, perms)
                                              and entails(ps[1].pre, ps[0].post, cfg, perms)):
            bad("middle assertions are not equivalent")
        if d.pre != ps[0].pre or d.post != ps[1].post:
            bad("pre/post must be those of the premises")
    elif r == "Par":
        if c != Par(ps[0].code, ps[1].code):
            bad("code must be the parallel composition of the premises' codes")
        if d.pre != Star(ps[0].pre, ps[1].pre) or d.post != Star(ps[0].post, ps[1].post):
            bad("pre/post must be the separating conjunctions of the premises")
    elif r == "Frame":
        if c != ps[0].code:
            bad("code differs from the premise's")
        if not (isinstance(d.pre, Star) and d.pre.left == ps[0].pre and isinstance(d.post, Star)
                and d.post.left == ps[0].post and d.pre.right == d.post.right):
            bad("pre/post must be P * R and Q * R")
    elif r in ("Conj", "Disj"):
        op = And if r == "Conj" else Or
        if not (ps[0].code == ps[1].code == c):
            bad("premises must prove the same code")
        if d.pre != op(ps[0].pre, ps[1].pre) or d.post != op(ps[0].post, ps[1].post):
            bad("pre/post must combine the premises")
        if r == "Conj":
            for lk, J in d.ctx:
                if not is_precise(J, cfg, perms):
                    bad(f"invariant of {lk} is not precise")
    elif r == "Res":
        if not isinstance(c, Resource):
            bad("code must be resource r do { C }")
            return
        inner = dict(ps[0].ctx)
        if c.r in ctx_locks or c.r not in inner:
            bad("premise context must extend the conclusion's with r")
            return
        J = inner.pop(c.r)
        if tuple(sorted(inner.items())) != d.ctx:
            bad("premise context must be the conclusion's plus r")
        if ps[0].code != c.body:
            bad("body differs from the premise's code")
        if d.pre != Star(ps[0].pre, J) or d.post != Star(ps[0].post, J):
            bad("pre/post must be P * J and Q * J")
    elif r == "With":
        if not isinstance(c, With):
            bad("code must be with r when B do { C }")
            return
        if c.r not in ctx_locks:
            bad(f"lock {c.r} is not in the context")
            return
        outer = dict(d.ctx)
        J = outer.pop(c.r)
        if ps[0].ctx != tuple(sorted(outer.items())):
            bad("premise context must be the conclusion's without r")
        if ps[0].code != c.body:
            bad("body differs from the premise's code")
        if ps[0].pre != And(Star(d.pre, J), bool_formula(c.b)):
            bad("premise precondition must be (P * J) && B")
        if ps[0].post != Star(d.post, J):
            bad("premise postcondition must be Q * J")
        if not implies_def(d.pre, c.b, cfg, perms):
            bad("side condition P => def(B) fails")
    elif r == "If":
        if not isinstance(c, If) or c.c1 != ps[0].code or c.c2 != ps[1].code:
            bad("code must be if B then { C1 } else { C2 } over the premises' codes")
            return
        Bf = bool_formula(c.b)
        if ps[0].pre != And(d.pre, Bf) or ps[1].pre != And(d.pre, Neg(Bf)):
            bad("premise preconditions must be P && B and P && !B")
        if ps[0].post != d.post or ps[1].post != d.post:
            bad("premise postconditions must be Q")
        if not implies_def(d.pre, c.b, cfg, perms):
            bad("side condition P => def(B) fails")
    elif r == "While":
        if not isinstance(c, While) or c.body != ps[0].code:
            bad("code must be while B do { C } over the premise's code")
            return
        Bf = bool_formula(c.b)
        if ps[0].pre != And(d.pre, Bf) or ps[0].post != d.pre or d.post != And(d.pre, Neg(Bf)):
            bad("expects {I && B} C {I} above {I} while B do C {I && !B}")
        if not implies_def(d.pre, c.b, cfg, perms):
            bad("side condition I => def(B) fails")
    elif r == "Conseq":
        if ps[0].code != c:
            bad("code differs from the premise's")
        cx = entailment_counterexample(d.pre, ps[0].pre, cfg, perms)
        if cx is not None:
            bad(f"precondition does not entail the premise's (counterexample {cx})")
        cx = entailment_counterexample(ps[0].post, d.post, cfg, perms)
        if cx is not None:
            bad(f"premise postcondition does not entail the conclusion's (counterexample {cx})")


# interpretation

class ProofSemantics:
    """Builds the separated-state interpretation of derivations of one program."""

    def __init__(self, cfg: ModelConfig, program, perms: FractionPerms = DEFAULT_PERMS,
                 code_sem: CodeSemantics | None = None):
        self.cfg = cfg
        self.perms = perms
        self.alphabet = program_alphabet(program, cfg)
        self.code_sem = code_sem or CodeSemantics(cfg, "S", self.alphabet)
        self._models: dict = {}
        self._memo: dict = {}

    def model(self, ctx) -> SepModel:
        m = self._models.get(ctx)
        if m is None:
            m = self._models[ctx] = SepModel(self.cfg, self.alphabet, ctx, self.perms)
        return m

    def _holds(self, b):
        return lambda x: eval_expr(b, combine(x, self.perms).s, self.cfg) is True

    def _fails(self, b):
        return lambda x: eval_expr(b, combine(x, self.perms).s, self.cfg) is False

    def sem(self, d: Derivation) -> Ats:
        got = self._memo.get(id(d))
        if got is None:
            got = self._sem(d)
            got.info["rule"] = d.rule
            self._memo[id(d)] = (got, d)
            return got
        return got[0]

    def _sem(self, d: Derivation) -> Ats:
        model = self.model(d.ctx)
        r, c, ps = d.rule, d.code, d.premises
        if r in ("Aff", "Store", "Load", "Dispose"):
            return sep_leaf(model, c.instr, d.pre, info={"instr": str(c.instr)})
        if r == "Skip":
            return sep_leaf(model, NOP, d.pre, info={"instr": "nop"})
        if r == "Alloc":
            parts = [sep_leaf(model, Alloc(c.x, c.e, l), d.pre) for l in self.cfg.locations]
            G = parts[0]
            for P in parts[1:]:
                G = sum_ats(G, P)
            return G
        if r == "Seq":
            return seq_ats(self.sem(ps[0]), self.sem(ps[1]))
        if r == "Par":
            return parallel_ats(self.sem(ps[0]), self.sem(ps[1]), SepCompat(model))
        if r == "Frame":
            return framing(self.sem(ps[0]), d.pre.right, self.cfg)
        if r == "Res":
            return hide_sep(self.sem(ps[0]), c.r, model)
        if r == "With":
            body = lift_sep(self.sem(ps[0]), c.r, model)
            take = lock_step_ats(model, c.r, "take", d.pre, c.b)
            release = lock_step_ats(model, c.r, "release", ps[0].post)
            crit = seq_ats(seq_ats(take, body), release)
            return sum_ats(when_filter(crit, self._holds(c.b), "whentrue"), sep_leaf(model, None, d.pre))
        if r == "If":
            nop = sep_leaf(model, branch_instr(c.b), d.pre)
            t = seq_ats(when_filter(nop, self._holds(c.b), "whentrue"), self.sem(ps[0]))
            f = seq_ats(when_filter(nop, self._fails(c.b), "whenfalse"), self.sem(ps[1]))
            return sum_ats(sum_ats(t, f), sep_leaf(model, None, d.pre))
        if r == "While":
            return self._loop(d, model)
        if r == "Disj":
            return union_ats([self.sem(ps[0]), self.sem(ps[1])])
        if r == "Conj":
            return intersection_ats(self.sem(ps[0]), self.sem(ps[1]))
        if r == "Conseq":
            cfg, perms, pre = self.cfg, self.perms, d.pre
            return restrict_initial(self.sem(ps[0]), lambda x: satisfies(x.code, pre, cfg, perms), "conseq")
        raise ValueError(f"unknown rule {r}")

    def _loop(self, d: Derivation, model: SepModel) -> Ats:
        c = d.code
        code_G = self.code_sem.sem(c, model.locks)
        steps = code_G.info.get("steps", self.cfg.loop_bound)
        nop = sep_leaf(model, branch_instr(c.b), d.pre)
        enter = when_filter(nop, self._holds(c.b), "whentrue")
        leave = when_filter(nop, self._fails(c.b), "whenfalse")
        abort = sep_leaf(model, None, d.pre)
        body = self.sem(d.premises[0])
        G = empty_ats(model)
        sizes = []
        for _ in range(steps):
            G = loop_step_ats(enter, body, G, leave, abort)
            sizes.append(G.size())
        converged = len(sizes) >= 2 and sizes[-1] == sizes[-2]
        G.truncated = code_G.truncated or not converged
        G.info["steps"] = steps
        return G

    # morphisms

    def code_locks(self, d: Derivation) -> tuple:
        return tuple(sorted(r for r, _ in d.ctx))

    def chi(self, d: Derivation) -> GraphHom:
        up = self.sem(d)
        down = self.code_sem.sem(d.code, self.code_locks(d))
        perms = self.perms
        fnode = lambda x: combine(x, perms)
        fedge = lambda e: (combine(e[0], perms), e[2], combine(e[3], perms))
        nmap, emap = transport(up, down, fnode, fedge, {("lift_sep", "lift"): _lift_handler})
        return GraphHom(up.graph, down.graph, nmap, emap, name="chi")


def _lift_handler(up: Ats, down: Ats, rec):
    sub_n, sub_e = rec(up.parts[0], down.parts[0])
    nmap = {n: down.nidx[(sub_n[up.norig[n][0]], HELD_C)] for n in up.graph.nodes()}
    emap = {e: down.eidx[(sub_e[up.eorig[e][0]], HELD_C)] for e in up.graph.edges()}
    return nmap, emap


@dataclass
class ProofBundle:
    """Everything the soundness checks consume for one derivation."""
    derivation: Derivation
    sep: Ats
    code_s: Ats
    code_l: Ats
    chi: GraphHom
    chi_l: GraphHom
    lmap: GraphHom
    semantics: ProofSemantics


def build_chi(d: Derivation, cfg: ModelConfig, perms: FractionPerms = DEFAULT_PERMS) -> ProofBundle:
    ps = ProofSemantics(cfg, d.code, perms)
    G = ps.sem(d)
    chi = ps.chi(d)
    locks = ps.code_locks(d)
    GS = ps.code_sem.sem(d.code, locks)
    L = CodeSemantics(cfg, "L", ps.alphabet, guide=ps.code_sem)
    GL = L.sem(d.code, locks)
    lmap = build_Lmap(GS, GL, cfg)
    return ProofBundle(d, G, GS, GL, chi, chi.compose(lmap, "chi_L"), lmap, ps)


def sem_proof(d: Derivation, cfg: ModelConfig, perms: FractionPerms = DEFAULT_PERMS) -> Ats:
    return ProofSemantics(cfg, d.code, perms).sem(d)
