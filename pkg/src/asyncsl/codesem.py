"""Program syntax and its asynchronous semantics over the stateful and the
stateless machine models, together with the erasure morphism between them."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

from .ats import (Ats, Builder, EqualCompat, _rebuild, empty_ats, hom_between, leaf_ats, loop_step_ats, parallel_ats,
                  seq_ats, sum_ats, when_filter)
from .graph import FRAME, GraphHom
from .machine import (ERROR, NOP, TAU, Acquire, Alloc, Eval, LockInstr, MachineState, Test, ModelConfig, Release,
                      StatefulModel, StatelessModel, erase, erase_set, erase_state, eval_expr, free_vars)


# program syntax

@dataclass(frozen=True)
class Skip:
    def __str__(self):
        return "skip"


@dataclass(frozen=True)
class Atom:
    """A single machine instruction used as a command."""
    instr: object

    def __str__(self):
        return str(self.instr)


@dataclass(frozen=True)
class Malloc:
    x: str
    e: object

    def __str__(self):
        return f"{self.x} := malloc({self.e})"


@dataclass(frozen=True)
class Seq:
    c1: object
    c2: object


@dataclass(frozen=True)
class Par:
    c1: object
    c2: object


@dataclass(frozen=True)
class While:
    b: object
    body: object


@dataclass(frozen=True)
class Resource:
    r: str
    body: object


@dataclass(frozen=True)
class With:
    r: str
    b: object
    body: object


@dataclass(frozen=True)
class If:
    b: object
    c1: object
    c2: object


def free_locks(c) -> frozenset:
    if isinstance(c, With):
        return frozenset([c.r]) | free_locks(c.body)
    if isinstance(c, Resource):
        return free_locks(c.body) - {c.r}
    if isinstance(c, (Seq, Par)):
        return free_locks(c.c1) | free_locks(c.c2)
    if isinstance(c, If):
        return free_locks(c.c1) | free_locks(c.c2)
    if isinstance(c, While):
        return free_locks(c.body)
    return frozenset()


def program_vars(c) -> frozenset:
    from .machine import instr_vars
    if isinstance(c, Atom):
        return instr_vars(c.instr)
    if isinstance(c, Malloc):
        return frozenset([c.x]) | free_vars(c.e)
    if isinstance(c, (Seq, Par)):
        return program_vars(c.c1) | program_vars(c.c2)
    if isinstance(c, If):
        return free_vars(c.b) | program_vars(c.c1) | program_vars(c.c2)
    if isinstance(c, While):
        return free_vars(c.b) | program_vars(c.body)
    if isinstance(c, With):
        return free_vars(c.b) | program_vars(c.body)
    if isinstance(c, Resource):
        return program_vars(c.body)
    return frozenset()


def branch_instr(b):
    """The step taken when a conditional or loop picks a branch."""
    return Test(b) if free_vars(b) else NOP


def acquire_instr(r: str, b):
    """The acquire of ``with r when b``."""
    return Acquire(r, b if free_vars(b) else None)


def hidden_instr(m):
    """What a use of a hidden resource becomes: a no-op that still reads
    the guard of a conditional acquire."""
    when = getattr(m, "when", None)
    return NOP if when is None else Test(when)


def program_alphabet(c, cfg: ModelConfig) -> tuple:
    """Instructions the program can perform (plus nop and failing guards)."""
    out: list = [NOP]

    def guard(b):
        if free_vars(b):
            out.extend([Test(b), Eval(b)])

    def walk(c):
        if isinstance(c, Atom):
            out.append(c.instr)
        elif isinstance(c, Malloc):
            out.extend(Alloc(c.x, c.e, l) for l in cfg.locations)
        elif isinstance(c, (Seq, Par)):
            walk(c.c1)
            walk(c.c2)
        elif isinstance(c, If):
            guard(c.b)
            walk(c.c1)
            walk(c.c2)
        elif isinstance(c, While):
            guard(c.b)
            walk(c.body)
        elif isinstance(c, With):
            if free_vars(c.b):
                out.extend([Test(c.b), Eval(c.b)])
            out.extend([acquire_instr(c.r, c.b), Release(c.r)])
            walk(c.body)
        elif isinstance(c, Resource):
            walk(c.body)

    walk(c)
    return tuple(dict.fromkeys(out))


def _is_true(b, s, cfg):
    return s is not ERROR and eval_expr(b, s.s, cfg) is True


def _is_false(b, s, cfg):
    return s is not ERROR and eval_expr(b, s.s, cfg) is False


class CodeSemantics:
    """Builds the stateful ('S') or stateless ('L') interpretation of programs."""

    def __init__(self, cfg: ModelConfig, which: str = "S", alphabet: Iterable | None = None,
                 guide: "CodeSemantics | None" = None):
        if which not in ("S", "L"):
            raise ValueError("which must be 'S' or 'L'")
        self.cfg = cfg
        self.which = which
        self.alphabet = None if alphabet is None else tuple(alphabet)
        self._models: dict = {}
        self._leaves: dict = {}
        self._memo: dict = {}
        # loops are unrolled as often as in the guide, so that both sides share one shape
        self.guide = guide

    @classmethod
    def for_program(cls, c, cfg: ModelConfig, which: str = "S") -> "CodeSemantics":
        return cls(cfg, which, program_alphabet(c, cfg))

    def top_locks(self, c) -> tuple:
        return tuple(sorted(set(self.cfg.locks) | free_locks(c)))

    def model(self, locks) -> object:
        locks = tuple(sorted(locks))
        m = self._models.get(locks)
        if m is None:
            if self.which == "S":
                m = StatefulModel(self.cfg, self.alphabet, locks)
            else:
                m = StatelessModel(self.cfg, locks)
            self._models[locks] = m
        return m

    # building blocks

    def instr(self, m, locks) -> Ats:
        key = ("i", m, tuple(sorted(locks)))
        got = self._leaves.get(key)
        if got is None:
            model = self.model(locks)
            if self.which == "S":
                pred = lambda e: e[1] == m
            else:
                labels = erase_set(m, self.cfg)
                pred = lambda e: e[1] in labels
            got = leaf_ats(model, pred, info={"instr": str(m)})
            self._leaves[key] = got
        return got

    def whentrue(self, b, G: Ats) -> Ats:
        if self.which == "L":
            return when_filter(G, lambda s: True, "whentrue")
        return when_filter(G, lambda s: _is_true(b, s, self.cfg), "whentrue")

    def whenfalse(self, b, G: Ats) -> Ats:
        if self.which == "L":
            return when_filter(G, lambda s: True, "whenfalse")
        return when_filter(G, lambda s: _is_false(b, s, self.cfg), "whenfalse")

    def whenabort(self, b, locks) -> Ats:
        key = ("a", b, tuple(sorted(locks)))
        got = self._leaves.get(key)
        if got is None:
            model = self.model(locks)
            fails = bool(free_vars(b))
            if self.which == "S":
                pred = lambda e: fails and e[1] == Eval(b)
            else:
                pred = lambda e: fails and e[1] == TAU and e[2] is ERROR
            got = leaf_ats(model, pred, info={"instr": f"eval({b})"})
            self._leaves[key] = got
        return got

    def lift(self, G: Ats, r: str, locks) -> Ats:
        return lift_critical(G, r, self.model(locks), self.which)

    def hide(self, G: Ats, r: str, locks) -> Ats:
        return hide_resource(G, r, self.model(locks), self.which)

    # the interpretation

    def sem(self, c, locks=None) -> Ats:
        if locks is None:
            locks = self.top_locks(c)
        locks = tuple(sorted(locks))
        got = self._memo.get((c, locks))
        if got is None:
            got = self._memo[(c, locks)] = self._sem(c, locks)
        return got

    def _sem(self, c, locks: tuple) -> Ats:
        if isinstance(c, Skip):
            return self.instr(NOP, locks)
        if isinstance(c, Atom):
            return self.instr(c.instr, locks)
        if isinstance(c, Malloc):
            parts = [self.instr(Alloc(c.x, c.e, l), locks) for l in self.cfg.locations]
            G = parts[0]
            for P in parts[1:]:
                G = sum_ats(G, P)
            return G
        if isinstance(c, Seq):
            return seq_ats(self.sem(c.c1, locks), self.sem(c.c2, locks))
        if isinstance(c, Par):
            return parallel_ats(self.sem(c.c1, locks), self.sem(c.c2, locks), EqualCompat())
        if isinstance(c, Resource):
            inner = tuple(sorted(set(locks) | {c.r}))
            return self.hide(self.sem(c.body, inner), c.r, locks)
        if isinstance(c, With):
            if c.r not in locks:
                raise ValueError(f"lock {c.r} is not declared")
            inner = tuple(l for l in locks if l != c.r)
            body = self.lift(self.sem(c.body, inner), c.r, locks)
            crit = seq_ats(seq_ats(self.instr(acquire_instr(c.r, c.b), locks), body),
                           self.instr(Release(c.r), locks))
            return sum_ats(self.whentrue(c.b, crit), self.whenabort(c.b, locks))
        if isinstance(c, If):
            nop = self.instr(branch_instr(c.b), locks)
            t = seq_ats(self.whentrue(c.b, nop), self.sem(c.c1, locks))
            f = seq_ats(self.whenfalse(c.b, nop), self.sem(c.c2, locks))
            return sum_ats(sum_ats(t, f), self.whenabort(c.b, locks))
        if isinstance(c, While):
            return self._loop(c, locks)
        raise TypeError(f"not a program: {c!r}")

    def _loop(self, c: While, locks) -> Ats:
        nop = self.instr(branch_instr(c.b), locks)
        body = self.sem(c.body, locks)
        enter = self.whentrue(c.b, nop)
        leave = self.whenfalse(c.b, nop)
        abort = self.whenabort(c.b, locks)
        G = empty_ats(self.model(locks))
        if self.guide is not None:
            ref = self.guide.sem(c, locks)
            for _ in range(ref.info["steps"]):
                G = loop_step_ats(enter, body, G, leave, abort)
            G.truncated = ref.truncated
            G.info.update(iterations=ref.info["iterations"], steps=ref.info["steps"])
            return G
        prev = None
        for k in range(self.cfg.loop_bound):
            G = loop_step_ats(enter, body, G, leave, abort)
            size = G.size()
            if size == prev:
                G.info["iterations"] = k
                G.info["steps"] = k + 1
                return G
            prev = size
        G.truncated = True
        G.info["iterations"] = G.info["steps"] = self.cfg.loop_bound
        return G


@lru_cache(maxsize=None)
def _lock_up(which, state, r, held: bool):
    if state is ERROR:
        return ERROR
    if which == "S":
        L = state.locks | {r} if held else state.locks - {r}
        return MachineState(state.stack, state.heap, L)
    return state | {r} if held else state - {r}


def _is_lock_label(which, label, r) -> bool:
    if which == "S":
        return isinstance(label, (Acquire, Release)) and label.r == r
    return isinstance(label, LockInstr) and label.kind in ("P", "V") and label.arg == r


def lift_critical(G: Ats, r: str, big_model, which: str) -> Ats:
    """Run G while the Code holds r, adding the Frame's own uses of r.

    Nodes are (x, rho) with rho in {C, free, F}: r held by the Code, free,
    or held by the Frame.  Error nodes are shared across rho.
    """
    g = G.graph
    b = Builder(big_model, "lift", (G,))
    levels = ("C", "free", "F")

    def rho_of(n, rho):
        return "*" if G.state[n] is ERROR else rho

    def node(n, rho):
        rho = rho_of(n, rho)
        return b.node((n, rho), _lock_up(which, G.state[n], r, rho in ("C", "F")))

    def lift_move(mv, rho):
        held = rho in ("C", "F")
        return (_lock_up(which, mv[0], r, held), mv[1], _lock_up(which, mv[2], r, held))

    for n in g.nodes():
        for rho in levels:
            node(n, rho)
    for e in g.edges():
        for rho in levels:
            if G.state[g.src[e]] is ERROR:
                continue
            b.edge(node(g.src[e], rho), node(g.dst[e], rho), g.pols[e], lift_move(G.move[e], rho), (e, rho))
    err_of = {}
    for e in g.edges():
        if g.pols[e] == FRAME and G.state[g.dst[e]] is ERROR:
            err_of.setdefault(g.src[e], g.dst[e])
    # Frame uses of r
    for n in g.nodes():
        if G.state[n] is ERROR:
            continue
        for rho in levels:
            x = node(n, rho)
            for mv in big_model.out_edges(b.state[x]):
                if not _is_lock_label(which, mv[1], r):
                    continue
                if mv[2] is ERROR:
                    if n not in err_of:
                        continue
                    y = node(err_of[n], "*")
                else:
                    acquire = (mv[1].kind == "P") if which == "L" else isinstance(mv[1], Acquire)
                    if acquire and rho != "free":
                        continue
                    y = node(n, "F" if acquire else "free")
                b.edge(x, y, FRAME, mv, ("lock", n, rho, mv))
    # tiles: copies of G's tiles at each level, then squares involving a lock edge
    emap = {(e, rho): b.eidx[(e, rho)] for e in g.edges() for rho in levels if (e, rho) in b.eidx}
    for u, w, v, u2 in g.tiles():
        for rho in levels:
            q = [emap.get((x, rho)) for x in (u, w, v, u2)]
            if None not in q:
                b.tile(*q)
    by_move = {}
    for e in b.g.edges():
        by_move[(b.g.src[e], b.g.pols[e], b.move[e])] = e
    lock_edges = [b.eidx[o] for o in b.eidx if isinstance(o, tuple) and o and o[0] == "lock"]
    lock_set = set(lock_edges)
    for e in range(len(b.g.src)):
        for f in b.g.out_edges(b.g.dst[e]):
            if e not in lock_set and f not in lock_set:
                continue
            for mv_v, mv_u2 in big_model.tiles_at(b.move[e], b.move[f]):
                v = by_move.get((b.g.src[e], b.g.pols[f], mv_v))
                if v is None:
                    continue
                u2 = by_move.get((b.g.dst[v], b.g.pols[e], mv_u2))
                if u2 is not None and b.g.dst[u2] == b.g.dst[f]:
                    b.tile(e, f, v, u2)
    initial = [b.nidx[(n, rho_of(n, "C"))] for n in G.initial]
    returning = [b.nidx[(n, rho_of(n, "C"))] for n in G.returning]
    scope = frozenset(b.state[x] for x in initial)
    raw = b.build(initial, returning, scope, G.truncated)
    return _prune_keep_kind(raw)


def _prune_keep_kind(raw: Ats) -> Ats:
    """Drop unreachable lifted nodes in place (keeps the 'lift' shape)."""
    g = raw.graph
    seen = set(raw.initial)
    stack = list(seen)
    while stack:
        n = stack.pop()
        for e in g.out_edges(n):
            t = g.dst[e]
            if t not in seen:
                seen.add(t)
                stack.append(t)
    if len(seen) == len(g.node_labels):
        return raw
    b = Builder(raw.model, "lift", raw.parts)
    old_to_new = {}
    for n in g.nodes():
        if n in seen:
            old_to_new[n] = b.node(raw.norig[n][0], raw.state[n])
            for o in raw.norig[n][1:]:
                b.alias(old_to_new[n], o)
    emap = {}
    for e in g.edges():
        if g.src[e] in seen:
            for o in raw.eorig[e]:
                emap[e] = b.edge(old_to_new[g.src[e]], old_to_new[g.dst[e]], g.pols[e], raw.move[e], o)
    for u, w, v, u2 in g.tiles():
        if u in emap and w in emap and v in emap and u2 in emap:
            b.tile(emap[u], emap[w], emap[v], emap[u2])
    return b.build([old_to_new[n] for n in raw.initial], [old_to_new[n] for n in raw.returning],
                   raw.scope, raw.truncated)


def hide_resource(G: Ats, r: str, small_model, which: str) -> Ats:
    """Forget r: its Code uses become nop, its Frame uses disappear."""
    g = G.graph
    nop = NOP if which == "S" else TAU

    def restate(n):
        return _lock_up(which, G.state[n], r, False)

    def keep_edge(e):
        return not (g.pols[e] == FRAME and _is_lock_label(which, G.move[e][1], r))

    def relabel(e):
        s, m, t = G.move[e]
        s2, t2 = _lock_up(which, s, r, False), _lock_up(which, t, r, False)
        if _is_lock_label(which, m, r):
            return (s2, hidden_instr(m) if which == "S" else nop, t2)
        return (s2, m, t2)

    def free(n):
        st = G.state[n]
        return st is ERROR or r not in (st.locks if which == "S" else st)

    return _rebuild(G, "hide", keep_edge=keep_edge, relabel=relabel, restate=restate,
                    initial=[n for n in G.initial if free(n)], returning=[n for n in G.returning if free(n)],
                    model=small_model, scope=None)


def sem_code(c, cfg: ModelConfig, which: str = "S") -> Ats:
    return CodeSemantics.for_program(c, cfg, which).sem(c)


def erasure_edge(cfg: ModelConfig):
    def f(e):
        s, m, t = e
        return (erase_state(s), erase(m, s, cfg), erase_state(t))
    return f


def build_Lmap(GS: Ats, GL: Ats, cfg: ModelConfig) -> GraphHom:
    """The erasure morphism from the stateful to the stateless interpretation."""
    return hom_between(GS, GL, erase_state, erasure_edge(cfg), name="L_C")


def both_semantics(c, cfg: ModelConfig):
    """(stateful Ats, stateless Ats, erasure morphism) for a program."""
    S = CodeSemantics.for_program(c, cfg, "S")
    GS = S.sem(c)
    GL = CodeSemantics(cfg, "L", S.alphabet, guide=S).sem(c)
    return GS, GL, build_Lmap(GS, GL, cfg)
