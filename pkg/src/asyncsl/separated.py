"""Separated states: the logical state split between the Code, the free
locks and the Frame, and the asynchronous machine model they form."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Optional

from .ats import Ats, _rebuild, leaf_ats, union_ats
from .graph import CODE, FRAME
from .logic import (DEFAULT_PERMS, EMPTY, FractionPerms, LogicalState, big_product, format_formula, models,
                    satisfies, sep_product, sep_residual)
from .machine import (ERROR, Acquire, Alloc, MachineState, ModelConfig, Release, footprint_machine, independent_machine,
                      instr_locks, step)

HELD_C, HELD_F = "C", "F"


class SepState:
    """(sigma_C, per-lock logical state or tag, sigma_F)."""

    __slots__ = ("code", "locks", "frame", "_hash")

    def __init__(self, code: LogicalState, locks=(), frame: LogicalState = EMPTY):
        self.code = code
        self.locks = tuple(sorted(dict(locks).items()))
        self.frame = frame
        self._hash = hash((code, self.locks, frame))

    def lock(self, r):
        for k, v in self.locks:
            if k == r:
                return v
        raise KeyError(r)

    def with_lock(self, r, v) -> "SepState":
        d = dict(self.locks)
        d[r] = v
        return SepState(self.code, d, self.frame)

    def without_lock(self, r) -> "SepState":
        return SepState(self.code, {k: v for k, v in self.locks if k != r}, self.frame)

    def free_locks(self) -> list:
        return [k for k, v in self.locks if isinstance(v, LogicalState)]

    def held(self, tag: str) -> list:
        return [k for k, v in self.locks if v == tag]

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return (isinstance(other, SepState) and self._hash == other._hash and self.code == other.code
                and self.locks == other.locks and self.frame == other.frame)

    def __lt__(self, other):
        return (self.code, _lock_key(self.locks), self.frame) < (other.code, _lock_key(other.locks), other.frame)

    def __str__(self):
        locks = " ".join(f"{k}:{v}" for k, v in self.locks)
        mid = f" | {locks}" if locks else ""
        return f"C:{self.code}{mid} | F:{self.frame}"

    __repr__ = __str__


def _lock_key(locks):
    return tuple((k, (0, v) if isinstance(v, str) else (1, v.stack, v.heap)) for k, v in locks)


def combine(x: SepState, perms: FractionPerms = DEFAULT_PERMS) -> MachineState:
    """The machine state a separated state stands for."""
    pieces = [x.code, x.frame] + [v for _, v in x.locks if isinstance(v, LogicalState)]
    mem = big_product(pieces, perms)
    if mem is None:
        raise ValueError(f"not a separated state: {x}")
    held = [k for k, v in x.locks if not isinstance(v, LogicalState)]
    return MachineState({k: v for k, (v, _) in mem.stack}, {k: v for k, (v, _) in mem.heap}, held)


def total(x: SepState, perms: FractionPerms = DEFAULT_PERMS) -> Optional[LogicalState]:
    pieces = [x.code, x.frame] + [v for _, v in x.locks if isinstance(v, LogicalState)]
    return big_product(pieces, perms)


def is_saturated(x: SepState, perms: FractionPerms = DEFAULT_PERMS) -> bool:
    t = total(x, perms)
    return t is not None and all(p == perms.top for _, (_, p) in t.cells())


def _cell_key(c):
    return ("l", c) if isinstance(c, int) else ("v", c)


def _zone_cells(sigma: LogicalState) -> dict:
    return dict(sigma.cells())


def _update_zone(sigma: LogicalState, t: MachineState, fp, perms) -> Optional[LogicalState]:
    """The zone after a memory step: written cells take their new value and
    keep their permission, allocated cells arrive with full permission,
    disposed cells leave."""
    cells = _zone_cells(sigma)
    gone = {("l", l) for l in fp.alloc} if fp.alloc and not fp.wr else set()
    for c in fp.wr:
        k = _cell_key(c)
        new = t.s.get(c) if k[0] == "v" else t.h.get(c)
        if new is None:
            return None
        if k in cells:
            cells[k] = (new, cells[k][1])
        elif k[0] == "l" and c in fp.alloc:
            cells[k] = (new, perms.top)
        else:
            return None
    for k in gone:
        if k not in cells or cells[k][1] != perms.top:
            return None
        del cells[k]
    return LogicalState({k[1]: v for k, v in cells.items() if k[0] == "v"},
                        {k[1]: v for k, v in cells.items() if k[0] == "l"})


class SepModel:
    """Machine model of saturated separated states over a lock context.

    ``gamma`` maps each lock to its invariant (or None for no constraint).
    Moves are (x, polarity, instruction, y) with Eve moves tagged Code and
    Adam moves tagged Frame.
    """

    polarized = True

    def __init__(self, cfg: ModelConfig, alphabet: Iterable, gamma=(), perms: FractionPerms = DEFAULT_PERMS):
        self.cfg = cfg
        self.gamma = tuple(sorted(dict(gamma).items(), key=lambda kv: kv[0]))
        self.locks = tuple(r for r, _ in self.gamma)
        lockset = set(self.locks)
        self.alphabet = tuple(m for m in dict.fromkeys(alphabet) if instr_locks(m) <= lockset)
        self.perms = perms
        self._out: dict = {}
        self._outset: dict = {}
        self._inv: dict = {}
        self._fp: dict = {}

    def key(self):
        return ("Sep", self.cfg, self.gamma, self.alphabet, self.perms.key())

    def invariant(self, r):
        return dict(self.gamma)[r]

    def lock_models(self, r) -> list:
        """Logical states a free lock r may hold."""
        got = self._inv.get(r)
        if got is None:
            J = self.invariant(r)
            if J is None:
                from .logic import all_logical_states
                got = list(all_logical_states(self.cfg, self.perms))
            else:
                got = sorted(models(J, self.cfg, self.perms))
            self._inv[r] = got
        return got

    def admits(self, x: SepState) -> bool:
        """Whether x is a node of this model."""
        if tuple(k for k, _ in x.locks) != self.locks or not is_saturated(x, self.perms):
            return False
        for r, v in x.locks:
            if isinstance(v, LogicalState):
                J = self.invariant(r)
                if J is not None and not satisfies(v, J, self.cfg, self.perms):
                    return False
        return True

    @staticmethod
    def source(e):
        return e[0]

    @staticmethod
    def target(e):
        return e[3]

    @staticmethod
    def label(e):
        return e[2]

    @staticmethod
    def polarity(e):
        return e[1]

    def out_edges(self, x) -> list:
        got = self._out.get(x)
        if got is None:
            got = []
            for m in self.alphabet:
                for pol in (CODE, FRAME):
                    for y in self._moves(x, pol, m):
                        got.append((x, pol, m, y))
            got = list(dict.fromkeys(got))
            self._out[x] = got
            self._outset[x] = set(got)
        return got

    def has_edge(self, e) -> bool:
        self.out_edges(e[0])
        return e in self._outset[e[0]]

    def _moves(self, x: SepState, pol: str, m) -> list:
        mine = x.code if pol == CODE else x.frame
        tag = HELD_C if pol == CODE else HELD_F
        perms = self.perms
        if isinstance(m, Acquire):
            v = x.lock(m.r)
            if not isinstance(v, LogicalState):
                return []
            got = sep_product(mine, v, perms)
            return [] if got is None else [self._rezone(x, pol, got, m.r, tag)]
        if isinstance(m, Release):
            if x.lock(m.r) != tag:
                return []
            out = []
            for chunk in self.lock_models(m.r):
                rest = sep_residual(mine, chunk, perms)
                if rest is not None:
                    out.append(self._rezone(x, pol, rest, m.r, chunk))
            return out
        s = combine(x, perms)
        succ = [t for t in step(s, m, self.cfg) if t is not ERROR]
        if not succ:
            return []
        fp = footprint_machine(m, s, self.cfg)
        cells = _zone_cells(mine)
        need = (fp.rd | fp.wr) - (fp.alloc if isinstance(m, Alloc) else frozenset())
        if any(_cell_key(c) not in cells for c in need):
            return []
        out = []
        for t in succ:
            new = _update_zone(mine, t, fp, perms)
            if new is None:
                continue
            y = SepState(new, x.locks, x.frame) if pol == CODE else SepState(x.code, x.locks, new)
            if total(y, perms) is not None and combine(y, perms) == t:
                out.append(y)
        return out

    @staticmethod
    def _rezone(x: SepState, pol, mine, r, v) -> SepState:
        locks = dict(x.locks)
        locks[r] = v
        if pol == CODE:
            return SepState(mine, locks, x.frame)
        return SepState(x.code, locks, mine)

    def footprint(self, m, x: SepState):
        k = (m, x)
        fp = self._fp.get(k)
        if fp is None:
            fp = self._fp[k] = footprint_machine(m, combine(x, self.perms), self.cfg)
        return fp

    def tiles_at(self, u, w) -> list:
        x, p1, m, y = u
        y2, p2, m2, z = w
        if y != y2:
            return []
        if not independent_machine(self.footprint(m, x), self.footprint(m2, x)):
            return []
        out = []
        for v in self.out_edges(x):
            if v[1] == p2 and v[2] == m2:
                u2 = (v[3], p1, m, z)
                if self.has_edge(u2):
                    out.append((v, u2))
        return out

    def memory(self, x):
        return combine(x, self.perms)


def build_sep_model(cfg: ModelConfig, gamma=(), alphabet: Iterable | None = None,
                    perms: FractionPerms = DEFAULT_PERMS) -> SepModel:
    from .machine import canonical_alphabet
    locks = [r for r, _ in dict(gamma).items()]
    return SepModel(cfg, canonical_alphabet(cfg, locks) if alphabet is None else alphabet, gamma, perms)


def sep_transitions(x: SepState, model: SepModel) -> list:
    return [(e[1], e[2], e[3]) for e in model.out_edges(x)]


def sep_starts(model: SepModel, pre, held: Iterable[str] = ()) -> list:
    """Every node of the model whose Code part satisfies ``pre``; locks in
    ``held`` are held by the Code, the others are free or Frame-held."""
    cfg, perms = model.cfg, model.perms
    held = set(held)
    per_lock = []
    for r in model.locks:
        per_lock.append([HELD_C] if r in held else model.lock_models(r) + [HELD_F])
    cells = [("v", x) for x in cfg.vars] + [("l", l) for l in cfg.locations]
    out = []
    for code in sorted(models(pre, cfg, perms)):
        for combo in itertools.product(*per_lock):
            core = big_product([code] + [v for v in combo if isinstance(v, LogicalState)], perms)
            if core is None:
                continue
            have = dict(core.cells())
            fixed, free = {}, []
            for c in cells:
                if c in have:
                    v, p = have[c]
                    if p != perms.top:
                        fixed[c] = (v, perms.top - p)
                else:
                    free.append(c)
            opts = [[None] + [(v, perms.top) for v in cfg.values] for _ in free]
            for choice in itertools.product(*opts):
                fr = dict(fixed)
                fr.update({c: vp for c, vp in zip(free, choice) if vp is not None})
                frame = LogicalState({k[1]: v for k, v in fr.items() if k[0] == "v"},
                                     {k[1]: v for k, v in fr.items() if k[0] == "l"})
                out.append(SepState(code, zip(model.locks, combo), frame))
    return out


# three-party states and compatibility

@dataclass(frozen=True)
class ThreePartyState:
    left: LogicalState
    right: LogicalState
    locks: tuple  # lock -> LogicalState | "C1" | "C2" | "F"
    frame: LogicalState


def project(y: ThreePartyState, which: str, perms: FractionPerms = DEFAULT_PERMS) -> SepState:
    if which == "objective":
        tags = {"C1": HELD_C, "C2": HELD_C, "F": HELD_F}
        return SepState(sep_product(y.left, y.right, perms),
                        {r: tags.get(v, v) if isinstance(v, str) else v for r, v in y.locks}, y.frame)
    if which == "left":
        tags = {"C1": HELD_C, "C2": HELD_F, "F": HELD_F}
        return SepState(y.left, {r: tags[v] if isinstance(v, str) else v for r, v in y.locks},
                        sep_product(y.frame, y.right, perms))
    if which == "right":
        tags = {"C1": HELD_F, "C2": HELD_C, "F": HELD_F}
        return SepState(y.right, {r: tags[v] if isinstance(v, str) else v for r, v in y.locks},
                        sep_product(y.frame, y.left, perms))
    raise ValueError(f"unknown projection {which!r}")


_PAIR_TAG = {(HELD_C, HELD_F): "C1", (HELD_F, HELD_C): "C2", (HELD_F, HELD_F): "F"}


def compatible(x1: SepState, x2: SepState, perms: FractionPerms = DEFAULT_PERMS) -> Optional[ThreePartyState]:
    """The three-party state whose two subjective views are x1 and x2."""
    if len(x1.locks) != len(x2.locks):
        return None
    locks = []
    for (r1, a), (r2, b) in zip(x1.locks, x2.locks):
        if r1 != r2:
            return None
        if isinstance(a, LogicalState) or isinstance(b, LogicalState):
            if a != b:
                return None
            locks.append((r1, a))
        else:
            tag = _PAIR_TAG.get((a, b))
            if tag is None:
                return None
            locks.append((r1, tag))
    frame = sep_residual(x1.frame, x2.code, perms)
    if frame is None or sep_residual(x2.frame, x1.code, perms) != frame:
        return None
    if sep_product(x1.code, x2.code, perms) is None:
        return None
    return ThreePartyState(x1.code, x2.code, tuple(locks), frame)


class SepCompat:
    """Node and edge pairing for the parallel product over separated states."""

    def __init__(self, model: SepModel):
        self.model = model
        self._memo: dict = {}

    def group(self, x):
        return combine(x, self.model.perms)

    def node(self, x1, x2):
        k = (x1, x2)
        got = self._memo.get(k, False)
        if got is False:
            y = compatible(x1, x2, self.model.perms)
            got = None if y is None else project(y, "objective", self.model.perms)
            self._memo[k] = got
        return got

    def key(self, mv):
        return mv[2]

    def edge(self, pol, mv1, mv2, src, dst):
        e = (src, pol, mv1[2], dst)
        return e if self.model.has_edge(e) else None


# proof-level constructions

def sep_leaf(model: SepModel, instr, pre, held: Iterable[str] = (), info=None) -> Ats:
    """Two-copy ATS whose Code moves are the Eve moves labelled ``instr``
    (none when instr is None) out of the states satisfying ``pre``."""
    starts = sep_starts(model, pre, held)
    if instr is None:
        pred = lambda e: False
    else:
        pred = lambda e: e[2] == instr
    return leaf_ats(model, pred, scope=starts, info=info)


def lock_step_ats(model: SepModel, r: str, direction: str, pre, when=None) -> Ats:
    """take(r) from states satisfying pre, or release(r) from states where
    the Code holds r and satisfies pre.  ``when`` is the region's guard."""
    if direction == "take":
        from .codesem import acquire_instr
        m = Acquire(r) if when is None else acquire_instr(r, when)
        return sep_leaf(model, m, pre, info={"instr": f"take {r}"})
    if direction == "release":
        return sep_leaf(model, Release(r), pre, held=[r], info={"instr": f"release {r}"})
    raise ValueError("direction must be 'take' or 'release'")


def lift_sep(G: Ats, r: str, big_model: SepModel) -> Ats:
    """Same graph, with r held by the Code in every state."""
    def up(x):
        return x.with_lock(r, HELD_C)

    def relabel(e):
        x, p, m, y = G.move[e]
        return (up(x), p, m, up(y))

    out = _rebuild(G, "lift_sep", restate=lambda n: up(G.state[n]), relabel=relabel, model=big_model,
                   scope=frozenset(up(x) for x in G.scope) if G.scope is not None else None, prune=False)
    return out


def _hide_state(x: SepState, r: str, perms) -> SepState:
    v = x.lock(r)
    rest = x.without_lock(r)
    if isinstance(v, LogicalState):
        return SepState(sep_product(rest.code, v, perms), rest.locks, rest.frame)
    return rest


def hide_sep(G: Ats, r: str, small_model: SepModel) -> Ats:
    """Resource hiding on separated states: a free r's content joins the Code."""
    from .codesem import hidden_instr
    g = G.graph
    perms = small_model.perms

    def is_r(m):
        return isinstance(m, (Acquire, Release)) and m.r == r

    def keep_edge(e):
        return not (g.pols[e] == FRAME and is_r(G.move[e][2]))

    def relabel(e):
        x, p, m, y = G.move[e]
        return (_hide_state(x, r, perms), p, hidden_instr(m) if is_r(m) else m, _hide_state(y, r, perms))

    def free(n):
        return isinstance(G.state[n].lock(r), LogicalState)

    init = [n for n in G.initial if free(n)]
    return _rebuild(G, "hide", keep_edge=keep_edge, relabel=relabel,
                    restate=lambda n: _hide_state(G.state[n], r, perms),
                    initial=init, returning=[n for n in G.returning if free(n)], model=small_model,
                    scope=frozenset(_hide_state(G.state[n], r, perms) for n in init))


def framing_state(G: Ats, sigma_r: LogicalState) -> Ats:
    """Move sigma_r from the Frame side to the Code side, where possible."""
    perms = G.model.perms

    def lift(x):
        rest = sep_residual(x.frame, sigma_r, perms)
        if rest is None:
            return None
        return SepState(sep_product(x.code, sigma_r, perms), x.locks, rest)

    states = [lift(x) for x in G.state]
    g = G.graph

    def relabel(e):
        x, p, m, y = G.move[e]
        return (states[g.src[e]], p, m, states[g.dst[e]])

    init = [n for n in G.initial if states[n] is not None]
    return _rebuild(G, "framed", keep_node=lambda n: states[n] is not None, relabel=relabel,
                    restate=lambda n: states[n], initial=init,
                    scope=frozenset(states[n] for n in init))


def framing(G: Ats, R, cfg: ModelConfig | None = None) -> Ats:
    """Union over the models of R of the framed copies of G."""
    model = G.model
    cfg = cfg or model.cfg
    parts = [framing_state(G, s) for s in sorted(models(R, cfg, model.perms))]
    parts = [p for p in parts if p.initial]
    if not parts:
        from .ats import empty_ats
        return empty_ats(model, frozenset())
    return union_ats(parts)


def state_satisfies(x: SepState, f, cfg: ModelConfig, perms: FractionPerms = DEFAULT_PERMS) -> bool:
    return satisfies(x.code, f, cfg, perms)


def gamma_str(gamma) -> str:
    return ", ".join(f"{r}: {'*' if j is None else format_formula(j)}" for r, j in gamma)
