"""Asynchronous transition systems over a machine model, and the generic
combinators used by both the code and the proof semantics.

Every Ats remembers how it was built: ``kind`` names the construction,
``parts`` are its inputs and each node/edge carries a list of *origins*
pointing into the parts.  Morphisms between two semantics that were built
the same way are then computed structurally (see ``transport``).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional

import networkx as nx

from .graph import CODE, FRAME, AsyncGraph, GraphHom, ValidationReport, check_1_fibration, check_2_fibration, validate_axioms


@dataclass
class Ats:
    graph: AsyncGraph
    model: Any
    state: list
    move: list
    initial: frozenset
    returning: frozenset
    kind: str = "leaf"
    parts: tuple = ()
    norig: list = field(default_factory=list)
    eorig: list = field(default_factory=list)
    nidx: dict = field(default_factory=dict)
    eidx: dict = field(default_factory=dict)
    scope: Optional[frozenset] = None
    truncated: bool = False
    info: dict = field(default_factory=dict)

    def getstate(self) -> GraphHom:
        return GraphHom(self.graph, self.model, self.state.__getitem__, self.move.__getitem__, name="getstate")

    def size(self) -> tuple:
        g = self.graph
        return (len(g.node_labels), len(g.src), g.tile_count(), len(self.returning))

    def code_edges(self) -> list:
        return [e for e in self.graph.edges() if self.graph.pols[e] == CODE]

    def __repr__(self):
        n, e, t, r = self.size()
        return f"Ats({self.kind}: {n} nodes, {e} edges, {t} tiles, {len(self.initial)} initial, {r} returning)"


class Builder:
    """Incremental construction of an Ats with edge de-duplication."""

    def __init__(self, model, kind: str, parts: tuple = ()):
        self.model = model
        self.kind = kind
        self.parts = parts
        self.g = AsyncGraph(polarized=True)
        self.state: list = []
        self.move: list = []
        self.norig: list = []
        self.eorig: list = []
        self.nidx: dict = {}
        self.eidx: dict = {}
        self._ekey: dict = {}

    def node(self, orig, st) -> int:
        n = self.nidx.get(orig)
        if n is not None:
            return n
        n = self.g.add_node(st)
        self.state.append(st)
        self.norig.append([orig])
        self.nidx[orig] = n
        return n

    def alias(self, n: int, orig) -> None:
        if orig not in self.nidx:
            self.nidx[orig] = n
            self.norig[n].append(orig)

    def edge(self, s: int, t: int, pol: str, mv, orig) -> int:
        key = (s, t, pol, mv)
        e = self._ekey.get(key)
        if e is None:
            e = self.g.add_edge(s, t, self.model.label(mv), pol)
            self.move.append(mv)
            self.eorig.append([])
            self._ekey[key] = e
        if orig not in self.eidx:
            self.eidx[orig] = e
            self.eorig[e].append(orig)
        return e

    def tile(self, u, w, v, u2) -> None:
        self.g.add_tile(u, w, v, u2)

    def build(self, initial, returning, scope=None, truncated=False, info=None) -> Ats:
        return Ats(self.g, self.model, self.state, self.move, frozenset(initial), frozenset(returning),
                   self.kind, self.parts, self.norig, self.eorig, self.nidx, self.eidx, scope, truncated,
                   dict(info or {}))


def _same_model(*gs: Ats) -> None:
    m0 = gs[0].model
    for g in gs[1:]:
        if g.model is not m0 and g.model.key() != m0.key():
            raise ValueError("ATS combinators need a common machine model")


def _is_frame(model, e) -> bool:
    return model.polarity(e) in (None, FRAME)


def _is_code(model, e) -> bool:
    return model.polarity(e) in (None, CODE)


def frame_closure(model, starts: Iterable) -> list:
    seen = dict.fromkeys(starts)
    queue = deque(seen)
    while queue:
        s = queue.popleft()
        for e in model.out_edges(s):
            if _is_frame(model, e):
                t = model.target(e)
                if t not in seen:
                    seen[t] = None
                    queue.append(t)
    return list(seen)


def _frame_template(model, states: list) -> tuple:
    """Frame edges (as model moves) and Frame/Frame tiles on a Frame-closed
    set; cached on the model since every leaf over the same set repeats it."""
    cache = model.__dict__.setdefault("_frame_templates", {})
    key = frozenset(states)
    got = cache.get(key)
    if got is not None:
        return got
    fset = {}
    for s in states:
        for e in model.out_edges(s):
            if _is_frame(model, e):
                fset[e] = None
    tiles = []
    for e in fset:
        for f in model.out_edges(model.target(e)):
            if f not in fset:
                continue
            for v, u2 in model.tiles_at(e, f):
                if v in fset and u2 in fset:
                    tiles.append((e, f, v, u2))
    got = cache[key] = (list(fset), tiles)
    return got


def _add_frame_part(b: Builder, model, copy: int, states: Iterable) -> None:
    """Frame edges and Frame/Frame tiles on one copy of a Frame-closed set."""
    states = list(states)
    for s in states:
        b.node(("n", copy, s), s)
    edges, tiles = _frame_template(model, states)
    fedges = {}
    for e in edges:
        x = b.nidx[("n", copy, model.source(e))]
        y = b.nidx[("n", copy, model.target(e))]
        fedges[e] = b.edge(x, y, FRAME, e, ("e", copy, e))
    for e, f, v, u2 in tiles:
        b.tile(fedges[e], fedges[f], fedges[v], fedges[u2])


def leaf_ats(model, is_code_move: Callable[[Any], bool], scope: Iterable | None = None,
             terminal: Callable[[Any], bool] | None = None, kind: str = "leaf", info=None) -> Ats:
    """Single-instruction ATS: a Frame-closed initial copy, Code moves into a
    second Frame-closed copy whose nodes are returning (except ``terminal``
    ones such as the error state)."""
    starts = model.nodes() if scope is None else list(scope)
    copy0 = frame_closure(model, starts)
    b = Builder(model, kind)
    _add_frame_part(b, model, 0, copy0)
    code = []
    for s in copy0:
        for e in model.out_edges(s):
            if model.polarity(e) != FRAME and is_code_move(e):
                code.append(e)
    copy1 = frame_closure(model, dict.fromkeys(model.target(e) for e in code))
    _add_frame_part(b, model, 1, copy1)
    cedge = {}
    for e in code:
        x = b.nidx[("n", 0, model.source(e))]
        y = b.nidx[("n", 1, model.target(e))]
        cedge[e] = b.edge(x, y, CODE, e, ("c", e))
    # Code/Frame tiles: u Code then w Frame, completed by a Frame then a Code edge
    for e, ue in cedge.items():
        y = model.target(e)
        for f in model.out_edges(y):
            if not _is_frame(model, f):
                continue
            we = b.eidx.get(("e", 1, f))
            if we is None:
                continue
            for v, u2 in model.tiles_at(e, f):
                ve = b.eidx.get(("e", 0, v))
                u2e = cedge.get(u2)
                if ve is not None and u2e is not None:
                    b.tile(ue, we, ve, u2e)
    initial = [b.nidx[("n", 0, s)] for s in starts]
    returning = [b.nidx[("n", 1, s)] for s in copy1 if terminal is None or not terminal(s)]
    return b.build(initial, returning, frozenset(starts) if scope is not None else None, info=info)


def _rebuild(G: Ats, kind: str, keep_node: Callable[[int], bool] | None = None,
             keep_edge: Callable[[int], bool] | None = None, relabel: Callable[[int], Any] | None = None,
             restate: Callable[[int], Any] | None = None, initial: Iterable | None = None,
             returning: Iterable | None = None, model=None, scope=None, prune: bool = True) -> Ats:
    """Copy G keeping selected nodes/edges; origins point at G's ids."""
    g = G.graph
    model = G.model if model is None else model
    init = G.initial if initial is None else frozenset(initial)
    nodes_ok = [keep_node is None or keep_node(n) for n in g.nodes()]
    edges_ok = [nodes_ok[g.src[e]] and nodes_ok[g.dst[e]] and (keep_edge is None or keep_edge(e)) for e in g.edges()]
    if prune:
        seen = {n for n in init if nodes_ok[n]}
        queue = deque(seen)
        while queue:
            n = queue.popleft()
            for e in g.out_edges(n):
                if edges_ok[e] and g.dst[e] not in seen:
                    seen.add(g.dst[e])
                    queue.append(g.dst[e])
        nodes_ok = [n in seen for n in g.nodes()]
        edges_ok = [ok and nodes_ok[g.src[e]] for e, ok in enumerate(edges_ok)]
    b = Builder(model, kind, (G,))
    for n in g.nodes():
        if nodes_ok[n]:
            b.node(n, G.state[n] if restate is None else restate(n))
    emap = {}
    for e in g.edges():
        if edges_ok[e]:
            mv = G.move[e] if relabel is None else relabel(e)
            emap[e] = b.edge(b.nidx[g.src[e]], b.nidx[g.dst[e]], g.pols[e], mv, e)
    for u, w, v, u2 in g.tiles():
        if u in emap and w in emap and v in emap and u2 in emap:
            b.tile(emap[u], emap[w], emap[v], emap[u2])
    ret = G.returning if returning is None else frozenset(returning)
    return b.build([b.nidx[n] for n in init if n in b.nidx], [b.nidx[n] for n in ret if n in b.nidx],
                   G.scope if scope is None else scope, G.truncated, dict(G.info))


def prune_unreachable(G: Ats, kind: str = "prune") -> Ats:
    return _rebuild(G, kind)


def _glue(parts: list[Ats], kind: str, identify: list, initial: list, returning: list, scope) -> Ats:
    """Disjoint union of parts with the given node identifications, pruned
    to what is reachable from the initial nodes."""
    parent: dict = {}

    def find(a):
        root = a
        while parent.get(root, root) != root:
            root = parent[root]
        while a != root:
            parent[a], a = root, parent[a]
        return root

    # congruence closure: merged nodes have their equal Frame moves merged,
    # and equal Code moves too when both come from the same part (distinct
    # parts are distinct branches even if their moves coincide)
    out: dict = {}

    def succ(a):
        got = out.get(a)
        if got is None:
            i, n = a
            G = parts[i]
            g = G.graph
            got = out[a] = {(g.pols[e], G.move[e], None if g.pols[e] == FRAME else i): (i, g.dst[e])
                            for e in g.out_edges(n)}
        return got

    pending = list(identify)
    while pending:
        a, c = pending.pop()
        ra, rc = find(a), find(c)
        if ra == rc:
            continue
        if len(succ(ra)) < len(succ(rc)):
            ra, rc = rc, ra
        parent[rc] = ra
        mine = out[ra]
        for k, t in out.pop(rc).items():
            if k in mine:
                pending.append((mine[k], t))
            else:
                mine[k] = t
    members: dict = {}
    for i, G in enumerate(parts):
        for n in G.graph.nodes():
            members.setdefault(find((i, n)), []).append((i, n))
    seen = {find(a) for a in initial}
    queue = deque(seen)
    while queue:
        root = queue.popleft()
        for i, n in members[root]:
            g = parts[i].graph
            for e in g.out_edges(n):
                t = find((i, g.dst[e]))
                if t not in seen:
                    seen.add(t)
                    queue.append(t)
    b = Builder(parts[0].model, kind, tuple(parts))
    for root in sorted(seen):
        ms = members[root]
        i, n = ms[0]
        x = b.node(ms[0], parts[i].state[n])
        for o in ms[1:]:
            b.alias(x, o)
    for i, G in enumerate(parts):
        g = G.graph
        emap = {}
        for e in g.edges():
            if find((i, g.src[e])) in seen:
                emap[e] = b.edge(b.nidx[(i, g.src[e])], b.nidx[(i, g.dst[e])], g.pols[e], G.move[e], (i, e))
        for u, w, v, u2 in g.tiles():
            if u in emap and w in emap:
                b.tile(emap[u], emap[w], emap[v], emap[u2])
    return b.build({b.nidx[a] for a in initial}, {b.nidx[a] for a in returning if a in b.nidx}, scope,
                   any(G.truncated for G in parts))


def _by_image(G: Ats, nodes) -> dict:
    return {G.state[n]: n for n in nodes}


def sum_ats(G1: Ats, G2: Ats, kind: str = "sum") -> Ats:
    """Disjoint sum: initial nodes merged by image, returning nodes likewise."""
    _same_model(G1, G2)
    i2 = _by_image(G2, G2.initial)
    r2 = _by_image(G2, G2.returning)
    ident = [((0, n), (1, i2[G1.state[n]])) for n in G1.initial if G1.state[n] in i2]
    ident += [((0, n), (1, r2[G1.state[n]])) for n in G1.returning if G1.state[n] in r2]
    initial = [(0, n) for n in G1.initial] + [(1, n) for n in G2.initial]
    returning = [(0, n) for n in G1.returning] + [(1, n) for n in G2.returning]
    scope = None if G1.scope is None or G2.scope is None else G1.scope | G2.scope
    return _glue([G1, G2], kind, ident, initial, returning, scope)


def union_ats(parts: list[Ats]) -> Ats:
    """Union of strategies justifying the same code (n-ary sum)."""
    _same_model(*parts)
    if len(parts) == 1:
        return _glue(parts, "union", [], [(0, n) for n in parts[0].initial],
                     [(0, n) for n in parts[0].returning], parts[0].scope)
    ident, initial, returning = [], [], []
    first_i: dict = {}
    first_r: dict = {}
    for i, G in enumerate(parts):
        for n in G.initial:
            k = G.state[n]
            if k in first_i:
                ident.append((first_i[k], (i, n)))
            else:
                first_i[k] = (i, n)
            initial.append((i, n))
        for n in G.returning:
            k = G.state[n]
            if k in first_r:
                ident.append((first_r[k], (i, n)))
            else:
                first_r[k] = (i, n)
            returning.append((i, n))
    scopes = [G.scope for G in parts]
    scope = None if any(s is None for s in scopes) else frozenset().union(*scopes)
    return _glue(parts, "union", ident, initial, returning, scope)


def seq_ats(G1: Ats, G2: Ats) -> Ats:
    """Sequential composition: glue returning(G1) onto initial(G2)."""
    _same_model(G1, G2)
    i2 = _by_image(G2, G2.initial)
    ident = [((0, n), (1, i2[G1.state[n]])) for n in G1.returning if G1.state[n] in i2]
    return _glue([G1, G2], "seq", ident, [(0, n) for n in G1.initial], [(1, n) for n in G2.returning], G1.scope)


def loop_step_ats(enter: Ats, body: Ats, rest: Ats, leave: Ats, abort: Ats) -> Ats:
    """One unrolling, ((enter ; body ; rest) + leave) + abort, in a single glue."""
    parts = [enter, body, rest, leave, abort]
    _same_model(*parts)
    ident = []
    for i in (0, 1):
        nxt = _by_image(parts[i + 1], parts[i + 1].initial)
        ident += [((i, n), (i + 1, nxt[parts[i].state[n]])) for n in parts[i].returning
                  if parts[i].state[n] in nxt]
    init = {enter.state[n]: (0, n) for n in enter.initial}
    ret = {rest.state[n]: (2, n) for n in rest.returning}
    initial = list(init.values())
    returning = list(ret.values())
    for i in (3, 4):
        G = parts[i]
        i2 = _by_image(G, G.initial)
        r2 = _by_image(G, G.returning)
        ident += [(a, (i, i2[k])) for k, a in init.items() if k in i2]
        ident += [(a, (i, r2[k])) for k, a in ret.items() if k in r2]
        for n in G.initial:
            init.setdefault(G.state[n], (i, n))
            initial.append((i, n))
        for n in G.returning:
            ret.setdefault(G.state[n], (i, n))
            returning.append((i, n))
    scopes = [enter.scope, leave.scope, abort.scope]
    scope = None if None in scopes else frozenset().union(*scopes)
    return _glue(parts, "loop", ident, initial, returning, scope)


class EqualCompat:
    """Pairing of nodes with equal machine state (stateful and stateless models)."""

    def group(self, s):
        return s

    def node(self, s1, s2):
        return s1 if s1 == s2 else None

    def key(self, mv):
        return mv

    def edge(self, pol, mv1, mv2, src, dst):
        return mv1 if mv1 == mv2 else None


def parallel_ats(G1: Ats, G2: Ats, compat=None) -> Ats:
    """Parallel product: pairs of compatible nodes, never two Code moves at once."""
    _same_model(G1, G2)
    compat = compat or EqualCompat()
    model = G1.model
    g1, g2 = G1.graph, G2.graph
    b = Builder(model, "par", (G1, G2))
    by_group: dict = {}
    for n2 in G2.initial:
        by_group.setdefault(compat.group(G2.state[n2]), []).append(n2)
    initial = []
    queue = deque()
    for n1 in G1.initial:
        for n2 in by_group.get(compat.group(G1.state[n1]), ()):
            st = compat.node(G1.state[n1], G2.state[n2])
            if st is None:
                continue
            p = b.node((n1, n2), st)
            initial.append(p)
            queue.append((n1, n2))

    def frames(G, g, n):
        d: dict = {}
        for e in g.out_edges(n):
            if g.pols[e] == FRAME:
                d.setdefault(compat.key(G.move[e]), []).append(e)
        return d

    pair_edge: dict = {}
    seen = set(queue)
    while queue:
        n1, n2 = queue.popleft()
        p = b.nidx[(n1, n2)]
        pst = b.state[p]
        f1, f2 = frames(G1, g1, n1), frames(G2, g2, n2)
        cands = []
        for e1 in g1.out_edges(n1):
            for e2 in f2.get(compat.key(G1.move[e1]), ()):
                cands.append((e1, e2))
        for e2 in g2.out_edges(n2):
            if g2.pols[e2] == CODE:
                for e1 in f1.get(compat.key(G2.move[e2]), ()):
                    cands.append((e1, e2))
        for e1, e2 in cands:
            t1, t2 = g1.dst[e1], g2.dst[e2]
            tst = compat.node(G1.state[t1], G2.state[t2])
            if tst is None:
                continue
            pol = CODE if CODE in (g1.pols[e1], g2.pols[e2]) else FRAME
            mv = compat.edge(pol, G1.move[e1], G2.move[e2], pst, tst)
            if mv is None:
                continue
            q = b.node((t1, t2), tst)
            pair_edge[(e1, e2)] = b.edge(p, q, pol, mv, (e1, e2))
            if (t1, t2) not in seen:
                seen.add((t1, t2))
                queue.append((t1, t2))
    for (e1, e2), pe in pair_edge.items():
        t1, t2 = g1.dst[e1], g2.dst[e2]
        for w1 in g1.out_edges(t1):
            for w2 in g2.out_edges(t2):
                pw = pair_edge.get((w1, w2))
                if pw is None:
                    continue
                for v1, u21 in g1.tiles_at(e1, w1):
                    for v2, u22 in g2.tiles_at(e2, w2):
                        pv, pu2 = pair_edge.get((v1, v2)), pair_edge.get((u21, u22))
                        if pv is not None and pu2 is not None:
                            b.tile(pe, pw, pv, pu2)
    returning = [b.nidx[(r1, r2)] for r1 in G1.returning for r2 in G2.returning if (r1, r2) in b.nidx]
    scope = None
    if G1.scope is not None or G2.scope is not None:
        scope = frozenset(b.state[p] for p in initial)
    return b.build(initial, returning, scope, G1.truncated or G2.truncated)


def intersection_ats(G1: Ats, G2: Ats) -> Ats:
    """Synchronous product: equal states, jointly fired edges with equal moves."""
    _same_model(G1, G2)
    g1, g2 = G1.graph, G2.graph
    b = Builder(G1.model, "conj", (G1, G2))
    i2 = _by_image(G2, G2.initial)
    initial = []
    queue = deque()
    for n1 in G1.initial:
        n2 = i2.get(G1.state[n1])
        if n2 is not None:
            initial.append(b.node((n1, n2), G1.state[n1]))
            queue.append((n1, n2))
    seen = set(queue)
    pair_edge = {}
    while queue:
        n1, n2 = queue.popleft()
        p = b.nidx[(n1, n2)]
        out2 = {}
        for e2 in g2.out_edges(n2):
            out2.setdefault((g2.pols[e2], G2.move[e2]), []).append(e2)
        for e1 in g1.out_edges(n1):
            for e2 in out2.get((g1.pols[e1], G1.move[e1]), ()):
                t = (g1.dst[e1], g2.dst[e2])
                q = b.node(t, G1.state[t[0]])
                pair_edge[(e1, e2)] = b.edge(p, q, g1.pols[e1], G1.move[e1], (e1, e2))
                if t not in seen:
                    seen.add(t)
                    queue.append(t)
    for (e1, e2), pe in pair_edge.items():
        for w1 in g1.out_edges(g1.dst[e1]):
            for w2 in g2.out_edges(g2.dst[e2]):
                pw = pair_edge.get((w1, w2))
                if pw is None:
                    continue
                for v1, u21 in g1.tiles_at(e1, w1):
                    for v2, u22 in g2.tiles_at(e2, w2):
                        pv, pu2 = pair_edge.get((v1, v2)), pair_edge.get((u21, u22))
                        if pv is not None and pu2 is not None:
                            b.tile(pe, pw, pv, pu2)
    returning = [b.nidx[(r1, r2)] for r1 in G1.returning for r2 in G2.returning if (r1, r2) in b.nidx]
    return b.build(initial, returning, G1.scope, G1.truncated or G2.truncated)


def restrict_initial(G: Ats, pred: Callable[[Any], bool], kind: str = "restrict") -> Ats:
    init = [n for n in G.initial if pred(G.state[n])]
    scope = frozenset(G.state[n] for n in init)
    return _rebuild(G, kind, initial=init, scope=scope)


def when_filter(G: Ats, keep: Callable[[Any], bool], kind: str = "when") -> Ats:
    """Drop Code edges out of initial nodes whose state fails ``keep``."""
    g = G.graph
    init = G.initial

    def keep_edge(e):
        s = g.src[e]
        return not (g.pols[e] == CODE and s in init and not keep(G.state[s]))

    return _rebuild(G, kind, keep_edge=keep_edge)


def empty_ats(model, scope=None) -> Ats:
    b = Builder(model, "empty")
    return b.build([], [], scope)


def identity_ats(model, scope: Iterable | None = None) -> Ats:
    """Frame-closed copy of the model whose nodes are initial and returning."""
    starts = model.nodes() if scope is None else list(scope)
    states = frame_closure(model, starts)
    b = Builder(model, "id")
    _add_frame_part(b, model, 0, states)
    nodes = [b.nidx[("n", 0, s)] for s in states]
    return b.build([b.nidx[("n", 0, s)] for s in starts], nodes, None if scope is None else frozenset(scope))


# validation

def _scc_code_edges(G: Ats) -> list:
    g = G.graph
    dg = nx.DiGraph()
    dg.add_nodes_from(g.nodes())
    dg.add_edges_from((g.src[e], g.dst[e]) for e in g.edges())
    comp = {}
    for i, c in enumerate(nx.strongly_connected_components(dg)):
        for n in c:
            comp[n] = i
    return [e for e in g.edges() if g.pols[e] == CODE and comp[g.src[e]] == comp[g.dst[e]]]


def validate_ats(G: Ats, scope: Iterable | None = None, check_moves: bool = True) -> ValidationReport:
    """Check the ATS conditions against the machine model."""
    rep = validate_axioms(G.graph)
    g, model = G.graph, G.model
    for e in _scc_code_edges(G):
        rep.add("code-cycle", e)
    images = [G.state[n] for n in G.initial]
    if len(set(images)) != len(images):
        rep.add("cond1-initial-not-injective", len(images) - len(set(images)))
    if scope is None:
        scope = G.scope
    if scope is None and hasattr(model, "nodes"):
        scope = model.nodes()
    if scope is not None and set(images) != set(scope):
        rep.add("cond1-initial-not-onto", (len(set(scope) - set(images)), len(set(images) - set(scope))))
    rimg = [G.state[n] for n in G.returning]
    if len(set(rimg)) != len(rimg):
        rep.add("cond1-returning-not-injective", len(rimg) - len(set(rimg)))
    for n in G.returning:
        for e in g.out_edges(n):
            if g.pols[e] == CODE:
                rep.add("returning-not-final", n)
            elif g.dst[e] not in G.returning:
                rep.add("returning-not-closed", (n, e))
    if check_moves:
        for e in g.edges():
            mv = G.move[e]
            if model.source(mv) != G.state[g.src[e]] or model.target(mv) != G.state[g.dst[e]]:
                rep.add("move-incidence", e)
            elif mv not in model.out_edges(model.source(mv)):
                rep.add("move-not-in-model", e)
            pm = model.polarity(mv)
            if pm is not None and pm != g.pols[e]:
                rep.add("move-polarity", e)
    F = G.getstate()
    r2 = check_1_fibration(F, "frame", unique=True, limit=20)
    for w in r2.witnesses:
        rep.add("cond2-frame-lift", w)
    r3 = check_2_fibration(F, "xF", limit=20)
    for w in r3.witnesses:
        rep.add("cond3-tile-lift", w)
    rep.checked += r2.checked + r3.checked
    return rep


# morphisms between semantics built the same way

PROOF_ONLY = {"union", "framed", "conj", "conseq"}
GLUED = {"sum", "seq", "union", "loop"}


def transport(up: Ats, down: Ats, fnode: Callable, fedge: Callable, special: dict | None = None, memo=None):
    """Structural morphism from ``up`` to ``down`` as (node dict, edge dict).

    Leaves map their origins through (fnode, fedge); composite constructions
    map each origin through the morphisms of their parts.  Constructions
    listed in PROOF_ONLY have no counterpart downstairs and are collapsed
    onto it (codiagonal for unions, first projection for conjunctions).
    """
    memo = {} if memo is None else memo
    key = (id(up), id(down))
    if key in memo:
        return memo[key]
    special = special or {}
    rec = lambda a, c: transport(a, c, fnode, fedge, special, memo)
    g = up.graph
    if not g.node_labels:
        memo[key] = ({}, {})
        return memo[key]
    if up.kind in PROOF_ONLY:
        if up.kind == "union":
            subs = [rec(p, down) for p in up.parts]
            f_n = lambda o: subs[o[0]][0][o[1]]
            f_e = lambda o: subs[o[0]][1][o[1]]
        elif up.kind == "conj":
            sub = rec(up.parts[0], down)
            f_n = lambda o: sub[0][o[0]]
            f_e = lambda o: sub[1][o[0]]
        else:
            sub = rec(up.parts[0], down)
            f_n = lambda o: sub[0][o]
            f_e = lambda o: sub[1][o]
        memo[key] = ({n: f_n(up.norig[n][0]) for n in g.nodes()},
                     {e: f_e(up.eorig[e][0]) for e in g.edges()})
        return memo[key]
    handler = special.get((up.kind, down.kind))
    if handler is not None:
        memo[key] = handler(up, down, rec)
        return memo[key]
    if up.kind != down.kind or len(up.parts) != len(down.parts):
        raise ValueError(f"shape mismatch: {up.kind} vs {down.kind}")
    subs = [rec(p, c) for p, c in zip(up.parts, down.parts)]
    on, oe = _origin_mappers(up, subs, fnode, fedge)
    nmap = {n: _lookup(down.nidx, [on(o) for o in up.norig[n]], ("node", up.kind, n)) for n in g.nodes()}
    emap = {e: _lookup(down.eidx, [oe(o) for o in up.eorig[e]], ("edge", up.kind, e)) for e in g.edges()}
    memo[key] = (nmap, emap)
    return memo[key]


def _lookup(index: dict, candidates: list, what):
    for c in candidates:
        got = index.get(c)
        if got is not None:
            return got
    raise KeyError(f"no image for {what}: tried {candidates[:2]}")


def _origin_mappers(up: Ats, subs: list, fnode, fedge):
    k = up.kind
    if not up.parts:
        def on(o):
            return (o[0], o[1], fnode(o[2]))

        def oe(o):
            if o[0] == "c":
                return ("c", fedge(o[1]))
            if o[0] == "e":
                return ("e", o[1], fedge(o[2]))
            return (o[0],) + tuple(o[1:-1]) + (fedge(o[-1]),)
        return on, oe
    if k in GLUED:
        return (lambda o: (o[0], subs[o[0]][0][o[1]]), lambda o: (o[0], subs[o[0]][1][o[1]]))
    if k in ("par", "conj"):
        return (lambda o: (subs[0][0][o[0]], subs[1][0][o[1]]),
                lambda o: (subs[0][1][o[0]], subs[1][1][o[1]]))
    if k == "lift":
        def on(o):
            return (subs[0][0][o[0]], o[1])

        def oe(o):
            if o[0] == "lock":
                return ("lock", subs[0][0][o[1]], o[2], fedge(o[3]))
            return (subs[0][1][o[0]], o[1])
        return on, oe
    return (lambda o: subs[0][0][o], lambda o: subs[0][1][o])


def hom_between(up: Ats, down: Ats, fnode, fedge, special=None, name: str = "") -> GraphHom:
    nmap, emap = transport(up, down, fnode, fedge, special)
    return GraphHom(up.graph, down.graph, nmap, emap, name=name)


def canonical_hash(G: Ats, iterations: int = 4) -> str:
    """Isomorphism-insensitive fingerprint (colour refinement)."""
    g = G.graph
    dg = nx.DiGraph()
    for n in g.nodes():
        tag = ("I" if n in G.initial else "") + ("R" if n in G.returning else "")
        dg.add_node(n, lab=ascii(f"{G.state[n]!r}{tag}"))
    parallel: dict = {}
    for e in g.edges():
        parallel.setdefault((g.src[e], g.dst[e]), []).append(f"{g.pols[e]}:{g.labels[e]}")
    for (s, t), labs in parallel.items():
        dg.add_edge(s, t, lab=ascii("|".join(sorted(labs))))
    return nx.weisfeiler_lehman_graph_hash(dg, node_attr="lab", edge_attr="lab", iterations=iterations) + f"/{G.size()}"
