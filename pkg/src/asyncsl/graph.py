"""Asynchronous graphs: labelled directed graphs with a tile relation.

Two kinds of graph share one read interface:

* ``AsyncGraph`` is materialized, with integer node and edge ids.
* machine models are lazy and expose the same methods over hashable nodes
  and ``(source, label, target)`` edge tuples.

The read interface used by every checker is::

    out_edges(n) -> iterable of edges
    source(e), target(e), label(e), polarity(e)
    tiles_at(u, w) -> list of (v, u2) such that u.w <> v.u2
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Mapping

CODE = "C"
FRAME = "F"


class AxiomError(ValueError):
    pass


class InconclusiveError(RuntimeError):
    """Homotopy search exceeded its budget without deciding."""


@dataclass
class ValidationReport:
    errors: list = field(default_factory=list)
    checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.errors

    def add(self, kind: str, detail: Any) -> None:
        self.errors.append((kind, detail))

    def merge(self, other: "ValidationReport") -> "ValidationReport":
        self.errors.extend(other.errors)
        self.checked += other.checked
        return self

    def __bool__(self) -> bool:
        return self.ok

    def summary(self, limit: int = 5) -> str:
        if self.ok:
            return f"ok ({self.checked} checked)"
        lines = [f"{len(self.errors)} violation(s)"]
        for kind, detail in self.errors[:limit]:
            lines.append(f"  {kind}: {detail!r}")
        return "\n".join(lines)


@dataclass
class FibrationResult:
    ok: bool
    witnesses: list = field(default_factory=list)
    checked: int = 0

    def __bool__(self) -> bool:
        return self.ok


class AsyncGraph:
    """Materialized asynchronous graph.

    Tiles are kept in a dictionary from an upper path ``(u, w)`` to the
    list of lower paths ``(v, u2)``.  Every insertion also records the
    mirrored entry, so symmetry holds by construction.
    """

    def __init__(self, polarized: bool = False):
        self.polarized = polarized
        self.node_labels: list = []
        self.src: list[int] = []
        self.dst: list[int] = []
        self.labels: list = []
        self.pols: list = []
        self._out: list[list[int]] = []
        self._in: list[list[int]] = []
        self._tiles: dict[tuple[int, int], list[tuple[int, int]]] = {}
        self._tile_list: list[tuple[int, int, int, int]] = []

    # construction

    def add_node(self, label: Any = None) -> int:
        self.node_labels.append(label)
        self._out.append([])
        self._in.append([])
        return len(self.node_labels) - 1

    def add_edge(self, s: int, t: int, label: Any = None, pol: str | None = None) -> int:
        if self.polarized and pol not in (CODE, FRAME):
            raise ValueError("polarized graph needs a polarity on every edge")
        if not self.polarized and pol is not None:
            raise ValueError("unpolarized graph cannot carry polarities")
        e = len(self.src)
        self.src.append(s)
        self.dst.append(t)
        self.labels.append(label)
        self.pols.append(pol)
        self._out[s].append(e)
        self._in[t].append(e)
        return e

    def add_tile(self, u: int, w: int, v: int, u2: int, check: bool = True) -> bool:
        """Record u.w <> v.u2 (and its mirror).  Returns False on duplicates."""
        if check:
            self._check_shape(u, w, v, u2)
        lows = self._tiles.setdefault((u, w), [])
        if (v, u2) in lows:
            return False
        if check and lows:
            raise AxiomError(f"path {(u, w)} already has tile {lows[0]}, refusing {(v, u2)}")
        mirror = self._tiles.get((v, u2), [])
        if check and mirror and (u, w) not in mirror:
            raise AxiomError(f"path {(v, u2)} already has tile {mirror[0]}, refusing {(u, w)}")
        lows.append((v, u2))
        if (v, u2) != (u, w):
            self._tiles.setdefault((v, u2), []).append((u, w))
        self._tile_list.append((u, w, v, u2))
        return True

    def add_raw_tile(self, upper: tuple[int, int], lower: tuple[int, int]) -> None:
        """One-directional insertion without checks (used to build broken graphs)."""
        self._tiles.setdefault(upper, []).append(lower)

    def _check_shape(self, u, w, v, u2) -> None:
        if self.dst[u] != self.src[w] or self.dst[v] != self.src[u2]:
            raise AxiomError("tile sides are not paths")
        if self.src[u] != self.src[v] or self.dst[w] != self.dst[u2]:
            raise AxiomError("tile sides are not co-initial and co-final")
        if self.polarized and (self.pols[u] != self.pols[u2] or self.pols[v] != self.pols[w]):
            raise AxiomError("tile does not respect polarities")

    # read interface

    def nodes(self) -> range:
        return range(len(self.node_labels))

    def edges(self) -> range:
        return range(len(self.src))

    def out_edges(self, n: int) -> list[int]:
        return self._out[n]

    def in_edges(self, n: int) -> list[int]:
        return self._in[n]

    def source(self, e: int) -> int:
        return self.src[e]

    def target(self, e: int) -> int:
        return self.dst[e]

    def label(self, e: int) -> Any:
        return self.labels[e]

    def polarity(self, e: int) -> str | None:
        return self.pols[e]

    def tiles_at(self, u: int, w: int) -> list[tuple[int, int]]:
        return self._tiles.get((u, w), [])

    def tiles(self) -> Iterable[tuple[int, int, int, int]]:
        """Each tile once, as (u, w, v, u2)."""
        if self._tile_list or not self._tiles:
            return list(self._tile_list)
        return list(self._scan_tiles())

    def _scan_tiles(self):
        seen = set()
        for (u, w), lows in self._tiles.items():
            for v, u2 in lows:
                key = frozenset([(u, w), (v, u2)])
                if key in seen:
                    continue
                seen.add(key)
                yield (u, w, v, u2)

    def tile_count(self) -> int:
        return len(self.tiles())

    def __len__(self) -> int:
        return len(self.node_labels)

    def __repr__(self) -> str:
        return f"AsyncGraph({len(self)} nodes, {len(self.src)} edges)"


def validate_axioms(g: AsyncGraph, strict: bool = False) -> ValidationReport:
    """Check tile shape, symmetry and uniqueness of completions.

    The default uniqueness check requires at most one tile per upper path,
    which implies that u.w and v together determine u2.  ``strict`` also
    requires that u and v determine w.
    """
    rep = ValidationReport()
    by_uv: dict[tuple[int, int], set] = {}
    for (u, w), lows in g._tiles.items():
        for v, u2 in lows:
            rep.checked += 1
            try:
                g._check_shape(u, w, v, u2)
            except AxiomError as exc:
                rep.add("shape", (u, w, v, u2, str(exc)))
            if (u, w) not in g._tiles.get((v, u2), []):
                rep.add("axiom1", ((u, w), (v, u2)))
            by_uv.setdefault((u, v), set()).add(w)
        if len(set(lows)) > 1:
            rep.add("axiom2", ((u, w), sorted(set(lows))))
    if strict:
        for (u, v), ws in by_uv.items():
            if len(ws) > 1:
                rep.add("axiom2-strict", ((u, v), sorted(ws)))
    return rep


def _rewrite_neighbours(g, path: tuple) -> Iterable[tuple]:
    for i in range(len(path) - 1):
        for v, u2 in g.tiles_at(path[i], path[i + 1]):
            yield path[:i] + (v, u2) + path[i + 2:]


def _endpoints(g, path: tuple):
    if not path:
        return None
    return g.source(path[0]), g.target(path[-1])


def paths_homotopic(g, f: Iterable, h: Iterable, budget: int = 10**6) -> bool:
    """Decide f ~ h by breadth-first closure under single-tile rewrites."""
    f, h = tuple(f), tuple(h)
    if _endpoints(g, f) != _endpoints(g, h):
        raise ValueError("paths do not share endpoints")
    if len(f) != len(h):
        return False
    if f == h:
        return True
    seen = {f}
    queue = deque([f])
    while queue:
        p = queue.popleft()
        for q in _rewrite_neighbours(g, p):
            if q == h:
                return True
            if q not in seen:
                if len(seen) >= budget:
                    raise InconclusiveError(f"homotopy search exceeded {budget} states")
                seen.add(q)
                queue.append(q)
    return False


class GraphHom:
    """A homomorphism between two graphs given by node and edge maps.

    Maps may be dictionaries or callables.  ``nodes`` is an optional finite
    iterable of source nodes to check; it defaults to ``source.nodes()``.
    """

    def __init__(self, source, target, node_map, edge_map, nodes: Iterable | None = None, name: str = ""):
        self.source = source
        self.target = target
        self._nm = node_map
        self._em = edge_map
        self._nodes = nodes
        self.name = name

    def node(self, x: Hashable):
        return self._nm(x) if callable(self._nm) else self._nm[x]

    def edge(self, e: Hashable):
        return self._em(e) if callable(self._em) else self._em[e]

    def domain(self) -> Iterable:
        return self._nodes if self._nodes is not None else self.source.nodes()

    def compose(self, other: "GraphHom", name: str = "") -> "GraphHom":
        """other after self."""
        return GraphHom(
            self.source,
            other.target,
            lambda x: other.node(self.node(x)),
            lambda e: other.edge(self.edge(e)),
            self._nodes,
            name or f"{other.name}.{self.name}",
        )


def identity_hom(g) -> GraphHom:
    return GraphHom(g, g, lambda x: x, lambda e: e, name="id")


def check_hom(F: GraphHom, check_tiles: bool = True) -> ValidationReport:
    src, tgt = F.source, F.target
    rep = ValidationReport()
    for x in F.domain():
        try:
            fx = F.node(x)
        except KeyError:
            rep.add("node-unmapped", x)
            continue
        for e in src.out_edges(x):
            rep.checked += 1
            try:
                fe = F.edge(e)
            except KeyError:
                rep.add("edge-unmapped", e)
                continue
            if tgt.source(fe) != fx or tgt.target(fe) != F.node(src.target(e)):
                rep.add("incidence", (e, fe))
                continue
            if src.polarity(e) is not None and tgt.polarity(fe) is not None and src.polarity(e) != tgt.polarity(fe):
                rep.add("polarity", (e, fe))
            if not check_tiles:
                continue
            for w in src.out_edges(src.target(e)):
                for v, u2 in src.tiles_at(e, w):
                    try:
                        image = (F.edge(v), F.edge(u2))
                        up = tgt.tiles_at(fe, F.edge(w))
                    except KeyError:
                        rep.add("edge-unmapped", (v, u2))
                        continue
                    if image not in up:
                        rep.add("tile", ((e, w, v, u2), (fe, F.edge(w)) + image))
    return rep


_FILTERS = {"all": (CODE, FRAME, None), "code": (CODE,), "frame": (FRAME,)}


def check_1_fibration(F: GraphHom, filter: str = "all", unique: bool = False, limit: int | None = None) -> FibrationResult:
    """Every downstairs edge out of F(x) lifts to an edge out of x.

    With a polarized target the filter selects downstairs edges; with an
    unpolarized target it selects the polarity the lift must have.
    """
    allowed = _FILTERS[filter]
    src, tgt = F.source, F.target
    res = FibrationResult(True)
    for x in F.domain():
        fx = F.node(x)
        lifts: dict = {}
        for e in src.out_edges(x):
            if tgt.polarity(F.edge(e)) is None and src.polarity(e) not in allowed:
                continue
            lifts.setdefault(F.edge(e), []).append(e)
        for v in tgt.out_edges(fx):
            pv = tgt.polarity(v)
            if pv is not None and pv not in allowed:
                continue
            res.checked += 1
            found = lifts.get(v, [])
            if not found or (unique and len(found) > 1):
                res.ok = False
                res.witnesses.append((x, v, len(found)))
                if limit is not None and len(res.witnesses) >= limit:
                    return res
    return res


_PATTERNS = {
    "CC": {(CODE, CODE)},
    "CF": {(CODE, FRAME)},
    "FC": {(FRAME, CODE)},
    "FF": {(FRAME, FRAME)},
    "xF": {(CODE, FRAME), (FRAME, FRAME)},
    "program": {(CODE, CODE), (CODE, FRAME), (FRAME, CODE)},
    "any": None,
}


def check_2_fibration(F: GraphHom, pattern: str = "any", limit: int | None = None) -> FibrationResult:
    """Every downstairs tile under an upstairs path u.w lifts to a tile.

    A witness is ``(u, w, (F(u), F(w), b, a2))``.
    """
    allowed = _PATTERNS[pattern]
    src, tgt = F.source, F.target
    res = FibrationResult(True)
    for x in F.domain():
        for u in src.out_edges(x):
            fu = F.edge(u)
            for w in src.out_edges(src.target(u)):
                if allowed is not None and (src.polarity(u), src.polarity(w)) not in allowed:
                    continue
                fw = F.edge(w)
                down = tgt.tiles_at(fu, fw)
                if not down:
                    continue
                up = {(F.edge(v), F.edge(u2)) for v, u2 in src.tiles_at(u, w)}
                for b, a2 in down:
                    res.checked += 1
                    if (b, a2) not in up:
                        res.ok = False
                        res.witnesses.append((u, w, (fu, fw, b, a2)))
                        if limit is not None and len(res.witnesses) >= limit:
                            return res
    return res


def reachable(g, starts: Iterable, edge_ok: Callable[[Any], bool] | None = None) -> set:
    seen = set(starts)
    queue = deque(seen)
    while queue:
        n = queue.popleft()
        for e in g.out_edges(n):
            if edge_ok is not None and not edge_ok(e):
                continue
            t = g.target(e)
            if t not in seen:
                seen.add(t)
                queue.append(t)
    return seen


def hom_from_maps(source, target, node_map: Mapping, edge_map: Mapping, name: str = "") -> GraphHom:
    return GraphHom(source, target, dict(node_map), dict(edge_map), name=name)


def materialize(model, nodes: Iterable | None = None) -> tuple:
    """Copy a lazy model (nodes/out_edges/tiles_at) into an AsyncGraph.

    Returns ``(graph, node_index, edge_index)``; edges leaving the given
    nodes are followed until closure.
    """
    todo = deque(model.nodes() if nodes is None else nodes)
    pols = [model.polarity(e) for x in list(todo)[:1] for e in model.out_edges(x)]
    g = AsyncGraph(polarized=any(p is not None for p in pols))
    nidx: dict = {}
    eidx: dict = {}

    def node(x):
        if x not in nidx:
            nidx[x] = g.add_node(x)
            todo.append(x)
        return nidx[x]

    for x in list(todo):
        if x not in nidx:
            nidx[x] = g.add_node(x)
    while todo:
        x = todo.popleft()
        for e in model.out_edges(x):
            if e not in eidx:
                eidx[e] = g.add_edge(nidx[x], node(model.target(e)), model.label(e), model.polarity(e))
    for u, i in list(eidx.items()):
        for w in model.out_edges(model.target(u)):
            for v, u2 in model.tiles_at(u, w):
                if v in eidx and u2 in eidx:
                    g.add_raw_tile((i, eidx[w]), (eidx[v], eidx[u2]))
    return g, nidx, eidx
