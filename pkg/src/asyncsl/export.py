"""DOT and JSON renderings of ATSs and machine models."""
from __future__ import annotations

import json

from .ats import Ats
from .graph import CODE
from .soundness import state_str


def _ats_parts(G: Ats):
    g = G.graph
    nodes = [{"id": n, "label": state_str(G.state[n])} for n in g.nodes()]
    edges = [{"id": e, "src": g.src[e], "dst": g.dst[e], "label": str(g.labels[e]), "pol": g.pols[e]}
             for e in g.edges()]
    tiles = [list(t) for t in g.tiles()]
    return nodes, edges, tiles


def _model_parts(model):
    nodes = list(model.nodes())
    nid = {x: i for i, x in enumerate(nodes)}
    eid: dict = {}
    edges = []
    for x in nodes:
        for e in model.out_edges(x):
            eid[e] = len(edges)
            edges.append({"id": len(edges), "src": nid[model.source(e)], "dst": nid[model.target(e)],
                          "label": str(model.label(e)), "pol": model.polarity(e)})
    tiles = []
    for u in eid:
        for w in model.out_edges(model.target(u)):
            for v, u2 in model.tiles_at(u, w):
                tiles.append([eid[u], eid[w], eid[v], eid[u2]])
    return [{"id": i, "label": state_str(x)} for i, x in enumerate(nodes)], edges, tiles


def to_json(obj, extra: dict | None = None) -> str:
    nodes, edges, tiles = _ats_parts(obj) if isinstance(obj, Ats) else _model_parts(obj)
    doc = {"nodes": nodes, "edges": edges, "tiles": tiles}
    if isinstance(obj, Ats):
        doc["initial"] = sorted(obj.initial)
        doc["returning"] = sorted(obj.returning)
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=1, ensure_ascii=False)


def _q(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(obj, name: str = "G") -> str:
    nodes, edges, tiles = _ats_parts(obj) if isinstance(obj, Ats) else _model_parts(obj)
    init = obj.initial if isinstance(obj, Ats) else frozenset()
    ret = obj.returning if isinstance(obj, Ats) else frozenset()
    out = [f"digraph {name} {{", "  rankdir=LR;", "  node [shape=box, fontsize=10];"]
    for n in nodes:
        attrs = [f"label={_q(n['label'])}"]
        if n["id"] in init:
            attrs.append("penwidth=2")
        if n["id"] in ret:
            attrs.append("peripheries=2")
        out.append(f"  n{n['id']} [{', '.join(attrs)}];")
    for e in edges:
        style = "solid" if e["pol"] in (CODE, None) else "dashed"
        out.append(f"  n{e['src']} -> n{e['dst']} [label={_q(e['label'])}, style={style}];")
    out.append(f"  // {len(tiles)} tiles")
    out.append("}")
    return "\n".join(out)
