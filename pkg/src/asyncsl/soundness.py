"""Soundness checks: lifting of Code steps along chi, lifting of stateless
tiles, and data-race detection on the closed semantics of a program."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .ats import Ats, _rebuild
from .codesem import CodeSemantics, build_Lmap, free_locks, program_alphabet
from .graph import CODE, GraphHom, check_1_fibration, check_2_fibration
from .logic import DEFAULT_PERMS, FractionPerms, Star, erase_logical, format_formula, models
from .machine import ERROR, ModelConfig
from .parse import format_program
from .proofs import Derivation, ProofBundle, build_chi


@dataclass
class SoundnessResult:
    name: str
    ok: bool
    checked: int
    witnesses: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    truncated: bool = False

    def __bool__(self):
        return self.ok

    def text(self, limit: int = 5) -> str:
        head = f"{self.name}: {'PASS' if self.ok else 'FAIL'} ({self.checked} checked)"
        if self.truncated:
            head += " [truncated]"
        lines = [head] + [f"  note: {n}" for n in self.notes]
        for w in self.witnesses[:limit]:
            lines.append(f"  {w}")
        if len(self.witnesses) > limit:
            lines.append(f"  ... {len(self.witnesses) - limit} more")
        return "\n".join(lines)


def _bundle(d, cfg, perms) -> ProofBundle:
    return d if isinstance(d, ProofBundle) else build_chi(d, cfg, perms)


def state_str(x) -> str:
    if isinstance(x, frozenset):
        return "{" + ", ".join(sorted(map(str, x))) + "}" if x else "∅"
    return str(x)


def _edge_str(G: Ats, e) -> str:
    g = G.graph
    return f"{state_str(G.state[g.src[e]])} -{g.labels[e]}-> {state_str(G.state[g.dst[e]])}"


def check_1_soundness(d, cfg: ModelConfig, perms: FractionPerms = DEFAULT_PERMS,
                      limit: int | None = 50) -> SoundnessResult:
    """Every Code step of the program lifts along chi into the proof."""
    b = _bundle(d, cfg, perms)
    res = check_1_fibration(b.chi, "code", limit=limit)
    out = SoundnessResult("1-soundness", res.ok, res.checked, truncated=b.code_s.truncated)
    for x, v, _ in res.witnesses:
        tgt = b.code_s.state[b.code_s.graph.dst[v]]
        tag = " (reaches the error state)" if tgt is ERROR else ""
        out.witnesses.append(f"at {b.sep.state[x]}: no lift of {_edge_str(b.code_s, v)}{tag}")
    return out


def check_2_soundness(d, cfg: ModelConfig, perms: FractionPerms = DEFAULT_PERMS,
                      limit: int | None = 50) -> SoundnessResult:
    """Stateless tiles under paths of the proof lift to tiles of the proof.

    Pass/fail is decided on paths with at least one Code move; reorderings
    made purely by the environment are counted and reported separately.
    """
    b = _bundle(d, cfg, perms)
    res = check_2_fibration(b.chi_l, "program", limit=limit)
    out = SoundnessResult("2-soundness", res.ok, res.checked, truncated=b.code_s.truncated)
    for u, w, (fu, fw, lb, la) in res.witnesses:
        out.witnesses.append(_tile_str(b.sep, b.code_l, u, w, fu, fw, lb, la))
    env = check_2_fibration(b.chi_l, "FF", limit=1)
    if not env.ok:
        out.notes.append("environment-only reorderings do not all lift (not counted)")
    return out


def _tile_str(up: Ats, down: Ats, u, w, fu, fw, lb, la) -> str:
    g = up.graph
    return (f"path {g.labels[u]} . {g.labels[w]} from {up.state[g.src[u]]}: stateless tile "
            f"[{_edge_str(down, fu)} ; {_edge_str(down, fw)}] ~ [{_edge_str(down, lb)} ; {_edge_str(down, la)}] "
            f"has no lift")


# closed semantics and races

class PreSatisfaction:
    """Lock-free machine states containing the erasure of some model of P."""

    def __init__(self, P, cfg: ModelConfig, perms: FractionPerms = DEFAULT_PERMS):
        self.erased = {erase_logical(s) for s in models(P, cfg, perms)}

    def __call__(self, ms) -> bool:
        if ms is ERROR or ms.locks:
            return False
        st, hp = set(ms.stack), set(ms.heap)
        return any(set(e.stack) <= st and set(e.heap) <= hp for e in self.erased)


def restrict_closed(G: Ats, P, cfg: ModelConfig, perms: FractionPerms = DEFAULT_PERMS) -> Ats:
    """Code-only part of G reachable from initial nodes satisfying P."""
    sat = PreSatisfaction(P, cfg, perms)
    g = G.graph
    init = [n for n in G.initial if sat(G.state[n])]
    return _rebuild(G, "closed", keep_edge=lambda e: g.pols[e] == CODE, initial=init, returning=(),
                    scope=frozenset(G.state[n] for n in init))


def error_reachable(G: Ats) -> bool:
    return any(s is ERROR for s in G.state)


@dataclass
class Race:
    first: str
    second: str
    state: str
    tile: tuple

    def text(self) -> str:
        return (f"race between `{self.first}` and `{self.second}` at {self.state}\n"
                f"  stateless tile: {self.tile[0]} ; {self.tile[1]}  ~  {self.tile[2]} ; {self.tile[3]}")

    def to_dict(self) -> dict:
        return {"instructions": [self.first, self.second], "state": self.state, "tile": list(self.tile)}


@dataclass
class RaceReport:
    program: str
    pre: str
    races: list
    checked: int
    truncated: bool = False
    aborts: bool = False
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.races

    def __bool__(self):
        return self.ok

    def pairs(self) -> set:
        return {tuple(sorted((r.first, r.second))) for r in self.races}

    def text(self, limit: int = 10) -> str:
        status = ("no data races" if self.ok else
                  f"data races on {len(self.pairs())} instruction pair(s), {len(self.races)} witness(es)")
        lines = [f"program: {self.program}", f"pre: {self.pre}", f"result: {status} ({self.checked} tiles checked)"]
        if self.truncated:
            lines.append("warning: loop unrolling hit the bound; the result covers the unrolled part only")
        if self.aborts:
            lines.append("warning: the error state is reachable from the precondition")
        lines += [f"note: {n}" for n in self.notes]
        groups: dict = {}
        for r in self.races:
            groups.setdefault(tuple(sorted((r.first, r.second))), []).append(r)
        for pair, rs in list(groups.items())[:limit]:
            lines.append(rs[0].text())
            if len(rs) > 1:
                lines.append(f"  (same pair at {len(rs) - 1} other source state(s))")
        if len(groups) > limit:
            lines.append(f"... {len(groups) - limit} more instruction pairs")
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps({"program": self.program, "pre": self.pre, "ok": self.ok, "checked": self.checked,
                           "truncated": self.truncated, "aborts": self.aborts, "notes": self.notes,
                           "races": [r.to_dict() for r in self.races]}, indent=2, ensure_ascii=False)


def closed_morphism(c, P, cfg: ModelConfig, locks=None, perms: FractionPerms = DEFAULT_PERMS):
    """(closed stateful Ats, stateless Ats, restricted erasure morphism)."""
    alphabet = program_alphabet(c, cfg)
    S = CodeSemantics(cfg, "S", alphabet)
    L = CodeSemantics(cfg, "L", alphabet, guide=S)
    if locks is None:
        locks = S.top_locks(c)
    GS, GL = S.sem(c, locks), L.sem(c, locks)
    lmap = build_Lmap(GS, GL, cfg)
    R = restrict_closed(GS, P, cfg, perms)
    F = GraphHom(R.graph, GL.graph, lambda n: lmap.node(R.norig[n][0]), lambda e: lmap.edge(R.eorig[e][0]),
                 name="L_C^P")
    return R, GL, F


def check_soundness(c, P, cfg: ModelConfig, locks=None, perms: FractionPerms = DEFAULT_PERMS,
                    limit: int | None = 10000) -> RaceReport:
    """Races of c from P: stateless tiles under closed paths that do not lift."""
    R, GL, F = closed_morphism(c, P, cfg, locks, perms)
    res = check_2_fibration(F, "any", limit=limit)
    seen = set()
    races = []
    g = R.graph
    for u, w, (fu, fw, lb, la) in res.witnesses:
        m1, m2 = str(g.labels[u]), str(g.labels[w])
        key = (tuple(sorted((m1, m2))), g.src[u])
        if key in seen:
            continue
        seen.add(key)
        races.append(Race(m1, m2, str(R.state[g.src[u]]),
                          tuple(_edge_str(GL, e) for e in (fu, fw, lb, la))))
    rep = RaceReport(format_program(c), format_formula(P), races, res.checked,
                     truncated=R.truncated, aborts=error_reachable(R))
    if free_locks(c):
        rep.notes.append("the program has free resources; the soundness theorem covers closed programs only")
    return rep


def closed_pre(d: Derivation):
    """Precondition together with the invariants of the free resources."""
    P = d.pre
    for _, J in d.ctx:
        P = Star(P, J)
    return P


def check_proof(d: Derivation, cfg: ModelConfig, perms: FractionPerms = DEFAULT_PERMS) -> dict:
    """All checks for one derivation, sharing the constructed semantics."""
    from .proofs import check_derivation
    rep = check_derivation(d, cfg, perms)
    out = {"derivation": rep}
    if not rep.ok:
        return out
    b = build_chi(d, cfg, perms)
    out["1-soundness"] = check_1_soundness(b, cfg, perms)
    out["2-soundness"] = check_2_soundness(b, cfg, perms)
    locks = tuple(sorted(r for r, _ in d.ctx))
    out["soundness"] = check_soundness(d.code, closed_pre(d), cfg, locks, perms)
    return out
