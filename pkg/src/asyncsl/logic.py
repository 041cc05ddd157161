"""Permissions, logical states, separation-logic formulas and their
satisfaction over a finite configuration."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Iterator, Optional

from .machine import (BConst, BinOp, BoolOp, Cmp, Const, MachineState, ModelConfig, Not, Var, _cache_hash,
                      eval_expr, free_vars)


# permissions

class FractionPerms:
    """Fractions k/d in (0, 1]; the product is addition when the sum stays <= 1."""

    def __init__(self, d: int = 4):
        if d < 1:
            raise ValueError("denominator must be positive")
        self.d = d
        self.top = Fraction(1)
        self._carrier = tuple(Fraction(k, d) for k in range(1, d + 1))

    def carrier(self) -> tuple:
        return self._carrier

    def __contains__(self, p) -> bool:
        return p in self._carrier

    def mul(self, p, q) -> Optional[Fraction]:
        s = p + q
        return s if s <= 1 else None

    def splits(self, p) -> list:
        """All (a, b) with a . b = p."""
        return [(a, p - a) for a in self._carrier if a < p]

    def le(self, p, q) -> bool:
        return p <= q

    def upper_bound(self, p, q) -> bool:
        return True

    def key(self):
        return ("frac", self.d)

    def __eq__(self, other):
        return isinstance(other, FractionPerms) and other.d == self.d

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"FractionPerms({self.d})"


DEFAULT_PERMS = FractionPerms(4)


def perm_mul(p, q, perms: FractionPerms = DEFAULT_PERMS) -> Optional[Fraction]:
    return perms.mul(Fraction(p), Fraction(q))


def fmt_perm(p) -> str:
    p = Fraction(p)
    return str(p.numerator) if p.denominator == 1 else f"{p.numerator}/{p.denominator}"


# logical states

class LogicalState:
    """Stack and heap whose cells carry a value and a permission."""

    __slots__ = ("stack", "heap", "_hash", "_s", "_h")

    def __init__(self, stack=(), heap=()):
        self.stack = tuple(sorted(dict(stack).items()))
        self.heap = tuple(sorted(dict(heap).items()))
        self._hash = hash((self.stack, self.heap))
        self._s = None
        self._h = None

    @property
    def s(self) -> dict:
        if self._s is None:
            self._s = dict(self.stack)
        return self._s

    @property
    def h(self) -> dict:
        if self._h is None:
            self._h = dict(self.heap)
        return self._h

    def values(self) -> dict:
        """Stack values without permissions (for expression evaluation)."""
        return {x: vp[0] for x, vp in self.stack}

    def cells(self) -> Iterator:
        for x, vp in self.stack:
            yield ("v", x), vp
        for l, vp in self.heap:
            yield ("l", l), vp

    def is_empty(self) -> bool:
        return not self.stack and not self.heap

    def __bool__(self):
        return True

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return (isinstance(other, LogicalState) and self._hash == other._hash
                and self.stack == other.stack and self.heap == other.heap)

    def __lt__(self, other):
        return (self.stack, self.heap) < (other.stack, other.heap)

    def __str__(self):
        parts = [f"{x}={v}@{fmt_perm(p)}" for x, (v, p) in self.stack]
        parts += [f"[{l}]={v}@{fmt_perm(p)}" for l, (v, p) in self.heap]
        return "{" + ", ".join(parts) + "}"

    __repr__ = __str__


EMPTY = LogicalState()


def _from_cells(cells: dict) -> LogicalState:
    return LogicalState({k[1]: vp for k, vp in cells.items() if k[0] == "v"},
                        {k[1]: vp for k, vp in cells.items() if k[0] == "l"})


def sep_product(a: LogicalState, b: LogicalState, perms: FractionPerms = DEFAULT_PERMS) -> Optional[LogicalState]:
    if b.is_empty():
        return a
    if a.is_empty():
        return b
    out = []
    for da, db in ((a.s, b.s), (a.h, b.h)):
        m = dict(da)
        for k, (v, p) in db.items():
            got = m.get(k)
            if got is None:
                m[k] = (v, p)
                continue
            if got[0] != v:
                return None
            q = perms.mul(got[1], p)
            if q is None:
                return None
            m[k] = (v, q)
        out.append(m)
    return LogicalState(out[0], out[1])


def big_product(states: Iterable[LogicalState], perms: FractionPerms = DEFAULT_PERMS) -> Optional[LogicalState]:
    acc = EMPTY
    for s in states:
        acc = sep_product(acc, s, perms)
        if acc is None:
            return None
    return acc


def sep_residual(whole: LogicalState, part: LogicalState, perms: FractionPerms = DEFAULT_PERMS) -> Optional[LogicalState]:
    """The unique r with part * r = whole, if any (cancellativity)."""
    out = []
    for dw, dp in ((whole.s, part.s), (whole.h, part.h)):
        m = dict(dw)
        for k, (v, p) in dp.items():
            got = m.get(k)
            if got is None or got[0] != v or got[1] < p:
                return None
            if got[1] == p:
                del m[k]
            else:
                m[k] = (v, got[1] - p)
        out.append(m)
    return LogicalState(out[0], out[1])


def splits(sigma: LogicalState, perms: FractionPerms = DEFAULT_PERMS) -> Iterator[tuple]:
    """Every pair (a, b) with a * b = sigma."""
    cells = list(sigma.cells())
    options = []
    for k, (v, p) in cells:
        opts = [((k, (v, p)), None), (None, (k, (v, p)))]
        opts += [((k, (v, a)), (k, (v, b))) for a, b in perms.splits(p)]
        options.append(opts)
    for combo in itertools.product(*options):
        left = {c[0][0]: c[0][1] for c in combo if c[0] is not None}
        right = {c[1][0]: c[1][1] for c in combo if c[1] is not None}
        yield _from_cells(left), _from_cells(right)


def substates(sigma: LogicalState, perms: FractionPerms = DEFAULT_PERMS) -> Iterator[LogicalState]:
    for a, _ in splits(sigma, perms):
        yield a


def erase_logical(sigma: LogicalState) -> MachineState:
    """Forget permissions; the result has no held locks."""
    return MachineState({x: v for x, (v, _) in sigma.stack}, {l: v for l, (v, _) in sigma.heap})


@lru_cache(maxsize=8)
def all_logical_states(cfg: ModelConfig, perms: FractionPerms = DEFAULT_PERMS) -> tuple:
    opts = [None] + [(v, p) for v in cfg.values for p in perms.carrier()]
    out = []
    for sv in itertools.product(opts, repeat=len(cfg.vars)):
        stack = {x: c for x, c in zip(cfg.vars, sv) if c is not None}
        for hv in itertools.product(opts, repeat=len(cfg.locations)):
            out.append(LogicalState(stack, {l: c for l, c in zip(cfg.locations, hv) if c is not None}))
    return tuple(out)


# formulas

@_cache_hash
@dataclass(frozen=True)
class Emp:
    pass


@_cache_hash
@dataclass(frozen=True)
class TrueF:
    pass


@_cache_hash
@dataclass(frozen=True)
class FalseF:
    pass


@_cache_hash
@dataclass(frozen=True)
class Or:
    left: object
    right: object


@_cache_hash
@dataclass(frozen=True)
class And:
    left: object
    right: object


@_cache_hash
@dataclass(frozen=True)
class Neg:
    arg: object


@_cache_hash
@dataclass(frozen=True)
class Forall:
    var: str
    body: object


@_cache_hash
@dataclass(frozen=True)
class Exists:
    var: str
    body: object


@_cache_hash
@dataclass(frozen=True)
class Star:
    left: object
    right: object


@_cache_hash
@dataclass(frozen=True)
class PointsTo:
    """E |->{p} E'; ``val`` None stands for an arbitrary value."""
    loc: object
    perm: Fraction
    val: object = None


@_cache_hash
@dataclass(frozen=True)
class Own:
    perm: Fraction
    var: str


@_cache_hash
@dataclass(frozen=True)
class Pure:
    """A boolean expression read on the stack (E == E' and friends)."""
    cond: object


EMP, TRUE, FALSE = Emp(), TrueF(), FalseF()


def Eq(e1, e2) -> Pure:
    return Pure(Cmp("==", e1, e2))


def bool_formula(b):
    """A program guard as a formula."""
    if isinstance(b, BConst):
        return TRUE if b.value else FALSE
    if isinstance(b, Not):
        return Neg(bool_formula(b.arg))
    if isinstance(b, BoolOp):
        l, r = bool_formula(b.left), bool_formula(b.right)
        return And(l, r) if b.op == "and" else Or(l, r)
    return Pure(b)


_PREC = {Or: 1, And: 2, Star: 3, Neg: 4}


def format_formula(f, prec: int = 0) -> str:
    if isinstance(f, Emp):
        return "emp"
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, Own):
        return f"own({fmt_perm(f.perm)}, {f.var})"
    if isinstance(f, PointsTo):
        val = "_" if f.val is None else _fmt_expr(f.val)
        arrow = "|->" if f.perm == 1 else "|->{" + fmt_perm(f.perm) + "}"
        return f"{_fmt_expr(f.loc)} {arrow} {val}"
    if isinstance(f, Pure):
        s = _fmt_bool(f.cond)
        return f"({s})" if prec >= 4 else s
    if isinstance(f, (Forall, Exists)):
        q = "forall" if isinstance(f, Forall) else "exists"
        s = f"{q} {f.var}. {format_formula(f.body, 0)}"
        return f"({s})" if prec > 0 else s
    if isinstance(f, Neg):
        return "!" + format_formula(f.arg, 4)
    op = {Or: "||", And: "&&", Star: "*"}[type(f)]
    p = _PREC[type(f)]
    s = f"{format_formula(f.left, p)} {op} {format_formula(f.right, p + 1)}"
    return f"({s})" if prec > p else s


def _fmt_expr(e) -> str:
    if isinstance(e, BinOp):
        return f"({_fmt_expr(e.left)} {e.op} {_fmt_expr(e.right)})"
    return str(e)


def _fmt_bool(b) -> str:
    if isinstance(b, Cmp):
        return f"{_fmt_expr(b.left)} {b.op} {_fmt_expr(b.right)}"
    if isinstance(b, Not):
        return f"!({_fmt_bool(b.arg)})"
    if isinstance(b, BoolOp):
        op = "&&" if b.op == "and" else "||"
        return f"({_fmt_bool(b.left)} {op} {_fmt_bool(b.right)})"
    if isinstance(b, BConst):
        return "true" if b.value else "false"
    return _fmt_expr(b)


for _cls in (Emp, TrueF, FalseF, Or, And, Neg, Forall, Exists, Star, PointsTo, Own, Pure):
    _cls.__str__ = lambda self: format_formula(self)


def subst_expr(e, name: str, value: int):
    if isinstance(e, Var):
        return Const(value) if e.name == name else e
    if isinstance(e, (BinOp, Cmp, BoolOp)):
        return type(e)(e.op, subst_expr(e.left, name, value), subst_expr(e.right, name, value))
    if isinstance(e, Not):
        return Not(subst_expr(e.arg, name, value))
    return e


def subst(f, name: str, value: int):
    """Replace the logical variable ``name`` by a constant."""
    if isinstance(f, (Emp, TrueF, FalseF, Own)):
        return f
    if isinstance(f, PointsTo):
        val = None if f.val is None else subst_expr(f.val, name, value)
        return PointsTo(subst_expr(f.loc, name, value), f.perm, val)
    if isinstance(f, Pure):
        return Pure(subst_expr(f.cond, name, value))
    if isinstance(f, (Forall, Exists)):
        return f if f.var == name else type(f)(f.var, subst(f.body, name, value))
    if isinstance(f, Neg):
        return Neg(subst(f.arg, name, value))
    return type(f)(subst(f.left, name, value), subst(f.right, name, value))


def formula_vars(f) -> frozenset:
    """Free variables (program and logical) occurring in expressions."""
    if isinstance(f, (Emp, TrueF, FalseF)):
        return frozenset()
    if isinstance(f, Own):
        return frozenset([f.var])
    if isinstance(f, PointsTo):
        return free_vars(f.loc) | free_vars(f.val)
    if isinstance(f, Pure):
        return free_vars(f.cond)
    if isinstance(f, (Forall, Exists)):
        return formula_vars(f.body) - {f.var}
    if isinstance(f, Neg):
        return formula_vars(f.arg)
    return formula_vars(f.left) | formula_vars(f.right)


def satisfies(sigma: LogicalState, f, cfg: ModelConfig, perms: FractionPerms = DEFAULT_PERMS) -> bool:
    if isinstance(f, Emp):
        return sigma.is_empty()
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    if isinstance(f, Own):
        return not sigma.heap and len(sigma.stack) == 1 and sigma.stack[0][0] == f.var \
            and sigma.stack[0][1][1] == f.perm
    if isinstance(f, PointsTo):
        if sigma.stack or len(sigma.heap) != 1:
            return False
        l = eval_expr(f.loc, {}, cfg)
        (hl, (v, p)), = sigma.heap
        if l != hl or l not in cfg.locations or p != f.perm:
            return False
        return f.val is None or eval_expr(f.val, {}, cfg) == v
    if isinstance(f, Pure):
        vals = sigma.values()
        return free_vars(f.cond) <= vals.keys() and eval_expr(f.cond, vals, cfg) is True
    if isinstance(f, And):
        return satisfies(sigma, f.left, cfg, perms) and satisfies(sigma, f.right, cfg, perms)
    if isinstance(f, Or):
        return satisfies(sigma, f.left, cfg, perms) or satisfies(sigma, f.right, cfg, perms)
    if isinstance(f, Neg):
        return not satisfies(sigma, f.arg, cfg, perms)
    if isinstance(f, Forall):
        return all(satisfies(sigma, subst(f.body, f.var, c), cfg, perms) for c in cfg.values)
    if isinstance(f, Exists):
        return any(satisfies(sigma, subst(f.body, f.var, c), cfg, perms) for c in cfg.values)
    if isinstance(f, Star):
        return any(satisfies(a, f.left, cfg, perms) and satisfies(b, f.right, cfg, perms)
                   for a, b in splits(sigma, perms))
    raise TypeError(f"not a formula: {f!r}")


_STAR_LIMIT = 200_000


def models(f, cfg: ModelConfig, perms: FractionPerms = DEFAULT_PERMS) -> frozenset:
    """All logical states over cfg satisfying f."""
    return _models(f, cfg, perms)


@lru_cache(maxsize=512)
def _models(f, cfg, perms) -> frozenset:
    if isinstance(f, Emp):
        return frozenset([EMPTY])
    if isinstance(f, FalseF):
        return frozenset()
    if isinstance(f, Own):
        if f.var not in cfg.vars or f.perm not in perms:
            return frozenset()
        return frozenset(LogicalState({f.var: (v, f.perm)}) for v in cfg.values)
    if isinstance(f, PointsTo):
        l = eval_expr(f.loc, {}, cfg)
        if l not in cfg.locations or f.perm not in perms:
            return frozenset()
        vals = cfg.values if f.val is None else [eval_expr(f.val, {}, cfg)]
        return frozenset(LogicalState({}, {l: (v, f.perm)}) for v in vals if v in cfg.values)
    if isinstance(f, Or):
        return _models(f.left, cfg, perms) | _models(f.right, cfg, perms)
    if isinstance(f, Exists):
        return frozenset().union(*(_models(subst(f.body, f.var, c), cfg, perms) for c in cfg.values))
    if isinstance(f, And):
        small, other = (f.left, f.right) if _cheap(f.left) or not _cheap(f.right) else (f.right, f.left)
        return frozenset(s for s in _models(small, cfg, perms) if satisfies(s, other, cfg, perms))
    if isinstance(f, Star) and _cheap(f.left) and _cheap(f.right):
        a, b = _models(f.left, cfg, perms), _models(f.right, cfg, perms)
        if len(a) * len(b) <= _STAR_LIMIT:
            out = set()
            for x in a:
                for y in b:
                    z = sep_product(x, y, perms)
                    if z is not None:
                        out.add(z)
            return frozenset(out)
    return frozenset(s for s in all_logical_states(cfg, perms) if satisfies(s, f, cfg, perms))


def _cheap(f) -> bool:
    """Whether models(f) is computed without scanning every logical state."""
    if isinstance(f, (Emp, FalseF, Own, PointsTo)):
        return True
    if isinstance(f, (Or, Star)):
        return _cheap(f.left) and _cheap(f.right)
    if isinstance(f, And):
        return _cheap(f.left) or _cheap(f.right)
    if isinstance(f, Exists):
        return _cheap(f.body)
    return False


def _bounded_together(a: LogicalState, b: LogicalState, perms: FractionPerms) -> bool:
    """Whether a and b are both substates of some common logical state."""
    for da, db in ((a.s, b.s), (a.h, b.h)):
        for k, (v, p) in da.items():
            got = db.get(k)
            if got is not None and (got[0] != v or not perms.upper_bound(p, got[1])):
                return False
    return True


def is_precise(f, cfg: ModelConfig, perms: FractionPerms = DEFAULT_PERMS) -> bool:
    """At most one substate of any logical state satisfies f.

    Two distinct models that sit below a common state witness imprecision,
    and conversely, so pairwise compatibility of models decides it.
    """
    ms = sorted(models(f, cfg, perms))
    for i, a in enumerate(ms):
        for b in ms[i + 1:]:
            if _bounded_together(a, b, perms):
                return False
    return True


def is_precise_brute(f, cfg: ModelConfig, perms: FractionPerms = DEFAULT_PERMS) -> bool:
    """Direct reading of the definition: enumerate states and their substates."""
    for sigma in all_logical_states(cfg, perms):
        found = 0
        for sub in set(substates(sigma, perms)):
            if satisfies(sub, f, cfg, perms):
                found += 1
                if found > 1:
                    return False
    return True


def entails(p, q, cfg: ModelConfig, perms: FractionPerms = DEFAULT_PERMS) -> bool:
    return all(satisfies(s, q, cfg, perms) for s in models(p, cfg, perms))


def entailment_counterexample(p, q, cfg: ModelConfig, perms: FractionPerms = DEFAULT_PERMS):
    for s in sorted(models(p, cfg, perms)):
        if not satisfies(s, q, cfg, perms):
            return s
    return None


def implies_def(p, b, cfg: ModelConfig, perms: FractionPerms = DEFAULT_PERMS) -> bool:
    """Every model of p owns (with some permission) the variables of b."""
    need = free_vars(b)
    return all(need <= s.s.keys() for s in models(p, cfg, perms))


# contexts

def make_context(pairs: Iterable) -> tuple:
    out = dict(pairs)
    return tuple(sorted(out.items()))


def context_str(ctx: tuple) -> str:
    return ", ".join(f"{r}: {format_formula(j)}" for r, j in ctx)
