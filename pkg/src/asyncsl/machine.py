"""Machine states, instructions, small-step rules, footprints and the two
machine models (stateful and stateless) as lazy asynchronous graphs."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .graph import GraphHom


@dataclass(frozen=True)
class ModelConfig:
    vars: tuple = ("x", "y")
    values: tuple = (0, 1, 2, 3)
    locations: tuple = (0, 1)
    locks: tuple = ()
    loop_bound: int = 8

    def __post_init__(self):
        for name in ("vars", "values", "locations", "locks"):
            object.__setattr__(self, name, tuple(sorted(set(getattr(self, name)))))
        if not self.vars or not self.values or not self.locations:
            raise ValueError("vars, values and locations must be non-empty")
        if not set(self.locations) <= set(self.values):
            raise ValueError("locations must be a subset of values")
        if self.loop_bound < 1:
            raise ValueError("loop_bound must be positive")

    def replace(self, **kw) -> "ModelConfig":
        d = dict(vars=self.vars, values=self.values, locations=self.locations,
                 locks=self.locks, loop_bound=self.loop_bound)
        d.update(kw)
        return ModelConfig(**d)

    def wrap(self, n: int) -> int:
        return self.values[n % len(self.values)]

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        """Parse JSON or ``key = v1, v2`` lines."""
        text = text.strip()
        if text.startswith("{"):
            raw = json.loads(text)
        else:
            raw = {}
            for line in text.splitlines():
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                key, _, val = line.partition("=")
                items = [v.strip() for v in val.split(",") if v.strip()]
                raw[key.strip()] = items
        kw = {}
        for key, val in raw.items():
            if key == "loop_bound":
                kw[key] = int(val[0] if isinstance(val, list) else val)
            elif key in ("values", "locations"):
                kw[key] = tuple(int(v) for v in val)
            elif key in ("vars", "locks"):
                kw[key] = tuple(str(v) for v in val)
            else:
                raise ValueError(f"unknown config key {key!r}")
        return cls(**kw)


def _cache_hash(cls):
    """Memoize the generated hash of a frozen dataclass."""
    base = cls.__hash__

    def __hash__(self):
        d = self.__dict__
        h = d.get("_hc")
        if h is None:
            h = base(self)
            object.__setattr__(self, "_hc", h)
        return h

    cls.__hash__ = __hash__
    return cls


# expressions

@_cache_hash
@dataclass(frozen=True)
class Const:
    value: int

    def __str__(self):
        return str(self.value)


@_cache_hash
@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


@_cache_hash
@dataclass(frozen=True)
class BinOp:
    op: str  # '+' or '*'
    left: object
    right: object

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@_cache_hash
@dataclass(frozen=True)
class BConst:
    value: bool

    def __str__(self):
        return "true" if self.value else "false"


@_cache_hash
@dataclass(frozen=True)
class Cmp:
    op: str  # '==', '!=', '<', '<='
    left: object
    right: object

    def __str__(self):
        return f"{self.left} {self.op} {self.right}"


@_cache_hash
@dataclass(frozen=True)
class Not:
    arg: object

    def __str__(self):
        return f"!({self.arg})"


@_cache_hash
@dataclass(frozen=True)
class BoolOp:
    op: str  # 'and' / 'or'
    left: object
    right: object

    def __str__(self):
        return f"({self.left} {'&&' if self.op == 'and' else '||'} {self.right})"


_CMP = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
}


def free_vars(e) -> frozenset:
    if isinstance(e, Var):
        return frozenset([e.name])
    if isinstance(e, (Const, BConst)) or e is None:
        return frozenset()
    if isinstance(e, Not):
        return free_vars(e.arg)
    return free_vars(e.left) | free_vars(e.right)


def eval_expr(e, stack: dict, cfg: ModelConfig):
    """Value of an arithmetic or boolean expression, or None if undefined."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return stack.get(e.name)
    if isinstance(e, BConst):
        return e.value
    if isinstance(e, Not):
        a = eval_expr(e.arg, stack, cfg)
        return None if a is None else not a
    a = eval_expr(e.left, stack, cfg)
    b = eval_expr(e.right, stack, cfg)
    if a is None or b is None:
        return None
    if isinstance(e, BinOp):
        return cfg.wrap(a + b if e.op == "+" else a * b)
    if isinstance(e, Cmp):
        return _CMP[e.op](a, b)
    if isinstance(e, BoolOp):
        return (a and b) if e.op == "and" else (a or b)
    raise TypeError(f"not an expression: {e!r}")


# states

class _Error:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "ERROR"

    def __str__(self):
        return "⚡"

    def __reduce__(self):
        return (_Error, ())

    def __lt__(self, other):
        return False


ERROR = _Error()


class MachineState:
    """Stack, heap (defined entries only, sorted) and the set of held locks."""

    __slots__ = ("stack", "heap", "locks", "_hash", "_s", "_h")

    def __init__(self, stack=(), heap=(), locks=frozenset()):
        self.stack = tuple(sorted(dict(stack).items()))
        self.heap = tuple(sorted(dict(heap).items()))
        self.locks = frozenset(locks)
        self._hash = hash((self.stack, self.heap, self.locks))
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

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return (isinstance(other, MachineState) and self._hash == other._hash
                and self.stack == other.stack and self.heap == other.heap and self.locks == other.locks)

    def __lt__(self, other):
        if not isinstance(other, MachineState):
            return True
        return (self.stack, self.heap, sorted(self.locks)) < (other.stack, other.heap, sorted(other.locks))

    def with_stack(self, **kw) -> "MachineState":
        s = dict(self.stack)
        s.update(kw)
        return MachineState(s, self.heap, self.locks)

    def __repr__(self):
        st = ",".join(f"{k}={v}" for k, v in self.stack)
        hp = ",".join(f"{k}:{v}" for k, v in self.heap)
        lk = ",".join(sorted(self.locks))
        return f"<{st}|{hp}|{lk}>"


def all_states(cfg: ModelConfig, locks: Iterable[str] | None = None, error: bool = True) -> list:
    locks = tuple(cfg.locks if locks is None else locks)
    out = []
    opts_v = [None] + list(cfg.values)
    stacks = []
    for combo in itertools.product(opts_v, repeat=len(cfg.vars)):
        stacks.append({x: v for x, v in zip(cfg.vars, combo) if v is not None})
    heaps = []
    for combo in itertools.product(opts_v, repeat=len(cfg.locations)):
        heaps.append({l: v for l, v in zip(cfg.locations, combo) if v is not None})
    lock_sets = [frozenset(c) for k in range(len(locks) + 1) for c in itertools.combinations(locks, k)]
    for s in stacks:
        for h in heaps:
            for L in lock_sets:
                out.append(MachineState(s, h, L))
    if error:
        out.append(ERROR)
    return out


# instructions

@_cache_hash
@dataclass(frozen=True)
class Assign:
    x: str
    e: object

    def __str__(self):
        return f"{self.x} := {self.e}"


@_cache_hash
@dataclass(frozen=True)
class Load:
    x: str
    e: object

    def __str__(self):
        return f"{self.x} := [{self.e}]"


@_cache_hash
@dataclass(frozen=True)
class Store:
    e: object
    e2: object

    def __str__(self):
        return f"[{self.e}] := {self.e2}"


@_cache_hash
@dataclass(frozen=True)
class Nop:
    def __str__(self):
        return "nop"


@_cache_hash
@dataclass(frozen=True)
class Alloc:
    x: str
    e: object
    loc: int

    def __str__(self):
        return f"{self.x} := alloc({self.e},{self.loc})"


@_cache_hash
@dataclass(frozen=True)
class Dispose:
    e: object

    def __str__(self):
        return f"dispose({self.e})"


@_cache_hash
@dataclass(frozen=True)
class Acquire:
    """P(r).  ``when`` is the guard of a conditional critical region: the
    step itself does not test it, but its variables count as read."""
    r: str
    when: object = None

    def __str__(self):
        return f"P({self.r})" if self.when is None else f"P({self.r}) when {self.when}"


@_cache_hash
@dataclass(frozen=True)
class Release:
    r: str

    def __str__(self):
        return f"V({self.r})"


@_cache_hash
@dataclass(frozen=True)
class Test:
    """Branch point of a conditional or loop: no effect, reads the guard."""
    b: object

    def __str__(self):
        return f"test({self.b})"


@_cache_hash
@dataclass(frozen=True)
class Eval:
    """Guard evaluation that only ever fails: steps to ERROR when B is undefined."""
    b: object

    def __str__(self):
        return f"eval({self.b})"


NOP = Nop()
Instruction = (Assign, Load, Store, Nop, Alloc, Dispose, Acquire, Release, Test, Eval)


def instr_locks(m) -> frozenset:
    if isinstance(m, (Acquire, Release)):
        return frozenset([m.r])
    return frozenset()


def instr_vars(m) -> frozenset:
    out = set()
    for f in ("x",):
        if hasattr(m, f):
            out.add(getattr(m, f))
    for f in ("e", "e2", "b", "when"):
        if hasattr(m, f):
            out |= free_vars(getattr(m, f))
    return frozenset(out)


def step(s, m, cfg: ModelConfig) -> list:
    """Successors of s under m: [] when blocked, [ERROR] on a runtime error."""
    if s is ERROR:
        raise ValueError("no steps from the error state")
    st, hp = s.s, s.h
    if isinstance(m, (Nop, Test)):
        return [s]
    if isinstance(m, Assign):
        v = eval_expr(m.e, st, cfg)
        if v is None:
            return [ERROR]
        return [MachineState({**st, m.x: v}, s.heap, s.locks)]
    if isinstance(m, Load):
        l = eval_expr(m.e, st, cfg)
        if l is None or l not in hp:
            return [ERROR]
        return [MachineState({**st, m.x: hp[l]}, s.heap, s.locks)]
    if isinstance(m, Store):
        l = eval_expr(m.e, st, cfg)
        v = eval_expr(m.e2, st, cfg)
        if l is None or v is None or l not in hp:
            return [ERROR]
        return [MachineState(s.stack, {**hp, l: v}, s.locks)]
    if isinstance(m, Alloc):
        v = eval_expr(m.e, st, cfg)
        if v is None:
            return [ERROR]
        if m.loc in hp:
            return []
        return [MachineState({**st, m.x: m.loc}, {**hp, m.loc: v}, s.locks)]
    if isinstance(m, Dispose):
        l = eval_expr(m.e, st, cfg)
        if l is None or l not in hp:
            return [ERROR]
        h2 = dict(hp)
        del h2[l]
        return [MachineState(s.stack, h2, s.locks)]
    if isinstance(m, Acquire):
        if m.r in s.locks:
            return []
        return [MachineState(s.stack, s.heap, s.locks | {m.r})]
    if isinstance(m, Release):
        if m.r not in s.locks:
            return []
        return [MachineState(s.stack, s.heap, s.locks - {m.r})]
    if isinstance(m, Eval):
        return [ERROR] if eval_expr(m.b, st, cfg) is None else []
    raise TypeError(f"not an instruction: {m!r}")


# footprints

@dataclass(frozen=True)
class MachineFootprint:
    rd: frozenset = frozenset()
    wr: frozenset = frozenset()
    lock: frozenset = frozenset()
    alloc: frozenset = frozenset()


@dataclass(frozen=True)
class LockFootprint:
    lock: frozenset = frozenset()
    alloc: frozenset = frozenset()


def footprint_machine(m, s, cfg: ModelConfig) -> MachineFootprint:
    F = frozenset
    st = s.s
    errs = step(s, m, cfg) == [ERROR]
    if isinstance(m, Nop):
        return MachineFootprint()
    if isinstance(m, Acquire):
        return MachineFootprint(rd=free_vars(m.when), lock=F([m.r]))
    if isinstance(m, Release):
        return MachineFootprint(lock=F([m.r]))
    if isinstance(m, (Test, Eval)):
        return MachineFootprint(rd=free_vars(m.b))
    if isinstance(m, Assign):
        return MachineFootprint(rd=free_vars(m.e), wr=F() if errs else F([m.x]))
    if isinstance(m, Load):
        l = eval_expr(m.e, st, cfg)
        cell = F([l]) if l in cfg.locations else F()
        return MachineFootprint(rd=free_vars(m.e) | cell, wr=F() if errs else F([m.x]))
    if isinstance(m, Store):
        l = eval_expr(m.e, st, cfg)
        cell = F([l]) if l in cfg.locations else F()
        rd = free_vars(m.e) | free_vars(m.e2)
        if errs:
            return MachineFootprint(rd=rd | cell)
        return MachineFootprint(rd=rd, wr=cell)
    if isinstance(m, Alloc):
        if errs:
            return MachineFootprint(rd=free_vars(m.e))
        return MachineFootprint(rd=free_vars(m.e), wr=F([m.x, m.loc]), alloc=F([m.loc]))
    if isinstance(m, Dispose):
        l = eval_expr(m.e, st, cfg)
        cell = F([l]) if l in cfg.locations else F()
        return MachineFootprint(rd=free_vars(m.e) | cell, alloc=cell)
    raise TypeError(f"not an instruction: {m!r}")


def independent_machine(a: MachineFootprint, b: MachineFootprint) -> bool:
    return (not ((a.rd | a.wr) & b.wr) and not ((b.rd | b.wr) & a.wr)
            and not (a.lock & b.lock) and not (a.alloc & b.alloc))


@_cache_hash
@dataclass(frozen=True)
class LockInstr:
    kind: str  # tau, P, V, alloc, dispose
    arg: object = None

    def __str__(self):
        return "τ" if self.kind == "tau" else f"{self.kind}({self.arg})"


TAU = LockInstr("tau")


def footprint_lock(a: LockInstr) -> LockFootprint:
    if a.kind in ("P", "V"):
        return LockFootprint(lock=frozenset([a.arg]))
    if a.kind in ("alloc", "dispose"):
        return LockFootprint(alloc=frozenset([a.arg]))
    return LockFootprint()


def independent_lock(a: LockFootprint, b: LockFootprint) -> bool:
    return not (a.lock & b.lock) and not (a.alloc & b.alloc)


def erase(m, s, cfg: ModelConfig) -> LockInstr:
    """Lock instruction performed by m at machine state s."""
    if isinstance(m, Acquire):
        return LockInstr("P", m.r)
    if isinstance(m, Release):
        return LockInstr("V", m.r)
    if isinstance(m, Alloc):
        return LockInstr("alloc", m.loc)
    if isinstance(m, Dispose):
        l = eval_expr(m.e, s.s, cfg)
        return LockInstr("dispose", l) if l in cfg.locations else TAU
    return TAU


def erase_set(m, cfg: ModelConfig) -> frozenset:
    """All lock instructions m may erase to, over every state."""
    if isinstance(m, Dispose):
        if isinstance(m.e, Const) or not free_vars(m.e):
            l = eval_expr(m.e, {}, cfg)
            return frozenset([LockInstr("dispose", l) if l in cfg.locations else TAU])
        return frozenset([LockInstr("dispose", l) for l in cfg.locations] + [TAU])
    return frozenset([erase(m, None, cfg)])


def canonical_alphabet(cfg: ModelConfig, locks: Iterable[str] | None = None) -> tuple:
    """A small generic instruction alphabet used when no program is given."""
    locks = cfg.locks if locks is None else tuple(locks)
    out: list = [NOP]
    for x in cfg.vars:
        out += [Assign(x, Const(v)) for v in cfg.values]
        out += [Assign(x, Var(y)) for y in cfg.vars if y != x]
        out += [Load(x, Const(l)) for l in cfg.locations]
        out += [Load(x, Var(y)) for y in cfg.vars if y != x]
        out += [Alloc(x, Const(v), l) for v in cfg.values[:2] for l in cfg.locations]
        out.append(Dispose(Var(x)))
    for l in cfg.locations:
        out += [Store(Const(l), Const(v)) for v in cfg.values[:2]]
        out += [Store(Const(l), Var(y)) for y in cfg.vars]
        out.append(Dispose(Const(l)))
    for r in locks:
        out += [Acquire(r), Release(r)]
    return tuple(dict.fromkeys(out))


# machine models

class StatefulModel:
    """Lazy stateful model: machine states, instruction steps, footprint tiles."""

    polarized = False

    def __init__(self, cfg: ModelConfig, alphabet: Iterable | None = None, locks: Iterable[str] | None = None):
        self.cfg = cfg
        self.locks = tuple(sorted(cfg.locks if locks is None else locks))
        alpha = canonical_alphabet(cfg, self.locks) if alphabet is None else tuple(dict.fromkeys(alphabet))
        lockset = set(self.locks)
        self.alphabet = tuple(m for m in alpha if instr_locks(m) <= lockset)
        self._out: dict = {}
        self._fp: dict = {}
        self._nodes = None

    def key(self):
        return ("S", self.cfg, self.locks, self.alphabet)

    def with_locks(self, locks) -> "StatefulModel":
        return StatefulModel(self.cfg, self.alphabet, locks)

    def nodes(self) -> list:
        if self._nodes is None:
            self._nodes = all_states(self.cfg, self.locks)
        return self._nodes

    def out_edges(self, s) -> list:
        got = self._out.get(s)
        if got is None:
            got = []
            if s is not ERROR:
                for m in self.alphabet:
                    for t in step(s, m, self.cfg):
                        got.append((s, m, t))
            self._out[s] = got
        return got

    def edges_labelled(self, s, m) -> list:
        if s is ERROR:
            return []
        return [(s, m, t) for t in step(s, m, self.cfg)]

    @staticmethod
    def source(e):
        return e[0]

    @staticmethod
    def target(e):
        return e[2]

    @staticmethod
    def label(e):
        return e[1]

    @staticmethod
    def polarity(e):
        return None

    def footprint(self, m, s) -> MachineFootprint:
        k = (m, s)
        fp = self._fp.get(k)
        if fp is None:
            fp = self._fp[k] = footprint_machine(m, s, self.cfg)
        return fp

    def tiles_at(self, u, w) -> list:
        s, m, s1 = u
        s1b, m2, s3 = w
        if s1 != s1b or s1 is ERROR:
            return []
        if not independent_machine(self.footprint(m, s), self.footprint(m2, s)):
            return []
        out = []
        for s2 in step(s, m2, self.cfg):
            if s2 is ERROR:
                continue
            if s3 in step(s2, m, self.cfg):
                out.append(((s, m2, s2), (s2, m, s3)))
        return out

    @staticmethod
    def memory(s):
        return s


class StatelessModel:
    """Stateless model over subsets of a lock set plus ERROR."""

    polarized = False

    def __init__(self, cfg: ModelConfig, locks: Iterable[str] | None = None):
        self.cfg = cfg
        self.locks = tuple(sorted(cfg.locks if locks is None else locks))
        self.alphabet = ((TAU,) + tuple(LockInstr(k, r) for r in self.locks for k in ("P", "V"))
                         + tuple(LockInstr(k, l) for l in cfg.locations for k in ("alloc", "dispose")))
        self._out: dict = {}

    def key(self):
        return ("L", self.cfg, self.locks)

    def with_locks(self, locks) -> "StatelessModel":
        return StatelessModel(self.cfg, locks)

    def nodes(self) -> list:
        ls = self.locks
        out = [frozenset(c) for k in range(len(ls) + 1) for c in itertools.combinations(ls, k)]
        return out + [ERROR]

    def step(self, L, a: LockInstr) -> list:
        if L is ERROR:
            return []
        if a.kind == "P":
            ok = a.arg not in L
            return ([L | {a.arg}] if ok else []) + [ERROR]
        if a.kind == "V":
            ok = a.arg in L
            return ([L - {a.arg}] if ok else []) + [ERROR]
        return [L, ERROR]

    def out_edges(self, L) -> list:
        got = self._out.get(L)
        if got is None:
            got = [(L, a, t) for a in self.alphabet for t in self.step(L, a)]
            self._out[L] = got
        return got

    def edges_labelled(self, L, a) -> list:
        return [(L, a, t) for t in self.step(L, a)]

    source = staticmethod(StatefulModel.source)
    target = staticmethod(StatefulModel.target)
    label = staticmethod(StatefulModel.label)
    polarity = staticmethod(StatefulModel.polarity)

    def tiles_at(self, u, w) -> list:
        L, a, L1 = u
        L1b, b, L3 = w
        if L1 != L1b or L1 is ERROR:
            return []
        if not independent_lock(footprint_lock(a), footprint_lock(b)):
            return []
        out = []
        for L2 in self.step(L, b):
            if L2 is ERROR:
                continue
            if L3 in self.step(L2, a):
                out.append(((L, b, L2), (L2, a, L3)))
        return out

    @staticmethod
    def memory(L):
        return None


def erase_state(s):
    return ERROR if s is ERROR else s.locks


def erasure_hom(ms: StatefulModel, ml: StatelessModel, nodes: Iterable | None = None) -> GraphHom:
    cfg = ms.cfg

    def edge(e):
        s, m, t = e
        return (erase_state(s), erase(m, s, cfg), erase_state(t))

    return GraphHom(ms, ml, erase_state, edge, nodes, name="L")


# residual oracle: an independent traced interpreter

@dataclass
class TileWitness:
    s: MachineState
    m1: object
    m2: object
    s1: MachineState
    s2: MachineState
    final: MachineState
    residuals: tuple = field(default=())


class _Traced:
    """Memory whose cells remember the instance that last wrote them."""

    def __init__(self, s: MachineState):
        self.cells = {("v", x): (v, "init") for x, v in s.stack}
        self.cells.update({("h", l): (v, "init") for l, v in s.heap})
        self.cells.update({("k", r): (True, "init") for r in s.locks})
        self.tags: dict = {}
        self.reads: dict = {}

    def tag_of(self, cell):
        got = self.cells.get(cell)
        return got[1] if got is not None else self.tags.get(cell, "init")

    def read(self, who, cell):
        self.reads.setdefault(who, {})[cell] = self.tag_of(cell)
        got = self.cells.get(cell)
        return None if got is None else got[0]

    def write(self, who, cell, value):
        if value is None:
            self.cells.pop(cell, None)
            self.tags[cell] = who
        else:
            self.cells[cell] = (value, who)

    def guard(self, who, b):
        for x in sorted(free_vars(b)):
            self.read(who, ("v", x))

    def value(self, who, e, cfg):
        if isinstance(e, Const):
            return e.value
        if isinstance(e, Var):
            return self.read(who, ("v", e.name))
        if isinstance(e, BinOp):
            a, b = self.value(who, e.left, cfg), self.value(who, e.right, cfg)
            if a is None or b is None:
                return None
            return cfg.wrap(a + b if e.op == "+" else a * b)
        raise TypeError(e)

    def state(self) -> MachineState:
        st = {c[1]: v for c, (v, _) in self.cells.items() if c[0] == "v"}
        hp = {c[1]: v for c, (v, _) in self.cells.items() if c[0] == "h"}
        lk = {c[1] for c in self.cells if c[0] == "k"}
        return MachineState(st, hp, lk)

    def final_writers(self) -> dict:
        out = {c: t for c, (_, t) in self.cells.items()}
        out.update({c: t for c, t in self.tags.items() if c not in self.cells})
        return out


def _traced_exec(mem: _Traced, who, m, cfg) -> bool:
    """Run m on the traced memory; False if blocked or erroring."""
    if isinstance(m, Nop):
        return True
    if isinstance(m, Assign):
        v = mem.value(who, m.e, cfg)
        if v is None:
            return False
        mem.write(who, ("v", m.x), v)
        return True
    if isinstance(m, Load):
        l = mem.value(who, m.e, cfg)
        if l not in cfg.locations:
            return False
        v = mem.read(who, ("h", l))
        if v is None:
            return False
        mem.write(who, ("v", m.x), v)
        return True
    if isinstance(m, Store):
        l = mem.value(who, m.e, cfg)
        v = mem.value(who, m.e2, cfg)
        if l not in cfg.locations or v is None or mem.read(who, ("h", l)) is None:
            return False
        mem.write(who, ("h", l), v)
        return True
    if isinstance(m, Alloc):
        v = mem.value(who, m.e, cfg)
        if v is None or mem.read(who, ("h", m.loc)) is not None:
            return False
        mem.write(who, ("h", m.loc), v)
        mem.write(who, ("v", m.x), m.loc)
        return True
    if isinstance(m, Dispose):
        l = mem.value(who, m.e, cfg)
        if l not in cfg.locations or mem.read(who, ("h", l)) is None:
            return False
        mem.write(who, ("h", l), None)
        return True
    if isinstance(m, Test):
        mem.guard(who, m.b)
        return True
    if isinstance(m, Acquire):
        mem.guard(who, m.when)
        if mem.read(who, ("k", m.r)) is not None:
            return False
        mem.write(who, ("k", m.r), True)
        return True
    if isinstance(m, Release):
        if mem.read(who, ("k", m.r)) is None:
            return False
        mem.write(who, ("k", m.r), None)
        return True
    return False


def residual_oracle(s: MachineState, m1, m2, cfg: ModelConfig) -> Optional[TileWitness]:
    """Brute-force commutation test of two instructions enabled at s."""
    runs = []
    for order in ((1, m1), (2, m2)), ((2, m2), (1, m1)):
        mem = _Traced(s)
        mids = []
        for who, m in order:
            if not _traced_exec(mem, who, m, cfg):
                return None
            mids.append(mem.state())
        runs.append((mem, mids))
    (a, mids_a), (b, mids_b) = runs
    if a.state() != b.state():
        return None
    if a.reads != b.reads or a.final_writers() != b.final_writers():
        return None
    s1, s2, fin = mids_a[0], mids_b[0], a.state()
    return TileWitness(s, m1, m2, s1, s2, fin, ((s1, m2, fin), (s2, m1, fin)))
