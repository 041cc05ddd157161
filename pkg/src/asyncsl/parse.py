"""Parsers and printers for programs, assertions, resource contexts and
proof scripts.  Every error carries a line and column."""
from __future__ import annotations

import difflib
import re
from dataclasses import dataclass
from fractions import Fraction

from .codesem import Atom, If, Malloc, Par, Resource, Seq, Skip, While, With
from .logic import (EMP, FALSE, TRUE, And, Exists, Forall, Neg, Or, Own, PointsTo, Pure, Star, format_formula)
from .machine import (Assign, BConst, BinOp, BoolOp, Cmp, Const, Dispose, Load, Not, Store, Var)
from .proofs import RULES, Derivation


class ParseError(ValueError):
    def __init__(self, msg: str, line: int, col: int, source: str = ""):
        self.msg, self.line, self.col, self.source = msg, line, col, source
        where = f"{source}:" if source else ""
        super().__init__(f"{where}{line}:{col}: {msg}")


@dataclass(frozen=True)
class Token:
    kind: str  # 'int', 'id', 'sym', 'str', 'kw' (':name'), 'eof'
    text: str
    line: int
    col: int


_SYMS = [":=", "|->", "||", "&&", "==", "!=", "<=", ">=", "<", ">", "(", ")", "{", "}", "[", "]", ";", "+", "*",
         ",", ".", "/", "!", ":"]
_TOKEN = re.compile(r"\s+|(?P<int>\d+)|(?P<id>[A-Za-z_][A-Za-z0-9_']*)|(?P<sym>" +
                    "|".join(re.escape(s) for s in _SYMS) + ")")


def tokenize(text: str, source: str = "") -> list[Token]:
    toks = []
    line, start = 1, 0
    i = 0
    while i < len(text):
        if text[i] == "\n":
            line, start = line + 1, i + 1
            i += 1
            continue
        if text[i] == "#":
            while i < len(text) and text[i] != "\n":
                i += 1
            continue
        m = _TOKEN.match(text, i)
        if m is None or m.end() == i:
            raise ParseError(f"unexpected character {text[i]!r}", line, i - start + 1, source)
        if m.lastgroup:
            toks.append(Token(m.lastgroup, m.group(), line, i - start + 1))
        i = m.end()
    toks.append(Token("eof", "", line, len(text) - start + 1))
    return toks


class _Parser:
    def __init__(self, text: str, source: str = "", base: tuple = (0, 0)):
        self.source = source
        self.toks = tokenize(text, source)
        if base != (0, 0):
            bl, bc = base
            self.toks = [Token(t.kind, t.text, t.line + bl, t.col + (bc if t.line == 1 else 0)) for t in self.toks]
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: Token | None = None):
        t = tok or self.tok
        raise ParseError(msg, t.line, t.col, self.source)

    def at(self, *texts) -> bool:
        return self.tok.kind in ("sym", "id") and self.tok.text in texts

    def take(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = "end of input" if self.tok.kind == "eof" else repr(self.tok.text)
            self.error(f"expected {text!r}, found {found}")
        return self.take()

    def ident(self, what: str = "identifier") -> str:
        if self.tok.kind != "id" or self.tok.text in _KEYWORDS:
            found = "end of input" if self.tok.kind == "eof" else repr(self.tok.text)
            self.error(f"expected {what}, found {found}")
        return self.take().text

    def done(self):
        if self.tok.kind != "eof":
            self.error(f"unexpected {self.tok.text!r}")

    # expressions

    def expr(self, mul: bool = True):
        e = self.term(mul)
        while self.at("+"):
            self.take()
            e = BinOp("+", e, self.term(mul))
        return e

    def term(self, mul: bool = True):
        e = self.prim()
        while mul and self.at("*"):
            self.take()
            e = BinOp("*", e, self.prim())
        return e

    def prim(self):
        t = self.tok
        if t.kind == "int":
            self.take()
            return Const(int(t.text))
        if self.at("("):
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "id" and t.text not in _KEYWORDS:
            self.take()
            return Var(t.text)
        found = "end of input" if t.kind == "eof" else repr(t.text)
        self.error(f"expected an expression, found {found}")

    # guards

    def guard(self):
        b = self.guard_and()
        while self.at("||", "or"):
            self.take()
            b = BoolOp("or", b, self.guard_and())
        return b

    def guard_and(self):
        b = self.guard_un()
        while self.at("&&", "and"):
            self.take()
            b = BoolOp("and", b, self.guard_un())
        return b

    def guard_un(self):
        if self.at("!", "not"):
            self.take()
            return Not(self.guard_un())
        if self.at("true", "false"):
            return BConst(self.take().text == "true")
        if self.at("("):
            save = self.i
            self.take()
            try:
                b = self.guard()
                self.expect(")")
                if not self.at(*_CMPS):
                    return b
            except ParseError:
                pass
            self.i = save
        return self.comparison()

    def comparison(self, mul: bool = True):
        left = self.expr(mul)
        if not self.at(*_CMPS):
            found = "end of input" if self.tok.kind == "eof" else repr(self.tok.text)
            self.error(f"expected a comparison, found {found}")
        op = self.take().text
        right = self.expr(mul)
        if op == ">":
            return Cmp("<", right, left)
        if op == ">=":
            return Cmp("<=", right, left)
        return Cmp(op, left, right)

    # programs

    def program(self):
        c = self.seq()
        while self.at("||"):
            self.take()
            c = Par(c, self.seq())
        return c

    def seq(self):
        c = self.command()
        while self.at(";"):
            self.take()
            c = Seq(c, self.command())
        return c

    def block(self):
        if not self.at("{"):
            return self.command()
        self.take()
        c = self.program()
        self.expect("}")
        return c

    def command(self):
        t = self.tok
        if self.at("skip"):
            self.take()
            return Skip()
        if self.at("("):
            self.take()
            c = self.program()
            self.expect(")")
            return c
        if self.at("while"):
            self.take()
            b = self.guard()
            self.expect("do")
            return While(b, self.block())
        if self.at("if"):
            self.take()
            b = self.guard()
            self.expect("then")
            c1 = self.block()
            self.expect("else")
            return If(b, c1, self.block())
        if self.at("resource"):
            self.take()
            r = self.ident("a resource name")
            self.expect("do")
            return Resource(r, self.block())
        if self.at("with"):
            self.take()
            r = self.ident("a resource name")
            self.expect("when")
            b = self.guard()
            self.expect("do")
            return With(r, b, self.block())
        if self.at("dispose"):
            self.take()
            self.expect("(")
            e = self.expr()
            self.expect(")")
            return Atom(Dispose(e))
        if self.at("["):
            self.take()
            e = self.expr()
            self.expect("]")
            self.expect(":=")
            return Atom(Store(e, self.expr()))
        if t.kind == "id" and t.text not in _KEYWORDS:
            x = self.take().text
            self.expect(":=")
            if self.at("["):
                self.take()
                e = self.expr()
                self.expect("]")
                return Atom(Load(x, e))
            if self.at("malloc"):
                self.take()
                self.expect("(")
                e = self.expr()
                self.expect(")")
                return Malloc(x, e)
            return Atom(Assign(x, self.expr()))
        found = "end of input" if t.kind == "eof" else repr(t.text)
        self.error(f"expected a command, found {found}")

    # assertions; '*' inside expressions needs parentheses here

    def formula(self):
        f = self.f_and()
        while self.at("||"):
            self.take()
            f = Or(f, self.f_and())
        return f

    def f_and(self):
        f = self.f_star()
        while self.at("&&"):
            self.take()
            f = And(f, self.f_star())
        return f

    def f_star(self):
        f = self.f_un()
        while self.at("*"):
            self.take()
            f = Star(f, self.f_un())
        return f

    def f_un(self):
        if self.at("!"):
            self.take()
            return Neg(self.f_un())
        if self.at("forall", "exists"):
            q = self.take().text
            v = self.ident("a variable")
            self.expect(".")
            body = self.formula()
            return Forall(v, body) if q == "forall" else Exists(v, body)
        return self.f_atom()

    def perm(self) -> Fraction:
        t = self.tok
        if t.kind != "int":
            self.error("expected a permission such as 1 or 1/2")
        num = int(self.take().text)
        den = 1
        if self.at("/"):
            self.take()
            if self.tok.kind != "int":
                self.error("expected a denominator")
            den = int(self.take().text)
        if den == 0 or not 0 < Fraction(num, den) <= 1:
            self.error("permission must lie in (0, 1]", t)
        return Fraction(num, den)

    def f_atom(self):
        if self.at("emp"):
            self.take()
            return EMP
        if self.at("true", "false"):
            return TRUE if self.take().text == "true" else FALSE
        if self.at("own") and self.peek().text == "(":
            self.take()
            self.expect("(")
            p = self.perm()
            self.expect(",")
            x = self.ident("a variable")
            self.expect(")")
            return Own(p, x)
        if self.at("("):
            save = self.i
            self.take()
            try:
                f = self.formula()
                self.expect(")")
                if not self.at("|->", *_CMPS, "+"):
                    return f
            except ParseError:
                pass
            self.i = save
        start = self.i
        loc = self.expr(mul=False)
        if self.at("|->"):
            self.take()
            p = Fraction(1)
            if self.at("{"):
                self.take()
                p = self.perm()
                self.expect("}")
            if self.at("_"):
                self.take()
                return PointsTo(loc, p, None)
            return PointsTo(loc, p, self.expr(mul=False))
        self.i = start
        return Pure(self.comparison(mul=False))

    def context(self) -> tuple:
        out = {}
        if self.tok.kind == "eof":
            return ()
        while True:
            t = self.tok
            r = self.ident("a resource name")
            self.expect(":")
            if r in out:
                self.error(f"resource {r} bound twice", t)
            out[r] = self.formula_until_comma()
            if not self.at(","):
                break
            self.take()
        return tuple(sorted(out.items()))

    def formula_until_comma(self):
        # own(p, x) uses a comma internally; the formula grammar handles it
        return self.formula()


_KEYWORDS = {"skip", "while", "do", "if", "then", "else", "resource", "with", "when", "dispose", "malloc",
             "true", "false", "emp", "forall", "exists", "and", "or", "not"}
_CMPS = ("==", "!=", "<", "<=", ">", ">=")


def _once(method: str, text: str, source: str, base=(0, 0)):
    p = _Parser(text, source, base)
    out = getattr(p, method)()
    p.done()
    return out


def parse_program(text: str, source: str = ""):
    return _once("program", text, source)


def parse_formula(text: str, source: str = ""):
    return _once("formula", text, source)


def parse_expr(text: str, source: str = ""):
    return _once("expr", text, source)


def parse_guard(text: str, source: str = ""):
    return _once("guard", text, source)


def parse_context(text: str, source: str = "") -> tuple:
    return _once("context", text, source)


# printing

def _prec(c) -> int:
    if isinstance(c, Par):
        return 0
    if isinstance(c, Seq):
        return 1
    return 2


def format_program(c, prec: int = 0) -> str:
    if isinstance(c, Skip):
        return "skip"
    if isinstance(c, (Atom, Malloc)):
        return str(c)
    if isinstance(c, Seq):
        s = f"{format_program(c.c1, 1)} ; {format_program(c.c2, 2)}"
    elif isinstance(c, Par):
        s = f"{format_program(c.c1, 0)} || {format_program(c.c2, 1)}"
    elif isinstance(c, While):
        return f"while {c.b} do {{ {format_program(c.body)} }}"
    elif isinstance(c, Resource):
        return f"resource {c.r} do {{ {format_program(c.body)} }}"
    elif isinstance(c, With):
        return f"with {c.r} when {c.b} do {{ {format_program(c.body)} }}"
    elif isinstance(c, If):
        return f"if {c.b} then {{ {format_program(c.c1)} }} else {{ {format_program(c.c2)} }}"
    else:
        raise TypeError(f"not a program: {c!r}")
    return f"({s})" if prec > _prec(c) else s


def format_context(ctx) -> str:
    return ", ".join(f"{r}: {format_formula(j)}" for r, j in ctx)


# proof scripts

@dataclass
class SNode:
    rule: str
    rule_tok: Token
    fields: dict
    children: list
    open_tok: Token


class _SexpLexer:
    _TOK = re.compile(r'\s+|;[^\n]*|(?P<open>\()|(?P<close>\))|(?P<kw>:[A-Za-z_]+)|"(?P<str>(?:[^"\\]|\\.)*)"'
                      r'|(?P<atom>[^\s()";]+)')

    def __init__(self, text: str, source: str):
        self.source = source
        self.toks = []
        line, start, i = 1, 0, 0
        while i < len(text):
            m = self._TOK.match(text, i)
            if m is None:
                raise ParseError(f"unexpected character {text[i]!r}", line, i - start + 1, source)
            if m.lastgroup:
                val = m.group(m.lastgroup)
                if m.lastgroup == "str":
                    val = re.sub(r"\\(.)", r"\1", val)
                # strings are positioned at their first character after the quote
                col = i - start + 1 + (1 if m.lastgroup == "str" else 0)
                self.toks.append(Token(m.lastgroup, val, line, col))
            chunk = m.group()
            nl = chunk.count("\n")
            if nl:
                line += nl
                start = i + chunk.rfind("\n") + 1
            i = m.end()
        self.toks.append(Token("eof", "", line, len(text) - start + 1))
        self.i = 0

    def error(self, msg, t):
        raise ParseError(msg, t.line, t.col, self.source)

    def node(self) -> SNode:
        t = self.toks[self.i]
        if t.kind != "open":
            self.error("expected '('", t)
        self.i += 1
        rt = self.toks[self.i]
        if rt.kind != "atom":
            self.error("expected a rule name", rt)
        self.i += 1
        if rt.text not in RULES:
            close = difflib.get_close_matches(rt.text, list(RULES), n=3, cutoff=0.4)
            hint = f"; did you mean {', '.join(close)}?" if close else f"; known rules: {', '.join(sorted(RULES))}"
            self.error(f"unknown rule {rt.text!r}{hint}", rt)
        fields, keys, children = {}, {}, []
        while True:
            t = self.toks[self.i]
            if t.kind == "close":
                self.i += 1
                break
            if t.kind == "eof":
                self.error(f"unclosed '(' for rule {rt.text}", rt)
            if t.kind == "kw":
                self.i += 1
                v = self.toks[self.i]
                if v.kind != "str":
                    self.error(f"field {t.text} needs a quoted string", v)
                self.i += 1
                if t.text in fields:
                    self.error(f"field {t.text} given twice", t)
                fields[t.text] = v
                keys[t.text] = t
            elif t.kind == "open":
                children.append(self.node())
            else:
                self.error(f"unexpected {t.text!r}", t)
        n = RULES[rt.text]
        if len(children) != n:
            self.error(f"rule {rt.text} takes {n} premise(s), got {len(children)}", rt)
        unknown = set(fields) - {":ctx", ":pre", ":post", ":code"}
        if unknown:
            bad = sorted(unknown)[0]
            self.error(f"unknown field {bad}; expected :ctx, :pre, :post or :code", keys[bad])
        return SNode(rt.text, rt, fields, children, t)


_NEED_CODE = {"Aff", "Store", "Load", "Skip", "Alloc", "Dispose", "Res", "With", "If", "While"}


def parse_proof(text: str, source: str = "") -> Derivation:
    lx = _SexpLexer(text, source)
    root = lx.node()
    if lx.toks[lx.i].kind != "eof":
        lx.error("trailing input after the proof", lx.toks[lx.i])
    return _build(root, None, source)


def _field(node: SNode, key: str, method: str, source: str):
    t = node.fields[key]
    return _once(method, t.text, source, base=(t.line - 1, t.col - 1))


def _build(node: SNode, parent_ctx, source: str) -> Derivation:
    if ":ctx" in node.fields:
        ctx = _field(node, ":ctx", "context", source)
    else:
        ctx = parent_ctx if parent_ctx is not None else ()
    for k in (":pre", ":post"):
        if k not in node.fields:
            raise ParseError(f"rule {node.rule} needs {k}", node.rule_tok.line, node.rule_tok.col, source)
    pre = _field(node, ":pre", "formula", source)
    post = _field(node, ":post", "formula", source)
    code = _field(node, ":code", "program", source) if ":code" in node.fields else None
    if code is None and node.rule in _NEED_CODE:
        raise ParseError(f"rule {node.rule} needs :code", node.rule_tok.line, node.rule_tok.col, source)
    child_ctx = ctx
    if node.rule == "With" and code is not None and isinstance(code, With):
        child_ctx = tuple((r, j) for r, j in ctx if r != code.r)
    premises = tuple(_build(c, child_ctx, source) for c in node.children)
    if code is None:
        if node.rule == "Seq":
            code = Seq(premises[0].code, premises[1].code)
        elif node.rule == "Par":
            code = Par(premises[0].code, premises[1].code)
        else:
            code = premises[0].code
    return Derivation(node.rule, ctx, pre, code, post, premises, (node.rule_tok.line, node.rule_tok.col))


def format_proof(d: Derivation, indent: int = 0) -> str:
    pad = "  " * indent
    head = (f'{pad}({d.rule} :ctx "{format_context(d.ctx)}" :pre "{format_formula(d.pre)}" '
            f':post "{format_formula(d.post)}" :code "{format_program(d.code)}"')
    if not d.premises:
        return head + ")"
    return head + "\n" + "\n".join(format_proof(p, indent + 1) for p in d.premises) + ")"
