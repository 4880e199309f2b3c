"""The ``.pde`` text format: contexts, systems, fields, combinations and checks.

Grammar (``#`` starts a comment)::

    document    := context item*
    context     := 'context' '{' ctxstmt* '}'
    ctxstmt     := 'indep' names ';' | 'dep' names ';' | 'param' names ';'
                 | 'function' NAME '(' (INT | names) ')' ';'
                 | 'field' NAME '(' names ')' 'with' fentry (',' fentry)* ';'
                 | 'weight' NAME ':' 'outer' expr 'inner' expr ';'
                 | 'rank' names ('>' names)* ';'
                 | 'order' NAME ('>' NAME)* ';'
    fentry      := 'd' '/' 'd'NAME '=' expr | NAME '^' INT '=' expr
    item        := 'let' NAME '=' expr ';'
                 | 'system' '{' sysstmt* '}'
                 | 'vectorfield' NAME '{' (NAME '->' expr ';')* '}'
                 | ('combo' | 'certificate' | 'syzygy') NAME '=' combination ';'
                 | 'flux' NAME '=' list ';'
                 | 'check' STRING ['ref' STRING] directive ';'
    sysstmt     := [NAME ':'] expr '=' expr ';' | 'solve' NAME 'for' jet ';'
                 | 'syzygy' NAME '=' combination ';'
    combination := list | expr          # expr linear in equation labels
    list        := '[' expr (',' expr)* ']'
    expr        := conventional infix with + - * / ^, unary minus, and
                   u1_t, u1_{t,x1}     jet coordinates
                   D_{x1}(e)           total derivative
                   f(e), f'(e)         function values and derivatives
                   diff(f,1,0)(a,b)    partial derivatives by argument
                   phi_{x1}            derivative of a function declared on variables
                   sqrt(e)             square root

Directives are listed in ``DIRECTIVES``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from .expr import (
    ZERO,
    Expr,
    FieldAtom,
    FnAtom,
    IndependentVar,
    JetCoord,
    Parameter,
    UnsupportedRadical,
    diff_atom,
    normalize,
)
from .jet import EvolutionaryField, JetContext, canonicalize_field, prolong_apply
from .system import Combination, DifferentialSystem, NonTerminatingRanking

__all__ = [
    "ParseError",
    "SemanticError",
    "Document",
    "Check",
    "parse_document",
    "parse_ast",
    "pretty",
    "DIRECTIVES",
]


class ParseError(ValueError):
    def __init__(self, line: int, column: int, expected: list[str], found: str):
        self.line = line
        self.column = column
        self.expected = sorted(set(expected))
        self.found = found
        super().__init__(f"{line}:{column}: expected {' or '.join(self.expected)}, found {found}")


class SemanticError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        super().__init__(f"{line}:{column}: {message}" if line else message)


# ---------------------------------------------------------------------------
# tokens

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+|\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>\d+)
  | (?P<name>[A-Za-z][A-Za-z0-9]*)
  | (?P<str>"[^"\n]*")
  | (?P<op>==|->|[{}()\[\],;:=+\-*/^_'>])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    out = []
    line, start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(line, pos - start + 1, ["a token"], repr(text[pos]))
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            start = m.end()
        elif kind != "ws":
            out.append(Token(kind, m.group(), line, pos - start + 1))
        pos = m.end()
    out.append(Token("eof", "", line, pos - start + 1))
    return out


# ---------------------------------------------------------------------------
# AST (spans are excluded from equality so that printing round-trips)

Span = tuple[int, int]


@dataclass(frozen=True)
class Node:
    span: Span = field(default=(0, 0), compare=False, repr=False, kw_only=True)


@dataclass(frozen=True)
class Num(Node):
    value: int


@dataclass(frozen=True)
class Name(Node):
    name: str
    index: tuple[str, ...] | None = None  # u1_{t,x1}; None when no index given


@dataclass(frozen=True)
class Call(Node):
    name: str
    primes: int
    orders: tuple[int, ...] | None
    args: tuple[Node, ...]


@dataclass(frozen=True)
class Deriv(Node):
    index: tuple[str, ...]
    arg: Node


@dataclass(frozen=True)
class Sqrt(Node):
    arg: Node


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class Bin(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class ListNode(Node):
    items: tuple[Node, ...]


@dataclass(frozen=True)
class Stmt(Node):
    """Generic declaration: ``kind`` plus keyword-ordered fields."""

    kind: str
    fields: tuple[tuple[str, Any], ...]

    def get(self, key, default=None):
        for k, v in self.fields:
            if k == key:
                return v
        return default


DIRECTIVES = {
    "identity": "LHS == RHS holds identically",
    "nonidentity": "LHS == RHS fails identically (documents a misstated formula)",
    "zero": "EXPR vanishes on solutions [cert C]",
    "nonzero": "EXPR does not vanish on solutions",
    "quasi": "E_a(G) vanishes on solutions for every dependent variable",
    "subsym": "X on G is a sub-symmetry [cert C]",
    "refute": "X on G is not a sub-symmetry [residual EXPR]",
    "divergence": "EXPR equals the divergence of flux M",
    "notdivergence": "the divergence heuristic finds no flux for EXPR",
    "claw": "conservation law generated from X on G [cert C] [expect F | equivalent F]",
    "deform": "deformed flux X M for X on G [cert C] [expect F | equivalent F]",
    "law": "div F equals certificate C",
    "noether": "first Noether flux for Lagrangian L and field X with X L = div M [expect F]",
    "classify": "characteristics of F with cert C [rewrite S by E] [trade A to B by E] [expect list] kind",
    "equivalent": "fluxes F1 and F2 differ by a trivial flux",
    "record": "report EXPR and its normal form on solutions without asserting anything",
}


# ---------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    # helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, expected):
        t = self.tok
        found = "end of input" if t.kind == "eof" else repr(t.text)
        raise ParseError(t.line, t.col, list(expected), found)

    def at(self, text) -> bool:
        return self.tok.text == text and self.tok.kind in ("op", "name")

    def accept(self, text) -> Token | None:
        if self.at(text):
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, text) -> Token:
        t = self.accept(text)
        if t is None:
            self.error([repr(text)])
        return t

    def name(self) -> str:
        t = self.tok
        if t.kind != "name":
            self.error(["a name"])
        self.i += 1
        return t.text

    def integer(self) -> int:
        t = self.tok
        if t.kind != "num":
            self.error(["an integer"])
        self.i += 1
        return int(t.text)

    def string(self) -> str:
        t = self.tok
        if t.kind != "str":
            self.error(["a string"])
        self.i += 1
        return t.text[1:-1]

    def span(self) -> Span:
        return (self.tok.line, self.tok.col)

    def names(self) -> tuple[str, ...]:
        out = [self.name()]
        while self.accept(","):
            out.append(self.name())
        return tuple(out)

    # document
    def document(self) -> list[Stmt]:
        items = [self.context()]
        while self.tok.kind != "eof":
            items.append(self.item())
        return items

    def context(self) -> Stmt:
        sp = self.span()
        self.expect("context")
        self.expect("{")
        stmts = []
        while not self.accept("}"):
            stmts.append(self.ctx_stmt())
        return Stmt("context", (("body", tuple(stmts)),), span=sp)

    def ctx_stmt(self) -> Stmt:
        sp = self.span()
        t = self.tok.text
        if t in ("indep", "dep", "param"):
            self.i += 1
            names = self.names()
            self.expect(";")
            return Stmt(t, (("names", names),), span=sp)
        if t == "function":
            self.i += 1
            name = self.name()
            self.expect("(")
            if self.tok.kind == "num":
                sig: Any = self.integer()
            else:
                sig = self.names()
            self.expect(")")
            self.expect(";")
            return Stmt("function", (("name", name), ("sig", sig)), span=sp)
        if t == "field":
            self.i += 1
            name = self.name()
            self.expect("(")
            vars_ = self.names()
            self.expect(")")
            self.expect("with")
            rules = [self.field_entry(name)]
            while self.accept(","):
                rules.append(self.field_entry(name))
            self.expect(";")
            return Stmt("field", (("name", name), ("vars", vars_), ("rules", tuple(rules))), span=sp)
        if t == "weight":
            self.i += 1
            d = self.name()
            self.expect(":")
            self.expect("outer")
            outer = self.expr()
            self.expect("inner")
            inner = self.expr()
            self.expect(";")
            return Stmt("weight", (("dir", d), ("outer", outer), ("inner", inner)), span=sp)
        if t == "rank":
            self.i += 1
            blocks = [self.names()]
            while self.accept(">"):
                blocks.append(self.names())
            self.expect(";")
            return Stmt("rank", (("blocks", tuple(blocks)),), span=sp)
        if t == "order":
            self.i += 1
            dirs = [self.name()]
            while self.accept(">"):
                dirs.append(self.name())
            self.expect(";")
            return Stmt("order", (("dirs", tuple(dirs)),), span=sp)
        self.error(["'indep'", "'dep'", "'param'", "'function'", "'field'", "'weight'", "'rank'", "'order'", "'}'"])

    def field_entry(self, fname: str):
        if self.at("d") and self.peek().text == "/":
            self.i += 2
            t = self.tok
            word = self.name()
            if not word.startswith("d") or len(word) < 2:
                raise ParseError(t.line, t.col, ["d<direction>"], repr(word))
            self.expect("=")
            return ("rule", word[1:], self.expr())
        t = self.tok
        if self.name() != fname:
            raise ParseError(t.line, t.col, ["'d'", repr(fname)], repr(t.text))
        self.expect("^")
        n = self.integer()
        self.expect("=")
        return ("relation", n, self.expr())

    def item(self) -> Stmt:
        sp = self.span()
        t = self.tok.text
        if t == "let":
            self.i += 1
            name = self.name()
            self.expect("=")
            e = self.expr()
            self.expect(";")
            return Stmt("let", (("name", name), ("expr", e)), span=sp)
        if t == "system":
            self.i += 1
            self.expect("{")
            body = []
            while not self.accept("}"):
                body.append(self.sys_stmt())
            return Stmt("system", (("body", tuple(body)),), span=sp)
        if t == "vectorfield":
            self.i += 1
            name = self.name()
            self.expect("{")
            entries = []
            while not self.accept("}"):
                target = self.name()
                self.expect("->")
                entries.append((target, self.expr()))
                self.expect(";")
            return Stmt("vectorfield", (("name", name), ("entries", tuple(entries))), span=sp)
        if t in ("combo", "certificate", "syzygy"):
            self.i += 1
            name = self.name()
            self.expect("=")
            body = self.list_or_expr()
            self.expect(";")
            return Stmt(t, (("name", name), ("body", body)), span=sp)
        if t == "flux":
            self.i += 1
            name = self.name()
            self.expect("=")
            body = self.list_()
            self.expect(";")
            return Stmt("flux", (("name", name), ("body", body)), span=sp)
        if t == "check":
            self.i += 1
            title = self.string()
            ref = None
            if self.accept("ref"):
                ref = self.string()
            directive = self.directive()
            self.expect(";")
            return Stmt("check", (("title", title), ("ref", ref), ("directive", directive)), span=sp)
        self.error(["'let'", "'system'", "'vectorfield'", "'combo'", "'certificate'", "'syzygy'", "'flux'", "'check'"])

    def sys_stmt(self) -> Stmt:
        sp = self.span()
        if self.at("solve") and self.peek().kind == "name":
            self.i += 1
            label = self.name()
            self.expect("for")
            target = self.primary()
            self.expect(";")
            return Stmt("solve", (("label", label), ("target", target)), span=sp)
        if self.at("syzygy") and self.peek().kind == "name":
            self.i += 1
            name = self.name()
            self.expect("=")
            body = self.list_or_expr()
            self.expect(";")
            return Stmt("syzygy", (("name", name), ("body", body)), span=sp)
        label = None
        if self.tok.kind == "name" and self.peek().text == ":":
            label = self.name()
            self.i += 1
        lhs = self.expr()
        self.expect("=")
        rhs = self.expr()
        self.expect(";")
        return Stmt("equation", (("label", label), ("lhs", lhs), ("rhs", rhs)), span=sp)

    def list_(self) -> ListNode:
        sp = self.span()
        self.expect("[")
        items = [self.expr()]
        while self.accept(","):
            items.append(self.expr())
        self.expect("]")
        return ListNode(tuple(items), span=sp)

    def list_or_expr(self) -> Node:
        return self.list_() if self.at("[") else self.expr()

    def ref_or_list(self) -> Node:
        """A declared name or an inline list / parenthesised combination."""
        if self.at("["):
            return self.list_()
        if self.at("("):
            return self.primary()
        sp = self.span()
        return Name(self.name(), span=sp)

    def directive(self) -> Stmt:
        sp = self.span()
        kind = self.tok.text
        if kind not in DIRECTIVES:
            self.error([repr(k) for k in DIRECTIVES])
        self.i += 1
        f: list[tuple[str, Any]] = []
        if kind in ("identity", "nonidentity"):
            f.append(("lhs", self.list_or_expr()))
            self.expect("==")
            f.append(("rhs", self.list_or_expr()))
        elif kind in ("zero", "nonzero", "notdivergence"):
            f.append(("expr", self.expr()))
            if kind == "zero" and self.accept("cert"):
                f.append(("cert", self.ref_or_list()))
        elif kind == "quasi":
            f.append(("combo", self.ref_or_list()))
        elif kind in ("subsym", "refute", "claw", "deform"):
            f.append(("field", self.name()))
            self.expect("on")
            f.append(("combo", self.ref_or_list()))
            if kind == "deform":
                self.expect("flux")
                f.append(("flux", self.ref_or_list()))
            if kind == "refute":
                if self.accept("residual"):
                    f.append(("residual", self.expr()))
            elif self.accept("cert"):
                f.append(("cert", self.ref_or_list()))
            if kind in ("claw", "deform"):
                if self.accept("expect"):
                    f.append(("expect", self.ref_or_list()))
                elif self.accept("equivalent"):
                    f.append(("equivalent", self.ref_or_list()))
        elif kind == "divergence":
            f.append(("expr", self.expr()))
            self.expect("flux")
            f.append(("flux", self.ref_or_list()))
        elif kind == "law":
            f.append(("flux", self.ref_or_list()))
            self.expect("cert")
            f.append(("cert", self.ref_or_list()))
        elif kind == "noether":
            f.append(("lagrangian", self.expr()))
            self.expect("field")
            f.append(("field", self.name()))
            self.expect("flux")
            f.append(("flux", self.ref_or_list()))
            if self.accept("expect"):
                f.append(("expect", self.ref_or_list()))
        elif kind == "classify":
            f.append(("flux", self.ref_or_list()))
            self.expect("cert")
            f.append(("cert", self.ref_or_list()))
            rewrites, trades = [], []
            while True:
                if self.accept("rewrite"):
                    s = self.name()
                    self.expect("by")
                    rewrites.append((s, self.expr()))
                elif self.accept("trade"):
                    a = self.name()
                    self.expect("to")
                    b = self.name()
                    self.expect("by")
                    trades.append((a, b, self.expr()))
                else:
                    break
            f.append(("rewrites", tuple(rewrites)))
            f.append(("trades", tuple(trades)))
            if self.accept("expect"):
                f.append(("expect", self.list_()))
            t = self.tok
            verdict = self.name()
            if verdict not in ("nontrivial", "trivial"):
                raise ParseError(t.line, t.col, ["'nontrivial'", "'trivial'"], repr(verdict))
            f.append(("verdict", verdict))
        elif kind == "equivalent":
            f.append(("flux", self.ref_or_list()))
            f.append(("other", self.ref_or_list()))
        elif kind == "record":
            f.append(("expr", self.expr()))
        return Stmt(kind, tuple(f), span=sp)

    # expressions
    def expr(self) -> Node:
        left = self.term()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            sp = self.span()
            op = self.tok.text
            self.i += 1
            left = Bin(op, left, self.term(), span=sp)
        return left

    def term(self) -> Node:
        left = self.unary()
        while self.tok.text in ("*", "/") and self.tok.kind == "op":
            sp = self.span()
            op = self.tok.text
            self.i += 1
            left = Bin(op, left, self.unary(), span=sp)
        return left

    def unary(self) -> Node:
        if self.at("-"):
            sp = self.span()
            self.i += 1
            return Neg(self.unary(), span=sp)
        return self.power()

    def power(self) -> Node:
        base = self.primary()
        if self.at("^"):
            sp = self.span()
            self.i += 1
            return Bin("^", base, self.unary(), span=sp)
        return base

    def index(self) -> tuple[str, ...]:
        if self.accept("{"):
            idx = self.names()
            self.expect("}")
            return idx
        return (self.name(),)

    def args(self) -> tuple[Node, ...]:
        self.expect("(")
        out = [self.expr()]
        while self.accept(","):
            out.append(self.expr())
        self.expect(")")
        return tuple(out)

    def primary(self) -> Node:
        sp = self.span()
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Num(int(t.text), span=sp)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if t.kind != "name":
            self.error(["a number", "a name", "'('"])
        if t.text == "D" and self.peek().text == "_":
            self.i += 2
            idx = self.index()
            self.expect("(")
            e = self.expr()
            self.expect(")")
            return Deriv(idx, e, span=sp)
        if t.text == "diff" and self.peek().text == "(":
            self.i += 2
            fname = self.name()
            orders = []
            while self.accept(","):
                orders.append(self.integer())
            self.expect(")")
            return Call(fname, 0, tuple(orders), self.args(), span=sp)
        if t.text == "sqrt" and self.peek().text == "(":
            self.i += 1
            (arg,) = self.args()
            return Sqrt(arg, span=sp)
        self.i += 1
        primes = 0
        while self.accept("'"):
            primes += 1
        if self.at("("):
            return Call(t.text, primes, None, self.args(), span=sp)
        if primes:
            self.error(["'('"])
        if self.accept("_"):
            return Name(t.text, self.index(), span=sp)
        return Name(t.text, span=sp)


def parse_ast(text: str) -> list[Stmt]:
    """Parse to the syntax tree (no name resolution)."""
    return _Parser(text).document()


# ---------------------------------------------------------------------------
# pretty printer

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _p(node: Node, ctx_prec: int = 0) -> str:
    if isinstance(node, Num):
        return str(node.value)
    if isinstance(node, Name):
        if node.index is None:
            return node.name
        if len(node.index) == 1:
            return f"{node.name}_{node.index[0]}"
        return f"{node.name}_{{{','.join(node.index)}}}"
    if isinstance(node, Call):
        args = ", ".join(_p(a) for a in node.args)
        if node.orders is not None:
            return f"diff({node.name}{''.join(',' + str(k) for k in node.orders)})({args})"
        return f"{node.name}{chr(39) * node.primes}({args})"
    if isinstance(node, Deriv):
        idx = node.index[0] if len(node.index) == 1 else "{" + ",".join(node.index) + "}"
        return f"D_{idx}({_p(node.arg)})"
    if isinstance(node, Sqrt):
        return f"sqrt({_p(node.arg)})"
    if isinstance(node, Neg):
        s = "-" + _p(node.arg, 3)
        return f"({s})" if ctx_prec > 3 else s
    if isinstance(node, Bin):
        prec = _PREC[node.op]
        if node.op == "^":
            s = f"{_p(node.left, 5)}^{_p(node.right, 3)}"
        else:
            s = f"{_p(node.left, prec)} {node.op} {_p(node.right, prec + 1)}"
        return f"({s})" if prec < ctx_prec else s
    if isinstance(node, ListNode):
        return "[" + ", ".join(_p(x) for x in node.items) + "]"
    raise TypeError(node)


def _ref(node: Node) -> str:
    if isinstance(node, (ListNode, Name)) and not (isinstance(node, Name) and node.index):
        return _p(node)
    return f"({_p(node)})"


def _directive(d: Stmt) -> str:
    out = [d.kind]
    for key, val in d.fields:
        if val is None:
            continue
        if key in ("lhs", "expr", "lagrangian"):
            out.append(_p(val))
        elif key == "rhs":
            out += ["==", _p(val)]
        elif key == "field":
            out += (["field", val] if d.kind == "noether" else [val, "on"])
        elif key == "combo":
            out.append(_ref(val))
        elif key == "flux":
            out += (["flux", _ref(val)] if d.kind in ("deform", "divergence", "noether") else [_ref(val)])
        elif key == "other":
            out.append(_ref(val))
        elif key in ("cert", "expect", "equivalent", "residual"):
            out += [key, _p(val) if key == "residual" else _ref(val)]
        elif key == "rewrites":
            for s, e in val:
                out += ["rewrite", s, "by", _p(e)]
        elif key == "trades":
            for a, b, e in val:
                out += ["trade", a, "to", b, "by", _p(e)]
        elif key == "verdict":
            out.append(val)
    return " ".join(out)


def pretty(ast: list[Stmt]) -> str:
    """Canonical text for a syntax tree; ``parse_ast(pretty(t)) == t``."""
    lines = []
    for st in ast:
        k = st.kind
        if k == "context":
            lines.append("context {")
            for c in st.get("body"):
                ck = c.kind
                if ck in ("indep", "dep", "param"):
                    lines.append(f"  {ck} {', '.join(c.get('names'))};")
                elif ck == "function":
                    sig = c.get("sig")
                    sig = str(sig) if isinstance(sig, int) else ", ".join(sig)
                    lines.append(f"  function {c.get('name')}({sig});")
                elif ck == "field":
                    parts = []
                    for r in c.get("rules"):
                        if r[0] == "rule":
                            parts.append(f"d/d{r[1]} = {_p(r[2])}")
                        else:
                            parts.append(f"{c.get('name')}^{r[1]} = {_p(r[2])}")
                    lines.append(f"  field {c.get('name')}({', '.join(c.get('vars'))}) with {', '.join(parts)};")
                elif ck == "weight":
                    lines.append(f"  weight {c.get('dir')}: outer {_p(c.get('outer'))} inner {_p(c.get('inner'))};")
                elif ck == "rank":
                    lines.append("  rank " + " > ".join(", ".join(b) for b in c.get("blocks")) + ";")
                elif ck == "order":
                    lines.append("  order " + " > ".join(c.get("dirs")) + ";")
            lines.append("}")
        elif k == "let":
            lines.append(f"let {st.get('name')} = {_p(st.get('expr'))};")
        elif k == "system":
            lines.append("system {")
            for s in st.get("body"):
                if s.kind == "equation":
                    label = s.get("label")
                    head = f"{label}: " if label else ""
                    lines.append(f"  {head}{_p(s.get('lhs'))} = {_p(s.get('rhs'))};")
                elif s.kind == "solve":
                    lines.append(f"  solve {s.get('label')} for {_p(s.get('target'))};")
                else:
                    lines.append(f"  syzygy {s.get('name')} = {_p(s.get('body'))};")
            lines.append("}")
        elif k == "vectorfield":
            lines.append(f"vectorfield {st.get('name')} {{")
            for target, e in st.get("entries"):
                lines.append(f"  {target} -> {_p(e)};")
            lines.append("}")
        elif k in ("combo", "certificate", "syzygy", "flux"):
            lines.append(f"{k} {st.get('name')} = {_p(st.get('body'))};")
        elif k == "check":
            ref = st.get("ref")
            ref = f' ref "{ref}"' if ref is not None else ""
            lines.append(f'check "{st.get("title")}"{ref} {_directive(st.get("directive"))};')
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# semantic resolution


@dataclass
class Check:
    title: str
    ref: str | None
    kind: str
    args: dict[str, Any]
    line: int


@dataclass
class Document:
    ctx: JetContext
    system: DifferentialSystem | None
    lets: dict[str, Expr]
    fields: dict[str, EvolutionaryField]
    combos: dict[str, Combination]
    certificates: dict[str, Combination]
    fluxes: dict[str, tuple[Expr, ...]]
    checks: list[Check]
    ast: list[Stmt]


_RESERVED = {"D", "diff", "sqrt"}
_EQ_PREFIX = "$"


class _Resolver:
    def __init__(self, ast: list[Stmt]):
        self.ast = ast
        self.indep: list[str] = []
        self.dep: list[str] = []
        self.params: list[str] = []
        self.functions: dict[str, int | tuple[str, ...]] = {}
        self.field_atoms: dict[str, FieldAtom] = {}
        self.field_vars: dict[str, tuple[str, ...]] = {}
        self.lets: dict[str, Expr] = {}
        self.labels: list[str] = []
        self.eq_mode = False
        self.names: dict[str, str] = {}
        self.ctx: JetContext | None = None

    def fail(self, msg: str, node: Node | None = None):
        line, col = node.span if node is not None else (0, 0)
        raise SemanticError(msg, line, col)

    def declare(self, name: str, kind: str, node: Node):
        if name in _RESERVED:
            self.fail(f"{name!r} is reserved", node)
        if name in self.names:
            self.fail(f"{name!r} is already declared as a {self.names[name]}", node)
        self.names[name] = kind

    # expressions
    def ev(self, node: Node) -> Expr:
        try:
            return self._ev(node)
        except (UnsupportedRadical, ZeroDivisionError) as exc:
            self.fail(str(exc), node)

    def _ev(self, node: Node) -> Expr:
        if isinstance(node, Num):
            return Expr.const(node.value)
        if isinstance(node, Neg):
            return -self._ev(node.arg)
        if isinstance(node, Bin):
            a = self._ev(node.left)
            if node.op == "^":
                b = normalize(self._ev(node.right))
                if not b.is_constant():
                    self.fail("exponent must be a rational constant", node.right)
                return a ** b.constant_value()
            b = self._ev(node.right)
            if node.op == "+":
                return a + b
            if node.op == "-":
                return a - b
            if node.op == "*":
                return a * b
            if b.is_zero():
                self.fail("division by zero", node)
            return a / b
        if isinstance(node, Sqrt):
            return self._ev(node.arg) ** Fraction(1, 2)
        if isinstance(node, Deriv):
            e = self._ev(node.arg)
            for d in node.index:
                self.direction(d, node)
                e = self.ctx.total(e, d)
            return e
        if isinstance(node, Call):
            return self.call(node)
        if isinstance(node, Name):
            return self.name(node)
        if isinstance(node, ListNode):
            self.fail("a list is not an expression here", node)
        raise TypeError(node)

    def direction(self, d: str, node: Node):
        if d not in self.indep:
            self.fail(f"unknown direction {d!r}", node)

    def call(self, node: Call) -> Expr:
        if self.names.get(node.name) == "vectorfield":
            if node.primes or node.orders is not None or len(node.args) != 1:
                self.fail(f"vector field {node.name!r} applies to a single expression", node)
            return prolong_apply(self.ctx, self.vfields[node.name], self._ev(node.args[0]))
        sig = self.functions.get(node.name)
        if sig is None:
            self.fail(f"unknown function {node.name!r}", node)
        if not isinstance(sig, int):
            self.fail(f"{node.name!r} is a function of {', '.join(sig)}; use {node.name} or {node.name}_x", node)
        if len(node.args) != sig:
            self.fail(f"{node.name!r} takes {sig} argument(s), got {len(node.args)}", node)
        if node.orders is not None:
            if len(node.orders) != sig:
                self.fail(f"diff({node.name}, ...) needs {sig} order(s)", node)
            orders = node.orders
        else:
            if node.primes and sig != 1:
                self.fail(f"primes need a one-argument function, {node.name!r} takes {sig}", node)
            orders = (node.primes,) + (0,) * (sig - 1)
        args = [self._ev(a) for a in node.args]
        return Expr.of(FnAtom(node.name, orders, args))

    def name(self, node: Name) -> Expr:
        n, idx = node.name, node.index
        if n in self.labels:
            if idx is not None:
                self.fail("use D_x(E) to differentiate an equation", node)
            if self.eq_mode:
                return Expr.of(JetCoord(_EQ_PREFIX + n, ()))
            return self.system.equations[n]
        kind = self.names.get(n)
        if kind is None:
            self.fail(f"unknown name {n!r}", node)
        if kind == "dep":
            for d in idx or ():
                self.direction(d, node)
            return Expr.of(JetCoord(n, idx or ()))
        if kind == "function":
            sig = self.functions[n]
            if isinstance(sig, int):
                self.fail(f"function {n!r} needs arguments", node)
            orders = [0] * len(sig)
            for d in idx or ():
                if d not in sig:
                    self.fail(f"{n!r} does not depend on {d!r}", node)
                orders[sig.index(d)] += 1
            return Expr.of(FnAtom(n, orders, [Expr.of(IndependentVar(v)) for v in sig]))
        if idx is not None and kind != "field":
            self.fail(f"{n!r} cannot carry a derivative index", node)
        if kind == "indep":
            return Expr.of(IndependentVar(n))
        if kind == "param":
            return Expr.of(Parameter(n))
        if kind == "let":
            return self.lets[n]
        if kind in ("combo", "certificate"):
            table = self.combos if kind == "combo" else self.certs
            return table[n].evaluate(self.system)
        if kind == "field":
            e = Expr.of(self.field_atoms[n])
            if idx:
                if self.ctx is None:
                    self.fail("field derivatives are not available inside the context block", node)
                for d in idx:
                    self.direction(d, node)
                    e = self.ctx.total(e, d)
            return e
        self.fail(f"{kind} {n!r} cannot be used in an expression", node)

    # context
    def context(self, st: Stmt):
        body = st.get("body")
        functions = {}
        weights_raw = []
        ranking = None
        order = None
        field_stmts = []
        for c in body:
            if c.kind in ("indep", "dep", "param"):
                for n in c.get("names"):
                    self.declare(n, c.kind, c)
                getattr(self, c.kind if c.kind != "param" else "params").extend(c.get("names"))
            elif c.kind == "function":
                self.declare(c.get("name"), "function", c)
                sig = c.get("sig")
                if isinstance(sig, int) and sig < 1:
                    self.fail("a function needs at least one argument", c)
                if not isinstance(sig, int):
                    for v in sig:
                        self.direction(v, c)
                self.functions[c.get("name")] = sig
                functions[c.get("name")] = sig if isinstance(sig, int) else len(sig)
            elif c.kind == "field":
                self.declare(c.get("name"), "field", c)
                field_stmts.append(c)
            elif c.kind == "weight":
                weights_raw.append(c)
            elif c.kind == "rank":
                if ranking is not None:
                    self.fail("rank declared twice", c)
                ranking = c
            elif c.kind == "order":
                if order is not None:
                    self.fail("order declared twice", c)
                order = c
        if not self.indep:
            self.fail("context declares no independent variables", st)
        if not self.dep:
            self.fail("context declares no dependent variables", st)
        # fields: relation first (it cannot mention the field), then rules
        rules_raw = {}
        for c in field_stmts:
            name = c.get("name")
            for v in c.get("vars"):
                self.direction(v, c)
            rel = [r for r in c.get("rules") if r[0] == "relation"]
            if len(rel) > 1:
                self.fail(f"field {name!r} has more than one relation", c)
            relation = None
            if rel:
                relation = (rel[0][1], self.ev(rel[0][2]))
                if relation[0] < 2:
                    self.fail("relation degree must be at least 2", c)
            self.field_atoms[name] = FieldAtom(name, relation)
            self.field_vars[name] = c.get("vars")
            rules_raw[name] = c
        fields = {}
        for name, c in rules_raw.items():
            atom = self.field_atoms[name]
            rules = {d: ZERO for d in self.indep}
            given = set()
            for r in c.get("rules"):
                if r[0] != "rule":
                    continue
                d = r[1]
                if d not in c.get("vars"):
                    self.fail(f"field {name!r} is not declared to depend on {d!r}", c)
                if d in given:
                    self.fail(f"two rules for d/d{d} of {name!r}", c)
                given.add(d)
                rules[d] = self.ev(r[2])
            missing = [v for v in c.get("vars") if v not in given]
            if missing:
                self.fail(f"field {name!r} needs a rule for d/d{missing[0]}", c)
            fields[atom] = rules
        try:
            weights = {}
            for w in weights_raw:
                self.direction(w.get("dir"), w)
                weights[w.get("dir")] = (self.ev(w.get("outer")), self.ev(w.get("inner")))
            blocks = None
            if ranking is not None:
                blocks = ranking.get("blocks")
                for b in blocks:
                    for n in b:
                        if n not in self.dep:
                            self.fail(f"rank lists unknown dependent variable {n!r}", ranking)
            dirs = order.get("dirs") if order is not None else None
            self.ctx = JetContext(
                self.indep, self.dep, self.params, functions, fields, weights, blocks, dirs
            )
        except ValueError as exc:
            if isinstance(exc, SemanticError):
                raise
            self.fail(str(exc), st)
        for atom, rules in fields.items():
            if atom.relation is None:
                continue
            n, value = atom.relation
            for d, rule in rules.items():
                gap = normalize(Expr.of(atom) ** (n - 1) * rule * n - self.ctx.total(value, d))
                if not gap.is_zero():
                    self.fail(f"rule d/d{d} of {atom.name!r} contradicts its relation", rules_raw[atom.name])

    # combinations
    def combination(self, node: Node) -> Combination:
        if isinstance(node, ListNode):
            if len(node.items) != len(self.labels):
                self.fail(f"multiplier list has {len(node.items)} entries, the system has {len(self.labels)}", node)
            return Combination({(lab, ()): self.ev(x) for lab, x in zip(self.labels, node.items)})
        self.eq_mode = True
        try:
            e = normalize(self.ev(node))
        finally:
            self.eq_mode = False
        terms = {}
        rest = e
        for a in e.deep_atoms():
            if isinstance(a, JetCoord) and a.dep.startswith(_EQ_PREFIX):
                c = diff_atom(e, a)
                if any(isinstance(b, JetCoord) and b.dep.startswith(_EQ_PREFIX) for b in c.deep_atoms()):
                    self.fail("combination is not linear in the equations", node)
                terms[(a.dep[1:], a.index)] = c
                rest = rest - c * Expr.of(a)
        if not normalize(rest).is_zero():
            self.fail("combination has a part that is not a multiple of an equation", node)
        return Combination(terms)

    def flux(self, node: Node) -> tuple[Expr, ...]:
        if isinstance(node, Name) and node.index is None and self.names.get(node.name) == "flux":
            return self.fluxes[node.name]
        if not isinstance(node, ListNode):
            self.fail("expected a flux name or a list", node)
        if len(node.items) != len(self.indep):
            self.fail(f"flux has {len(node.items)} components, there are {len(self.indep)} directions", node)
        return tuple(self.ev(x) for x in node.items)

    def combo_ref(self, node: Node, table: dict) -> Combination:
        if isinstance(node, Name) and node.index is None:
            for t in (table, self.combos, self.certs):
                if node.name in t:
                    return t[node.name]
        if isinstance(node, Name) and node.index is None and node.name not in self.labels:
            self.fail(f"unknown combination {node.name!r}", node)
        self.need_system(node)
        return self.combination(node)

    def need_system(self, node: Node):
        if self.system is None:
            self.fail("this needs a system block first", node)

    def resolve(self) -> Document:
        ast = self.ast
        self.context(ast[0])
        self.system = None
        self.vfields: dict[str, EvolutionaryField] = {}
        self.combos: dict[str, Combination] = {}
        self.certs: dict[str, Combination] = {}
        self.fluxes: dict[str, tuple[Expr, ...]] = {}
        checks = []
        for st in ast[1:]:
            k = st.kind
            if k == "let":
                name = st.get("name")
                self.declare(name, "let", st)
                self.lets[name] = normalize(self.ev(st.get("expr")))
            elif k == "system":
                if self.system is not None:
                    self.fail("only one system block is allowed", st)
                self.build_system(st)
            elif k == "vectorfield":
                name = st.get("name")
                self.declare(name, "vectorfield", st)
                xi, phi = {}, {}
                for target, e in st.get("entries"):
                    if target in self.dep:
                        table = phi
                    elif target in self.indep:
                        table = xi
                    else:
                        self.fail(f"{target!r} is not a variable", e)
                    if target in table:
                        self.fail(f"two entries for {target!r}", e)
                    table[target] = self.ev(e)
                self.vfields[name] = canonicalize_field(self.ctx, xi, phi)
            elif k in ("combo", "certificate"):
                name = st.get("name")
                self.declare(name, k, st)
                self.need_system(st)
                (self.combos if k == "combo" else self.certs)[name] = self.combination(st.get("body"))
            elif k == "syzygy":
                self.fail("declare syzygies inside the system block", st)
            elif k == "flux":
                name = st.get("name")
                self.declare(name, "flux", st)
                self.fluxes[name] = self.flux(st.get("body"))
            elif k == "check":
                checks.append(self.check(st))
        return Document(
            self.ctx, self.system, dict(self.lets), self.vfields, self.combos, self.certs, self.fluxes, checks, ast
        )

    def build_system(self, st: Stmt):
        eqs: dict[str, Expr] = {}
        body = st.get("body")
        count = 0
        for s in body:
            if s.kind != "equation":
                continue
            count += 1
            label = s.get("label") or f"E{count}"
            if label in eqs:
                self.fail(f"equation label {label!r} used twice", s)
            if label in self.names:
                self.fail(f"equation label {label!r} clashes with a {self.names[label]}", s)
            eqs[label] = self.ev(s.get("lhs")) - self.ev(s.get("rhs"))
        self.labels = list(eqs)
        for lab in eqs:
            self.names[lab] = "equation"
        solved = []
        syz = {}
        for s in body:
            if s.kind == "solve":
                label = s.get("label")
                if label not in eqs:
                    self.fail(f"unknown equation {label!r}", s)
                target = s.get("target")
                if not (isinstance(target, Name) and self.names.get(target.name) == "dep"):
                    self.fail("solve target must be a jet coordinate", s)
                solved.append((label, JetCoord(target.name, target.index or ())))
            elif s.kind == "syzygy":
                name = s.get("name")
                self.declare(name, "syzygy", s)
                syz[name] = self.combination(s.get("body"))
        try:
            self.system = DifferentialSystem(self.ctx, eqs, solved, syz)
        except NonTerminatingRanking as exc:
            self.fail(str(exc), st)
        except (ValueError, KeyError) as exc:
            self.fail(str(exc).strip("'\""), st)

    def check(self, st: Stmt) -> Check:
        d: Stmt = st.get("directive")
        kind = d.kind
        args: dict[str, Any] = {}
        for key, val in d.fields:
            if val is None:
                continue
            if key in ("lhs", "rhs"):
                items = val.items if isinstance(val, ListNode) else (val,)
                parts = tuple(tuple(self.ev(t) for t in _summands(x)) for x in items)
                total = tuple(sum(p, ZERO) for p in parts)
                args[key] = total if isinstance(val, ListNode) else total[0]
                args[key + "_parts"] = parts
            elif key in ("lhs", "rhs", "expr", "residual", "lagrangian"):
                args[key] = self.ev(val)
            elif key == "field":
                if val not in self.vfields:
                    self.fail(f"unknown vector field {val!r}", d)
                args[key] = self.vfields[val]
            elif key == "combo":
                args[key] = self.combo_ref(val, self.combos)
            elif key == "cert":
                args[key] = self.combo_ref(val, self.certs)
            elif key in ("flux", "expect", "equivalent", "other"):
                if kind == "classify" and key == "expect":
                    if len(val.items) != len(self.labels):
                        self.fail(f"expected {len(self.labels)} characteristics, got {len(val.items)}", val)
                    args[key] = {lab: self.ev(x) for lab, x in zip(self.labels, val.items)}
                else:
                    args[key] = self.flux(val)
            elif key == "rewrites":
                out = []
                for name, e in val:
                    if self.names.get(name) != "syzygy":
                        self.fail(f"unknown syzygy {name!r}", d)
                    out.append((name, self.ev(e)))
                args[key] = out
            elif key == "trades":
                out = []
                for a, b, e in val:
                    for lab in (a, b):
                        if lab not in self.labels:
                            self.fail(f"unknown equation {lab!r}", d)
                    out.append((a, b, self.ev(e)))
                args[key] = out
            else:
                args[key] = val
        if kind in ("identity", "nonidentity"):
            sides = [args["lhs"], args["rhs"]]
            if isinstance(sides[0], tuple) != isinstance(sides[1], tuple) or (
                isinstance(sides[0], tuple) and len(sides[0]) != len(sides[1])
            ):
                self.fail("both sides must be expressions or lists of the same length", d)
        needs_system = kind not in ("identity", "nonidentity", "notdivergence", "noether", "divergence", "record")
        if needs_system:
            self.need_system(d)
        return Check(st.get("title"), st.get("ref"), kind, args, st.span[0])


def _summands(node: Node) -> list[Node]:
    """Top-level additive terms, with subtraction turned into negation."""
    if isinstance(node, Bin) and node.op in ("+", "-"):
        right = _summands(node.right)
        if node.op == "-":
            right = [Neg(t, span=t.span) for t in right]
        return _summands(node.left) + right
    return [node]


def parse_document(text: str) -> Document:
    """Parse and resolve a ``.pde`` document."""
    return _Resolver(parse_ast(text)).resolve()
