"""Tokenizer, recursive-descent parser and checker for the Verilog-A subset.

The subset covers what the exporter emits: includes, one module with
``inout``/``electrical``/``branch``/``parameter real``/``real``
declarations and a single ``analog begin ... end`` block made of
assignments and ``<+`` contributions.  Expressions use ``+ - * /``, unary
minus, ``tanh``, ``exp``, ``ddt``, ``V()``/``I()`` accesses, numbers and
(indexed) variables.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import VaSyntaxError
from .ast import (
    FUNCTIONS, Access, Assign, Binary, Branch, Call, Contribution, Electrical, NodeRef, Num,
    Parameter, Real, Unary, Var, VaModule,
)

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<directive>`[A-Za-z_]\w*)
  | (?P<string>"[^"\n]*")
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_]\w*)
  | (?P<op><\+|[()\[\],;:=+\-*/])
""", re.VERBOSE | re.DOTALL)

_UNSUPPORTED = {
    "if", "else", "for", "while", "case", "repeat", "function", "analysis", "initial_step",
    "final_step", "integer", "genvar", "localparam", "input", "output", "ground",
    "discipline", "nature", "module", "endmodule", "analog", "begin", "end",
}


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens, pos, line, line_start = [], 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise VaSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        chunk = m.group()
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, message, tok=None):
        tok = tok or self.tok
        return VaSyntaxError(message, tok.line, tok.col)

    def take(self, text=None, kind=None) -> Token:
        tok = self.tok
        if (text is not None and tok.text != text) or (kind is not None and tok.kind != kind):
            want = repr(text) if text is not None else kind
            got = repr(tok.text) if tok.kind != "eof" else "end of input"
            raise self.error(f"expected {want}, got {got}")
        self.i += 1
        return tok

    def at(self, text) -> bool:
        return self.tok.text == text and self.tok.kind in ("ident", "op", "directive")

    def ident(self) -> str:
        tok = self.tok
        if tok.kind != "ident":
            raise self.error(f"expected a name, got {tok.text!r}")
        if tok.text in _UNSUPPORTED:
            raise self.error(f"unsupported construct {tok.text!r}")
        self.i += 1
        return tok.text

    def integer(self) -> int:
        tok = self.take(kind="number")
        if not tok.text.isdigit():
            raise self.error(f"expected an integer, got {tok.text!r}", tok)
        return int(tok.text)

    # -- module structure
    def module(self) -> VaModule:
        includes = []
        while self.tok.kind == "directive":
            if self.tok.text != "`include":
                raise self.error(f"unsupported construct {self.tok.text!r}")
            self.i += 1
            includes.append(self.take(kind="string").text[1:-1])
        self.take("module")
        name = self.ident()
        self.take("(")
        ports = self.name_list()
        self.take(")")
        self.take(";")
        m = VaModule(name=name, ports=ports, includes=includes)
        while not self.at("analog"):
            self.declaration(m)
        self.take("analog")
        self.take("begin")
        while not self.at("end"):
            if self.tok.kind == "eof":
                raise self.error("missing 'end' of analog block")
            m.statements.append(self.statement())
        self.take("end")
        self.take("endmodule")
        if self.tok.kind != "eof":
            raise self.error(f"unexpected text after endmodule: {self.tok.text!r}")
        return m

    def name_list(self) -> list[str]:
        names = [self.ident()]
        while self.at(","):
            self.i += 1
            names.append(self.ident())
        return names

    def opt_range(self):
        if not self.at("["):
            return None
        self.i += 1
        lo = self.integer()
        self.take(":")
        hi = self.integer()
        self.take("]")
        return (lo, hi)

    def declaration(self, m: VaModule):
        tok = self.tok
        if tok.kind == "eof":
            raise self.error("missing analog block")
        word = tok.text
        if word == "inout":
            self.i += 1
            m.inouts.extend(self.name_list())
        elif word == "electrical":
            self.i += 1
            while True:
                name = self.ident()
                m.electricals.append(Electrical(name, self.opt_range()))
                if not self.at(","):
                    break
                self.i += 1
        elif word == "branch":
            self.i += 1
            self.take("(")
            pos = self.node_ref()
            self.take(",")
            neg = self.node_ref()
            self.take(")")
            m.branches.append(Branch(pos, neg, self.ident()))
        elif word == "parameter":
            self.i += 1
            self.take("real")
            name = self.ident()
            self.take("=")
            m.parameters.append(Parameter(name, self.expr()))
        elif word == "real":
            self.i += 1
            while True:
                name = self.ident()
                m.reals.append(Real(name, self.opt_range()))
                if not self.at(","):
                    break
                self.i += 1
        else:
            raise self.error(f"unsupported construct {word!r}")
        self.take(";")

    def node_ref(self) -> NodeRef:
        name = self.ident()
        if self.at("["):
            self.i += 1
            idx = self.integer()
            self.take("]")
            return NodeRef(name, idx)
        return NodeRef(name)

    def statement(self):
        if self.tok.text in ("V", "I") and self.peek().text == "(":
            target = self.access()
            self.take("<+")
            expr = self.expr()
            self.take(";")
            return Contribution(target, expr)
        name = self.ident()
        idx = None
        if self.at("["):
            self.i += 1
            idx = self.integer()
            self.take("]")
        self.take("=")
        expr = self.expr()
        self.take(";")
        return Assign(Var(name, idx), expr)

    def access(self) -> Access:
        kind = self.take(kind="ident").text
        self.take("(")
        nodes = [self.node_ref()]
        if self.at(","):
            self.i += 1
            nodes.append(self.node_ref())
        self.take(")")
        return Access(kind, tuple(nodes))

    # -- expressions
    def expr(self):
        left = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.take().text
            left = Binary(op, left, self.term())
        return left

    def term(self):
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.take().text
            left = Binary(op, left, self.unary())
        return left

    def unary(self):
        if self.at("-"):
            self.i += 1
            return Unary("-", self.unary())
        if self.at("+"):
            self.i += 1
            return self.unary()
        return self.primary()

    def primary(self):
        tok = self.tok
        if tok.kind == "number":
            self.i += 1
            return Num(float(tok.text))
        if self.at("("):
            self.i += 1
            e = self.expr()
            self.take(")")
            return e
        if tok.kind == "ident":
            if tok.text in ("V", "I") and self.peek().text == "(":
                return self.access()
            name = self.ident()
            if self.at("("):
                if name not in FUNCTIONS:
                    raise self.error(f"unsupported function {name!r}", tok)
                self.i += 1
                args = [self.expr()]
                while self.at(","):
                    self.i += 1
                    args.append(self.expr())
                self.take(")")
                return Call(name, tuple(args))
            if self.at("["):
                self.i += 1
                idx = self.integer()
                self.take("]")
                return Var(name, idx)
            return Var(name)
        raise self.error(f"unexpected {tok.text!r}" if tok.kind != "eof" else "unexpected end of input")


def _walk(e):
    yield e
    if isinstance(e, Call):
        for a in e.args:
            yield from _walk(a)
    elif isinstance(e, Unary):
        yield from _walk(e.operand)
    elif isinstance(e, Binary):
        yield from _walk(e.left)
        yield from _walk(e.right)


def validate(m: VaModule):
    """Check names, arities and the ``ddt`` restriction; raises ``VaSyntaxError``."""
    nodes = {}
    for e in m.electricals:
        if e.name in nodes:
            raise VaSyntaxError(f"node {e.name!r} declared twice")
        nodes[e.name] = e.range
    branches = {b.name: b for b in m.branches}
    scalars, arrays = set(), {}
    for p in m.parameters:
        scalars.add(p.name)
    for r in m.reals:
        if r.range is None:
            scalars.add(r.name)
        else:
            arrays[r.name] = r.range

    def check_node(ref: NodeRef):
        if ref.name not in nodes:
            label = ref.name if ref.index is None else f"{ref.name}[{ref.index}]"
            raise VaSyntaxError(f"undeclared node {label!r}")
        rng = nodes[ref.name]
        if (rng is None) != (ref.index is None):
            raise VaSyntaxError(f"node {ref.name!r} used with the wrong indexing")
        if rng is not None and not min(rng) <= ref.index <= max(rng):
            raise VaSyntaxError(f"undeclared node '{ref.name}[{ref.index}]' (range {rng[0]}:{rng[1]})")

    def check_access(a: Access):
        if a.kind not in ("V", "I"):
            raise VaSyntaxError(f"unsupported access function {a.kind!r}")
        if a.kind == "I" and len(a.nodes) == 1 and a.nodes[0].index is None and a.nodes[0].name in branches:
            return
        for ref in a.nodes:
            check_node(ref)

    def check_var(v: Var):
        if v.index is None:
            if v.name not in scalars:
                raise VaSyntaxError(f"undeclared variable {v.name!r}")
        else:
            if v.name not in arrays:
                raise VaSyntaxError(f"undeclared array {v.name!r}")
            lo, hi = arrays[v.name]
            if not min(lo, hi) <= v.index <= max(lo, hi):
                raise VaSyntaxError(f"index {v.index} outside {v.name}[{lo}:{hi}]")

    def check_expr(e):
        for node in _walk(e):
            if isinstance(node, Access):
                check_access(node)
            elif isinstance(node, Var):
                check_var(node)
            elif isinstance(node, Call):
                if len(node.args) != 1:
                    raise VaSyntaxError(f"{node.func} takes one argument")
                if node.func == "ddt" and not (isinstance(node.args[0], Access) and node.args[0].kind == "V"):
                    raise VaSyntaxError("ddt is only supported on a V() access")

    for port in m.ports:
        if port not in nodes:
            raise VaSyntaxError(f"undeclared node {port!r}")
    for b in m.branches:
        check_node(b.pos)
        check_node(b.neg)
    for p in m.parameters:
        check_expr(p.value)
    for s in m.statements:
        if isinstance(s, Assign):
            if s.target.name in {p.name for p in m.parameters}:
                raise VaSyntaxError(f"cannot assign to parameter {s.target.name!r}")
            check_var(s.target)
        else:
            check_access(s.target)
        check_expr(s.expr)


def parse_subset(text: str) -> VaModule:
    """Parse and check Verilog-A source in the supported subset."""
    module = _Parser(text).module()
    validate(module)
    return module
