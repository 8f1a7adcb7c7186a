"""Syntax tree for the Verilog-A subset and its canonical printer."""

from __future__ import annotations

from dataclasses import dataclass, field

# -- expressions -------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str
    index: int | None = None


@dataclass(frozen=True)
class NodeRef:
    name: str
    index: int | None = None


@dataclass(frozen=True)
class Access:
    """``V(a, b)``, ``V(a)``, ``I(a, b)`` or ``I(branch)``."""

    kind: str  # "V" or "I"
    nodes: tuple  # one or two NodeRef


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


@dataclass(frozen=True)
class Unary:
    op: str
    operand: object


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object


FUNCTIONS = ("tanh", "exp", "ddt")

# -- declarations and statements --------------------------------------------


@dataclass(frozen=True)
class Electrical:
    name: str
    range: tuple | None = None  # (lo, hi) for vectors


@dataclass(frozen=True)
class Branch:
    pos: NodeRef
    neg: NodeRef
    name: str


@dataclass(frozen=True)
class Parameter:
    name: str
    value: object


@dataclass(frozen=True)
class Real:
    name: str
    range: tuple | None = None


@dataclass(frozen=True)
class Assign:
    target: Var
    expr: object


@dataclass(frozen=True)
class Contribution:
    target: Access
    expr: object


@dataclass
class VaModule:
    name: str
    ports: list
    includes: list = field(default_factory=list)
    inouts: list = field(default_factory=list)
    electricals: list = field(default_factory=list)
    branches: list = field(default_factory=list)
    parameters: list = field(default_factory=list)
    reals: list = field(default_factory=list)
    statements: list = field(default_factory=list)

    def hidden_nodes(self) -> list[str]:
        """Names of the elements of vector nodes, e.g. ``h[0]``."""
        out = []
        for e in self.electricals:
            if e.range is not None:
                lo, hi = e.range
                out.extend(f"{e.name}[{k}]" for k in range(min(lo, hi), max(lo, hi) + 1))
        return out


# -- printing ----------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def format_number(x: float) -> str:
    return "%.17g" % x


def _ref(r: NodeRef) -> str:
    return r.name if r.index is None else f"{r.name}[{r.index}]"


def print_expr(e, parent: int = 0) -> str:
    if isinstance(e, Num):
        text = format_number(e.value)
        return f"({text})" if text.startswith("-") and parent > 0 else text
    if isinstance(e, Var):
        return e.name if e.index is None else f"{e.name}[{e.index}]"
    if isinstance(e, Access):
        return f"{e.kind}(" + ", ".join(_ref(r) for r in e.nodes) + ")"
    if isinstance(e, Call):
        return f"{e.func}(" + ", ".join(print_expr(a) for a in e.args) + ")"
    if isinstance(e, Unary):
        inner = print_expr(e.operand, 3)
        text = f"-{inner}"
        return f"({text})" if parent > 0 else text
    if isinstance(e, Binary):
        p = _PREC[e.op]
        left = print_expr(e.left, p)
        # equal precedence on the right needs grouping for - and /, and is
        # kept for + and * so the printed tree shape survives a reparse
        right = print_expr(e.right, p + 1)
        text = f"{left} {e.op} {right}"
        return f"({text})" if p < parent else text
    raise TypeError(f"not an expression node: {e!r}")


def _range(r) -> str:
    return "" if r is None else f"[{r[0]}:{r[1]}]"


def _grouped(keyword, decls):
    """One line per vector, consecutive scalars share a line."""
    lines, run = [], []
    for d in list(decls) + [None]:
        if d is not None and d.range is None:
            run.append(d.name)
            continue
        if run:
            lines.append(f"{keyword} " + ", ".join(run) + ";")
            run = []
        if d is not None:
            lines.append(f"{keyword} {d.name}{_range(d.range)};")
    return lines


def print_module(m: VaModule) -> str:
    lines = [f'`include "{inc}"' for inc in m.includes]
    if m.includes:
        lines.append("")
    lines.append(f"module {m.name}(" + ", ".join(m.ports) + ");")
    if m.inouts:
        lines.append("inout " + ", ".join(m.inouts) + ";")
    lines.extend(_grouped("electrical", m.electricals))
    for b in m.branches:
        lines.append(f"branch ({_ref(b.pos)}, {_ref(b.neg)}) {b.name};")
    for p in m.parameters:
        lines.append(f"parameter real {p.name} = {print_expr(p.value)};")
    lines.extend(_grouped("real", m.reals))
    lines.append("")
    lines.append("analog begin")
    for s in m.statements:
        if isinstance(s, Assign):
            lines.append(f"  {print_expr(s.target)} = {print_expr(s.expr)};")
        else:
            lines.append(f"  {print_expr(s.target)} <+ {print_expr(s.expr)};")
    lines.append("end")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"
