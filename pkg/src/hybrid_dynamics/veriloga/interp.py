"""Fixed-step reference interpreter for the Verilog-A subset.

Semantics, per timestep ``t_j``:

* The first two ports carry the excitation, ``V(port0, port1) = u(t_j)``;
  ``gnd`` and the second port sit at 0.  Every other node is an unknown.
* ``ddt`` is backward Euler against the value a node held at the start of
  the step.  A voltage contribution ``V(x, gnd) <+ e`` on an unknown node
  replaces that start value by ``e`` (a state reset), so variables read
  there still carry the previous step's values.
* ``I(x, gnd) <+ e`` contributions on an unknown node sum to a residual
  that must vanish.  The node voltage is found by fixed-point iteration
  on the ``ddt`` term (cap 50, tolerance 1e-10); the ``ddt`` coefficient
  is measured from two residual evaluations.  Every iteration re-runs the
  block from the previous step's variables.
* ``I(port0, port1) <+ e`` contributions sum to the output sample.

At ``t_0`` every node and variable is 0; samples are returned from
``t_1`` on.  This is a verification aid, not a circuit simulator.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConvergenceError, DivergenceError, VaSyntaxError
from ..spline import spline_eval
from ..waveform import Waveform
from .ast import Access, Assign, Binary, Call, Contribution, Num, Unary, Var, VaModule

MAX_ITER = 50
TOL = 1e-10


def _label(ref) -> str:
    return ref.name if ref.index is None else f"{ref.name}[{ref.index}]"


class _Compiler:
    def __init__(self, module: VaModule):
        self.m = module
        if len(module.ports) < 2:
            raise VaSyntaxError("the module needs at least two ports for the excitation")
        self.pos, self.neg = module.ports[0], module.ports[1]
        names = []
        for e in module.electricals:
            if e.range is None:
                names.append(e.name)
            else:
                lo, hi = e.range
                names.extend(f"{e.name}[{k}]" for k in range(min(lo, hi), max(lo, hi) + 1))
        fixed = {self.pos, self.neg, "gnd", *module.ports[2:]}
        self.unknowns = [x for x in names if x not in fixed]
        self.slot = {x: k for k, x in enumerate(self.unknowns)}
        self.branches = {b.name: (_label(b.pos), _label(b.neg)) for b in module.branches}
        self.vars = {}
        for r in module.reals:
            if r.range is None:
                self.vars[r.name] = len(self.vars)
            else:
                lo, hi = r.range
                for k in range(min(lo, hi), max(lo, hi) + 1):
                    self.vars[f"{r.name}[{k}]"] = len(self.vars)
        self.params = {}
        for p in module.parameters:
            self.params[p.name] = float(eval(self.expr(p.value), {"tanh": math.tanh, "exp": math.exp}))
        self.has_equation = [False] * len(self.unknowns)

    def potential(self, name: str) -> str:
        if name == self.pos:
            return "u"
        if name in self.slot:
            return f"X[{self.slot[name]}]"
        return ""

    def rate(self, name: str) -> str:
        if name == self.pos:
            return "((u - u_prev) / dt)"
        if name in self.slot:
            k = self.slot[name]
            return f"((X[{k}] - H[{k}]) / dt + bump)"
        return ""

    def _pair(self, access: Access, fn) -> str:
        a = fn(_label(access.nodes[0]))
        b = fn(_label(access.nodes[1])) if len(access.nodes) == 2 else ""
        if a and b:
            return f"({a} - {b})"
        if a:
            return a
        if b:
            return f"(-{b})"
        return "0.0"

    def expr(self, e) -> str:
        if isinstance(e, Num):
            return repr(float(e.value))
        if isinstance(e, Var):
            key = e.name if e.index is None else f"{e.name}[{e.index}]"
            if e.index is None and e.name in self.params:
                return repr(self.params[e.name])
            return f"R[{self.vars[key]}]"
        if isinstance(e, Access):
            if e.kind != "V":
                raise VaSyntaxError("reading branch currents is outside the supported subset")
            return self._pair(e, self.potential)
        if isinstance(e, Call):
            if e.func == "ddt":
                return self._pair(e.args[0], self.rate)
            return f"{e.func}({self.expr(e.args[0])})"
        if isinstance(e, Unary):
            return f"(-{self.expr(e.operand)})"
        if isinstance(e, Binary):
            return f"({self.expr(e.left)} {e.op} {self.expr(e.right)})"
        raise TypeError(f"not an expression node: {e!r}")

    def _ends(self, access: Access):
        if access.kind == "I" and len(access.nodes) == 1 and _label(access.nodes[0]) in self.branches:
            return self.branches[_label(access.nodes[0])]
        a = _label(access.nodes[0])
        b = _label(access.nodes[1]) if len(access.nodes) == 2 else "gnd"
        return a, b

    def statement(self, s) -> str:
        if isinstance(s, Assign):
            key = s.target.name if s.target.index is None else f"{s.target.name}[{s.target.index}]"
            return f"R[{self.vars[key]}] = {self.expr(s.expr)}"
        a, b = self._ends(s.target)
        rhs = self.expr(s.expr)
        grounded = lambda x: x not in self.slot and x != self.pos  # noqa: E731
        if s.target.kind == "V":
            if a in self.slot and grounded(b):
                return f"H[{self.slot[a]}] = {rhs}"
            raise VaSyntaxError(f"voltage contribution on ({a}, {b}) is outside the supported subset")
        if (a, b) == (self.pos, self.neg):
            return f"out += {rhs}"
        if (a, b) == (self.neg, self.pos):
            return f"out -= {rhs}"
        if a in self.slot and grounded(b):
            self.has_equation[self.slot[a]] = True
            return f"res[{self.slot[a]}] += {rhs}"
        if b in self.slot and grounded(a):
            self.has_equation[self.slot[b]] = True
            return f"res[{self.slot[b]}] -= {rhs}"
        raise VaSyntaxError(f"current contribution on ({a}, {b}) is outside the supported subset")

    def compile(self):
        body = [self.statement(s) for s in self.m.statements]
        lines = ["def block(X, H, R, u, u_prev, dt, bump):",
                 f"    res = [0.0] * {len(self.unknowns)}",
                 "    out = 0.0"]
        lines += ["    " + line for line in body]
        lines.append("    return res, out")
        scope = {"tanh": math.tanh, "exp": math.exp}
        exec(compile("\n".join(lines), f"<veriloga:{self.m.name}>", "exec"), scope)
        return scope["block"]


class CompiledModule:
    """A module lowered to a Python step function."""

    def __init__(self, module: VaModule):
        comp = _Compiler(module)
        self.block = comp.compile()
        self.unknowns = comp.unknowns
        self.n_vars = len(comp.vars)
        self.has_equation = comp.has_equation

    def run(self, u: np.ndarray, dt: float) -> np.ndarray:
        """Outputs at steps 1..len(u)-1 for excitation samples ``u`` on a grid of step ``dt``."""
        nx = len(self.unknowns)
        x = [0.0] * nx
        r = [0.0] * self.n_vars
        out = np.empty(len(u) - 1)
        eq = [k for k in range(nx) if self.has_equation[k]]
        driven = [k for k in range(nx) if not self.has_equation[k]]
        block = self.block
        for j in range(1, len(u)):
            uj, up = float(u[j]), float(u[j - 1])
            try:
                x_prev = x
                guess = list(x_prev)
                h0 = list(x_prev)
                res0, _ = block(guess, h0, list(r), uj, up, dt, 0.0)
                res1, _ = block(guess, list(x_prev), list(r), uj, up, dt, 1.0)
                coef = [res1[k] - res0[k] for k in range(nx)]
                for k in eq:
                    if coef[k] == 0.0:
                        raise VaSyntaxError(f"equation for node {self.unknowns[k]} has no ddt term")
                res, hist = res0, h0
                for it in range(MAX_ITER):
                    new = list(hist)
                    for k in eq:
                        d = (guess[k] - hist[k]) / dt - res[k] / coef[k]
                        new[k] = hist[k] + dt * d
                    delta = max((abs(new[k] - guess[k]) for k in range(nx)), default=0.0)
                    if not all(math.isfinite(v) for v in new):
                        raise DivergenceError("non-finite node voltage", step=j, iteration=it)
                    guess = new
                    if delta <= TOL:
                        break
                    hist = list(x_prev)
                    res, _ = block(guess, hist, list(r), uj, up, dt, 0.0)
                else:
                    raise ConvergenceError(
                        f"fixed-point iteration did not converge in {MAX_ITER} iterations at step {j}"
                    )
                hist, r_new = list(x_prev), list(r)
                _, o = block(guess, hist, r_new, uj, up, dt, 0.0)
                for k in driven:
                    guess[k] = hist[k]
            except (OverflowError, ZeroDivisionError) as err:
                raise DivergenceError(f"arithmetic failure: {err}", step=j) from None
            if not math.isfinite(o) or not all(math.isfinite(v) for v in r_new):
                raise DivergenceError("non-finite output", step=j)
            x, r = guess, r_new
            out[j - 1] = o
        return out


def time_grid(span_start: float, span_end: float, timestep: float) -> np.ndarray:
    if not timestep > 0:
        raise ValueError("timestep must be positive")
    steps = int(math.floor((span_end - span_start) / timestep + 1e-9))
    if steps < 1:
        raise ValueError("timestep is longer than the excitation span")
    return span_start + timestep * np.arange(steps + 1)


def excitation_samples(excitation: Waveform, grid: np.ndarray) -> np.ndarray:
    value, _, _ = spline_eval(excitation.input_path(), np.minimum(grid, excitation.times[-1]))
    return value[:, 0]


def simulate_subset(module: VaModule, excitation: Waveform, timestep: float) -> Waveform:
    """Transient run of ``module`` driven by the first input channel of ``excitation``.

    The result holds the grid times from ``t_1`` on, the excitation there
    and the ``I(n, p)`` samples as ``y``.
    """
    grid = time_grid(excitation.times[0], excitation.times[-1], timestep)
    u = excitation_samples(excitation, grid)
    y = CompiledModule(module).run(u, float(timestep))
    return Waveform(f"{excitation.id}-va", grid[1:], u[1:], y, {"timestep": float(timestep)})
