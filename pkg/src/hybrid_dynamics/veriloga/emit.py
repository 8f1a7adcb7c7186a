"""Build a Verilog-A module from a trained hybrid model.

Each hidden state lives on an internal node ``h[k]`` tied to ground by a
branch ``Hk``.  The branch current is the neural field minus
``timescale * ddt(V(h[k]))``; driving it to zero makes the node voltage
follow the learned dynamics.  The RNN jump and readout are plain real
assignments, and the input/output normalization is folded into literal
affine maps on ``V(n, p)`` and ``I(n, p)``.
"""

from __future__ import annotations

import numpy as np

from ..data import NormStats
from ..errors import ConfigError, ShapeError
from ..models import NCDE_RNN, NODE_RNN, ModelConfig, check_params
from ..nn import ParamStore
from .ast import (
    Access, Assign, Binary, Branch, Call, Contribution, Electrical, NodeRef, Num, Parameter,
    Real, Var, VaModule, print_module,
)

INCLUDES = ["constants.vams", "disciplines.vams"]
GND = NodeRef("gnd")


def _h(k) -> Access:
    return Access("V", (NodeRef("h", k), GND))


def _affine(gain: float, x, offset: float):
    scaled = Binary("*", Num(gain), x)
    if np.signbit(offset):
        return Binary("-", scaled, Num(-offset))
    return Binary("+", scaled, Num(offset))


def weighted_sum(weights, inputs, bias: float):
    """``sum_i w_i * x_i + b`` with signs folded into the operators."""
    expr = None
    for w, x in zip(weights, inputs):
        w = float(w)
        if expr is None:
            expr = Binary("*", Num(w), x)
        elif np.signbit(w):
            expr = Binary("-", expr, Binary("*", Num(-w), x))
        else:
            expr = Binary("+", expr, Binary("*", Num(w), x))
    bias = float(bias)
    if expr is None:
        return Num(bias)
    return Binary("-", expr, Num(-bias)) if np.signbit(bias) else Binary("+", expr, Num(bias))


def _mlp_layers(group, prefix, inputs, reals, stmts):
    """Emit hidden layers as real arrays; returns the output-layer expressions."""
    n_layers = len([k for k in group if k.startswith("W")])
    current = list(inputs)
    for k in range(n_layers - 1):
        w, b = group[f"W{k}"], group[f"b{k}"]
        name = f"{prefix}{k}"
        reals.append(Real(name, (0, w.shape[0] - 1)))
        for j in range(w.shape[0]):
            stmts.append(Assign(Var(name, j), Call("tanh", (weighted_sum(w[j], current, b[j]),))))
        current = [Var(name, j) for j in range(w.shape[0])]
    w, b = group[f"W{n_layers - 1}"], group[f"b{n_layers - 1}"]
    return [weighted_sum(w[j], current, b[j]) for j in range(w.shape[0])]


def build_module(config: ModelConfig, params: ParamStore, stats: NormStats,
                 name: str | None = None) -> VaModule:
    if config.kind not in (NODE_RNN, NCDE_RNN):
        raise ConfigError(f"Verilog-A export supports NODE-RNN and NCDE-RNN, not {config.kind}")
    if config.input_dim != 1 or config.output_dim != 1:
        raise ConfigError("Verilog-A export needs a single input and a single output channel")
    if params is None:
        raise ConfigError("export needs trained parameters, got none")
    try:
        check_params(config, params)
    except ShapeError as err:
        raise ConfigError(f"parameters do not belong to a trained {config.kind}: {err}") from None
    if not np.all(np.isfinite(params.flatten())):
        raise ConfigError("parameters contain non-finite values")

    n = config.hidden
    cde = config.is_cde
    name = name or config.kind.lower().replace("-", "_")
    m = VaModule(name=name, ports=["n", "p", "gnd"], includes=list(INCLUDES))
    m.inouts = ["n", "p", "gnd"]
    m.electricals = [Electrical("n"), Electrical("p"), Electrical("gnd"), Electrical("h", (0, n - 1))]
    m.branches = [Branch(NodeRef("h", k), GND, f"H{k}") for k in range(n)]
    m.parameters = [Parameter("timescale", Num(float(stats.time_scale)))]
    reals = [Real("u_in")] + ([Real("du_in")] if cde else []) + [Real("rnn", (0, n - 1))]
    stmts = []

    vin = Access("V", (NodeRef("n"), NodeRef("p")))
    u_gain, u_off = stats.u_affine()
    stmts.append(Assign(Var("u_in"), _affine(u_gain, vin, u_off)))
    if cde:
        rate = Binary("*", Binary("*", Num(u_gain), Var("timescale")), Call("ddt", (vin,)))
        stmts.append(Assign(Var("du_in"), rate))

    # hidden nodes restart each step from the post-jump state
    for k in range(n):
        stmts.append(Contribution(_h(k), Var("rnn", k)))

    field = _mlp_layers(params.group("field"), "f", [_h(k) for k in range(n)], reals, stmts)
    for k in range(n):
        drive = Binary("*", field[k], Var("du_in")) if cde else field[k]
        settle = Binary("*", Var("timescale"), Call("ddt", (_h(k),)))
        stmts.append(Contribution(Access("I", (NodeRef(f"H{k}"),)), Binary("-", drive, settle)))

    rnn = params.group("rnn")
    cell_in = [_h(k) for k in range(n)] + [Var("u_in")]
    cell_w = np.concatenate([rnn["W_h"], rnn["W_u"]], axis=1)
    for k in range(n):
        stmts.append(Assign(Var("rnn", k), Call("tanh", (weighted_sum(cell_w[k], cell_in, rnn["b"][k]),))))

    ro_in = [Var("rnn", k) for k in range(n)] + [Var("u_in")] + ([Var("du_in")] if cde else [])
    out = _mlp_layers(params.group("readout"), "r", ro_in, reals, stmts)
    reals.append(Real("out"))
    stmts.append(Assign(Var("out"), out[0]))
    y_gain, y_off = stats.y_affine()
    stmts.append(Contribution(Access("I", (NodeRef("n"), NodeRef("p"))), _affine(y_gain, Var("out"), y_off)))

    m.reals = reals
    m.statements = stmts
    return m


def export_veriloga(config: ModelConfig, params: ParamStore, stats: NormStats,
                    name: str | None = None) -> str:
    """Verilog-A source text for a trained NODE-RNN or NCDE-RNN."""
    return print_module(build_module(config, params, stats, name))
