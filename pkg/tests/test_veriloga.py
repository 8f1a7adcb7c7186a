from pathlib import Path

import numpy as np
import pytest

from hybrid_dynamics.data import NormStats
from hybrid_dynamics.errors import ConfigError, VaSyntaxError
from hybrid_dynamics.models import CTRNN, NCDE, NCDE_RNN, NODE_RNN, ModelConfig, init_params
from hybrid_dynamics.veriloga import (
    build_module,
    export_veriloga,
    parse_subset,
    print_module,
    roundtrip_verify,
    simulate_subset,
)
from hybrid_dynamics.waveform import Waveform

GOLDEN = Path(__file__).parent / "data" / "golden_node_rnn.va"
STATS = NormStats(u_min=-2.0, u_max=2.0, y_min=-0.5, y_max=1.0)


def small_model(kind=NODE_RNN, hidden=2, seed=7):
    cfg = ModelConfig(kind, hidden=hidden, field_hidden=(3,), readout_hidden=3)
    params = init_params(cfg, seed)
    # nonzero biases exercise the signed constant terms
    jitter = 0.2 * np.random.default_rng(seed).standard_normal(params.size)
    return cfg, params.unflatten(params.flatten() + jitter)


def sine(amplitude=1.0, frequency=0.2, samples=129):
    t = np.linspace(0.0, 1.0 / frequency, samples)
    return Waveform("sine", t, amplitude * np.sin(2 * np.pi * frequency * t), np.zeros(samples))


def test_golden_snapshot():
    cfg, params = small_model()
    assert export_veriloga(cfg, params, STATS) == GOLDEN.read_text()


def test_header_and_hidden_nodes():
    cfg = ModelConfig(NODE_RNN, hidden=16)
    text = export_veriloga(cfg, init_params(cfg, 0), STATS)
    lines = text.splitlines()
    assert lines[:2] == ['`include "constants.vams"', '`include "disciplines.vams"']
    assert "electrical h[0:15];" in lines
    assert "module node_rnn(n, p, gnd);" in lines
    assert sum(line.startswith("branch (h[") for line in lines) == 16


@pytest.mark.parametrize("kind", [NODE_RNN, NCDE_RNN])
@pytest.mark.parametrize("hidden", [1, 5])
def test_export_parses_and_reprints_identically(kind, hidden):
    cfg, params = small_model(kind, hidden)
    text = export_veriloga(cfg, params, STATS)
    module = parse_subset(text)
    assert print_module(module) == text
    assert print_module(build_module(cfg, params, STATS)) == text
    assert len(module.hidden_nodes()) == hidden


def test_cde_export_uses_input_rate():
    cfg, params = small_model(NCDE_RNN)
    text = export_veriloga(cfg, params, STATS)
    assert "ddt(V(n, p))" in text
    assert "du_in" in text
    assert "du_in" not in export_veriloga(*small_model(NODE_RNN), STATS)


def test_module_name_override():
    cfg, params = small_model()
    assert export_veriloga(cfg, params, STATS, name="diode_rc").startswith('`include')
    assert "module diode_rc(n, p, gnd);" in export_veriloga(cfg, params, STATS, name="diode_rc")


def test_undeclared_node_is_named():
    cfg, params = small_model()
    text = export_veriloga(cfg, params, STATS).replace("V(h[1], gnd) <+", "V(hx, gnd) <+")
    with pytest.raises(VaSyntaxError, match="'hx'"):
        parse_subset(text)


def test_syntax_error_has_position():
    cfg, params = small_model()
    text = export_veriloga(cfg, params, STATS).replace("u_in = ", "u_in = * ", 1)
    with pytest.raises(VaSyntaxError) as info:
        parse_subset(text)
    assert info.value.line is not None and info.value.line > 1
    assert info.value.column is not None
    assert str(info.value).startswith(f"line {info.value.line}, column")


def test_unsupported_construct_rejected():
    cfg, params = small_model()
    text = export_veriloga(cfg, params, STATS).replace("analog begin", "analog begin\n  if (1) begin end")
    with pytest.raises(VaSyntaxError, match="if"):
        parse_subset(text)


def test_comments_are_ignored():
    cfg, params = small_model()
    text = export_veriloga(cfg, params, STATS)
    noisy = "// header\n" + text.replace("analog begin", "/* block\n comment */ analog begin // go")
    assert parse_subset(noisy) == parse_subset(text)


@pytest.mark.parametrize("kind", [CTRNN, NCDE])
def test_non_hybrid_kinds_refuse_export(kind):
    cfg, params = small_model(kind)
    with pytest.raises(ConfigError):
        export_veriloga(cfg, params, STATS)


def test_untrained_parameters_refused():
    cfg, params = small_model()
    with pytest.raises(ConfigError):
        export_veriloga(cfg, None, STATS)
    with pytest.raises(ConfigError):
        export_veriloga(cfg, init_params(ModelConfig(NODE_RNN, hidden=3, field_hidden=(3,), readout_hidden=3), 0),
                        STATS)
    bad = params.unflatten(np.full(params.size, np.nan))
    with pytest.raises(ConfigError):
        export_veriloga(cfg, bad, STATS)


@pytest.mark.parametrize("kind", [NODE_RNN, NCDE_RNN])
def test_zero_weights_give_constant_output(kind):
    cfg, params = small_model(kind)
    zero = params.unflatten(np.zeros(params.size))
    last = max(k for k in zero.group("readout") if k.startswith("b"))
    zero = zero.with_group("readout", {last: np.array([0.25])})
    module = parse_subset(export_veriloga(cfg, zero, STATS))
    w = simulate_subset(module, sine(), 0.05)
    gain, offset = STATS.y_affine()
    np.testing.assert_array_equal(w.y, np.full_like(w.y, gain * 0.25 + offset))
    report = roundtrip_verify(cfg, zero, STATS, sine(), 0.05)
    assert report["max_abs_error"] == 0.0
    assert report["nrmse"] == 0.0


LINEAR = """`include "disciplines.vams"

module decay(n, p, gnd);
inout n, p, gnd;
electrical n, p, gnd;
electrical x[0:0];
branch (x[0], gnd) X0;
real s[0:0];

analog begin
  V(x[0], gnd) <+ s[0];
  I(X0) <+ (-(1 + V(x[0], gnd))) - ddt(V(x[0], gnd));
  s[0] = V(x[0], gnd);
  I(n, p) <+ 1 + V(x[0], gnd);
end
endmodule
"""


def test_linear_decay_is_backward_euler():
    # with x = 1 + v the node obeys dx/dt = -x from x(0) = 1
    module = parse_subset(LINEAR)
    assert print_module(module) == LINEAR
    quiet = Waveform("zero", [0.0, 0.5, 1.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0])
    errors = []
    for dt in (0.1, 0.05, 0.025, 0.0125):
        w = simulate_subset(module, quiet, dt)
        steps = np.arange(1, len(w.y) + 1)
        np.testing.assert_allclose(w.y[:, 0], (1.0 + dt) ** -steps, rtol=1e-9)
        np.testing.assert_allclose(w.times, dt * steps, rtol=1e-12)
        errors.append(abs(w.y[-1, 0] - np.exp(-1.0)))
    ratios = np.array(errors[:-1]) / np.array(errors[1:])
    assert np.all((ratios > 1.8) & (ratios < 2.2))


@pytest.mark.parametrize("kind", [NODE_RNN, NCDE_RNN])
def test_roundtrip_matches_native(kind):
    cfg, params = small_model(kind, hidden=3)
    ex = sine()
    period = ex.times[-1]
    report = roundtrip_verify(cfg, params, STATS, ex, period / 1024, training_nrmse=0.05)
    assert report["nrmse"] <= 1e-3
    assert report["steps"] == 1024
    assert report["exceeds_training_error"] is False


def test_roundtrip_error_shrinks_with_timestep():
    cfg, params = small_model(NCDE_RNN, hidden=3)
    ex = sine()
    period = ex.times[-1]
    errors = [roundtrip_verify(cfg, params, STATS, ex, period / d)["nrmse"] for d in (64, 128, 256, 512)]
    assert all(a > b for a, b in zip(errors, errors[1:]))
