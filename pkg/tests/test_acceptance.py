"""Acceptance criteria A1 to A7; each test prints one PASS or FAIL line."""

import json
import time

import numpy as np
import pytest

from hybrid_dynamics.cli import main
from hybrid_dynamics.data import CorpusConfig, NormStats, generate_corpus, normalize_corpus, split_corpus
from hybrid_dynamics.gradcheck import ADJOINT_TOL, FD_TOL, MIN_RATIO, GradcheckConfig, run_suite
from hybrid_dynamics.models import CTRNN, NCDE, NCDE_RNN, NODE_RNN, ModelConfig, init_params, model_forward, readout, rnn_cell
from hybrid_dynamics.ode import SolveConfig, rk4_solve
from hybrid_dynamics.spline import fit_natural_cubic, spline_eval
from hybrid_dynamics.training import TrainConfig, train
from hybrid_dynamics.veriloga import roundtrip_verify
from hybrid_dynamics.waveform import Waveform

BENCH_EPOCHS = 60
BENCH_LR = 1e-3
BENCH_BUDGET_S = 30 * 60


def test_a1_gradient_oracle_triangle(criterion):
    with criterion("A1", "gradient-oracle triangle") as c:
        start = time.process_time()
        report = run_suite(GradcheckConfig(models=20, substeps=8, fd_step=1e-5))
        elapsed = time.process_time() - start
        worst = report["worst"]
        c.detail = (f"{len(report['cases'])} models, fd {worst['fd_vs_discrete']:.1e}, "
                    f"adjoint {worst['adjoint_vs_discrete']:.1e}, ratio {worst['doubling_ratio']:.1f}, "
                    f"{elapsed:.0f} s")
        assert {case["kind"] for case in report["cases"]} == {CTRNN, NCDE, NODE_RNN, NCDE_RNN}
        assert worst["fd_vs_discrete"] <= FD_TOL == 1e-5
        assert worst["adjoint_vs_discrete"] <= ADJOINT_TOL == 1e-3
        assert worst["doubling_ratio"] >= MIN_RATIO == 8.0
        assert elapsed < 120.0


def test_a2_solver_order(criterion):
    with criterion("A2", "RK4 order on dx/dt = -x") as c:
        errors = [abs(rk4_solve(lambda t, x: -x, [1.0], 0.0, 1.0, SolveConfig(n))[0] - np.exp(-1.0))
                  for n in (4, 8, 16, 32)]
        ratios = [a / b for a, b in zip(errors, errors[1:])]
        c.detail = "ratios " + ", ".join(f"{r:.2f}" for r in ratios)
        assert len(ratios) == 3
        assert all(12.0 <= r <= 20.0 for r in ratios)


def tridiagonal_oracle(t, y):
    """Natural-spline moments by a plain Thomas sweep."""
    n = len(t)
    h = np.diff(t)
    sub, diag, sup, rhs = np.zeros(n), np.ones(n), np.zeros(n), np.zeros(n)
    for i in range(1, n - 1):
        sub[i], diag[i], sup[i] = h[i - 1], 2.0 * (h[i - 1] + h[i]), h[i]
        rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1])
    for i in range(1, n):
        w = sub[i] / diag[i - 1]
        diag[i] -= w * sup[i - 1]
        rhs[i] -= w * rhs[i - 1]
    m = np.zeros(n)
    m[-1] = rhs[-1] / diag[-1]
    for i in range(n - 2, -1, -1):
        m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i]
    return m


def oracle_value(t, y, m, s):
    i = min(np.searchsorted(t, s, side="right") - 1, len(t) - 2)
    h = t[i + 1] - t[i]
    a, b = t[i + 1] - s, s - t[i]
    return (m[i] * a ** 3 + m[i + 1] * b ** 3) / (6 * h) + (y[i] / h - m[i] * h / 6) * a \
        + (y[i + 1] / h - m[i + 1] * h / 6) * b


def test_a3_spline_suite(criterion):
    with criterion("A3", "natural cubic spline suite") as c:
        t3, y3 = np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.0, 0.0])
        value = spline_eval(fit_natural_cubic(t3, y3), 0.5)[0][0]
        assert abs(value - 0.6875) <= 1e-12
        assert abs(oracle_value(t3, y3, tridiagonal_oracle(t3, y3), 0.5) - 0.6875) <= 1e-12

        rng = np.random.default_rng(0)
        worst = {"knots": 0.0, "continuity": 0.0, "ends": 0.0, "oracle": 0.0}
        for _ in range(50):
            n = int(rng.integers(3, 40))
            t = np.cumsum(rng.uniform(0.05, 2.0, n))
            y = rng.standard_normal(n)
            path = fit_natural_cubic(t, y)
            v, _, d2 = spline_eval(path, t)
            worst["knots"] = max(worst["knots"], np.max(np.abs(v[:, 0] - y)))
            worst["ends"] = max(worst["ends"], abs(d2[0, 0]), abs(d2[-1, 0]))
            for i in range(1, n - 1):
                left = path.piece(i - 1, t[i] - t[i - 1])
                right = path.piece(i, 0.0)
                worst["continuity"] = max(worst["continuity"], abs(left[1][0] - right[1][0]),
                                          abs(left[2][0] - right[2][0]))
            s = rng.uniform(t[0], t[-1], 20)
            m = tridiagonal_oracle(t, y)
            ref = np.array([oracle_value(t, y, m, x) for x in s])
            worst["oracle"] = max(worst["oracle"], np.max(np.abs(spline_eval(path, s)[0][:, 0] - ref)))
        c.detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
        assert worst["knots"] <= 1e-12
        assert worst["continuity"] <= 1e-9
        assert worst["ends"] <= 1e-9
        assert worst["oracle"] <= 1e-9


@pytest.mark.slow
def test_a4_benchmark_ordering(criterion):
    with criterion("A4", "benchmark ordering NODE-RNN < CTRNN, NCDE-RNN < NCDE") as c:
        start = time.process_time()
        waveforms = generate_corpus(CorpusConfig())
        train_raw, test_raw = split_corpus(waveforms, 0.8, seed=0)
        train_set, stats = normalize_corpus(train_raw)
        test_set = [stats.apply(w) for w in test_raw]
        assert (len(train_set), len(test_set)) == (128, 32)
        scores = {}
        for kind in (CTRNN, NODE_RNN, NCDE, NCDE_RNN):
            model = ModelConfig(kind)
            result = train(TrainConfig(epochs=BENCH_EPOCHS, learning_rate=BENCH_LR), model, train_set, test_set)
            scores[kind] = result.history[-1]["test_nrmse"]
        elapsed = time.process_time() - start
        node_gain = 1.0 - scores[NODE_RNN] / scores[CTRNN]
        cde_gain = 1.0 - scores[NCDE_RNN] / scores[NCDE]
        c.detail = (", ".join(f"{k} {100 * v:.2f}" for k, v in scores.items())
                    + f" (NRMSE x1e2); gains {100 * node_gain:.0f}% and {100 * cde_gain:.0f}%, {elapsed / 60:.1f} min")
        assert [ModelConfig(k).hidden for k in (CTRNN, NCDE, NODE_RNN, NCDE_RNN)] == [27, 16, 16, 16]
        assert node_gain >= 0.10
        assert cde_gain >= 0.10
        assert elapsed <= BENCH_BUDGET_S


def test_a5_export_round_trip(criterion):
    with criterion("A5", "Verilog-A export round trip") as c:
        waveforms = generate_corpus(CorpusConfig(count=16, samples=32))
        train_set, stats = normalize_corpus(waveforms)
        period = 5.0
        t = np.linspace(0.0, period, 129)
        excitation = Waveform("sine", t, np.sin(2 * np.pi * t / period), np.zeros_like(t))
        lines = []
        for kind in (NODE_RNN, NCDE_RNN):
            model = ModelConfig(kind)
            params = train(TrainConfig(epochs=2, learning_rate=1e-2), model, train_set).params
            errors = [roundtrip_verify(model, params, stats, excitation, period / d)["nrmse"]
                      for d in (512, 1024, 2048, 4096)]
            lines.append(f"{kind} " + " > ".join(f"{e:.1e}" for e in errors))
            c.detail = "; ".join(lines)
            assert errors[0] <= 1e-2
            assert all(a > b for a, b in zip(errors, errors[1:]))


def _pipeline(out, config):
    assert main(["generate-data", "--config", config, "--seed", "3", "--out", str(out)]) == 0
    assert main(["train", "--config", config, "--seed", "3", "--kind", "NCDE-RNN", "--out", str(out)]) == 0
    weights = out / "ncde-rnn" / "weights.json"
    assert main(["eval", "--config", config, "--seed", "3", "--weights", str(weights), "--out", str(out)]) == 0
    return weights.read_bytes(), (out / "metrics-ncde-rnn-test.json").read_bytes()


def test_a6_determinism(tmp_path, criterion):
    with criterion("A6", "bit-identical generate/train/eval runs") as c:
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"corpus": {"count": 10, "samples": 32},
                                      "training": {"epochs": 2, "batch_size": 4, "learning_rate": 1e-2}}))
        first = _pipeline(tmp_path / "a", str(config))
        second = _pipeline(tmp_path / "b", str(config))
        c.detail = f"weights {len(first[0])} bytes, metrics {len(first[1])} bytes"
        assert first[0] == second[0]
        assert first[1] == second[1]
        assert (tmp_path / "a" / "ncde-rnn" / "history.csv").read_bytes() == \
            (tmp_path / "b" / "ncde-rnn" / "history.csv").read_bytes()


def test_a7_degenerate_equivalence(criterion):
    with criterion("A7", "zero field equals the discrete RNN bitwise") as c:
        rng = np.random.default_rng(11)
        t = np.cumsum(np.r_[0.0, rng.uniform(0.05, 0.3, 40)])
        w = Waveform("w", t, np.sin(t) + 0.1 * rng.standard_normal(len(t)), np.zeros(len(t)))
        for kind in (NODE_RNN, NCDE_RNN):
            model = ModelConfig(kind)
            params = init_params(model, 2)
            params = params.with_group("field", {k: np.zeros_like(v) for k, v in params.group("field").items()})
            out, _ = model_forward(model, params, w)
            x = np.zeros((1, model.hidden))
            states = []
            for i in range(1, len(t)):
                x = rnn_cell(params.group("rnn"), x, w.u[i:i + 1])
                states.append(x[0])
            udot = w.input_path().knot_derivative()[1:] if model.is_cde else None
            expect = readout(params.group("readout"), np.array(states), w.u[1:], udot)
            assert np.array_equal(out, expect), kind
        c.detail = f"{len(t) - 1} steps, NODE-RNN and NCDE-RNN"
