import json

import numpy as np
import pytest

from hybrid_dynamics.data import (
    CircuitConstants,
    Corpus,
    CorpusConfig,
    Excitation,
    file_digest,
    fit_norm_stats,
    generate_corpus,
    load_corpus,
    normalize_corpus,
    read_waveform_csv,
    simulate_ground_truth,
    split_corpus,
    sweep_points,
    write_corpus,
    write_waveform_csv,
)
from hybrid_dynamics.errors import ConfigError, ShapeError
from hybrid_dynamics.waveform import Waveform


def rc_steady_state(amplitude, frequency, R, C, t):
    """Phasor solution of the linear RC divider, returns the resistor current."""
    w = 2.0 * np.pi * frequency
    H = 1.0 / (1.0 + 1j * w * R * C)
    v = amplitude * np.abs(H) * np.sin(w * t + np.angle(H))
    return (amplitude * np.sin(w * t) - v) / R


@pytest.mark.parametrize("amplitude,frequency", [(1.0, 0.5), (0.3, 0.2), (2.0, 0.35)])
def test_linear_circuit_matches_phasor(amplitude, frequency):
    consts = CircuitConstants(R=1.0, C=1.0, I_s=0.0)
    grid = np.linspace(0.0, 1.0 / frequency, 65)
    # 40 time constants of warm-up leave no visible transient
    ex = Excitation(amplitude, frequency, warmup_periods=40.0 * frequency)
    w = simulate_ground_truth(consts, ex, grid, oversample=16)
    ref = rc_steady_state(amplitude, frequency, 1.0, 1.0, grid)
    np.testing.assert_allclose(w.y[:, 0], ref, atol=1e-9)


def test_linear_circuit_other_time_constant():
    consts = CircuitConstants(R=2.0, C=0.25, I_s=0.0)
    grid = np.linspace(0.0, 4.0, 129)
    w = simulate_ground_truth(consts, Excitation(1.5, 0.25, warmup_periods=20.0), grid)
    np.testing.assert_allclose(w.y[:, 0], rc_steady_state(1.5, 0.25, 2.0, 0.25, grid), atol=1e-9)


def test_steady_state_is_periodic():
    w = generate_corpus(CorpusConfig(count=4, samples=64))
    for wf in w:
        assert abs(wf.y[0, 0] - wf.y[-1, 0]) < 1e-3 * np.ptp(wf.y)


def test_diode_makes_response_asymmetric():
    grid = np.linspace(0.0, 20.0, 129)
    y = simulate_ground_truth(CircuitConstants(), Excitation(2.0, 0.05), grid).y[:-1, 0]
    lin = simulate_ground_truth(CircuitConstants(I_s=0.0), Excitation(2.0, 0.05), grid).y[:-1, 0]
    # the capacitor current averages to zero over a period, the diode current does not
    assert abs(lin.mean()) < 1e-6
    assert y.mean() > 0.05


def test_default_corpus_shape():
    cfg = CorpusConfig()
    points = sweep_points(cfg)
    assert len(points) == 160
    amps = sorted({a for a, _ in points})
    freqs = sorted({f for _, f in points})
    assert (len(amps), len(freqs)) == (16, 10)
    assert amps[0] == 0.3 and amps[-1] == 2.0
    assert freqs[0] == 0.05 and freqs[-1] == 0.5


def test_generated_waveforms_cover_one_period():
    corpus = generate_corpus(CorpusConfig(count=6, samples=32))
    assert len(corpus) == 6
    assert len({w.id for w in corpus}) == 6
    for w in corpus:
        assert len(w) == 32
        assert w.times[0] == 0.0
        assert w.times[-1] == pytest.approx(1.0 / w.metadata["frequency"])
        assert np.all(np.isfinite(w.y))


@pytest.mark.parametrize("count,train", [(160, 128), (10, 8), (5, 4)])
def test_split_sizes(count, train):
    items = [Waveform(f"w{k}", [0.0, 1.0], [0.0, 1.0], [0.0, 1.0]) for k in range(count)]
    tr, te = split_corpus(items, 0.8, seed=3)
    assert (len(tr), len(te)) == (train, count - train)
    assert {w.id for w in tr}.isdisjoint(w.id for w in te)
    assert {w.id for w in tr} | {w.id for w in te} == {w.id for w in items}


def test_split_is_seeded():
    items = [Waveform(f"w{k}", [0.0, 1.0], [0.0, 1.0], [0.0, 1.0]) for k in range(20)]
    a = [w.id for w in split_corpus(items, 0.8, 7)[0]]
    b = [w.id for w in split_corpus(items, 0.8, 7)[0]]
    c = [w.id for w in split_corpus(items, 0.8, 8)[0]]
    assert a == b
    assert a != c


def test_split_rejects_empty_side():
    items = [Waveform(f"w{k}", [0.0, 1.0], [0.0, 1.0], [0.0, 1.0]) for k in range(2)]
    with pytest.raises(ValueError):
        split_corpus(items, 0.9)
    with pytest.raises(ValueError):
        split_corpus(items, 1.0)


def test_normalization_maps_train_range_to_unit_interval():
    corpus = generate_corpus(CorpusConfig(count=6, samples=32))
    normed, stats = normalize_corpus(corpus)
    u = np.concatenate([w.u.ravel() for w in normed])
    y = np.concatenate([w.y.ravel() for w in normed])
    assert u.min() == pytest.approx(-1.0, abs=1e-12) and u.max() == pytest.approx(1.0, abs=1e-12)
    assert y.min() == pytest.approx(-1.0, abs=1e-12) and y.max() == pytest.approx(1.0, abs=1e-12)
    back = stats.invert(normed[2])
    np.testing.assert_allclose(back.u, corpus[2].u, atol=1e-12)
    np.testing.assert_allclose(back.y, corpus[2].y, atol=1e-12)
    np.testing.assert_array_equal(normed[0].times, corpus[0].times)


def test_affine_helpers_match_maps(rng):
    stats = fit_norm_stats([Waveform("a", [0.0, 1.0, 2.0], [-0.7, 0.1, 1.9], [-0.2, 0.4, 3.0])])
    x = rng.uniform(-3, 3, 50)
    g, o = stats.u_affine()
    np.testing.assert_allclose(g * x + o, stats.norm_u(x), atol=1e-13)
    g, o = stats.y_affine()
    np.testing.assert_allclose(g * x + o, stats.denorm_y(x), atol=1e-13)


def test_time_scale_divides_times():
    w = Waveform("a", [0.0, 2.0, 4.0], [0.0, 1.0, 2.0], [1.0, 0.0, 3.0])
    stats = fit_norm_stats([w], time_scale=2.0)
    np.testing.assert_array_equal(stats.apply(w).times, [0.0, 1.0, 2.0])


def test_flat_channel_cannot_be_normalized():
    with pytest.raises(ValueError):
        fit_norm_stats([Waveform("a", [0.0, 1.0], [1.0, 1.0], [0.0, 1.0])])


def test_csv_round_trip_is_exact(tmp_path, rng):
    t = np.cumsum(rng.uniform(0.1, 1.0, 40))
    w = Waveform("x", t, rng.standard_normal(40) * 1e-7, rng.standard_normal(40) * 1e5)
    write_waveform_csv(tmp_path / "x.csv", w)
    back = read_waveform_csv(tmp_path / "x.csv")
    assert back.id == "x"
    np.testing.assert_array_equal(back.times, w.times)
    np.testing.assert_array_equal(back.u, w.u)
    np.testing.assert_array_equal(back.y, w.y)


def test_csv_rejects_multichannel(tmp_path):
    w = Waveform("m", [0.0, 1.0], np.ones((2, 2)), [0.0, 1.0])
    with pytest.raises(ShapeError):
        write_waveform_csv(tmp_path / "m.csv", w)


def test_corpus_round_trip_and_digest(tmp_path):
    cfg = CorpusConfig(count=6, samples=16)
    waves = generate_corpus(cfg)
    tr, te = split_corpus(waves, 0.8, 0)
    stats = fit_norm_stats(tr)
    m1 = write_corpus(tmp_path / "a", Corpus(tr, te, stats, cfg.to_dict()))
    m2 = write_corpus(tmp_path / "b", Corpus(tr, te, stats, cfg.to_dict()))
    assert file_digest(m1) == file_digest(m2)
    back = load_corpus(m1)
    assert back.stats == stats
    assert [w.id for w in back.train] == [w.id for w in tr]
    assert [w.id for w in back.test] == [w.id for w in te]
    for a, b in zip(back.train + back.test, tr + te):
        np.testing.assert_array_equal(a.y, b.y)
        assert a.metadata == b.metadata
    manifest = json.loads(m1.read_text())
    assert manifest["config"]["count"] == 6


def test_generation_is_deterministic():
    cfg = CorpusConfig(count=4, samples=16)
    a, b = generate_corpus(cfg), generate_corpus(cfg)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.y, y.y)


def test_config_validation():
    with pytest.raises(ConfigError):
        CorpusConfig(amplitude_range=(-1.0, 1.0)).validate()
    with pytest.raises(ConfigError):
        CorpusConfig(count=1).validate()
    with pytest.raises(ConfigError):
        CircuitConstants(R=0.0).validate()
