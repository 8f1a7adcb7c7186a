"""Synthetic diode-RC corpus: ground-truth simulation, sweeps, splits, I/O.

The reference circuit is a series resistor feeding a capacitor shunted by an
exponential diode:

    C dv/dt = (u(t) - v) / R - I_s (exp(v / V_t) - 1),   y = (u - v) / R

driven by ``u(t) = A sin(2 pi f t)``.  All quantities are in normalized
desk-scale units.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DivergenceError, ShapeError
from .waveform import Waveform


@dataclass(frozen=True)
class CircuitConstants:
    R: float = 1.0
    C: float = 1.0
    I_s: float = 1e-3
    V_t: float = 0.25

    def validate(self):
        if self.R <= 0 or self.C <= 0 or self.V_t <= 0:
            raise ConfigError("R, C and V_t must be positive")
        if self.I_s < 0:
            raise ConfigError("I_s must be non-negative")


@dataclass(frozen=True)
class Excitation:
    amplitude: float
    frequency: float
    warmup_periods: float = 3.0

    def __call__(self, t):
        return self.amplitude * np.sin(2.0 * np.pi * self.frequency * np.asarray(t))


@dataclass(frozen=True)
class CorpusConfig:
    count: int = 160
    amplitude_range: tuple = (0.3, 2.0)
    frequency_range: tuple = (0.05, 0.5)
    samples: int = 128
    circuit: CircuitConstants = field(default_factory=CircuitConstants)
    oversample: int = 32
    warmup_periods: float = 3.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "amplitude_range", tuple(float(v) for v in self.amplitude_range))
        object.__setattr__(self, "frequency_range", tuple(float(v) for v in self.frequency_range))
        if isinstance(self.circuit, dict):
            object.__setattr__(self, "circuit", CircuitConstants(**self.circuit))

    def validate(self):
        a_lo, a_hi = self.amplitude_range
        f_lo, f_hi = self.frequency_range
        if not (0 < a_lo <= a_hi) or not (0 < f_lo <= f_hi):
            raise ConfigError("amplitude and frequency ranges must be positive and ordered")
        if self.count < 2:
            raise ConfigError("corpus count must be >= 2")
        if self.samples < 2 or self.oversample < 1 or self.warmup_periods < 0:
            raise ConfigError("samples >= 2, oversample >= 1 and warmup_periods >= 0 required")
        self.circuit.validate()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["amplitude_range"] = list(self.amplitude_range)
        d["frequency_range"] = list(self.frequency_range)
        return d


def _grid_shape(count: int) -> tuple[int, int]:
    """Factor ``count`` into (amplitudes, frequencies) as square as possible."""
    best = (count, 1)
    for nf in range(1, int(np.sqrt(count)) + 1):
        if count % nf == 0:
            best = (count // nf, nf)
    return best


def _simulate(constants: CircuitConstants, amplitudes, frequencies, grids, oversample, warmup_periods):
    """Vectorized RK4 over rows; returns the capacitor voltage on each grid."""
    amp = np.asarray(amplitudes, dtype=np.float64)
    freq = np.asarray(frequencies, dtype=np.float64)
    grids = np.asarray(grids, dtype=np.float64)
    R, C, I_s, V_t = constants.R, constants.C, constants.I_s, constants.V_t
    omega = 2.0 * np.pi * freq

    def rhs(t, v):
        u = amp * np.sin(omega * t)
        return ((u - v) / R - I_s * np.expm1(v / V_t)) / C

    def step(t, v, h):
        k1 = rhs(t, v)
        k2 = rhs(t + 0.5 * h, v + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, v + 0.5 * h * k2)
        k4 = rhs(t + h, v + h * k3)
        return v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    n_int = grids.shape[1] - 1
    v = np.zeros(len(amp))
    with np.errstate(over="ignore", invalid="ignore"):
        n_warm = int(round(warmup_periods * n_int * oversample))
        if n_warm:
            hw = (warmup_periods / freq) / n_warm
            t0 = grids[:, 0] - warmup_periods / freq
            for k in range(n_warm):
                v = step(t0 + k * hw, v, hw)
            if not np.all(np.isfinite(v)):
                raise DivergenceError("ground-truth simulation diverged during warm-up")
        out = np.empty_like(grids)
        out[:, 0] = v
        for j in range(n_int):
            h = (grids[:, j + 1] - grids[:, j]) / oversample
            for k in range(oversample):
                v = step(grids[:, j] + k * h, v, h)
            if not np.all(np.isfinite(v)):
                raise DivergenceError("ground-truth simulation diverged", substep=j)
            out[:, j + 1] = v
    return out


def simulate_ground_truth(constants: CircuitConstants, excitation: Excitation, grid,
                          oversample: int = 32, wid: str = "sim") -> Waveform:
    """Simulate the diode-RC circuit and sample input and current on ``grid``."""
    constants.validate()
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or len(grid) < 2:
        raise ShapeError("grid needs at least 2 points")
    if oversample < 1:
        raise ValueError("oversample must be >= 1")
    v = _simulate(constants, [excitation.amplitude], [excitation.frequency], grid[None, :],
                  oversample, excitation.warmup_periods)[0]
    u = excitation(grid)
    return Waveform(wid, grid, u, (u - v) / constants.R,
                    {"amplitude": float(excitation.amplitude), "frequency": float(excitation.frequency)})


def sweep_points(config: CorpusConfig):
    n_a, n_f = _grid_shape(config.count)
    amps = np.linspace(*config.amplitude_range, n_a)
    freqs = np.linspace(*config.frequency_range, n_f)
    return [(float(a), float(f)) for a in amps for f in freqs]


def generate_corpus(config: CorpusConfig | None = None) -> list[Waveform]:
    """One steady-state excitation period per (amplitude, frequency) grid point."""
    config = config or CorpusConfig()
    config.validate()
    points = sweep_points(config)
    amps = np.array([p[0] for p in points])
    freqs = np.array([p[1] for p in points])
    grids = np.stack([np.linspace(0.0, 1.0 / f, config.samples) for f in freqs])
    v = _simulate(config.circuit, amps, freqs, grids, config.oversample, config.warmup_periods)
    corpus = []
    width = len(str(len(points) - 1))
    for k, (a, f) in enumerate(points):
        u = a * np.sin(2.0 * np.pi * f * grids[k])
        y = (u - v[k]) / config.circuit.R
        corpus.append(Waveform(f"w{k:0{width}d}", grids[k], u, y, {"amplitude": a, "frequency": f}))
    return corpus


def split_corpus(corpus, ratio: float = 0.8, seed: int = 0):
    """Seeded shuffle, then the first ``round(ratio * len)`` waveforms train."""
    corpus = list(corpus)
    if not 0.0 < ratio < 1.0:
        raise ValueError("split ratio must lie in (0, 1)")
    n_train = int(round(ratio * len(corpus)))
    if n_train == 0 or n_train == len(corpus):
        raise ValueError(f"ratio {ratio} leaves one side of a {len(corpus)}-waveform split empty")
    order = np.random.default_rng(seed).permutation(len(corpus))
    train = [corpus[k] for k in sorted(order[:n_train])]
    test = [corpus[k] for k in sorted(order[n_train:])]
    return train, test


@dataclass(frozen=True)
class NormStats:
    """Affine maps taking the reference u and y ranges onto [-1, 1]."""

    u_min: float
    u_max: float
    y_min: float
    y_max: float
    time_scale: float = 1.0

    @staticmethod
    def _fwd(x, lo, hi):
        return 2.0 * (x - lo) / (hi - lo) - 1.0

    @staticmethod
    def _inv(x, lo, hi):
        return lo + (x + 1.0) * (hi - lo) / 2.0

    def norm_u(self, u):
        return self._fwd(np.asarray(u), self.u_min, self.u_max)

    def norm_y(self, y):
        return self._fwd(np.asarray(y), self.y_min, self.y_max)

    def denorm_u(self, u):
        return self._inv(np.asarray(u), self.u_min, self.u_max)

    def denorm_y(self, y):
        return self._inv(np.asarray(y), self.y_min, self.y_max)

    def u_affine(self) -> tuple[float, float]:
        """``(gain, offset)`` with ``norm_u(u) == gain * u + offset`` up to rounding."""
        gain = 2.0 / (self.u_max - self.u_min)
        return gain, -1.0 - gain * self.u_min

    def y_affine(self) -> tuple[float, float]:
        """``(gain, offset)`` with ``denorm_y(o) == gain * o + offset`` up to rounding."""
        gain = (self.y_max - self.y_min) / 2.0
        return gain, self.y_min + gain

    def apply(self, w: Waveform) -> Waveform:
        return Waveform(w.id, w.times / self.time_scale, self.norm_u(w.u), self.norm_y(w.y), dict(w.metadata))

    def invert(self, w: Waveform) -> Waveform:
        return Waveform(w.id, w.times * self.time_scale, self.denorm_u(w.u), self.denorm_y(w.y), dict(w.metadata))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> NormStats:
        return cls(**{k: float(v) for k, v in d.items()})


def fit_norm_stats(reference, time_scale: float = 1.0) -> NormStats:
    reference = list(reference)
    u = np.concatenate([w.u.ravel() for w in reference])
    y = np.concatenate([w.y.ravel() for w in reference])
    if u.max() <= u.min() or y.max() <= y.min():
        raise ValueError("cannot normalize a channel with zero range")
    if time_scale <= 0:
        raise ValueError("time_scale must be positive")
    return NormStats(float(u.min()), float(u.max()), float(y.min()), float(y.max()), float(time_scale))


def normalize_corpus(corpus, train=None, time_scale: float = 1.0):
    """Normalize ``corpus`` with statistics of ``train`` (default: the corpus)."""
    corpus = list(corpus)
    stats = fit_norm_stats(train if train is not None else corpus, time_scale)
    return [stats.apply(w) for w in corpus], stats


# -- files -------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_waveform_csv(path, w: Waveform):
    if w.u.shape[1] != 1 or w.y.shape[1] != 1:
        raise ShapeError("waveform CSV files hold single-channel u and y")
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["t", "u", "y"])
        for t, u, y in zip(w.times, w.u[:, 0], w.y[:, 0]):
            out.writerow([_fmt(t), _fmt(u), _fmt(y)])


def read_waveform_csv(path, wid: str | None = None, metadata=None) -> Waveform:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "u", "y"]:
        raise ValueError(f"{path}: expected header t,u,y")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
    return Waveform(wid or Path(path).stem, data[:, 0], data[:, 1], data[:, 2], dict(metadata or {}))


@dataclass
class Corpus:
    train: list
    test: list
    stats: NormStats
    config: dict = field(default_factory=dict)

    def normalized(self):
        return [self.stats.apply(w) for w in self.train], [self.stats.apply(w) for w in self.test]


def write_corpus(out_dir, corpus: Corpus) -> Path:
    """Write one CSV per waveform plus ``manifest.json``; returns the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "waveforms").mkdir(parents=True, exist_ok=True)
    entries = []
    for split, items in (("train", corpus.train), ("test", corpus.test)):
        for w in items:
            rel = f"waveforms/{w.id}.csv"
            write_waveform_csv(out_dir / rel, w)
            entries.append({"id": w.id, "file": rel, "split": split,
                            "amplitude": w.metadata.get("amplitude"),
                            "frequency": w.metadata.get("frequency")})
    entries.sort(key=lambda e: e["id"])
    manifest = {"format": "hybrid-dynamics-corpus/1", "config": corpus.config,
                "norm": corpus.stats.to_dict(), "waveforms": entries}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_corpus(manifest_path) -> Corpus:
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    base = manifest_path.parent
    train, test = [], []
    for e in manifest["waveforms"]:
        meta = {k: e[k] for k in ("amplitude", "frequency") if e.get(k) is not None}
        w = read_waveform_csv(base / e["file"], e["id"], meta)
        (train if e["split"] == "train" else test).append(w)
    return Corpus(train, test, NormStats.from_dict(manifest["norm"]), manifest.get("config", {}))


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
