"""Excitation/response records and their batched form."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .spline import CubicSplinePath, fit_natural_cubic, stack_paths


def _as_2d(values, n, name):
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] != n:
        raise ShapeError(f"{name} has shape {arr.shape}, expected ({n}, channels)")
    return arr


@dataclass(frozen=True)
class Waveform:
    """One record: sample times, input ``u`` (K, m) and target ``y`` (K, p)."""

    id: str
    times: np.ndarray
    u: np.ndarray
    y: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        if times.ndim != 1 or len(times) < 2:
            raise ShapeError("a waveform needs a 1-D time grid with at least 2 samples")
        if np.any(np.diff(times) <= 0):
            raise ValueError(f"waveform {self.id}: times must be strictly increasing")
        u = _as_2d(self.u, len(times), "u")
        y = _as_2d(self.y, len(times), "y")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(u)) and np.all(np.isfinite(y))):
            raise ValueError(f"waveform {self.id}: non-finite samples")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return len(self.times)

    @property
    def span(self) -> float:
        return float(self.times[-1] - self.times[0])

    def input_path(self) -> CubicSplinePath:
        return fit_natural_cubic(self.times, self.u)


@dataclass(frozen=True)
class SequenceBatch:
    """Waveforms with equal sample counts stacked along a leading axis."""

    ids: tuple
    times: np.ndarray  # (B, K)
    u: np.ndarray  # (B, K, m)
    y: np.ndarray  # (B, K, p)
    path: CubicSplinePath  # batched
    udot: np.ndarray  # (B, K, m), spline derivative at the knots

    @classmethod
    def from_waveforms(cls, waveforms) -> SequenceBatch:
        waveforms = list(waveforms)
        if not waveforms:
            raise ShapeError("empty batch")
        k = len(waveforms[0])
        if any(len(w) != k for w in waveforms):
            raise ShapeError("all waveforms in a batch need the same sample count")
        path = stack_paths(w.input_path() for w in waveforms)
        return cls(
            ids=tuple(w.id for w in waveforms),
            times=np.stack([w.times for w in waveforms]),
            u=np.stack([w.u for w in waveforms]),
            y=np.stack([w.y for w in waveforms]),
            path=path,
            udot=path.knot_derivative(),
        )

    @property
    def size(self) -> int:
        return self.times.shape[0]

    @property
    def n_samples(self) -> int:
        return self.times.shape[1]

    @property
    def n_steps(self) -> int:
        return self.times.shape[1] - 1

    @property
    def targets(self) -> np.ndarray:
        """Targets aligned with model outputs (samples 1..K-1)."""
        return self.y[:, 1:]

    def chunks(self, n: int):
        """Split into ``n`` contiguous sub-batches (fewer if the batch is small)."""
        n = max(1, min(n, self.size))
        bounds = np.linspace(0, self.size, n + 1).astype(int)
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            p = self.path
            out.append(SequenceBatch(
                ids=self.ids[lo:hi],
                times=self.times[lo:hi],
                u=self.u[lo:hi],
                y=self.y[lo:hi],
                path=CubicSplinePath(p.knots[lo:hi], p.a[lo:hi], p.b[lo:hi], p.c[lo:hi], p.d[lo:hi]),
                udot=self.udot[lo:hi],
            ))
        return out
