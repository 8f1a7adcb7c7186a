"""Natural cubic spline control paths.

A fitted path stores, for every knot interval ``[t_i, t_{i+1}]`` and every
channel, the cubic ``a + b*s + c*s**2 + d*s**3`` in the local offset
``s = t - t_i``.  Paths fitted on the same number of knots can be stacked
into a batch; batched paths are evaluated piece-by-piece via ``piece``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import ShapeError, SplineDomainError


@dataclass(frozen=True)
class CubicSplinePath:
    knots: np.ndarray  # (K,) or (B, K)
    a: np.ndarray  # (K-1, m) or (B, K-1, m)
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    @property
    def n_channels(self) -> int:
        return self.a.shape[-1]

    @property
    def n_knots(self) -> int:
        return self.knots.shape[-1]

    @property
    def batched(self) -> bool:
        return self.knots.ndim == 2

    def piece(self, i: int, s):
        """Value, first and second derivative on interval ``i`` at offset ``s``.

        ``s`` is a scalar or, for batched paths, an array of shape ``(B,)``.
        No domain check is done; callers integrating inside an interval may
        land a rounding error past its end.
        """
        s, a, b, c, d = self._coeffs(i, s)
        value = a + s * (b + s * (c + s * d))
        d1 = b + s * (2.0 * c + 3.0 * s * d)
        d2 = 2.0 * c + 6.0 * s * d
        return value, d1, d2

    def piece_value(self, i: int, s):
        s, a, b, c, d = self._coeffs(i, s)
        return a + s * (b + s * (c + s * d))

    def piece_slope(self, i: int, s):
        s, _, b, c, d = self._coeffs(i, s)
        return b + s * (2.0 * c + 3.0 * s * d)

    def _coeffs(self, i, s):
        s = np.asarray(s, dtype=np.float64)
        if self.batched:
            if s.ndim == 1:
                s = s[:, None]
            return s, self.a[:, i], self.b[:, i], self.c[:, i], self.d[:, i]
        return s, self.a[i], self.b[i], self.c[i], self.d[i]

    def knot_derivative(self) -> np.ndarray:
        """First derivative at every knot, shape ``(..., K, m)``."""
        h_last = self.knots[..., -1] - self.knots[..., -2]
        h_last = np.asarray(h_last)[..., None]
        b, c, d = self.b[..., -1, :], self.c[..., -1, :], self.d[..., -1, :]
        end = b + h_last * (2.0 * c + 3.0 * h_last * d)
        return np.concatenate([self.b, end[..., None, :]], axis=-2)


def _moments(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Second derivatives at the knots with natural end conditions."""
    n = len(times)
    m = np.zeros_like(values)
    if n < 3:
        return m
    h = np.diff(times)
    slopes = np.diff(values, axis=0) / h[:, None]
    rhs = 6.0 * (slopes[1:] - slopes[:-1])
    ab = np.zeros((3, n - 2))
    ab[0, 1:] = h[1:-1]
    ab[1, :] = 2.0 * (h[:-1] + h[1:])
    ab[2, :-1] = h[1:-1]
    m[1:-1] = solve_banded((1, 1), ab, rhs)
    return m


def fit_natural_cubic(times, values) -> CubicSplinePath:
    """Fit a natural cubic spline through ``values`` sampled at ``times``.

    ``values`` is ``(K,)`` for one channel or ``(K, m)``; channels share the
    knot grid.
    """
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if times.ndim != 1:
        raise ShapeError(f"times must be 1-D, got shape {times.shape}")
    if values.ndim == 1:
        values = values[:, None]
    if values.ndim != 2 or values.shape[0] != times.shape[0]:
        raise ShapeError(f"values shape {values.shape} does not match {len(times)} times")
    if len(times) < 2:
        raise ShapeError("a spline needs at least 2 samples")
    if not np.all(np.isfinite(times)) or not np.all(np.isfinite(values)):
        raise ValueError("spline data must be finite")
    if np.any(np.diff(times) <= 0.0):
        raise ValueError("spline knot times must be strictly increasing")

    h = np.diff(times)[:, None]
    mom = _moments(times, values)
    a = values[:-1].copy()
    b = (values[1:] - values[:-1]) / h - h * (2.0 * mom[:-1] + mom[1:]) / 6.0
    c = mom[:-1] / 2.0
    d = (mom[1:] - mom[:-1]) / (6.0 * h)
    return CubicSplinePath(knots=times.copy(), a=a, b=b, c=c, d=d)


def spline_eval(path: CubicSplinePath, t):
    """Evaluate ``(U(t), U'(t), U''(t))`` for a single (unbatched) path.

    ``t`` may be a scalar or 1-D array; outputs then have shape ``(m,)`` or
    ``(len(t), m)``.
    """
    if path.batched:
        raise ShapeError("spline_eval takes an unbatched path; use path.piece for batches")
    t_arr = np.asarray(t, dtype=np.float64)
    scalar = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)
    lo, hi = path.knots[0], path.knots[-1]
    slack = 1e-12 * max(1.0, hi - lo)
    bad = (t_arr < lo - slack) | (t_arr > hi + slack) | ~np.isfinite(t_arr)
    if np.any(bad):
        raise SplineDomainError(f"t={t_arr[bad][0]!r} outside spline span [{lo}, {hi}]")
    idx = np.clip(np.searchsorted(path.knots, t_arr, side="right") - 1, 0, path.n_knots - 2)
    s = (t_arr - path.knots[idx])[:, None]
    a, b, c, d = path.a[idx], path.b[idx], path.c[idx], path.d[idx]
    value = a + s * (b + s * (c + s * d))
    d1 = b + s * (2.0 * c + 3.0 * s * d)
    d2 = 2.0 * c + 6.0 * s * d
    if scalar:
        return value[0], d1[0], d2[0]
    return value, d1, d2


def stack_paths(paths) -> CubicSplinePath:
    """Stack unbatched paths with equal knot counts into one batched path."""
    paths = list(paths)
    if not paths:
        raise ShapeError("no paths to stack")
    k = paths[0].n_knots
    if any(p.n_knots != k or p.batched for p in paths):
        raise ShapeError("stacked paths must be unbatched and share a knot count")
    return CubicSplinePath(
        knots=np.stack([p.knots for p in paths]),
        a=np.stack([p.a for p in paths]),
        b=np.stack([p.b for p in paths]),
        c=np.stack([p.c for p in paths]),
        d=np.stack([p.d for p in paths]),
    )
