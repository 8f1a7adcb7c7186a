"""Fixed-step classical Runge-Kutta integration.

A vector field is any callable ``field(t, x) -> dx/dt``.  States may carry
leading batch axes; ``t`` and the step ``h`` may then be per-row arrays of
shape ``(B,)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, ShapeError
from .spline import CubicSplinePath, spline_eval

DEFAULT_SUBSTEPS = 4


@dataclass(frozen=True)
class SolveConfig:
    substeps: int = DEFAULT_SUBSTEPS
    direction: str = "auto"  # "forward", "backward" or "auto" (sign of t1 - t0)

    def __post_init__(self):
        if int(self.substeps) < 1:
            raise ValueError(f"substeps must be >= 1, got {self.substeps}")
        if self.direction not in ("auto", "forward", "backward"):
            raise ValueError(f"unknown direction {self.direction!r}")


def _col(h, x):
    """Broadcast a per-row step ``(B,)`` against a ``(B, n)`` state."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim == 0 or x.ndim <= 1:
        return h
    return h.reshape(h.shape + (1,) * (x.ndim - h.ndim))


def rk4_step(field, t, x, h):
    """One classical RK4 step of size ``h`` from ``(t, x)``."""
    hc = _col(h, x)
    half = 0.5 * hc
    k1 = field(t, x)
    k2 = field(t + 0.5 * h, x + half * k1)
    k3 = field(t + 0.5 * h, x + half * k2)
    k4 = field(t + h, x + hc * k3)
    return x + (hc / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_solve(field, x0, t0, t1, config: SolveConfig | None = None):
    """Integrate ``field`` from ``x0`` at ``t0`` to ``t1``; returns ``x(t1)``.

    ``t1 < t0`` integrates backward in time with a negative step.
    """
    config = config or SolveConfig()
    x = np.array(x0, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("initial state must be finite")
    span = np.asarray(t1, dtype=np.float64) - np.asarray(t0, dtype=np.float64)
    if np.any(span == 0.0):
        raise ValueError("t0 and t1 must differ")
    if config.direction == "forward" and np.any(span < 0):
        raise ValueError("forward solve requested with t1 < t0")
    if config.direction == "backward" and np.any(span > 0):
        raise ValueError("backward solve requested with t1 > t0")
    n = int(config.substeps)
    h = span / n
    for k in range(n):
        x = rk4_step(field, t0 + k * h, x, h)
        if not np.all(np.isfinite(x)):
            raise DivergenceError("non-finite state during RK4 solve", substep=k)
    return x


def controlled_field(f_theta, path: CubicSplinePath):
    """Turn ``dx = f_theta(x) dU`` into the plain field ``f_theta(x) @ U'(t)``.

    ``f_theta(x)`` must return an ``(n, m)`` matrix for a state of size ``n``
    with ``m`` equal to the path's channel count.
    """
    m = path.n_channels

    def field(t, x):
        kernel = np.asarray(f_theta(x), dtype=np.float64)
        x_arr = np.asarray(x)
        if kernel.shape != (x_arr.shape[-1], m):
            raise ShapeError(
                f"controlled field kernel has shape {kernel.shape}, expected {(x_arr.shape[-1], m)}"
            )
        _, udot, _ = spline_eval(path, t)
        return kernel @ udot

    return field
