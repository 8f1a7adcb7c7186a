"""Parameter gradients of the sequence loss.

Three independent routes are provided:

* ``hybrid_adjoint_backward`` -- continuous adjoint between observations,
  ordinary backpropagation through the RNN jump and readout at each
  observation.  The in-interval forward trajectory is recomputed from the
  stored interval start state, so only O(substeps) states are alive at once.
* ``discrete_backprop_grad`` -- exact reverse mode through the unrolled RK4
  steps (exact for the discretized program).
* ``finite_diff_grad`` -- central differences of forward pass plus loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError
from .metrics import loss_mse
from .models import (ModelConfig, forward_batch, integrate_interval, interval_steps,
                     make_dynamics, readout_input, rnn_cell_vjp)
from .nn import ParamStore, mlp_vjp
from .ode import DEFAULT_SUBSTEPS
from .waveform import SequenceBatch, Waveform


@dataclass
class GradientReport:
    loss: float
    grads: ParamStore
    dynamics_group: str = "field"

    @property
    def grad_theta(self) -> dict:
        """Gradient of the continuous dynamics (field MLP or CTRNN)."""
        return self.grads.group(self.dynamics_group)

    @property
    def grad_phi(self) -> dict:
        return self.grads.group("rnn")

    @property
    def grad_psi(self) -> dict:
        return self.grads.group("readout")

    def flat(self) -> np.ndarray:
        return self.grads.flatten()


@dataclass
class AdjointStats:
    """Instrumentation for the backward pass."""

    peak_stored_states: int = 0
    intervals: int = 0
    vjp_calls: int = 0

    def record(self, stored: int):
        self.peak_stored_states = max(self.peak_stored_states, stored)
        self.intervals += 1


def as_batch(data) -> SequenceBatch:
    if isinstance(data, SequenceBatch):
        return data
    if isinstance(data, Waveform):
        return SequenceBatch.from_waveforms([data])
    return SequenceBatch.from_waveforms(data)


def _accumulate(total: dict, part: dict, scale: float = 1.0):
    for k, v in part.items():
        if k in total:
            total[k] = total[k] + scale * v
        else:
            total[k] = scale * v


def adjoint_interval(dyn, i, x_start, a_end, h, substeps, states=None, stats=None):
    """Integrate the adjoint and parameter-gradient accumulator backward.

    Solves ``da/dt = -a df/dx`` and ``dg/dt = -a df/dtheta`` from the end of
    interval ``i`` (where ``a = a_end``, ``g = 0``) back to its start using
    RK4 with the forward step count.  The forward states at the RK4 nodes are
    recomputed from ``x_start`` unless ``states`` supplies them; states at
    half steps come from cubic Hermite interpolation of the nodes.

    Returns ``(a_start, grads)``.
    """
    if states is None:
        states = []
        integrate_interval(dyn, i, x_start, h, substeps, states)
    if stats is not None:
        stats.record(len(states))
    hc = h[:, None]
    slopes = [dyn(i, k * h, states[k]) for k in range(substeps + 1)]
    a = a_end
    grads: dict = {}
    for k in range(substeps - 1, -1, -1):
        x0, x1 = states[k], states[k + 1]
        xm = 0.5 * (x0 + x1) + (hc / 8.0) * (slopes[k] - slopes[k + 1])
        s0, sm, s1 = k * h, (k + 0.5) * h, (k + 1) * h
        # cotangents carry the step so per-waveform steps weight the batch sums
        j1, g1 = dyn.vjp(i, s1, x1, hc * a)
        j2, g2 = dyn.vjp(i, sm, xm, hc * (a + 0.5 * j1))
        j3, g3 = dyn.vjp(i, sm, xm, hc * (a + 0.5 * j2))
        j4, g4 = dyn.vjp(i, s0, x0, hc * (a + j3))
        a = a + (j1 + 2.0 * j2 + 2.0 * j3 + j4) / 6.0
        for g, w in ((g1, 1.0), (g2, 2.0), (g3, 2.0), (g4, 1.0)):
            _accumulate(grads, g, w / 6.0)
        if stats is not None:
            stats.vjp_calls += 4
        if not np.all(np.isfinite(a)):
            raise DivergenceError("non-finite adjoint state", substep=k, interval=i + 1)
    return a, grads


def discrete_interval(dyn, i, x_start, a_end, h, substeps, stats=None):
    """Exact reverse-mode sweep through the RK4 steps of interval ``i``."""
    hc = h[:, None]
    half = 0.5 * hc
    stages = []
    x = x_start
    for k in range(substeps):
        s = k * h
        k1 = dyn(i, s, x)
        x2 = x + half * k1
        k2 = dyn(i, s + 0.5 * h, x2)
        x3 = x + half * k2
        k3 = dyn(i, s + 0.5 * h, x3)
        x4 = x + hc * k3
        k4 = dyn(i, s + h, x4)
        stages.append((x, x2, x3, x4))
        x = x + (hc / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if stats is not None:
        stats.record(4 * len(stages))

    a = a_end
    grads: dict = {}
    for k in range(substeps - 1, -1, -1):
        x1, x2, x3, x4 = stages[k]
        s = k * h
        c = (hc / 6.0) * a
        kb3, kb2, kb1 = 2.0 * c, 2.0 * c, c
        xb = a
        gx, g = dyn.vjp(i, s + h, x4, c)
        xb = xb + gx
        kb3 = kb3 + hc * gx
        _accumulate(grads, g)
        gx, g = dyn.vjp(i, s + 0.5 * h, x3, kb3)
        xb = xb + gx
        kb2 = kb2 + half * gx
        _accumulate(grads, g)
        gx, g = dyn.vjp(i, s + 0.5 * h, x2, kb2)
        xb = xb + gx
        kb1 = kb1 + half * gx
        _accumulate(grads, g)
        gx, g = dyn.vjp(i, s, x1, kb1)
        xb = xb + gx
        _accumulate(grads, g)
        a = xb
        if stats is not None:
            stats.vjp_calls += 4
    return a, grads


def _backward(config: ModelConfig, params: ParamStore, batch: SequenceBatch, substeps: int,
              mode: str, loss_weights=None, cache_trajectory=False, stats=None, denom=None):
    trace = forward_batch(config, params, batch, substeps, keep_trajectories=cache_trajectory)
    weights = None
    if loss_weights is not None:
        weights = np.asarray(loss_weights, dtype=np.float64)
        if weights.ndim == 1:  # one weight per step
            weights = weights[None, :, None]
    loss, dout = loss_mse(trace.outputs, batch.targets, weights, denom)

    n = config.hidden
    dyn = make_dynamics(config, params, batch)
    rnn_p = params.group("rnn") if config.is_hybrid else None
    ro_p = params.group("readout")

    # readout gradients at every step; the state part seeds/extends the adjoint
    udot = batch.udot[:, 1:] if config.is_cde else None
    ro_in = readout_input(trace.x_post[:, 1:], batch.u[:, 1:], udot)
    g_in, g_ro = mlp_vjp(config.readout_spec, ro_p, ro_in, dout)
    a_local = g_in[..., :n]

    g_dyn: dict = {}
    g_rnn: dict = {}
    carry = np.zeros((batch.size, n))
    for j in range(batch.n_steps - 1, -1, -1):
        a = carry + a_local[:, j]
        if rnn_p is not None:
            a, g = rnn_cell_vjp(rnn_p, trace.x_pre[:, j], batch.u[:, j + 1], a)
            _accumulate(g_rnn, g)
        h = interval_steps(batch, j, substeps)
        if mode == "adjoint":
            states = trace.trajectories[j] if cache_trajectory else None
            carry, g = adjoint_interval(dyn, j, trace.x_post[:, j], a, h, substeps, states, stats)
        else:
            carry, g = discrete_interval(dyn, j, trace.x_post[:, j], a, h, substeps, stats)
        _accumulate(g_dyn, g)

    grads = {}
    for name in params:
        group, leaf = name.split(".", 1)
        src = {"rnn": g_rnn, "readout": g_ro}.get(group, g_dyn)
        grads[name] = src.get(leaf, np.zeros_like(params[name]))
    for v in grads.values():
        if not np.all(np.isfinite(v)):
            raise DivergenceError("non-finite gradient")
    return GradientReport(loss=loss, grads=ParamStore(grads), dynamics_group=config.dynamics_group)


def hybrid_adjoint_backward(config: ModelConfig, params: ParamStore, data,
                            substeps: int = DEFAULT_SUBSTEPS, *, loss_weights=None,
                            cache_trajectory: bool = False, stats: AdjointStats | None = None,
                            denom=None) -> GradientReport:
    """Loss and gradients by the hybrid continuous/discrete adjoint method.

    ``data`` is a Waveform, a list of equal-length waveforms or a
    SequenceBatch.  ``cache_trajectory`` keeps every in-interval state from
    the forward pass instead of recomputing them (same result, more memory).
    """
    return _backward(config, params, as_batch(data), substeps, "adjoint", loss_weights,
                     cache_trajectory, stats, denom)


def discrete_backprop_grad(config: ModelConfig, params: ParamStore, data,
                           substeps: int = DEFAULT_SUBSTEPS, *, loss_weights=None,
                           stats: AdjointStats | None = None, denom=None) -> GradientReport:
    """Loss and exact gradients of the RK4-discretized forward program."""
    return _backward(config, params, as_batch(data), substeps, "discrete", loss_weights,
                     False, stats, denom)


def sequence_loss(config: ModelConfig, params: ParamStore, data, substeps=DEFAULT_SUBSTEPS,
                  loss_weights=None) -> float:
    batch = as_batch(data)
    trace = forward_batch(config, params, batch, substeps)
    weights = None
    if loss_weights is not None:
        weights = np.asarray(loss_weights, dtype=np.float64)
        if weights.ndim == 1:
            weights = weights[None, :, None]
    return loss_mse(trace.outputs, batch.targets, weights)[0]


def finite_diff(fun, w, step: float) -> np.ndarray:
    """Central-difference gradient of scalar ``fun`` at flat vector ``w``."""
    w = np.asarray(w, dtype=np.float64)
    if step <= 0:
        raise ValueError("finite-difference step must be positive")
    grad = np.empty_like(w)
    for k in range(w.size):
        wp = w.copy()
        wm = w.copy()
        wp[k] += step
        wm[k] -= step
        grad[k] = (fun(wp) - fun(wm)) / (2.0 * step)
    return grad


def finite_diff_grad(config: ModelConfig, params: ParamStore, data, step: float = 1e-5,
                     substeps: int = DEFAULT_SUBSTEPS, *, loss_weights=None) -> GradientReport:
    """Per-parameter central differences of the full forward + loss pipeline."""
    batch = as_batch(data)

    def fun(flat):
        return sequence_loss(config, params.unflatten(flat), batch, substeps, loss_weights)

    flat = params.flatten()
    grad = finite_diff(fun, flat, step)
    return GradientReport(loss=fun(flat), grads=params.unflatten(grad),
                          dynamics_group=config.dynamics_group)
