"""Export, reparse and simulate a model, then compare against the native forward pass."""

from __future__ import annotations

import numpy as np

from ..data import NormStats
from ..models import ModelConfig, model_forward
from ..nn import ParamStore
from ..waveform import Waveform
from .emit import export_veriloga
from .interp import CompiledModule, excitation_samples, time_grid
from .parser import parse_subset


def native_dense(config: ModelConfig, params: ParamStore, stats: NormStats,
                 grid: np.ndarray, u: np.ndarray, substeps: int = 4) -> np.ndarray:
    """Native outputs in circuit units on the dense grid, samples 1..N.

    The observation grid is the simulation grid itself, so the RNN jump
    fires at every timestep, as in the emitted module.
    """
    u_gain, u_off = stats.u_affine()
    y_gain, y_off = stats.y_affine()
    w = Waveform("dense", grid / stats.time_scale, u_gain * u + u_off, np.zeros_like(u))
    outputs, _ = model_forward(config, params, w, substeps)
    return y_gain * outputs[:, 0] + y_off


def roundtrip_verify(config: ModelConfig, params: ParamStore, stats: NormStats,
                     excitation: Waveform, timestep: float, substeps: int = 4,
                     training_nrmse: float | None = None) -> dict:
    """Report ``max_abs_error``, ``nrmse``, ``timestep`` and ``steps`` of the round trip.

    ``nrmse`` is the RMS difference over the peak-to-peak range of the
    native output.  When ``training_nrmse`` is given, the report also says
    whether the deployment error exceeds it, which is the usual outcome.
    """
    module = parse_subset(export_veriloga(config, params, stats))
    grid = time_grid(excitation.times[0], excitation.times[-1], timestep)
    u = excitation_samples(excitation, grid)
    simulated = CompiledModule(module).run(u, float(timestep))
    native = native_dense(config, params, stats, grid, u, substeps)
    diff = simulated - native
    rmse = float(np.sqrt(np.mean(diff * diff)))
    spread = float(np.ptp(native))
    if spread > 0:
        score = rmse / spread
    else:
        score = 0.0 if rmse == 0.0 else float("inf")
    report = {
        "max_abs_error": float(np.max(np.abs(diff))),
        "nrmse": score,
        "timestep": float(timestep),
        "steps": int(len(grid) - 1),
    }
    if training_nrmse is not None:
        report["training_nrmse"] = float(training_nrmse)
        report["exceeds_training_error"] = bool(score > training_nrmse)
    return report
