"""Cross-check the three gradient routes on random small models.

Finite differences check the discrete backpropagation, which in turn is
the reference for the hybrid adjoint.  The adjoint only matches the
discrete gradient up to the solver error of its backward pass, so the
gap must also shrink when the substep count doubles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adjoint import discrete_backprop_grad, finite_diff_grad, hybrid_adjoint_backward
from .metrics import relative_error
from .models import KINDS, ModelConfig, init_params
from .waveform import Waveform

FD_TOL = 1e-5
ADJOINT_TOL = 1e-3
MIN_RATIO = 8.0


@dataclass(frozen=True)
class GradcheckConfig:
    models: int = 20
    substeps: int = 8
    fd_step: float = 1e-5
    samples: int = 6
    seed: int = 0


def random_case(kind: str, rng: np.random.Generator, samples: int = 6):
    """A small model with perturbed weights and a jittered random waveform."""
    cfg = ModelConfig(kind, hidden=int(rng.integers(2, 5)), field_hidden=(6,), readout_hidden=5)
    params = init_params(cfg, rng)
    params = params.unflatten(params.flatten() + 0.3 * rng.standard_normal(params.size))
    # unit span, intervals jittered by up to +-30% around uniform
    steps = 1.0 + 0.6 * (rng.uniform(size=samples - 1) - 0.5)
    times = np.concatenate([[0.0], np.cumsum(steps / steps.sum())])
    u = np.sin(5.0 * times) + 0.3 * rng.standard_normal(samples)
    y = np.cos(3.0 * times) + 0.1 * rng.standard_normal(samples)
    return cfg, params, Waveform(f"{kind}-case", times, u, y)


def _flat_group(report, group):
    return np.concatenate([v.ravel() for v in report.grads.group(group).values()])


def _group_errors(a, b) -> dict:
    return {g: relative_error(_flat_group(a, g), _flat_group(b, g)) for g in a.grads.groups()}


def check_case(cfg: ModelConfig, params, waveform, substeps=8, fd_step=1e-5) -> dict:
    d = discrete_backprop_grad(cfg, params, waveform, substeps)
    fd = finite_diff_grad(cfg, params, waveform, fd_step, substeps)
    a = hybrid_adjoint_backward(cfg, params, waveform, substeps)
    a2 = hybrid_adjoint_backward(cfg, params, waveform, 2 * substeps)
    d2 = discrete_backprop_grad(cfg, params, waveform, 2 * substeps)
    fd_err = relative_error(fd.flat(), d.flat())
    adj_err = relative_error(a.flat(), d.flat())
    adj_err2 = relative_error(a2.flat(), d2.flat())
    ratio = adj_err / adj_err2 if adj_err2 > 0 else float("inf")
    failed = []
    if fd_err > FD_TOL:
        failed += [g for g, e in _group_errors(fd, d).items() if e > FD_TOL] or fd.grads.groups()
    if adj_err > ADJOINT_TOL:
        failed += [g for g, e in _group_errors(a, d).items() if e > ADJOINT_TOL] or a.grads.groups()
    if ratio < MIN_RATIO:
        failed += ["substep-doubling"]
    return {
        "kind": cfg.kind,
        "hidden": cfg.hidden,
        "params": params.size,
        "fd_vs_discrete": fd_err,
        "adjoint_vs_discrete": adj_err,
        "adjoint_vs_discrete_doubled": adj_err2,
        "doubling_ratio": ratio,
        "failed_groups": sorted(set(failed)),
        "passed": not failed,
    }


def run_suite(config: GradcheckConfig = GradcheckConfig()) -> dict:
    """Check ``config.models`` random models, cycling through every kind."""
    rng = np.random.default_rng(config.seed)
    cases = []
    for k in range(config.models):
        cfg, params, w = random_case(KINDS[k % len(KINDS)], rng, config.samples)
        cases.append(check_case(cfg, params, w, config.substeps, config.fd_step))
    worst = {
        "fd_vs_discrete": max(c["fd_vs_discrete"] for c in cases),
        "adjoint_vs_discrete": max(c["adjoint_vs_discrete"] for c in cases),
        "doubling_ratio": min(c["doubling_ratio"] for c in cases),
    }
    failed = sorted({g for c in cases for g in c["failed_groups"]})
    return {
        "substeps": config.substeps,
        "tolerances": {"fd_vs_discrete": FD_TOL, "adjoint_vs_discrete": ADJOINT_TOL,
                       "doubling_ratio": MIN_RATIO},
        "worst": worst,
        "failed_groups": failed,
        "passed": all(c["passed"] for c in cases),
        "cases": cases,
    }
