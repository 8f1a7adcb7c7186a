"""Training loss and the range-normalized RMSE used for evaluation."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def loss_mse(outputs, targets, weights=None, denom=None):
    """Mean squared error and its gradient with respect to ``outputs``.

    ``weights`` (broadcastable to ``outputs``) masks or reweights individual
    terms; ``denom`` overrides the element count used for the mean, which
    lets chunks of one batch produce gradients that sum to the batch value.
    """
    outputs = np.asarray(outputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if outputs.shape != targets.shape:
        raise ShapeError(f"outputs {outputs.shape} and targets {targets.shape} differ in shape")
    diff = outputs - targets
    if weights is not None:
        w = np.broadcast_to(np.asarray(weights, dtype=np.float64), diff.shape)
    else:
        w = 1.0
    count = float(diff.size if denom is None else denom)
    loss = float(np.sum(w * diff * diff) / count)
    return loss, (2.0 / count) * w * diff


def _nrmse_one(o, y):
    span = float(np.max(y) - np.min(y))
    if span <= 0.0:
        raise ValueError("NRMSE undefined for a constant target")
    return float(np.sqrt(np.mean((o - y) ** 2)) / span)


def nrmse(outputs, targets) -> float:
    """RMSE divided by the target range, per waveform, averaged over waveforms.

    Accepts a single waveform ``(N, p)`` / ``(N,)`` or a sequence (or stacked
    array ``(B, N, p)``) of them.
    """
    return float(np.mean(nrmse_per_waveform(outputs, targets)))


def nrmse_per_waveform(outputs, targets) -> list[float]:
    if isinstance(outputs, np.ndarray) and outputs.ndim <= 2:
        outputs, targets = [outputs], [targets]
    outputs, targets = list(outputs), list(targets)
    if len(outputs) != len(targets):
        raise ShapeError("outputs and targets hold different numbers of waveforms")
    scores = []
    for o, y in zip(outputs, targets):
        o = np.asarray(o, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if o.shape != y.shape:
            raise ShapeError(f"output shape {o.shape} does not match target shape {y.shape}")
        scores.append(_nrmse_one(o, y))
    return scores


def relative_error(approx, reference, floor: float = 1e-12) -> float:
    approx = np.asarray(approx, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    return float(np.linalg.norm(approx - reference) / max(np.linalg.norm(reference), floor))
