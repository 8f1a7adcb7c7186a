"""Adam optimizer and the epoch loop."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .adjoint import GradientReport, discrete_backprop_grad, hybrid_adjoint_backward
from .errors import ConfigError, DivergenceError
from .metrics import nrmse
from .models import ModelConfig, init_params, predict
from .nn import ParamStore
from .ode import DEFAULT_SUBSTEPS
from .waveform import SequenceBatch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 60
    batch_size: int = 16
    seed: int = 0
    substeps: int = DEFAULT_SUBSTEPS
    gradient: str = "auto"  # "auto", "adjoint" or "discrete"
    cache_trajectory: bool = False
    tau_min: float = 1e-3
    threads: int = 1

    def validate(self):
        if not self.learning_rate >= 0.0:
            raise ConfigError("learning_rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1 or self.substeps < 1 or self.threads < 1:
            raise ConfigError("epochs, batch_size, substeps and threads must be >= 1")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0 and self.eps > 0):
            raise ConfigError("Adam betas must lie in [0, 1) and eps must be positive")
        if self.gradient not in ("auto", "adjoint", "discrete"):
            raise ConfigError(f"unknown gradient method {self.gradient!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, size: int) -> AdamState:
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray, config: TrainConfig):
    """One bias-corrected Adam update on flat vectors; returns (state, params)."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ValueError("Adam state, parameters and gradients must share a shape")
    if not np.all(np.isfinite(grads)):
        raise DivergenceError("non-finite gradient passed to Adam")
    b1, b2 = config.beta1, config.beta2
    t = state.step + 1
    m = b1 * state.m + (1.0 - b1) * grads
    v = b2 * state.v + (1.0 - b2) * grads * grads
    m_hat = m / (1.0 - b1 ** t)
    v_hat = v / (1.0 - b2 ** t)
    new = params - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    return AdamState(m, v, t), new


def gradient_method(model: ModelConfig, config: TrainConfig):
    method = config.gradient
    if method == "auto":
        method = "adjoint" if model.is_hybrid else "discrete"
    return method


def batch_gradient(model: ModelConfig, params: ParamStore, batch: SequenceBatch,
                   config: TrainConfig, pool: ThreadPoolExecutor | None = None) -> GradientReport:
    """Mean-squared-error gradient over a batch, optionally split over threads.

    Chunks are summed in a fixed order, so a given thread count is
    reproducible.
    """
    method = gradient_method(model, config)
    denom = batch.size * batch.n_steps * model.output_dim

    def run(chunk):
        if method == "adjoint":
            return hybrid_adjoint_backward(model, params, chunk, config.substeps, denom=denom,
                                           cache_trajectory=config.cache_trajectory)
        return discrete_backprop_grad(model, params, chunk, config.substeps, denom=denom)

    if pool is None or config.threads == 1 or batch.size == 1:
        return run(batch)
    parts = list(pool.map(run, batch.chunks(config.threads)))
    flat = sum(p.flat() for p in parts[1:]) + parts[0].flat()
    return GradientReport(loss=float(sum(p.loss for p in parts)), grads=params.unflatten(flat),
                          dynamics_group=model.dynamics_group)


def evaluate(model: ModelConfig, params: ParamStore, waveforms, substeps=DEFAULT_SUBSTEPS) -> float:
    waveforms = list(waveforms)
    outputs = predict(model, params, waveforms, substeps)
    return nrmse(outputs, [w.y[1:] for w in waveforms])


def initial_params(model: ModelConfig, config: TrainConfig) -> ParamStore:
    """Starting weights drawn from the training seed."""
    return init_params(model, np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[0]))


@dataclass
class TrainResult:
    params: ParamStore
    history: list = field(default_factory=list)


def train(config: TrainConfig, model: ModelConfig, train_set, test_set=None,
          params: ParamStore | None = None, callback=None) -> TrainResult:
    """Adam over mini-batches of whole waveforms for ``config.epochs`` epochs.

    Each history row holds ``epoch``, ``train_mse`` (mean batch loss),
    ``test_nrmse`` and ``best_test_nrmse`` (running minimum).
    """
    config.validate()
    train_set = list(train_set)
    if not train_set:
        raise ValueError("training split is empty")
    test_set = list(test_set) if test_set else []
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[1])
    if params is None:
        params = initial_params(model, config)
    flat = params.flatten()
    state = AdamState.zeros(flat.size)
    tau_idx = None
    if "ctrnn.tau" in params:
        tau_idx = list(params).index("ctrnn.tau")
        tau_idx = sum(params[k].size for k in list(params)[:tau_idx])

    history = []
    best = np.inf
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    try:
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(len(train_set))
            losses = []
            for start in range(0, len(order), config.batch_size):
                idx = order[start:start + config.batch_size]
                batch = SequenceBatch.from_waveforms([train_set[k] for k in idx])
                try:
                    report = batch_gradient(model, params, batch, config, pool)
                    state, flat = adam_step(state, flat, report.flat(), config)
                except DivergenceError as err:
                    err.context.update(epoch=epoch, waveforms=",".join(batch.ids))
                    raise
                if tau_idx is not None:
                    flat[tau_idx] = max(flat[tau_idx], config.tau_min)
                params = params.unflatten(flat)
                losses.append(report.loss)
            row = {"epoch": epoch, "train_mse": float(np.mean(losses))}
            if test_set:
                score = evaluate(model, params, test_set, config.substeps)
                best = min(best, score)
                row["test_nrmse"] = score
                row["best_test_nrmse"] = best
            history.append(row)
            log.info("epoch %d: %s", epoch, row)
            if callback is not None:
                callback(row)
    finally:
        if pool is not None:
            pool.shutdown()
    return TrainResult(params=params, history=history)
