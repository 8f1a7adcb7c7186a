"""Forward evaluation of the four continuous-time model families.

All kinds share one loop over the observation intervals of a waveform:

    x_0 = 0
    for i in 1..N:
        x'_i = integrate dynamics from x_{i-1} over (t_{i-1}, t_i)
        x_i  = rnn_cell(x'_i, u_i)      (hybrid kinds only, else x_i = x'_i)
        o_i  = readout(x_i, u_i[, u'_i])

The dynamics are the tanh CTRNN, a plain neural field ``f(x)`` (NODE-RNN)
or a controlled field ``f(x) @ U'(t)`` driven by the spline of the input
(NCDE and NCDE-RNN).  Outputs are produced for samples 1..N; the first
sample only fixes the initial time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError, ShapeError
from .nn import MlpEval, MlpSpec, ParamStore, glorot, mlp_forward, param_init
from .ode import DEFAULT_SUBSTEPS, rk4_step
from .waveform import SequenceBatch, Waveform

CTRNN = "CTRNN"
NCDE = "NCDE"
NODE_RNN = "NODE-RNN"
NCDE_RNN = "NCDE-RNN"
KINDS = (CTRNN, NCDE, NODE_RNN, NCDE_RNN)
HYBRID_KINDS = (NODE_RNN, NCDE_RNN)

DEFAULT_HIDDEN = {CTRNN: 27, NCDE: 16, NODE_RNN: 16, NCDE_RNN: 16}


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    hidden: int = 0  # 0 selects the per-kind default
    input_dim: int = 1
    output_dim: int = 1
    field_hidden: tuple = (32,)
    readout_hidden: int = 32

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if not self.hidden:
            object.__setattr__(self, "hidden", DEFAULT_HIDDEN[self.kind])
        object.__setattr__(self, "field_hidden", tuple(int(w) for w in self.field_hidden))
        for name in ("hidden", "input_dim", "output_dim", "readout_hidden"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @property
    def is_cde(self) -> bool:
        return self.kind in (NCDE, NCDE_RNN)

    @property
    def is_hybrid(self) -> bool:
        return self.kind in HYBRID_KINDS

    @property
    def dynamics_group(self) -> str:
        return "ctrnn" if self.kind == CTRNN else "field"

    @property
    def field_spec(self) -> MlpSpec | None:
        if self.kind == CTRNN:
            return None
        n, m = self.hidden, self.input_dim
        out = n * m if self.is_cde else n
        return MlpSpec((n, *self.field_hidden, out))

    @property
    def readout_inputs(self) -> int:
        extra = 2 * self.input_dim if self.is_cde else self.input_dim
        return self.hidden + extra

    @property
    def readout_spec(self) -> MlpSpec:
        return MlpSpec((self.readout_inputs, self.readout_hidden, self.output_dim))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "hidden": self.hidden,
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "field_hidden": list(self.field_hidden),
            "readout_hidden": self.readout_hidden,
        }

    @classmethod
    def from_dict(cls, data) -> ModelConfig:
        known = {"kind", "hidden", "input_dim", "output_dim", "field_hidden", "readout_hidden"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**{k: (tuple(v) if k == "field_hidden" else v) for k, v in data.items()})


def init_params(config: ModelConfig, seed) -> ParamStore:
    """Fresh parameters for ``config``; bit-reproducible for a fixed seed."""
    rng = np.random.default_rng(seed)
    n, m = config.hidden, config.input_dim
    arrays = {}
    if config.kind == CTRNN:
        arrays["ctrnn.A"] = glorot(rng, n, n)
        arrays["ctrnn.B"] = glorot(rng, n, m)
        arrays["ctrnn.b_u"] = np.zeros(n)
        arrays["ctrnn.tau"] = np.ones(1)
    else:
        for k, v in param_init(config.field_spec, rng).items():
            arrays[f"field.{k}"] = v
    if config.is_hybrid:
        arrays["rnn.W_h"] = glorot(rng, n, n)
        arrays["rnn.W_u"] = glorot(rng, n, m)
        arrays["rnn.b"] = np.zeros(n)
    for k, v in param_init(config.readout_spec, rng).items():
        arrays[f"readout.{k}"] = v
    return ParamStore(arrays)


def param_count(config: ModelConfig) -> int:
    n, m = config.hidden, config.input_dim
    total = config.readout_spec.param_count()
    if config.kind == CTRNN:
        total += n * n + n * m + n + 1
    else:
        total += config.field_spec.param_count()
    if config.is_hybrid:
        total += n * n + n * m + n
    return total


def check_params(config: ModelConfig, params: ParamStore):
    n, m = config.hidden, config.input_dim
    expected = {}
    if config.kind == CTRNN:
        expected.update({"ctrnn.A": (n, n), "ctrnn.B": (n, m), "ctrnn.b_u": (n,), "ctrnn.tau": (1,)})
    else:
        expected.update({f"field.{k}": s for k, s in config.field_spec.param_shapes().items()})
    if config.is_hybrid:
        expected.update({"rnn.W_h": (n, n), "rnn.W_u": (n, m), "rnn.b": (n,)})
    expected.update({f"readout.{k}": s for k, s in config.readout_spec.param_shapes().items()})
    for name, shape in expected.items():
        if name not in params:
            raise ShapeError(f"{config.kind} parameters are missing {name!r}")
        if params[name].shape != shape:
            raise ShapeError(f"{name} has shape {params[name].shape}, expected {shape}")
    extra = set(params) - set(expected)
    if extra:
        raise ShapeError(f"unexpected parameters for {config.kind}: {sorted(extra)}")


# -- discrete pieces ---------------------------------------------------------

def rnn_cell(params, x_pre, u):
    """Vanilla recurrent update ``tanh(W_h x' + W_u u + b)``."""
    x_pre = np.asarray(x_pre, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    w_h, w_u, b = params["W_h"], params["W_u"], params["b"]
    if x_pre.shape[-1] != w_h.shape[1] or u.shape[-1] != w_u.shape[1]:
        raise ShapeError(
            f"rnn_cell got state {x_pre.shape[-1]} / input {u.shape[-1]}, "
            f"expected {w_h.shape[1]} / {w_u.shape[1]}"
        )
    return np.tanh(x_pre @ w_h.T + u @ w_u.T + b)


def rnn_cell_vjp(params, x_pre, u, cot):
    z = x_pre @ params["W_h"].T + u @ params["W_u"].T + params["b"]
    s = np.tanh(z)
    zb = cot * (1.0 - s * s)
    zb2 = zb.reshape(-1, zb.shape[-1])
    grads = {
        "W_h": zb2.T @ x_pre.reshape(-1, x_pre.shape[-1]),
        "W_u": zb2.T @ u.reshape(-1, u.shape[-1]),
        "b": zb2.sum(axis=0),
    }
    return zb @ params["W_h"], grads


def _readout_spec(params) -> MlpSpec:
    w0, w1 = params["W0"], params["W1"]
    return MlpSpec((w0.shape[1], w0.shape[0], w1.shape[0]))


def readout_input(x, u, udot=None):
    parts = [np.asarray(x, dtype=np.float64), np.asarray(u, dtype=np.float64)]
    if udot is not None:
        parts.append(np.asarray(udot, dtype=np.float64))
    return np.concatenate(parts, axis=-1)


def readout(params, x, u, udot=None, *, kind: str | None = None):
    """Two-layer head ``W1 tanh(W0 [x; u(; u')] + b0) + b1``.

    ``params`` holds the readout group (leaves ``W0, b0, W1, b1``).  When
    ``kind`` is given, ``udot`` must be supplied exactly for the CDE kinds.
    """
    if kind is not None:
        wants = kind in (NCDE, NCDE_RNN)
        if wants != (udot is not None):
            raise ConfigError(
                f"readout for {kind} {'requires' if wants else 'does not take'} the input derivative"
            )
    z = readout_input(x, u, udot)
    spec = _readout_spec(params)
    if z.shape[-1] != spec.n_in:
        raise ShapeError(f"readout expects {spec.n_in} inputs, got {z.shape[-1]}")
    return mlp_forward(spec, params, z)


# -- continuous dynamics -----------------------------------------------------

class NodeDynamics:
    """Autonomous neural field ``f(x)``."""

    def __init__(self, config: ModelConfig, params: ParamStore, batch: SequenceBatch):
        self.net = MlpEval(config.field_spec, params.group("field"))

    def __call__(self, i, s, x):
        return self.net.forward(x)

    def vjp(self, i, s, x, cot):
        return self.net.vjp(x, cot)


class CdeDynamics:
    """Controlled field ``f(x) @ U'(t)`` on interval ``i`` at local offset ``s``."""

    def __init__(self, config: ModelConfig, params: ParamStore, batch: SequenceBatch):
        self.net = MlpEval(config.field_spec, params.group("field"))
        self.n, self.m = config.hidden, config.input_dim
        self.path = batch.path

    def __call__(self, i, s, x):
        ud = self.path.piece_slope(i, s)
        kern = self.net.forward(x).reshape(x.shape[0], self.n, self.m)
        if self.m == 1:
            return kern[:, :, 0] * ud
        return np.einsum("bnm,bm->bn", kern, ud)

    def vjp(self, i, s, x, cot):
        ud = self.path.piece_slope(i, s)
        out_cot = (cot[:, :, None] * ud[:, None, :]).reshape(x.shape[0], self.n * self.m)
        return self.net.vjp(x, out_cot)


class CtrnnDynamics:
    """``-x / tau + tanh(A x + B u(t) + b_u)`` with ``u`` from the input spline."""

    def __init__(self, config: ModelConfig, params: ParamStore, batch: SequenceBatch):
        g = params.group("ctrnn")
        self.A, self.B, self.b_u = g["A"], g["B"], g["b_u"]
        self.At, self.Bt = self.A.T, self.B.T
        self.tau = float(g["tau"][0])
        if self.tau <= 0.0:
            raise ConfigError(f"CTRNN time constant must be positive, got {self.tau}")
        self.path = batch.path

    def __call__(self, i, s, x):
        u = self.path.piece_value(i, s)
        return -x / self.tau + np.tanh(x @ self.At + u @ self.Bt + self.b_u)

    def vjp(self, i, s, x, cot):
        u = self.path.piece_value(i, s)
        act = np.tanh(x @ self.At + u @ self.Bt + self.b_u)
        zb = cot * (1.0 - act * act)
        grads = {
            "A": zb.T @ x,
            "B": zb.T @ u,
            "b_u": zb.sum(axis=0),
            "tau": np.array([np.sum(cot * x) / self.tau ** 2]),
        }
        return -cot / self.tau + zb @ self.A, grads


def make_dynamics(config: ModelConfig, params: ParamStore, batch: SequenceBatch):
    if config.kind == CTRNN:
        return CtrnnDynamics(config, params, batch)
    if config.is_cde:
        return CdeDynamics(config, params, batch)
    return NodeDynamics(config, params, batch)


def interval_steps(batch: SequenceBatch, i: int, substeps: int) -> np.ndarray:
    """Per-waveform RK4 step on interval ``i`` (from sample i to i+1)."""
    return (batch.times[:, i + 1] - batch.times[:, i]) / substeps


def integrate_interval(dyn, i, x, h, substeps, states=None):
    """RK4 over interval ``i`` in local time; appends node states to ``states``."""
    field_i = lambda s, z: dyn(i, s, z)  # noqa: E731
    if states is not None:
        states.append(x)
    for k in range(substeps):
        x = rk4_step(field_i, k * h, x, h)
        if not np.all(np.isfinite(x)):
            raise DivergenceError("non-finite hidden state", substep=k, interval=i + 1)
        if states is not None:
            states.append(x)
    return x


@dataclass
class ForwardTrace:
    """States kept by a forward pass: O(N) per waveform, no in-interval data."""

    outputs: np.ndarray  # (B, N, p)
    x_pre: np.ndarray  # (B, N, n), state before the RNN jump at t_i
    x_post: np.ndarray  # (B, N+1, n), x_0..x_N
    trajectories: list = field(default_factory=list)  # optional per-interval node states


def forward_batch(config: ModelConfig, params: ParamStore, batch: SequenceBatch,
                  substeps: int = DEFAULT_SUBSTEPS, keep_trajectories: bool = False) -> ForwardTrace:
    check_params(config, params)
    if batch.u.shape[-1] != config.input_dim:
        raise ShapeError(f"waveform input has {batch.u.shape[-1]} channels, model expects {config.input_dim}")
    bsz, n_steps, n = batch.size, batch.n_steps, config.hidden
    dyn = make_dynamics(config, params, batch)
    rnn_p = params.group("rnn") if config.is_hybrid else None
    ro_p = params.group("readout")

    x = np.zeros((bsz, n))
    x_pre = np.empty((bsz, n_steps, n))
    x_post = np.empty((bsz, n_steps + 1, n))
    x_post[:, 0] = x
    trajectories = []
    for i in range(n_steps):
        h = interval_steps(batch, i, substeps)
        states = [] if keep_trajectories else None
        x = integrate_interval(dyn, i, x, h, substeps, states)
        if keep_trajectories:
            trajectories.append(states)
        x_pre[:, i] = x
        if rnn_p is not None:
            x = rnn_cell(rnn_p, x, batch.u[:, i + 1])
        x_post[:, i + 1] = x

    udot = batch.udot[:, 1:] if config.is_cde else None
    outputs = readout(ro_p, x_post[:, 1:], batch.u[:, 1:], udot)
    return ForwardTrace(outputs=outputs, x_pre=x_pre, x_post=x_post, trajectories=trajectories)


def model_forward(config: ModelConfig, params: ParamStore, waveform: Waveform,
                  substeps: int = DEFAULT_SUBSTEPS):
    """Outputs ``o_1..o_N`` (N, p) and final state ``x_N`` for one waveform."""
    batch = SequenceBatch.from_waveforms([waveform])
    trace = forward_batch(config, params, batch, substeps)
    return trace.outputs[0], trace.x_post[0, -1]


def predict(config: ModelConfig, params: ParamStore, waveforms, substeps: int = DEFAULT_SUBSTEPS):
    """Outputs for many waveforms, batching those with equal sample counts."""
    waveforms = list(waveforms)
    out = [None] * len(waveforms)
    by_len = {}
    for idx, w in enumerate(waveforms):
        by_len.setdefault(len(w), []).append(idx)
    for idxs in by_len.values():
        batch = SequenceBatch.from_waveforms([waveforms[j] for j in idxs])
        outputs = forward_batch(config, params, batch, substeps).outputs
        for row, j in enumerate(idxs):
            out[j] = outputs[row]
    return out
