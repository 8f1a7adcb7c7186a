"""Dense layers, a tanh multilayer perceptron and its vector-Jacobian product.

Matrices are plain 2-D float64 numpy arrays stored row-major, with weights
shaped ``(out, in)``.  Every function accepts inputs with arbitrary leading
batch axes; parameter gradients are summed over those axes.
"""

from __future__ import annotations

from collections.abc import Iterator, Mapping
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths of a perceptron; tanh between layers, linear output."""

    widths: tuple[int, ...]

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 2:
            raise ShapeError(f"an MLP needs at least 2 widths, got {widths}")
        if any(w < 1 for w in widths):
            raise ShapeError(f"all MLP widths must be >= 1, got {widths}")
        object.__setattr__(self, "widths", widths)

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    @property
    def n_in(self) -> int:
        return self.widths[0]

    @property
    def n_out(self) -> int:
        return self.widths[-1]

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        for k in range(self.n_layers):
            shapes[f"W{k}"] = (self.widths[k + 1], self.widths[k])
            shapes[f"b{k}"] = (self.widths[k + 1],)
        return shapes

    def param_count(self) -> int:
        return sum(int(np.prod(s)) for s in self.param_shapes().values())


class ParamStore(Mapping):
    """Ordered collection of named float64 arrays.

    Names are dotted, ``group.leaf`` (for example ``field.W0``); the group
    prefix identifies which part of a model an array belongs to.  Iteration
    order is insertion order and is what ``flatten`` uses.
    """

    def __init__(self, arrays: Mapping[str, np.ndarray] | None = None):
        self._arrays: dict[str, np.ndarray] = {}
        for name, value in (arrays or {}).items():
            self._arrays[name] = np.array(value, dtype=np.float64)

    def __getitem__(self, name):
        return self._arrays[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._arrays)

    def __len__(self):
        return len(self._arrays)

    def __repr__(self):
        inner = ", ".join(f"{k}: {v.shape}" for k, v in self._arrays.items())
        return f"ParamStore({inner})"

    @property
    def size(self) -> int:
        return sum(v.size for v in self._arrays.values())

    def groups(self) -> list[str]:
        seen = []
        for name in self._arrays:
            g = name.split(".", 1)[0]
            if g not in seen:
                seen.append(g)
        return seen

    def group(self, prefix: str) -> dict[str, np.ndarray]:
        """Arrays of one group keyed by their leaf name."""
        head = prefix + "."
        return {k[len(head):]: v for k, v in self._arrays.items() if k.startswith(head)}

    def with_group(self, prefix: str, arrays: Mapping[str, np.ndarray]) -> ParamStore:
        out = dict(self._arrays)
        for leaf, value in arrays.items():
            out[f"{prefix}.{leaf}"] = value
        return ParamStore(out)

    def flatten(self) -> np.ndarray:
        if not self._arrays:
            return np.zeros(0)
        return np.concatenate([v.ravel() for v in self._arrays.values()])

    def unflatten(self, flat: np.ndarray) -> ParamStore:
        """A store with this store's layout filled from ``flat``."""
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.size,):
            raise ShapeError(f"expected flat vector of length {self.size}, got {flat.shape}")
        out, pos = {}, 0
        for name, value in self._arrays.items():
            out[name] = flat[pos:pos + value.size].reshape(value.shape).copy()
            pos += value.size
        return ParamStore(out)

    def zeros_like(self) -> ParamStore:
        return ParamStore({k: np.zeros_like(v) for k, v in self._arrays.items()})

    def copy(self) -> ParamStore:
        return ParamStore({k: v.copy() for k, v in self._arrays.items()})

    def to_json_dict(self) -> dict:
        return {
            name: {"shape": list(value.shape), "values": [float(x) for x in value.ravel()]}
            for name, value in self._arrays.items()
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> ParamStore:
        arrays = {}
        for name, entry in data.items():
            shape = tuple(int(s) for s in entry["shape"])
            values = np.asarray(entry["values"], dtype=np.float64)
            if values.size != int(np.prod(shape)):
                raise ShapeError(f"{name}: {values.size} values do not fill shape {shape}")
            arrays[name] = values.reshape(shape)
        return cls(arrays)


def _check_params(spec: MlpSpec, params: Mapping[str, np.ndarray]):
    for name, shape in spec.param_shapes().items():
        if name not in params:
            raise ShapeError(f"missing MLP parameter {name!r}")
        if params[name].shape != shape:
            raise ShapeError(
                f"layer {name[1:]}: parameter {name} has shape {params[name].shape}, expected {shape}"
            )


class MlpEval:
    """A perceptron bound to validated parameters, for repeated evaluation."""

    def __init__(self, spec: MlpSpec, params: Mapping[str, np.ndarray]):
        _check_params(spec, params)
        self.spec = spec
        self.weights = [params[f"W{k}"] for k in range(spec.n_layers)]
        self.weights_t = [w.T for w in self.weights]
        self.biases = [params[f"b{k}"] for k in range(spec.n_layers)]
        self.names = list(spec.param_shapes())

    def forward(self, x):
        h = x
        last = len(self.weights) - 1
        for k, (wt, b) in enumerate(zip(self.weights_t, self.biases)):
            h = h @ wt + b
            if k < last:
                h = np.tanh(h)
        return h

    def vjp(self, x, cot):
        # keep layer inputs (post-activation) for the reverse sweep
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for k, (wt, b) in enumerate(zip(self.weights_t, self.biases)):
            h = h @ wt + b
            if k < last:
                h = np.tanh(h)
                acts.append(h)
        grads = {}
        g = cot
        for k in range(last, -1, -1):
            a_in = acts[k]
            g2 = g.reshape(-1, g.shape[-1])
            grads[f"W{k}"] = g2.T @ a_in.reshape(-1, a_in.shape[-1])
            grads[f"b{k}"] = g2.sum(axis=0)
            g = g @ self.weights[k]
            if k > 0:
                g = g * (1.0 - a_in * a_in)
        return g, {name: grads[name] for name in self.names}


def mlp_forward(spec: MlpSpec, params: Mapping[str, np.ndarray], x) -> np.ndarray:
    """Evaluate the perceptron on ``x`` of shape ``(..., widths[0])``."""
    net = MlpEval(spec, params)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (spec.n_in,):
        raise ShapeError(f"layer 0: input has trailing size {x.shape[-1:]}, expected {spec.n_in}")
    return net.forward(x)


def mlp_vjp(spec: MlpSpec, params: Mapping[str, np.ndarray], x, cotangent):
    """Pull ``cotangent`` back through the perceptron at ``x``.

    Returns ``(grad_x, grads)`` where ``grads`` maps each parameter leaf name
    to cotangent-weighted Jacobian products summed over batch axes.
    """
    net = MlpEval(spec, params)
    x = np.asarray(x, dtype=np.float64)
    cot = np.asarray(cotangent, dtype=np.float64)
    if x.shape[-1:] != (spec.n_in,):
        raise ShapeError(f"layer 0: input has trailing size {x.shape[-1:]}, expected {spec.n_in}")
    if cot.shape != x.shape[:-1] + (spec.n_out,):
        raise ShapeError(f"cotangent shape {cot.shape} does not match output {x.shape[:-1] + (spec.n_out,)}")
    return net.vjp(x, cot)


def param_init(spec: MlpSpec, seed) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases.

    ``seed`` may be an int or a ``numpy.random.Generator``; layers draw in
    order so a fixed seed gives bit-identical parameters.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params = {}
    for k in range(spec.n_layers):
        fan_in, fan_out = spec.widths[k], spec.widths[k + 1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        params[f"W{k}"] = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        params[f"b{k}"] = np.zeros(fan_out)
    return params


def glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))
