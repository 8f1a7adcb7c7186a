"""Run configuration: JSON sections merged with command-line overrides."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .data import CircuitConstants, CorpusConfig
from .errors import ConfigError
from .gradcheck import GradcheckConfig
from .models import DEFAULT_HIDDEN, ModelConfig
from .training import TrainConfig

SECTIONS = ("seed", "corpus", "model", "training", "solver", "export", "gradcheck")


@dataclass(frozen=True)
class SplitConfig:
    split_ratio: float = 0.8
    time_scale: float = 1.0


@dataclass(frozen=True)
class SolverConfig:
    substeps: int = 4


@dataclass(frozen=True)
class ExportConfig:
    amplitude: float = 1.0
    frequency: float = 0.2
    samples: int = 129
    timestep_divisor: int = 512
    nrmse_ceiling: float = 1e-2
    module_name: str | None = None

    def validate(self):
        if self.amplitude <= 0 or self.frequency <= 0 or self.samples < 2 or self.timestep_divisor < 1:
            raise ConfigError("export excitation needs positive amplitude/frequency, samples >= 2, divisor >= 1")
        if not self.nrmse_ceiling > 0:
            raise ConfigError("nrmse_ceiling must be positive")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    model: ModelConfig = field(default_factory=lambda: ModelConfig("NODE-RNN"))
    training: TrainConfig = field(default_factory=TrainConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    export: ExportConfig = field(default_factory=ExportConfig)
    gradcheck: GradcheckConfig = field(default_factory=GradcheckConfig)

    def validate(self):
        self.corpus.validate()
        if not 0.0 < self.split.split_ratio < 1.0:
            raise ConfigError("corpus.split_ratio must lie in (0, 1)")
        if not self.split.time_scale > 0:
            raise ConfigError("corpus.time_scale must be positive")
        self.training.validate()
        if self.solver.substeps < 1:
            raise ConfigError("solver.substeps must be >= 1")
        self.export.validate()
        if self.gradcheck.models < 1 or self.gradcheck.substeps < 1:
            raise ConfigError("gradcheck needs at least one model and one substep")
        return self


def _known(cls, data: dict, section: str, drop=()) -> dict:
    names = {f.name for f in fields(cls)} - set(drop)
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in '{section}': {sorted(unknown)}")
    return dict(data)


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"section '{name}' must be a JSON object")
    return value


def from_dict(raw: dict) -> RunConfig:
    """Build a config from parsed JSON; every key must be known."""
    if not isinstance(raw, dict):
        raise ConfigError("the config file must hold a JSON object")
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    try:
        seed = int(raw.get("seed", 0))
        corpus_raw = dict(_section(raw, "corpus"))
        split = {k: corpus_raw.pop(k) for k in ("split_ratio", "time_scale") if k in corpus_raw}
        circuit = corpus_raw.pop("circuit", {})
        _known(CorpusConfig, corpus_raw, "corpus", drop=("seed", "circuit"))
        _known(CircuitConstants, circuit, "corpus.circuit")
        corpus = CorpusConfig(circuit=CircuitConstants(**circuit), seed=seed, **corpus_raw)
        model_raw = {"kind": "NODE-RNN", **_section(raw, "model")}
        model = ModelConfig.from_dict(model_raw)
        train_raw = _known(TrainConfig, _section(raw, "training"), "training",
                           drop=("seed", "substeps"))
        solver = SolverConfig(**_known(SolverConfig, _section(raw, "solver"), "solver"))
        training = TrainConfig(seed=seed, substeps=solver.substeps, **train_raw)
        export = ExportConfig(**_known(ExportConfig, _section(raw, "export"), "export"))
        grad = GradcheckConfig(**{"seed": seed, **_known(GradcheckConfig, _section(raw, "gradcheck"),
                                                         "gradcheck", drop=("seed",))})
    except TypeError as err:
        raise ConfigError(f"invalid config value: {err}") from None
    return RunConfig(seed, corpus, SplitConfig(**split), model, training, solver, export, grad).validate()


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return from_dict({})
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})") from None
    return from_dict(raw)


def with_overrides(cfg: RunConfig, seed=None, threads=None, kind=None, epochs=None,
                   learning_rate=None) -> RunConfig:
    """Apply command-line flags; flags win over the config file."""
    if seed is not None:
        cfg = replace(cfg, seed=seed, corpus=replace(cfg.corpus, seed=seed),
                      training=replace(cfg.training, seed=seed),
                      gradcheck=replace(cfg.gradcheck, seed=seed))
    train = cfg.training
    if threads is not None:
        train = replace(train, threads=threads)
    if epochs is not None:
        train = replace(train, epochs=epochs)
    if learning_rate is not None:
        train = replace(train, learning_rate=learning_rate)
    cfg = replace(cfg, training=train)
    if kind is not None and kind != cfg.model.kind:
        model = cfg.model.to_dict()
        # a hidden size left at the old kind's default follows the new kind
        if model["hidden"] == DEFAULT_HIDDEN[cfg.model.kind]:
            model["hidden"] = 0
        model["kind"] = kind
        cfg = replace(cfg, model=ModelConfig.from_dict(model))
    return cfg.validate()
