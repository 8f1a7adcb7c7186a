"""Weight files: model config, parameters, normalization and training record."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .data import NormStats
from .errors import ConfigError
from .models import ModelConfig, check_params
from .nn import ParamStore

FORMAT = "hybrid-dynamics-weights/1"


@dataclass
class WeightFile:
    model: ModelConfig
    params: ParamStore
    stats: NormStats
    training: dict = field(default_factory=dict)

    @property
    def trained(self) -> bool:
        return int(self.training.get("epochs_run", 0)) > 0

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "model": self.model.to_dict(),
            "norm": self.stats.to_dict(),
            "params": self.params.to_json_dict(),
            "training": self.training,
        }


def save_weights(path, wf: WeightFile) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(wf.to_dict(), indent=1, sort_keys=True) + "\n")
    return path


def load_weights(path) -> WeightFile:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: not a weight file ({err})") from None
    if data.get("format") != FORMAT:
        raise ConfigError(f"{path}: unknown weight file format {data.get('format')!r}")
    model = ModelConfig.from_dict(data["model"])
    params = ParamStore.from_json_dict(data["params"])
    check_params(model, params)
    return WeightFile(model, params, NormStats.from_dict(data["norm"]), data.get("training", {}))
