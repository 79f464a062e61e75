"""JSON run configurations: model grids, toy training, benchmarks.

A config document describes a family of encoder models (layer counts per
kind over shared layer dimensions), optional reference measurements used
as fit anchors and comparison baselines, and seeds/output options. The
dataclasses round-trip losslessly through JSON.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .folding import derive_folding_spec
from .layers import LayerSpec
from .streaming import EncoderSpec


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass(frozen=True)
class LayerConfig:
    embed_dim: int = 512
    ffn_dim: int = 2048
    heads: int = 8
    folding_factor: int = 2
    activation: str = "relu"
    use_bias: bool = True


@dataclass(frozen=True)
class StreamingConfig:
    feature_dim: int = 80
    chunk_size: int = 8
    left_context: int = 24


@dataclass(frozen=True)
class ModelConfig:
    name: str
    folding_layers: int
    standard_layers: int


@dataclass(frozen=True)
class ReferenceRow:
    size_m: float
    gops: float
    power_mw: float


@dataclass(frozen=True)
class FitConfig:
    size_anchors: tuple[str, ...]
    gops_anchors: tuple[str, ...]
    power_anchors: tuple[str, ...]


@dataclass(frozen=True)
class ToyConfig:
    num_classes: int = 4
    seq_len: int = 12
    noise: float = 0.3
    train_sequences: int = 64
    eval_sequences: int = 16
    task_seed: int = 7
    steps: int = 500
    lr: float = 0.05
    batch_size: int = 8
    target_accuracy: float = 0.95


@dataclass(frozen=True)
class RunConfig:
    name: str
    layer: LayerConfig = field(default_factory=LayerConfig)
    streaming: StreamingConfig = field(default_factory=StreamingConfig)
    models: tuple[ModelConfig, ...] = ()
    reference: dict[str, ReferenceRow] = field(default_factory=dict)
    fit: FitConfig | None = None
    toy: ToyConfig | None = None
    bytes_per_param: int = 4
    seed: int = 0
    output: str = "text"

    def model(self, name: str) -> ModelConfig:
        for m in self.models:
            if m.name == name:
                return m
        raise ConfigError(f"unknown model id {name!r} in config {self.name!r}")


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    names = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    if "name" not in doc:
        raise ConfigError("config is missing required field 'name'")
    kwargs = {"name": doc["name"]}
    if "layer" in doc:
        kwargs["layer"] = _build(LayerConfig, doc["layer"], "layer")
    if "streaming" in doc:
        kwargs["streaming"] = _build(StreamingConfig, doc["streaming"], "streaming")
    if "models" in doc:
        kwargs["models"] = tuple(
            _build(ModelConfig, m, f"models[{i}]") for i, m in enumerate(doc["models"])
        )
    if "reference" in doc:
        kwargs["reference"] = {
            name: _build(ReferenceRow, row, f"reference[{name}]")
            for name, row in doc["reference"].items()
        }
    if "fit" in doc and doc["fit"] is not None:
        fit = doc["fit"]
        if not isinstance(fit, dict):
            raise ConfigError("fit: expected an object")
        try:
            kwargs["fit"] = FitConfig(
                size_anchors=tuple(fit["size_anchors"]),
                gops_anchors=tuple(fit["gops_anchors"]),
                power_anchors=tuple(fit["power_anchors"]),
            )
        except KeyError as exc:
            raise ConfigError(f"fit: missing field {exc}") from exc
    if "toy" in doc and doc["toy"] is not None:
        kwargs["toy"] = _build(ToyConfig, doc["toy"], "toy")
    for key in ("bytes_per_param", "seed", "output"):
        if key in doc:
            kwargs[key] = doc[key]
    known = {"name", "layer", "streaming", "models", "reference", "fit", "toy",
             "bytes_per_param", "seed", "output"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown top-level field(s) {sorted(unknown)}")
    return RunConfig(**kwargs)


def config_to_dict(cfg: RunConfig) -> dict:
    doc = {
        "name": cfg.name,
        "layer": asdict(cfg.layer),
        "streaming": asdict(cfg.streaming),
        "models": [asdict(m) for m in cfg.models],
        "reference": {k: asdict(v) for k, v in cfg.reference.items()},
        "bytes_per_param": cfg.bytes_per_param,
        "seed": cfg.seed,
        "output": cfg.output,
    }
    if cfg.fit is not None:
        doc["fit"] = {
            "size_anchors": list(cfg.fit.size_anchors),
            "gops_anchors": list(cfg.fit.gops_anchors),
            "power_anchors": list(cfg.fit.power_anchors),
        }
    if cfg.toy is not None:
        doc["toy"] = asdict(cfg.toy)
    return doc


def loads_config(text: str) -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(doc)


def dumps_config(cfg: RunConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2) + "\n"


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    try:
        return loads_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{p}: {exc}") from exc


# ---------------------------------------------------------------------------
# Spec construction
# ---------------------------------------------------------------------------


def standard_layer_spec(layer: LayerConfig) -> LayerSpec:
    return LayerSpec(
        kind="standard",
        embed_dim=layer.embed_dim,
        ffn_dim=layer.ffn_dim,
        heads=layer.heads,
        activation=layer.activation,
        use_bias=layer.use_bias,
    )


def build_encoder_spec(cfg: RunConfig, model: ModelConfig) -> EncoderSpec:
    """Folding layers first, then standard layers, per the grid layout."""
    std = standard_layer_spec(cfg.layer)
    fold_spec = derive_folding_spec(std, cfg.layer.folding_factor)
    layers = (fold_spec,) * model.folding_layers + (std,) * model.standard_layers
    if not layers:
        raise ConfigError(f"model {model.name!r} has zero layers")
    return EncoderSpec(
        layers=layers,
        feature_dim=cfg.streaming.feature_dim,
        chunk_size=cfg.streaming.chunk_size,
        left_context=cfg.streaming.left_context,
    )
