"""Grid pipeline: fit the size/GOPS/power models on anchor rows and cost
every model in a config, reproducing the reference tables."""

from __future__ import annotations

from dataclasses import dataclass

from .config import ConfigError, ModelConfig, RunConfig, build_encoder_spec
from .costmodel import (
    CostRow,
    GopsModel,
    PowerCoefficients,
    Reduction,
    SizeModel,
    compare,
    encoder_flops_per_token,
    fit_gops_model,
    fit_power_model,
    fit_size_model,
)


@dataclass
class GridResult:
    rows: list[CostRow]
    size_model: SizeModel | None
    gops_model: GopsModel | None
    power: PowerCoefficients | None


def _anchor_reference(cfg: RunConfig, name: str):
    if name not in cfg.reference:
        raise ConfigError(f"fit anchor {name!r} has no reference row")
    return cfg.reference[name]


def fit_grid_models(cfg: RunConfig):
    """(SizeModel, GopsModel, PowerCoefficients) from the config anchors."""
    if cfg.fit is None:
        raise ConfigError(f"config {cfg.name!r} has no fit section")
    n = cfg.layer.folding_factor

    size_rows = []
    for name in cfg.fit.size_anchors:
        m = cfg.model(name)
        size_rows.append((m.folding_layers, m.standard_layers, _anchor_reference(cfg, name).size_m))
    size_model = fit_size_model(size_rows, folding_factor=n)

    gops_rows = []
    for name in cfg.fit.gops_anchors:
        spec = build_encoder_spec(cfg, cfg.model(name))
        gops_rows.append((float(encoder_flops_per_token(spec)), _anchor_reference(cfg, name).gops))
    gops_model = fit_gops_model(gops_rows)

    power_points = [
        (ref.size_m, ref.gops, ref.power_mw)
        for ref in (_anchor_reference(cfg, name) for name in cfg.fit.power_anchors)
    ]
    power = fit_power_model(power_points)
    return size_model, gops_model, power


def predict_row(
    cfg: RunConfig,
    model: ModelConfig,
    size_model: SizeModel,
    gops_model: GopsModel,
    power: PowerCoefficients,
) -> CostRow:
    spec = build_encoder_spec(cfg, model)
    size_m = size_model.predict(model.folding_layers, model.standard_layers)
    gops = encoder_flops_per_token(spec) * gops_model.token_rate / 1e9 + gops_model.base_gops
    return CostRow(model.name, size_m, gops, power.predict(size_m, gops))


def grid_report(cfg: RunConfig) -> GridResult:
    """Fitted size/GOPS/power for every model in the config grid."""
    if not cfg.models:
        return GridResult([], None, None, None)
    size_model, gops_model, power = fit_grid_models(cfg)
    rows = [predict_row(cfg, m, size_model, gops_model, power) for m in cfg.models]
    return GridResult(rows, size_model, gops_model, power)


def reference_row(cfg: RunConfig, name: str) -> CostRow | None:
    ref = cfg.reference.get(name)
    if ref is None:
        return None
    return CostRow(name, ref.size_m, ref.gops, ref.power_mw)


def cost_row(cfg: RunConfig, name: str, prefer_reference: bool = True) -> CostRow:
    """Reference row when bundled, otherwise the fitted prediction."""
    if prefer_reference:
        ref = reference_row(cfg, name)
        if ref is not None:
            return ref
    size_model, gops_model, power = fit_grid_models(cfg)
    return predict_row(cfg, cfg.model(name), size_model, gops_model, power)


def pair_reductions(
    cfg: RunConfig, pairs: list[tuple[str, str]], prefer_reference: bool = True
) -> list[Reduction]:
    return [
        compare(cost_row(cfg, cand, prefer_reference), cost_row(cfg, base, prefer_reference))
        for cand, base in pairs
    ]
