"""Parameter, FLOP, memory, and power accounting for encoder stacks.

Two layers of modeling live here:

* exact closed-form accounting for a concrete layer/encoder (parameter
  counts, per-token FLOPs split into linear-projection work and
  attention-score work, weight bytes, score-matrix elements);
* small fitted linear models that map layer counts to model size, summed
  per-layer FLOPs to streaming GOPS, and (size, GOPS) to milliwatts.
  Anchored on two reference rows each, they reproduce the published
  size/GOPS/power grids for both model families to within a few percent.

Conventions: FLOPs are 2 * multiply-accumulates; "per token" means per
original (unfolded) token; T is the attention context in tokens.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import LayerSpec
from .streaming import EncoderSpec

DEFAULT_BYTES_PER_PARAM = 4  # single precision; 1 models 8-bit quantized weights


@dataclass(frozen=True)
class LayerCost:
    attention_weights: int
    ffn_weights: int
    biases: int
    norms: int

    @property
    def total(self) -> int:
        return self.attention_weights + self.ffn_weights + self.biases + self.norms


def param_breakdown(spec: LayerSpec) -> LayerCost:
    """Parameter count of one layer, by block kind.

    Folding specs carry sub-token dimensions, so the same formula yields
    the 1/N^2 weight reduction automatically. With use_bias=False the
    layer counts pure weight matrices (no biases, no norm affines).
    """
    d, f = spec.embed_dim, spec.ffn_dim
    attention = 4 * d * d
    ffn = 2 * d * f
    biases = (4 * d + f + d) if spec.use_bias else 0
    norms = 4 * d if spec.use_bias else 0
    return LayerCost(attention, ffn, biases, norms)


def count_params(spec: LayerSpec) -> int:
    return param_breakdown(spec).total


def flops_per_token(spec: LayerSpec, t: int) -> tuple[int, int]:
    """(linear_flops, score_flops) per original token at context size t.

    Standard: linear = 2*(4*D^2 + 2*D*F), score = 4*T*D.
    Folding (factor N): linear drops to 1/N, score grows to N times.
    """
    if t < 1:
        raise ValueError("context size t must be >= 1")
    n = spec.folding_factor
    d_out = spec.outer_dim
    f_out = spec.ffn_dim * n
    base_linear = 2 * (4 * d_out * d_out + 2 * d_out * f_out)
    assert base_linear % n == 0
    return base_linear // n, 4 * n * t * d_out


def score_memory_elements(spec: LayerSpec, t: int) -> int:
    """Stored attention-score entries: heads * (token count)^2."""
    return spec.heads * (spec.folding_factor * t) ** 2


@dataclass
class CostReport:
    params_total: int
    params_per_layer: list[LayerCost]
    base_params: int
    linear_flops_per_token: int
    score_flops_per_token: int
    weight_bytes: int
    score_memory_elements: int
    gops: float | None = None
    power_mw: float | None = None


def encoder_cost(
    spec: EncoderSpec,
    t: int | None = None,
    bytes_per_param: int = DEFAULT_BYTES_PER_PARAM,
) -> CostReport:
    """Exact accounting for a concrete encoder.

    `base_params` is the input projection (weights + bias); t defaults to
    the streaming context chunk_size + left_context.
    """
    if t is None:
        t = spec.chunk_size + spec.left_context
    per_layer = [param_breakdown(ls) for ls in spec.layers]
    base = spec.feature_dim * spec.width + spec.width
    total = base + sum(c.total for c in per_layer)
    linear = score = 0
    score_mem = 0
    for ls in spec.layers:
        lf, sf = flops_per_token(ls, t)
        linear += lf
        score += sf
        score_mem += score_memory_elements(ls, t)
    return CostReport(
        params_total=total,
        params_per_layer=per_layer,
        base_params=base,
        linear_flops_per_token=linear,
        score_flops_per_token=score,
        weight_bytes=total * bytes_per_param,
        score_memory_elements=score_mem,
    )


def memory_report(
    spec: EncoderSpec,
    t: int | None = None,
    bytes_per_param: int = DEFAULT_BYTES_PER_PARAM,
) -> tuple[int, int]:
    """(weight_bytes, score_elements) for an encoder at context t."""
    report = encoder_cost(spec, t=t, bytes_per_param=bytes_per_param)
    return report.weight_bytes, report.score_memory_elements


# ---------------------------------------------------------------------------
# Fitted grid models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SizeModel:
    """size_M = base + n_std * per_std + n_fold * per_std / N^2."""

    base_m: float
    per_std_m: float
    folding_factor: int = 2

    def predict(self, n_fold: int, n_std: int) -> float:
        per_fold = self.per_std_m / self.folding_factor**2
        return self.base_m + n_std * self.per_std_m + n_fold * per_fold


def fit_size_model(
    rows: list[tuple[int, int, float]], folding_factor: int = 2
) -> SizeModel:
    """Least-squares fit of (n_fold, n_std, size_M) rows; exact on 2 rows.

    Each folding layer counts as 1/N^2 of a standard layer, so the design
    has a single slope column.
    """
    if len(rows) < 2:
        raise ValueError("need at least 2 rows to fit a size model")
    eff = np.array([nf / folding_factor**2 + ns for nf, ns, _ in rows])
    sizes = np.array([s for _, _, s in rows])
    design = np.stack([np.ones_like(eff), eff], axis=1)
    if np.linalg.matrix_rank(design) < 2:
        raise ValueError("degenerate size fit: all rows have the same layer count")
    coeff, *_ = np.linalg.lstsq(design, sizes, rcond=None)
    return SizeModel(base_m=float(coeff[0]), per_std_m=float(coeff[1]),
                     folding_factor=folding_factor)


@dataclass(frozen=True)
class GopsModel:
    """gops = sum_layers(flops_per_token) * token_rate / 1e9 + base_gops."""

    token_rate: float
    base_gops: float


def encoder_flops_per_token(spec: EncoderSpec, t: int | None = None) -> int:
    if t is None:
        t = spec.chunk_size + spec.left_context
    return sum(sum(flops_per_token(ls, t)) for ls in spec.layers)


def fit_gops_model(rows: list[tuple[float, float]]) -> GopsModel:
    """Fit (flops_per_token_sum, gops) rows; exact on 2 rows."""
    if len(rows) < 2:
        raise ValueError("need at least 2 rows to fit a gops model")
    flops = np.array([f for f, _ in rows]) / 1e9
    gops = np.array([g for _, g in rows])
    design = np.stack([flops, np.ones_like(flops)], axis=1)
    if np.linalg.matrix_rank(design) < 2:
        raise ValueError("degenerate gops fit: identical flop counts")
    coeff, *_ = np.linalg.lstsq(design, gops, rcond=None)
    return GopsModel(token_rate=float(coeff[0]), base_gops=float(coeff[1]))


def encoder_gops(
    spec: EncoderSpec,
    token_rate: float,
    base_gops: float,
    t: int | None = None,
) -> float:
    return encoder_flops_per_token(spec, t) * token_rate / 1e9 + base_gops


@dataclass(frozen=True)
class PowerCoefficients:
    """power_mW = a * size_M + b * gops.

    The size term dominates: inference power is driven by weight traffic,
    which scales with model size, while compute is comparatively cheap.
    """

    a_mw_per_msize: float
    b_mw_per_gops: float

    def predict(self, size_m: float, gops: float) -> float:
        return self.a_mw_per_msize * size_m + self.b_mw_per_gops * gops


def fit_power_model(points: list[tuple[float, float, float]]) -> PowerCoefficients:
    """Least squares on (size_M, gops, power_mW) points; exact on 2."""
    if len(points) < 2:
        raise ValueError("need at least 2 points to fit a power model")
    design = np.array([[s, g] for s, g, _ in points])
    power = np.array([p for _, _, p in points])
    if np.linalg.matrix_rank(design) < 2:
        raise ValueError("degenerate power fit: size/gops columns not independent")
    coeff, *_ = np.linalg.lstsq(design, power, rcond=None)
    return PowerCoefficients(a_mw_per_msize=float(coeff[0]), b_mw_per_gops=float(coeff[1]))


# ---------------------------------------------------------------------------
# Comparison reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CostRow:
    """One model's headline numbers (from a fit or from reference data)."""

    name: str
    size_m: float
    gops: float
    power_mw: float


@dataclass(frozen=True)
class Reduction:
    candidate: str
    baseline: str
    size_pct: float
    power_pct: float
    gops_pct: float


def compare(candidate: CostRow, baseline: CostRow) -> Reduction:
    """Percentage reductions of candidate relative to baseline.

    Positive means the candidate is smaller/cheaper; negative means it
    costs more.
    """

    def pct(new, old):
        return 100.0 * (1.0 - new / old)

    return Reduction(
        candidate=candidate.name,
        baseline=baseline.name,
        size_pct=pct(candidate.size_m, baseline.size_m),
        power_pct=pct(candidate.power_mw, baseline.power_mw),
        gops_pct=pct(candidate.gops, baseline.gops),
    )
