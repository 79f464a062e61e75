"""Folding attention for streaming encoders.

Splits each D-channel token into N contiguous sub-tokens before a
standard attention layer and concatenates them after it, cutting the
dominant linear-layer cost (1/N compute, 1/N^2 parameters) at a
negligible attention-score premium in the small-context streaming
regime. Ships the layer implementations (forward and backward), a
chunked streaming encoder, an exact parameter/FLOP/memory accountant
with fitted size/GOPS/power grid models, and a verification harness.
"""

from .costmodel import (
    CostReport,
    CostRow,
    GopsModel,
    PowerCoefficients,
    Reduction,
    SizeModel,
    compare,
    count_params,
    encoder_cost,
    encoder_gops,
    fit_gops_model,
    fit_power_model,
    fit_size_model,
    flops_per_token,
    memory_report,
)
from .folding import (
    FoldingLayerParams,
    derive_folding_spec,
    expand_mask,
    fold,
    folding_layer_forward,
    layer_forward,
    unfold,
)
from .layers import (
    LayerParams,
    LayerSpec,
    attention_layer_forward,
    causal_mask,
    ffn_forward,
    full_mask,
    init_params,
    mha_forward,
)
from .streaming import (
    EncoderModel,
    EncoderParams,
    EncoderSpec,
    StreamState,
    block_causal_mask,
    init_encoder,
    init_stream,
    offline_forward,
    process_chunk,
    stream_forward,
)
from .tensor import (
    DimensionError,
    DivisibilityError,
    FlopCounter,
    activation,
    concat_channels,
    count_flops,
    layer_norm,
    matmul,
    softmax_lastdim,
    split_channels,
    tensor,
)

__version__ = "0.1.0"

