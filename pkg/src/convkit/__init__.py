"""convkit: data-free factorization of convolutional layers.

Turns ordinary conv layers of a pretrained sequential CNN into
depthwise + pointwise pairs via per-input-channel truncated SVD, with
channel and spatial decomposition baselines at MAC-matched filter
counts, a reference forward-pass engine with MAC accounting, and a
manifest + blob model container.
"""

from .decompose import (
    ChannelPair,
    ConvWeights,
    DecomposedPair,
    DepthwiseWeights,
    PointwiseWeights,
    SpatialPair,
    channel_decompose,
    dac_decompose,
    match_rank,
    max_rank,
    reconstruct,
    spatial_decompose,
)
from .errors import ConvkitError, NumericError, ValidationError
from .graph import (
    DecompositionPlan,
    DecompositionReport,
    LayerSpec,
    ModelGraph,
    PlanEntry,
    apply_plan,
    count_macs,
    load_model,
    run_model,
    save_model,
    verify_models,
)
from .reference import (
    MacCounter,
    conv2d,
    dense,
    depthwise_conv,
    flatten_map,
    maxpool2,
    pointwise_conv,
    relu,
)
from .svd import SvdResult, svd, svd_truncate, truncation_error

__version__ = "0.1.0"

__all__ = [
    "ChannelPair",
    "ConvWeights",
    "ConvkitError",
    "DecomposedPair",
    "DecompositionPlan",
    "DecompositionReport",
    "DepthwiseWeights",
    "LayerSpec",
    "MacCounter",
    "ModelGraph",
    "NumericError",
    "PlanEntry",
    "PointwiseWeights",
    "SpatialPair",
    "SvdResult",
    "ValidationError",
    "apply_plan",
    "channel_decompose",
    "conv2d",
    "count_macs",
    "dac_decompose",
    "dense",
    "depthwise_conv",
    "flatten_map",
    "load_model",
    "match_rank",
    "max_rank",
    "maxpool2",
    "pointwise_conv",
    "reconstruct",
    "relu",
    "run_model",
    "save_model",
    "spatial_decompose",
    "svd",
    "svd_truncate",
    "truncation_error",
    "verify_models",
]
