"""Micro CNN engine: tensors, layers, architecture specs and execution."""

from .arch import (  # noqa: F401
    ArchSpec,
    BUILTIN_NAMES,
    BatchNorm,
    ChannelShuffle,
    ConvBlock,
    Fire,
    Inception,
    MaxPool2,
    ReLU,
    SeparableConv,
    SkipConcat,
    UpsampleNearest2,
    builtin_spec,
    count_flops,
    count_params,
    parse_arch_file,
)
from .layers import (  # noqa: F401
    batchnorm_backward,
    batchnorm_forward,
    channel_shuffle,
    conv2d_backward,
    conv2d_forward,
    fire_backward,
    fire_forward,
    maxpool2_backward,
    maxpool2_forward,
    relu,
    sigmoid,
    upsample_nearest,
    upsample_nearest_backward,
)
from .network import (  # noqa: F401
    BNParams,
    ConvParams,
    NetParams,
    build_network,
    load_weights,
    net_backward,
    net_forward,
    net_forward_cached,
    net_output_image,
    pair_tensor,
    save_weights,
    trainable_arrays,
    weight_file_bytes,
)
