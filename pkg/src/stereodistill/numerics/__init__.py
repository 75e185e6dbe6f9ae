from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import finite_difference_grad, max_relative_error
from .layers import (
    BN_EPS,
    BN_MOMENTUM,
    PoolIndices,
    RunningStats,
    batchnorm_forward,
    conv2d_forward,
    linear_forward,
    maxpool2x2_with_indices,
    unpool2x2,
    uniform_fan_in_init,
)
from .losses import (
    IGNORE_LABEL,
    bce_with_sigmoid_loss,
    masked_l1_loss,
    softmax_cross_entropy,
)
from .network import LayerSpec, Network
from .optim import AdamState, adam_step
from .tensor import NumericsError, Tensor, check_finite, relu, sigmoid

__all__ = [
    "AdamState",
    "BN_EPS",
    "BN_MOMENTUM",
    "CheckpointError",
    "IGNORE_LABEL",
    "LayerSpec",
    "Network",
    "NumericsError",
    "PoolIndices",
    "RunningStats",
    "Tensor",
    "adam_step",
    "batchnorm_forward",
    "bce_with_sigmoid_loss",
    "check_finite",
    "conv2d_forward",
    "finite_difference_grad",
    "linear_forward",
    "load_checkpoint",
    "masked_l1_loss",
    "max_relative_error",
    "maxpool2x2_with_indices",
    "relu",
    "save_checkpoint",
    "sigmoid",
    "softmax_cross_entropy",
    "unpool2x2",
    "uniform_fan_in_init",
]
