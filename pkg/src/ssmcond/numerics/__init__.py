"""Deterministic tensor primitives, gradient tape, RNG and tensor I/O."""

from . import ops
from .audit import ActivationAuditor
from .gradcheck import GradCheckResult, grad_check
from .ops import depthwise_conv1d, layer_norm, linear
from .rng import Rng, conv_init, dense_init
from .tape import GradTape, Var, value_of
from .tensor import SeqTensor, as_seq, check_finite
from .tensorio import read_tensor, write_tensor

linear_apply = linear

__all__ = [
    "ActivationAuditor",
    "GradCheckResult",
    "GradTape",
    "Rng",
    "SeqTensor",
    "Var",
    "as_seq",
    "check_finite",
    "conv_init",
    "dense_init",
    "depthwise_conv1d",
    "grad_check",
    "layer_norm",
    "linear",
    "linear_apply",
    "ops",
    "read_tensor",
    "value_of",
    "write_tensor",
]
