"""Speech-dynamics stage, objective, synthetic data and the toy training loop."""

from .conditioning import (
    ConditioningSequence,
    DecoderParams,
    DynamicsParams,
    assemble_conditioning,
    expand_uniform,
    init_decoder,
    init_dynamics,
    pack_conditioning,
    temporal_predict,
    toy_decode,
    unpack_conditioning,
)

__all__ = [
    "ConditioningSequence",
    "DecoderParams",
    "DynamicsParams",
    "assemble_conditioning",
    "expand_uniform",
    "init_decoder",
    "init_dynamics",
    "pack_conditioning",
    "temporal_predict",
    "toy_decode",
    "unpack_conditioning",
]
