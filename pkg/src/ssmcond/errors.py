"""Exception hierarchy shared across the package."""


class SsmcondError(Exception):
    """Base class for all package errors."""


class ShapeError(SsmcondError, ValueError):
    """Operand shapes are inconsistent."""


class NonFiniteError(SsmcondError, ValueError):
    """A tensor contains NaN or Inf where finite values are required."""


class TensorFormatError(SsmcondError):
    """An MVCT tensor file could not be decoded."""


class BadMagicError(TensorFormatError):
    pass


class TruncatedPayloadError(TensorFormatError):
    pass


class BadRankError(TensorFormatError):
    pass


class UnsupportedVersionError(TensorFormatError):
    pass


class WavFormatError(SsmcondError):
    """The WAV container or its PCM layout is not accepted."""


class NotWavError(WavFormatError):
    pass


class ChannelCountError(WavFormatError):
    pass


class SampleRateError(WavFormatError):
    pass


class BitDepthError(WavFormatError):
    pass


class TokenRangeError(SsmcondError, IndexError):
    """A phoneme id lies outside the embedding table."""


class StateBoundError(SsmcondError, FloatingPointError):
    """An SSM state element exceeded the configured magnitude bound."""

    def __init__(self, step: int, channel: int, value: float, bound: float):
        self.step = step
        self.channel = channel
        self.value = value
        self.bound = bound
        super().__init__(
            f"ssm state bound violated at step {step}, channel {channel}: "
            f"|s|={abs(value):.6g} > {bound:.6g}"
        )


class StateFormatError(SsmcondError):
    """A serialized StreamState is malformed or does not match the layer."""


class SessionClosedError(SsmcondError, RuntimeError):
    pass


class TrainingDivergedError(SsmcondError, FloatingPointError):
    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at step {step}")
