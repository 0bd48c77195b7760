"""Exception hierarchy.

Every failure the library reports on bad input derives from ``GsicoError`` so
callers (and the CLI) can catch one type and map families to exit codes.
"""


class GsicoError(Exception):
    exit_code = 1


class ModelError(GsicoError):
    exit_code = 3


class MalformedFile(ModelError):
    pass


class UnknownFlavor(ModelError):
    pass


class NonFiniteValue(ModelError):
    pass


class WrongFlavor(ModelError):
    pass


class WrongState(ModelError):
    pass


class MissingMlp(ModelError):
    pass


class LayoutError(GsicoError):
    exit_code = 4


class TooFewElements(LayoutError):
    pass


class SizeMismatch(LayoutError):
    pass


ShapeMismatch = SizeMismatch


class QuantizationError(GsicoError):
    exit_code = 5


class NonFiniteInput(QuantizationError):
    pass


class BadIndex(QuantizationError):
    pass


class CodecError(GsicoError):
    exit_code = 6


class UnsupportedMode(CodecError):
    pass


class BackendFailure(CodecError):
    pass


class SampleRangeError(CodecError):
    """Samples do not fit the declared sample depth."""


class ContainerError(GsicoError):
    exit_code = 7


class CorruptPayload(ContainerError, CodecError):
    exit_code = 7


class BadMagic(ContainerError):
    pass


class VersionMismatch(ContainerError):
    pass


class InvariantViolation(ContainerError):
    pass
