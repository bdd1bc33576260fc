"""Exception types shared across the package."""


class GgaError(Exception):
    """Base class for all package-specific errors."""


class ShapeMismatchError(GgaError, ValueError):
    """A tensor's shape is incompatible with the layer or operation consuming it."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class NumericalError(GgaError, ArithmeticError):
    """A computation failed numerically (divergence, non-finite values, degeneracy)."""


class TrainingDivergenceError(NumericalError):
    """Training produced a non-finite loss; carries the offending epoch and batch."""

    def __init__(self, message, epoch, batch):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class NonFiniteGradientError(NumericalError):
    """An input gradient contained NaN or Inf values."""

    def __init__(self, message, class_index=None):
        super().__init__(message)
        self.class_index = class_index


class DegenerateGeometryError(NumericalError):
    """Every probe in a geometric estimate was undefined (zero gradients or displacements)."""


class ActivationModeError(GgaError, ValueError):
    """An operation requires a different activation family than the model has."""


class ContainerFormatError(GgaError, ValueError):
    """A binary artifact file is malformed; carries the byte offset of the problem."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class IdxFormatError(GgaError, ValueError):
    """An IDX dataset file is malformed; carries the byte offset of the problem."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class UsageError(GgaError, ValueError):
    """Bad command-line arguments or config values."""
