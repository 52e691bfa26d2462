"""Exception types shared across the package."""


class UrlGraphNetError(Exception):
    """Base class for all package-specific errors."""


class EmptyUrlError(UrlGraphNetError):
    """Raised when a URL is empty after whitespace trimming."""


class EmptyGraphError(UrlGraphNetError):
    """Raised when a graph with zero nodes reaches the model."""


class ShapeMismatchError(UrlGraphNetError):
    """Raised when tensor operands have incompatible shapes."""


class NotScalarLossError(UrlGraphNetError):
    """Raised when backward() is asked to differentiate a non-1x1 tensor."""


class UnknownLabelError(UrlGraphNetError):
    """Raised for a class label string outside the four known categories."""


class BadHeaderError(UrlGraphNetError):
    """Raised when a CSV input does not start with the expected header."""


class EmptyClassError(UrlGraphNetError):
    """Raised when augmentation targets a class with no records."""


class TooFewSamplesError(UrlGraphNetError):
    """Raised when oversampling targets a class with fewer than two records."""


class BadTargetError(UrlGraphNetError):
    """Raised for a target class id outside {0, 1, 2, 3}."""


class LengthMismatchError(UrlGraphNetError):
    """Raised when paired prediction/label sequences differ in length."""


class DegenerateLabelsError(UrlGraphNetError):
    """Raised when a ROC curve is requested without both label values."""


class IncompatibleCheckpointError(UrlGraphNetError):
    """Raised when a checkpoint file is unreadable or does not match the model."""
