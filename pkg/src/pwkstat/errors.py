"""Exception hierarchy shared by every pwkstat module."""


class PwkError(Exception):
    """Base class for all library errors."""


class EmptyInput(PwkError, ValueError):
    """A point set or sample list that must be nonempty was empty."""


class UnsupportedDimension(PwkError, ValueError):
    """Homology degree outside {0, 1}."""


class IncompatibleExpansion(PwkError, ValueError):
    """Two RKHS expansions built on different plane kernels were combined."""


class InsufficientData(PwkError, ValueError):
    """Too few diagrams or points for the requested statistic."""


class InvalidGram(PwkError, ValueError):
    """Gram matrix is not square, symmetric or finite."""


class InvalidSubsampleSize(PwkError, ValueError):
    """Subsample size exceeds the available sample size."""


class ConfigError(PwkError, ValueError):
    """Experiment configuration failed validation."""
