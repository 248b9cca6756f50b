"""Exception hierarchy shared by all modules."""


class AdaptiveLQRError(Exception):
    """Base class for errors raised by this package."""


class NonSquare(AdaptiveLQRError, ValueError):
    pass


class NoConvergence(AdaptiveLQRError, ArithmeticError):
    pass


class UnstableInput(AdaptiveLQRError, ValueError):
    pass


class NotStabilizable(AdaptiveLQRError, ArithmeticError):
    pass


class BadCost(AdaptiveLQRError, ValueError):
    pass


class BadCovariance(AdaptiveLQRError, ValueError):
    pass


class SingularGram(AdaptiveLQRError, ArithmeticError):
    """The regressor Gram matrix is too ill-conditioned to invert (insufficient excitation)."""


class UnsupportedConstraint(AdaptiveLQRError, NotImplementedError):
    pass


class MismatchedTrajectories(AdaptiveLQRError, ValueError):
    pass


class MissingGains(AdaptiveLQRError, ValueError):
    pass


class ConfigError(AdaptiveLQRError, ValueError):
    pass
