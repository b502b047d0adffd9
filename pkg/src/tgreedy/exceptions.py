"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input data or parameters violate an operation's preconditions."""


class RankDeficientError(ValidationError):
    """A Gram matrix is too close to singular to orthonormalize.

    Attributes
    ----------
    eigenvalue : float
        The offending (smallest) eigenvalue.
    """

    def __init__(self, message: str, eigenvalue: float):
        super().__init__(message)
        self.eigenvalue = eigenvalue
