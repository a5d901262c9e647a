"""Exception types shared across the package."""

import numpy as np


class ValidationError(ValueError):
    """Base class for rejected inputs (objects violating their invariants)."""


class DimensionError(ValidationError):
    """Operator dimensions or signatures do not match."""


class NotHermitianError(ValidationError):
    """Operator is not Hermitian within tolerance."""

    def __init__(self, message, deviation=None):
        super().__init__(message)
        self.deviation = deviation


class NotPsdError(ValidationError):
    """Operator has an eigenvalue below -psd_tol.

    ``witness`` is a unit vector v with <v|M|v> equal to ``min_eig``.
    """

    def __init__(self, message, min_eig=None, witness=None, index=None):
        super().__init__(message)
        self.min_eig = min_eig
        self.witness = None if witness is None else np.asarray(witness)
        self.index = index


class NotProductNormalizedError(ValidationError):
    """Sum of tester elements is not of the form I (x) rho."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class TraceNotOneError(ValidationError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class NotNormalizedError(ValidationError):
    """POVM elements or Choi marginal do not sum to the identity."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ChainViolationError(ValidationError):
    """A link of the recursive comb/tester normalization chain fails.

    ``level`` is the comb level k (1 is the innermost link).
    """

    def __init__(self, message, level, residual):
        super().__init__(message)
        self.level = level
        self.residual = residual


class SdpFailure(RuntimeError):
    """The SDP solver did not reach a certified answer."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution
