"""Exception types shared across the package."""


class LexlsError(Exception):
    """Base class for solver errors."""


class DegenerateMatrix(LexlsError):
    """Matrix with a zero row or column count where data is required."""


class SingularTriangular(LexlsError):
    """Triangular solve hit a diagonal entry below the pivot floor."""


class NotPositiveDefinite(LexlsError):
    """Cholesky factorization encountered a nonpositive pivot."""


class NonFiniteEvaluation(LexlsError):
    """A constraint evaluation produced NaN or Inf."""


class FullUnderactuation(LexlsError):
    """n_ua == n_q: the banded turnback mode is unavailable."""


class SubsetRankDeficient(LexlsError):
    """A turnback column subset failed the linear-dependence check."""


class BasisVerificationFailed(LexlsError):
    """Null vectors exceed tolerance even after maximal subset augmentation."""


class DimensionMismatch(LexlsError):
    """Block shapes disagree with the stage layout."""


class OffsetTooSmall(LexlsError):
    """Additive offset fails to keep the shifted function positive."""


class ConfigError(LexlsError):
    """Malformed run configuration (unknown key, bad value)."""
