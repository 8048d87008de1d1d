"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: configuration/usage problems exit 1,
data and format problems exit 2, numeric failures exit 3.
"""


class PointFormsError(Exception):
    """Base class for all package errors."""


class ConfigurationWarning(UserWarning):
    """Legal but statistically or theoretically dubious configuration."""


class ConfigurationError(PointFormsError):
    """Invalid or inconsistent configuration values."""


class IngestionError(PointFormsError):
    """Malformed dataset input: ragged rows, non-finite values, bad manifest."""


class CacheFormatError(PointFormsError):
    """Gram cache file is truncated, mislabeled, or self-inconsistent."""


class MissingCacheError(PointFormsError):
    """A required Gram cache is absent; run the precompute command first."""


class InsufficientPointsError(PointFormsError):
    """Too few points for the requested neighbor or estimator counts."""


class InvalidDegreeError(PointFormsError):
    """Form degree k outside the supported range for the operation."""


class DegenerateDensityError(PointFormsError):
    """Density estimate collapsed (duplicate points, zero spread)."""


class DimensionEstimateError(PointFormsError):
    """Local PCA could not produce a usable intrinsic dimension."""


class IsolatedPointError(PointFormsError):
    """A point has no usable neighbors under the requested truncation."""


class NumericFailureError(PointFormsError):
    """Non-finite values emerged during a numeric computation."""


class UndefinedMetricError(PointFormsError):
    """Metric undefined for the given inputs (e.g. single-class AUROC)."""


class OraclePrecisionError(PointFormsError):
    """Quadrature failed to reach the requested precision."""


class IntegrationBlowupError(PointFormsError):
    """ODE state became non-finite during integration."""
