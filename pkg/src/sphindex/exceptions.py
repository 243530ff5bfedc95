"""Exception hierarchy for sphindex.

Errors are split into three families so the CLI can map them to exit codes:
configuration problems, data problems, and numerical failures.
"""


class SphindexError(Exception):
    """Base class for all package errors."""


# --- numerical failures (CLI exit code 4) ---------------------------------


class NumericalError(SphindexError):
    """Base class for numerical failures."""


class NearZeroVector(NumericalError):
    """A vector with norm below the configured threshold cannot be projected."""


class AntipodalPoint(NumericalError):
    """Antipodal point pairs have no unique geodesic; the operation is refused."""


class BaseMismatch(NumericalError):
    """A tangent vector was used at a base point it does not belong to."""


class DegenerateCross(NumericalError):
    """Cross product of (near-)parallel vectors is too short to normalize."""


class InvalidLambda(NumericalError):
    """Exponential squared loss requires a strictly positive scale parameter."""


class AllZeroResiduals(NumericalError):
    """The scale equation has no root when every residual is zero."""


class RootNotBracketed(NumericalError):
    """Bracket expansion failed to enclose a root of the scale equation."""


class OutOfRangeDelta(NumericalError):
    """The trade-off constant delta must lie strictly inside (0, 1)."""


class PoleAtK(NumericalError):
    """The efficiency ratio has a pole where K(delta) equals d - 1."""


class SingularDesign(NumericalError):
    """The local weighted design matrix is singular or effectively empty."""


class OutsideTheta(NumericalError):
    """Index parameter lies outside the open unit ball."""


class BoundarySingularity(NumericalError):
    """Jacobian of the index map is singular at the boundary of the ball."""


class InvalidBeta(NumericalError):
    """Coefficient vector is not a unit vector with positive first entry."""


class NoValidStart(NumericalError):
    """Every optimizer start failed with a singular local design."""


class NonFiniteCriterion(NumericalError):
    """The fit criterion evaluated to a non-finite value everywhere."""


class SingularW0(NumericalError):
    """Plug-in curvature matrix is numerically singular."""


class SingularM0(NumericalError):
    """Plug-in score-covariance matrix is numerically singular."""


class IndexOutOfRange(NumericalError):
    """Requested index value lies outside the observed training range."""


class FailureRateExceeded(NumericalError):
    """Too many bootstrap replicates failed to refit."""


# --- data problems (CLI exit code 3) ---------------------------------------


class DataError(SphindexError):
    """Base class for input-data problems."""


class NegativeComposition(DataError):
    """A compositional response entry is negative."""


class ZeroRowSum(DataError):
    """A compositional response row sums to zero."""


class UnknownColumn(DataError):
    """A declared column is missing from the input file."""


class MalformedResults(DataError):
    """A results file does not have the expected columns."""


# --- configuration problems (CLI exit code 2) ------------------------------


class ConfigError(SphindexError):
    """Invalid or unknown configuration keys / values."""
