"""Exception taxonomy shared by all gibs modules.

The CLI maps these onto exit codes: configuration problems exit 2,
data problems exit 3, numerical problems exit 4.
"""


class GibsError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(GibsError):
    """Invalid or inconsistent run configuration."""


# --- data errors ------------------------------------------------------------

class DataError(GibsError):
    """Base class for input/data-shape problems."""


class MalformedCsv(DataError):
    """CSV file fails the documented schema (header, arity, parse)."""


class DuplicateCell(DataError):
    """Same (date, asset) pair appears more than once."""


class EmptyPanel(DataError):
    """An operation produced or received a panel with no usable content."""


class LengthMismatch(DataError):
    """Two aligned series/panels disagree on length or timestamps."""


class InvalidSpec(DataError):
    """Synthetic-panel specification violates its invariants."""


class InsufficientOverlap(DataError):
    """Two series share too few common observed periods."""


class UnclassifiedEntity(DataError):
    """A security or basis asset has no class/category label."""


class MissingMarketIndex(DataError):
    """The configured market index is absent from the basis universe."""


class UniverseTooSmall(DataError):
    """Too few eligible assets to form portfolios."""


class PanelGapError(DataError):
    """Masked cells where a fully observed panel is required."""


class InvalidPValue(DataError):
    """A p-value outside [0, 1] was supplied."""


class EmptySelection(DataError):
    """A selected-factor set required to be nonempty is empty."""


# --- numerical errors -------------------------------------------------------

class NumericalError(GibsError):
    """Base class for numerical failures."""


class RankDeficient(NumericalError):
    """Design matrix is rank deficient at the configured tolerance."""


class TooFewObservations(NumericalError):
    """Not enough rows for the requested estimation."""


class ZeroDirection(NumericalError):
    """Projection direction has zero norm."""


class NotNested(NumericalError):
    """Models passed to a nested F-test are not strictly nested."""


class ZeroResidual(NumericalError):
    """Full-model residual sum of squares is zero."""


class ZeroVariance(NumericalError):
    """A series is constant where variation is required."""


class DidNotConverge(NumericalError):
    """Iterative solver exhausted its sweep budget."""


class ZeroBaselineSSE(NumericalError):
    """Baseline forecast errors are all zero in an out-of-sample R^2."""


class NonPositivePrice(NumericalError):
    """Compounding produced a price <= 0 (a return <= -100%)."""


class TotalLoss(NumericalError):
    """A return of -100% or worse makes compounded capital non-positive."""


class EmptyCluster(NumericalError):
    """A cluster operation received an empty index set."""


class DegenerateAfterSelection(NumericalError):
    """Too few observations remain relative to the selected factor count."""
