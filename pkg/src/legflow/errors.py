"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`LegflowError`.
The CLI maps the four families below onto process exit codes.
"""

from __future__ import annotations


class LegflowError(Exception):
    """Base class for all package errors."""

    exit_code = 2


# -- configuration ---------------------------------------------------------

class SchemaError(LegflowError):
    """A configuration file or override failed validation."""

    exit_code = 1

    def __init__(self, message: str, key_path: str = ""):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}" if key_path else message)


# -- invalid initial data ---------------------------------------------------

class InvalidInitialData(LegflowError):
    exit_code = 3


class PointOutsideChart(InvalidInitialData):
    """A point does not lie in the model's chart (e.g. off the unit sphere)."""


class NotClosable(InvalidInitialData):
    """A curve lift accumulates nonzero holonomy over one period."""


class ResolutionTooLow(InvalidInitialData):
    pass


class InitialDataNotExact(InvalidInitialData):
    """The initial mean curvature form is closed but not exact."""


class NonExactMeanCurvature(InvalidInitialData):
    """A cycle integral of the mean curvature form exceeds the exactness tolerance."""

    def __init__(self, message: str, cycle_integrals=None):
        self.cycle_integrals = cycle_integrals
        super().__init__(message)


class NotMinimal(InvalidInitialData):
    pass


# -- numerical failures -----------------------------------------------------

class NumericalFailure(LegflowError):
    exit_code = 2


class DegenerateMetric(NumericalFailure):
    pass


class EigSolveFailure(NumericalFailure):
    pass


class ProjectionFailed(NumericalFailure):
    pass


class HolonomyObstruction(ProjectionFailed, NotClosable):
    """Reeb projection would need a correction that does not close up on a cycle."""

    exit_code = 2


class CFLViolation(NumericalFailure):
    pass


class NonFiniteState(NumericalFailure):
    pass


class StaleAngle(NumericalFailure):
    """The angle field no longer integrates the mean curvature form."""


class CohomologyDrift(NumericalFailure):
    """Mid-run, the mean curvature form stopped being exact on the grid (resolution exhausted)."""


class NonPositiveSeries(NumericalFailure):
    pass


class InsufficientData(NumericalFailure):
    pass


# -- audits ------------------------------------------------------------------

class AuditFailure(LegflowError):
    exit_code = 4
