"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes, so each class carries the code it
should produce when it escapes a subcommand.
"""

from __future__ import annotations


class LameGapError(Exception):
    exit_code = 3


class DomainError(LameGapError, ValueError):
    """A point or index lies outside the region where a quantity is defined."""


class GeometryError(LameGapError, ValueError):
    """A profile violates a structural condition (positivity, convexity)."""


class ConfigError(LameGapError, ValueError):
    exit_code = 1


class CaseNotCovered(LameGapError):
    """The parameter tuple falls outside every case with a known rate estimate."""

    exit_code = 2


class MissingFactorData(LameGapError, ValueError):
    """A branch needs starred factor data (Q*, a*) that was not supplied."""


class SingularSystemError(LameGapError, ArithmeticError):
    pass


class ToleranceError(LameGapError, ArithmeticError):
    """Requested accuracy could not be reached within the evaluation budget."""


class AccuracyError(LameGapError, ValueError):
    """A finite-difference step is too coarse for the local gap width."""


class MeshError(LameGapError, ValueError):
    pass
