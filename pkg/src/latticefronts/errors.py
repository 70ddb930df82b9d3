"""Exception hierarchy shared by all modules.

Every error carries an ``exit_code`` used by the command line driver:
10-19 are solver-side failures, 20-29 are simulation-side failures.
"""


class LatticeFrontsError(Exception):
    exit_code = 1


# -- geometry ---------------------------------------------------------------

class ZeroDirection(LatticeFrontsError):
    exit_code = 10


class NotCoprime(LatticeFrontsError):
    exit_code = 10


# -- wave solver ------------------------------------------------------------

class NewtonDiverged(LatticeFrontsError):
    exit_code = 11


class PinnedWave(LatticeFrontsError):
    """|c| fell below the pinning threshold.  Carries the converged solution."""

    exit_code = 12

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class NonMonotone(LatticeFrontsError):
    exit_code = 13


class SingularLinearSystem(LatticeFrontsError):
    exit_code = 14


class ContinuationStall(LatticeFrontsError):
    exit_code = 15


# -- phase dynamics ----------------------------------------------------------

class QuadratureUnderResolved(LatticeFrontsError):
    exit_code = 16


class StepSizeTooLarge(LatticeFrontsError):
    exit_code = 17


class NonPositiveField(LatticeFrontsError):
    exit_code = 18


class WindowTooSmall(LatticeFrontsError):
    exit_code = 18


class DispersionRangeExceeded(LatticeFrontsError):
    exit_code = 19


# -- lattice simulation -------------------------------------------------------

class WindowTooNarrow(LatticeFrontsError):
    exit_code = 20


class BlowUp(LatticeFrontsError):
    exit_code = 21


class NoBracket(LatticeFrontsError):
    exit_code = 22


class MultipleBrackets(LatticeFrontsError):
    exit_code = 23


class OutOfProfileRange(LatticeFrontsError):
    exit_code = 24


class ScheduleInvalid(LatticeFrontsError):
    exit_code = 25
