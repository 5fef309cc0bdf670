"""Exception hierarchy shared by all ionxy modules.

Every error raised by the library derives from :class:`ToolkitError` so
callers (notably the CLI) can map failures onto exit codes without
string matching.
"""


class ToolkitError(Exception):
    """Base class for all ionxy errors."""


# --- chain mechanics ---------------------------------------------------

class NoConvergence(ToolkitError):
    """Equilibrium solver failed to reach the requested gradient norm."""


class ZigZagUnstable(ToolkitError):
    """Linear chain is transversally unstable for the given trap."""


# --- coupling engine ---------------------------------------------------

class ResonantTone(ToolkitError):
    """Tone frequency falls within the resonance guard of a motional mode."""


class DegenerateTones(ToolkitError):
    """The two tone frequencies coincide; the spin-spin coupling is Ising type."""


class ZeroCoupling(ToolkitError):
    """Power-law fit requested on a matrix with vanishing entries."""


class TargetUnreachable(ToolkitError):
    """No detuning on the scan grid reaches the requested decay exponent."""


class ZeroMatrix(ToolkitError):
    """Matrix overlap undefined because one operand has zero norm."""


# --- dynamics engine ---------------------------------------------------

class DimensionMismatch(ToolkitError):
    """Operator or state dimension inconsistent with the Hilbert space."""


class DimensionCap(ToolkitError):
    """Requested Hilbert-space dimension exceeds the configured cap."""


class StepFailure(ToolkitError):
    """Time integrator could not meet its tolerance."""


class LeakageExceeded(ToolkitError):
    """Top Fock level population exceeded the truncation budget; enlarge n_max."""


class MissingStates(ToolkitError):
    """Trajectory stored observables only; full states are required."""


class UnsupportedDrive(ToolkitError):
    """Drive program shape outside what the operation supports."""


class FitDiverged(ToolkitError):
    """Nonlinear least squares failed to converge."""


# --- floquet bench -----------------------------------------------------

class InvalidEdgeFraction(ToolkitError):
    """Pulse edge fraction outside [0, 0.9]."""


# --- scenario / CLI ----------------------------------------------------

class ParseError(ToolkitError):
    """Scenario file is not syntactically valid."""


class ValidationError(ToolkitError):
    """Scenario or argument violates an invariant."""

    def __init__(self, message, parameter=None):
        super().__init__(message)
        self.parameter = parameter


class UnknownKey(ValidationError):
    """Scenario contains a key the schema does not define."""


# exit codes used by the CLI: 0 ok, 2 parse, 3 validation, 4 numerical,
# 5 resource cap
EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_NUMERICAL = 4
EXIT_RESOURCE = 5


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ParseError):
        return EXIT_PARSE
    if isinstance(exc, ValidationError):
        return EXIT_VALIDATION
    if isinstance(exc, (DimensionCap, LeakageExceeded)):
        return EXIT_RESOURCE
    if isinstance(exc, ToolkitError):
        return EXIT_NUMERICAL
    return EXIT_NUMERICAL
