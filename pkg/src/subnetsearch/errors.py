"""Exception taxonomy shared across the package.

Every error raised by the library derives from SubnetSearchError so callers
(and the CLI exit-code mapping) can distinguish configuration problems,
evaluator/channel faults, and internal failures.
"""


class SubnetSearchError(Exception):
    """Base class for all library errors."""


class ConfigError(SubnetSearchError):
    """Invalid run configuration or schema violation."""


# --- space ---------------------------------------------------------------

class InvalidGenotype(SubnetSearchError):
    """Gene value outside its parameter's allowed set, or wrong length."""


class NonCanonicalInput(SubnetSearchError):
    """Operation requires a canonical genotype but received a raw one."""


# --- objectives ----------------------------------------------------------

class ObjectiveMismatch(SubnetSearchError):
    """Objective arity/name disagreement between values and specs."""


class EmptyInput(SubnetSearchError):
    """Operation requires at least one element."""


class DegenerateNormalizer(SubnetSearchError):
    """Latency normalizer with l_max = 0."""


class ReferenceViolation(SubnetSearchError):
    """Hypervolume member not strictly inside the reference box."""


class Unsupported2DOnly(SubnetSearchError):
    """Hypervolume is implemented for exactly two objectives."""


# --- evolver -------------------------------------------------------------

class Unevaluated(SubnetSearchError):
    """Individual lacks an objective vector where one is required."""


# --- predictors ----------------------------------------------------------

class SingularSystem(SubnetSearchError):
    """Normal equations are singular; use lambda > 0."""


class ConvergenceFailure(SubnetSearchError):
    """Optimizer hit its iteration cap; carries the best iterate."""

    def __init__(self, message: str, model=None):
        super().__init__(message)
        self.model = model


class DimensionMismatch(SubnetSearchError):
    """Feature dimension disagreement between model and input."""


class ZeroDenominator(SubnetSearchError):
    """MAPE undefined when an actual value is zero."""


class UndefinedCorrelation(SubnetSearchError):
    """Rank correlation undefined for an all-constant vector."""


# --- evaluation manager --------------------------------------------------

class EvaluationFailed(SubnetSearchError):
    """A single evaluation failed; detail in the message."""


class EvaluationTimeout(SubnetSearchError):
    """External evaluator did not answer within the configured timeout."""


class ProtocolError(SubnetSearchError):
    """Malformed or unexpected message on the evaluator wire protocol.

    Carries the offending raw payload when available.
    """

    def __init__(self, message: str, payload: str | None = None):
        super().__init__(message)
        self.payload = payload


# --- popdb ---------------------------------------------------------------

class EmptyClusterSet(SubnetSearchError):
    """No non-noise points to compute frequencies from."""


class ConstraintMismatch(SubnetSearchError):
    """ConstraintSet does not match the search space it is applied to."""
