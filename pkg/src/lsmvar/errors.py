"""Exception types shared across the package."""


class LsmVarError(Exception):
    """Base class for all package errors."""


class NotPositiveSemiDefinite(LsmVarError):
    """Matrix is not PSD beyond the repair tolerance."""

    def __init__(self, most_negative: float, message: str | None = None):
        self.most_negative = float(most_negative)
        super().__init__(
            message or f"matrix not positive semi-definite "
            f"(most negative eigenvalue {self.most_negative:.3e})"
        )


class DimensionMismatch(LsmVarError):
    pass


class ShapeMismatch(LsmVarError):
    pass


class AlphaOutOfRange(LsmVarError):
    pass


class TooFewSamples(LsmVarError):
    pass


class NoConvergence(LsmVarError):
    pass


class InvalidGrid(LsmVarError):
    pass


class GridTenorMismatch(LsmVarError):
    pass


class IndexOutOfRange(LsmVarError):
    pass


class NonFiniteState(LsmVarError):
    pass


class NonPositiveVariance(LsmVarError):
    pass


class InvalidInput(LsmVarError):
    pass


class ValuerFailure(LsmVarError):
    pass


class NonFiniteGreek(LsmVarError):
    pass


class RegressionFailure(LsmVarError):
    """Regression failed inside the backward induction; carries the step index."""

    def __init__(self, step: int | str, cause: Exception):
        self.step = step
        self.cause = cause
        super().__init__(f"regression failed at step {step}: {cause}")


class PipelineError(LsmVarError):
    """Error raised while composing the VaR pipeline; names the failing stage."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"pipeline stage '{stage}' failed: {cause}")


class ConfigError(LsmVarError):
    """Configuration rejected; carries the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
