class DegenopError(Exception):
    """Base class for every error raised by degenop."""


class ParameterError(DegenopError, ValueError):
    """Operator, space or problem parameters outside the admissible set."""


class NegativeDiscriminantError(ParameterError):
    def __init__(self, discriminant: float):
        self.discriminant = discriminant
        super().__init__(f"indicial discriminant is negative: D = {discriminant!r}")


class TransformError(DegenopError):
    """A transform step cannot be built or applied."""


class OutOfBoxError(TransformError):
    def __init__(self, n_outside: int, y_range):
        self.n_outside = n_outside
        self.y_range = y_range
        super().__init__(
            f"{n_outside} evaluation points fall outside the sampled box "
            f"y in [{y_range[0]:.3e}, {y_range[1]:.3e}]"
        )


class NotGeneratingError(DegenopError):
    def __init__(self, reasons):
        self.reasons = list(reasons)
        super().__init__("configuration does not generate: " + "; ".join(self.reasons))


class SingularSystemError(DegenopError):
    def __init__(self, message: str, condition_estimate: float = float("inf")):
        self.condition_estimate = condition_estimate
        super().__init__(f"{message} (condition estimate {condition_estimate:.3e})")


class ConfigError(DegenopError):
    """Run configuration failed schema validation."""
