"""Exception types shared across the package."""


class DomainError(ValueError):
    """A formula was evaluated outside the parameter range where it is defined."""


class ConfigurationError(ValueError):
    """Invalid user or caller supplied configuration (step sizes, cut-offs, keys)."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped without meeting its tolerance."""

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class IntegrationError(RuntimeError):
    """A time integration violated a conserved quantity beyond its tolerance."""


class AmbiguityError(RuntimeError):
    """Mode identification found more than one equally good candidate."""
