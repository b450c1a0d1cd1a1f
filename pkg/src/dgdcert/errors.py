"""Exception types shared across the package."""


class ConstructionError(RuntimeError):
    """A randomized constructor exhausted its retry budget or produced a
    degenerate object (disconnected graph, singular normal equations)."""


class AssumptionViolation(ValueError):
    """An input object does not satisfy a standing assumption (connectivity,
    double stochasticity, positive curvature)."""


class CertificateUnavailable(RuntimeError):
    """The requested certificate does not exist for these parameters, e.g.
    the initial stepsize is too large for the uniform radius to be finite."""


class HypothesisViolation(ValueError):
    """Parameters fall outside the hypotheses of the requested bound."""


class EstimateUnavailable(RuntimeError):
    """A data-driven estimate cannot be formed (too few points, zeros in a
    log fit window)."""
