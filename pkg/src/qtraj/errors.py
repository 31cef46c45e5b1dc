"""Exception types raised by the simulator."""


class QTrajError(Exception):
    """Base class for simulator errors."""


class ConfigError(QTrajError, ValueError):
    """Invalid or inconsistent experiment configuration."""


class NodeProximity(QTrajError, FloatingPointError):
    """The reduced density is below the node floor where the velocity is requested."""


class StepUnderflow(QTrajError):
    """Adaptive step size fell below ``dt_min`` (usually next to a density node)."""

    def __init__(self, message, t=None, x=None):
        super().__init__(message)
        self.t = t
        self.x = x


class EnsembleFailure(QTrajError):
    """Too many trajectories of an ensemble were aborted."""

    def __init__(self, message, n_aborted=0, n_total=0):
        super().__init__(message)
        self.n_aborted = n_aborted
        self.n_total = n_total


class NoFringes(QTrajError, ValueError):
    """No interior maximum/minimum pair exists in the requested window."""
