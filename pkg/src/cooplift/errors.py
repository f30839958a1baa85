"""Exception types shared across the package."""


class ModelError(ValueError):
    """A physical model is invalid (bad mass, degenerate geometry, singular inertia)."""


class ContractError(ValueError):
    """A documented precondition of an operation was violated."""


class PropagationError(ValueError):
    """Non-finite values were fed into a numerical operation."""


class ConfigError(ValueError):
    """A configuration file is malformed, has unknown keys, or inconsistent values."""


class CertificateError(ValueError):
    """A stability/passivity certificate is structurally unusable."""


class InfeasibleProblem(RuntimeError):
    """The matrix-inequality feasibility problem could not be satisfied.

    Carries the worst-violated constraint label and its residual so callers
    can report something actionable.
    """

    def __init__(self, worst_label, residual, iterations):
        self.worst_label = worst_label
        self.residual = float(residual)
        self.iterations = int(iterations)
        super().__init__(
            f"infeasible after {iterations} iterations: worst constraint "
            f"{worst_label!r} with residual {self.residual:.3e}"
        )


class SynthesisInfeasible(RuntimeError):
    """Robust SPR synthesis failed; shrink the fluctuation set or adjust C0/D0."""

    def __init__(self, worst_vertex, residual):
        self.worst_vertex = worst_vertex
        self.residual = float(residual)
        super().__init__(
            f"SPR synthesis infeasible: worst vertex {worst_vertex!r} "
            f"(residual {self.residual:.3e}); shrink the fluctuation set or "
            f"adjust the output weights"
        )


class SimulationAbort(RuntimeError):
    """A simulation run was aborted (NaN state or divergence)."""

    def __init__(self, reason, time, detail=""):
        self.reason = reason
        self.time = float(time)
        msg = f"simulation aborted ({reason}) at t={time:.3f} s"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
