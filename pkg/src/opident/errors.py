"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operands have incompatible shapes."""


class NonFiniteError(ValueError):
    """An input contains NaN or infinite entries."""


class DivergenceError(RuntimeError):
    """An ODE integration produced a non-finite state."""

    def __init__(self, step, time):
        super().__init__(f"integration diverged at step {step} (t={time:.6g})")
        self.step = step
        self.time = time


class UnreachableTargetError(ValueError):
    """Requested transfer target lies outside the reachable subspace."""


class RankDeficiencyError(ValueError):
    """A matrix that must be positive definite is numerically singular."""
