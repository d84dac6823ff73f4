"""Error taxonomy shared across the package.

ConfigError maps to CLI exit code 2, NumericalError and its subclasses to 3.
"""


class ConfigError(Exception):
    """Invalid or inconsistent run configuration."""


class NumericalError(Exception):
    """A numerical procedure failed in a detectable way."""


class SetupError(NumericalError):
    """Hierarchy or factorization setup failed (for instance a non SPD coarse matrix)."""


class SolverBreakdown(NumericalError):
    """PCG hit a non-finite value or lost positive definiteness."""


class VolumeInfeasible(NumericalError):
    """The bisection on the volume multiplier could not match the target."""
