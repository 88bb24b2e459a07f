class LatticeError(ValueError):
    """Invalid lattice geometry or an out-of-range cell, bond or loop reference."""


class ConfigurationError(ValueError):
    """A numerical configuration object violates its invariants."""


class ZeroAmplitudeError(ArithmeticError):
    """The wavefunction vanishes where a ratio or log-derivative is needed."""


class ZeroNormError(ArithmeticError):
    """Every amplitude of the state is zero, so it cannot be normalized."""


class EnumerationBudgetError(ValueError):
    """Exact enumeration was requested for more spins than the configured budget."""


class SamplerError(RuntimeError):
    """The Metropolis sampler could not be started or produced no samples."""


class OptimizationDiverged(RuntimeError):
    """The energy estimate ran away during optimization."""
