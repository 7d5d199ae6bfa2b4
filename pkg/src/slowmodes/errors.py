"""Exception types shared across the package."""


class SlowmodesError(Exception):
    """Base class for package-specific failures."""


class ConfigError(SlowmodesError):
    """Invalid or unparseable run configuration."""


class NumericalError(SlowmodesError):
    """A solver or quadrature failed to produce a trustworthy result."""


class NonConvergenceError(NumericalError):
    """Iteration cap reached before the requested accuracy."""


class DivergenceError(NumericalError):
    """An integral or fixed point diverged; perturbation theory inapplicable."""


class ResourceCapError(SlowmodesError):
    """A configured memory/dimension cap would be exceeded."""


class DimensionCapError(ResourceCapError):
    """Sector dimension above the dense-solver cap; use the iterative solver."""


class TermExplosionError(ResourceCapError):
    """Sparse operator grew past the term-count cap during evolution."""
