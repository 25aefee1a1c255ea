"""Exception types shared across the package."""


class PairscopeError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(PairscopeError):
    """Invalid configuration value or violated construction invariant."""


class LayoutError(PairscopeError):
    """Register index, bitstring length, or gate-target misuse."""


class BasisDegenerateError(PairscopeError):
    """Gram-Schmidt residual collapsed while building mode ``q``."""

    def __init__(self, q: int, residual: float):
        self.q = q
        self.residual = residual
        super().__init__(f"basis construction degenerate at mode q={q} (residual norm {residual:.3e})")


class ProjectionDegenerateError(PairscopeError):
    """A source has no support in the first K modes."""


class EnumerationOverflowError(PairscopeError):
    """Branch enumeration exceeded the configured cap."""


class DecodeIntegrityError(PairscopeError):
    """Flip pattern inconsistent with a single injected excitation."""


class StagePreconditionError(PairscopeError):
    """A protocol stage was entered with its register precondition violated."""


class StaleAncillaError(PairscopeError):
    """Gate teleportation was handed a pair that is not a fresh phi+ state."""


class DerivativeFailureError(PairscopeError):
    """Finite-difference derivative inconsistent near a vanishing outcome."""


class EstimationImpossibleError(PairscopeError):
    """Every candidate separation assigns zero likelihood to the observed counts."""
