"""Exception types shared across the package."""

from __future__ import annotations

from typing import NamedTuple, Optional


class ShapeMismatch(ValueError):
    pass


class Violation(NamedTuple):
    kind: str  # "negative" | "non_simplex" | "density_bound" | "reachability" | "phi_norm" | "embedding_norm"
    h: Optional[int] = None
    s: Optional[int] = None
    a: Optional[int] = None
    detail: str = ""


class KernelValidationError(ValueError):
    """Raised with every violated kernel invariant, not just the first."""

    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        kinds = sorted({v.kind for v in self.violations})
        super().__init__(f"{len(self.violations)} kernel violation(s): {', '.join(kinds)}")

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


class InvalidStopStep(ValueError):
    pass


class RewardNotYetRevealed(RuntimeError):
    pass


class OutOfOrderRound(RuntimeError):
    pass


class BudgetExhausted(RuntimeError):
    pass


class InvalidConfig(ValueError):
    pass


class InfeasibleDrift(ValueError):
    pass


class InvalidDelta(ValueError):
    pass


class NoValidCandidate(ValueError):
    pass


class SingularCovariance(ArithmeticError):
    pass


class RewardOutOfRange(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class SchemaError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
