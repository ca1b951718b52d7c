from typing import Dict, Optional


class RewardCollapseError(Exception):
    """Base class for every error raised by the toolkit"""
    code = "error"

    def to_dict(self) -> Dict[str, str]:
        """Single-line error payload used on stderr"""
        return {"code": self.code, "message": str(self)}


class InvalidInputError(RewardCollapseError):
    code = "invalid_input"


class InfeasibleStartError(InvalidInputError):
    """The starting point has a -inf objective (coincident rewards under a singular utility)"""
    code = "infeasible_start"


class NonConvergenceError(RewardCollapseError):
    code = "non_convergence"

    def __init__(self, message: str, residual: Optional[float] = None,
                 iterations: Optional[int] = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class LimitUnknownError(RewardCollapseError):
    code = "limit_unknown"


class InapplicableError(RewardCollapseError):
    code = "inapplicable"


class QuadratureError(RewardCollapseError):
    code = "quadrature"
