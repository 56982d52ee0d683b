"""
Exception hierarchy for the homogenization pipeline

Every error carries the pipeline stage that raised it so that the
command-line front end can report stage-tagged diagnostics.
"""

from typing import Optional


class HomogenizationError(Exception):
    """Base class for all pipeline errors"""

    stage = "pipeline"

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage

    def __str__(self) -> str:
        return f"[{self.stage}] {super().__str__()}"


class ConfigError(HomogenizationError, ValueError):
    """Malformed configuration, unknown names or out-of-range parameters"""

    stage = "config"


class InvalidFieldError(HomogenizationError):
    """Drift evaluator produced non-finite values or violates its contract"""

    stage = "field_model"


class DiscretizationError(HomogenizationError):
    """Grid too coarse for the requested accuracy (negative density, support leak)"""

    stage = "discretization"


class SolverError(HomogenizationError):
    """Sparse solve did not reach the requested residual"""

    stage = "solver"

    def __init__(self, message: str, residual: float = float("nan"), stage: Optional[str] = None):
        super().__init__(f"{message} (residual={residual:.3e})", stage)
        self.residual = residual


class CenteringError(HomogenizationError):
    """Periodic drift is not centered with respect to its invariant density"""

    stage = "torus_cell"

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class TruncationError(HomogenizationError):
    """Strip too narrow: cell masses have not converged to their limits"""

    stage = "strip_measure"


class ModelInvariantError(HomogenizationError):
    """Assembled effective model violates one of its invariants"""

    stage = "effective_model"


class SimulationParameterError(HomogenizationError):
    """Monte Carlo parameters outside the admissible range"""

    stage = "simulation"

    def __init__(self, message: str, suggested_dt: Optional[float] = None):
        if suggested_dt is not None:
            message = f"{message}; suggested dt <= {suggested_dt:.3e}"
        super().__init__(message)
        self.suggested_dt = suggested_dt
