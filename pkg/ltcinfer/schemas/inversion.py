from typing import List, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from ltcinfer.core.utils import NDArray
from ltcinfer.schemas.model import ModelSetup, ParameterSet

OptimizerStatus = Literal["converged", "small_decrease", "max_iter", "line_search_failure"]


class Bounds(BaseModel):
    """Per-coordinate box on the theta vector."""

    model_config = ConfigDict(frozen=True)

    lower: NDArray
    upper: NDArray

    @model_validator(mode="after")
    def check_box(self):
        if self.lower.shape != self.upper.shape:
            raise ValueError("lower and upper bounds must have the same shape")
        if np.any(self.lower >= self.upper):
            raise ValueError("every lower bound must be below its upper bound")
        return self

    def contains(self, vector: np.ndarray) -> bool:
        return bool(np.all(vector >= self.lower) and np.all(vector <= self.upper))

    def clip(self, vector: np.ndarray) -> np.ndarray:
        return np.clip(vector, self.lower, self.upper)


class IterationRecord(BaseModel):
    iteration: int
    objective: float


class OptimizationOutcome(BaseModel):
    x: NDArray
    objective: float
    history: List[IterationRecord]
    status: OptimizerStatus
    message: str
    n_evaluations: int


class FitStage(BaseModel):
    delta_t: int
    dimension: int
    objective: float
    history: List[IterationRecord]
    status: OptimizerStatus
    message: str
    n_evaluations: int


class FitResult(BaseModel):
    """Deterministic fit: optimal theta plus the log of every stage."""

    theta: ParameterSet
    setup: ModelSetup
    objective: float
    misfit: float
    penalty: float
    stages: List[FitStage]
