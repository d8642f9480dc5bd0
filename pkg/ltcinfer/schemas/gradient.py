from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict

from ltcinfer.core.utils import NDArray
from ltcinfer.schemas.model import TimeGrid


class StoredTrajectory(BaseModel):
    """Forward solve kept at every integrator node and Runge-Kutta stage."""

    model_config = ConfigDict(frozen=True)

    grid: TimeGrid
    node_times: NDArray
    nodes: NDArray
    stage_times: NDArray
    stages: NDArray

    @property
    def daily_states(self) -> np.ndarray:
        return self.nodes[::self.grid.substeps_per_day]


class AdjointState(BaseModel):
    """Costate per integrator node and the adjoints of the stage slopes.

    ``costate[n]`` is the sensitivity of the objective to the state at node n
    through everything after node n; the direct source at node n is not
    included, so the final entry is zero.
    """

    model_config = ConfigDict(frozen=True)

    costate: NDArray
    stage_adjoints: NDArray


class SensitivityBundle(BaseModel):
    """Dense partial derivatives of the right-hand side f and misfit integrand g at one (t, y, theta)."""

    model_config = ConfigDict(frozen=True)

    t: float
    df_dy: NDArray
    df_dtheta: NDArray
    dg_dy: NDArray
    dg_dtheta: NDArray


class FDReport(BaseModel):
    coordinates: List[int]
    analytic: NDArray
    finite_difference: NDArray
    relative_errors: NDArray
    skipped: List[int] = []
    step: float
    max_relative_error: float
    median_relative_error: float
    l2_relative_error: float

    def passed(self, tolerance: float) -> bool:
        return self.max_relative_error <= tolerance
