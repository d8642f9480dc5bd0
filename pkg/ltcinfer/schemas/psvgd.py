from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from ltcinfer.core.utils import NDArray


class ProjectionBasis(BaseModel):
    """Column-orthonormal basis of the data-informed subspace and its eigenvalues."""

    model_config = ConfigDict(frozen=True)

    psi: NDArray
    eigenvalues: NDArray
    spectrum: NDArray
    truncation_tol: float
    max_residual: Optional[float] = None

    @property
    def rank(self) -> int:
        return self.psi.shape[1]

    @property
    def metric(self) -> np.ndarray:
        return self.eigenvalues + 1.0


class Ensemble(BaseModel):
    """Particles with their subspace coefficients and frozen complements."""

    model_config = ConfigDict(frozen=True)

    samples: NDArray
    coefficients: NDArray
    complements: NDArray
    seed: int
    n_workers: int = 1
    outer_iteration: int = 0

    @property
    def n_particles(self) -> int:
        return self.samples.shape[0]

    @property
    def dimension(self) -> int:
        return self.samples.shape[1]


class InnerSummary(BaseModel):
    iterations: int
    mean_moves: List[float]
    n_degenerate: int


class OuterIterationRecord(BaseModel):
    outer_iteration: int
    rank: int
    spectrum: List[float]
    mean_move: float
    inner_iterations: int
    n_degenerate: int


class SamplerResult(BaseModel):
    ensemble: Ensemble
    basis: ProjectionBasis
    history: List[OuterIterationRecord]
