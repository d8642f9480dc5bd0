from typing import List

from pydantic import BaseModel


class TwinOutcome(BaseModel):
    """Scores of one synthetic-twin run against the parameters that generated its data."""

    seed: int
    misfit: float
    alpha_rms: float
    rank: int
    spectrum: List[float]
    excluded: int
    n_points: int
    n_covered: int

    @property
    def coverage(self) -> float:
        return self.n_covered / self.n_points if self.n_points else float("nan")
