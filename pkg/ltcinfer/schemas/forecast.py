from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from ltcinfer.core.utils import IndexArray, NDArray


class ForecastBand(BaseModel):
    """Per-day quantile band of one observable over an ensemble."""

    model_config = ConfigDict(frozen=True)

    observable: str
    days: IndexArray
    levels: Tuple[float, float]
    lower: NDArray
    median: NDArray
    upper: NDArray
    mean: NDArray
    optimal: Optional[NDArray] = None

    @model_validator(mode="after")
    def check_order(self):
        if np.any(self.lower > self.upper):
            raise ValueError("lower quantile exceeds upper quantile")
        return self


class EnsembleForecast(BaseModel):
    bands: List[ForecastBand]
    n_total: int
    n_excluded: int

    @property
    def exclusion_fraction(self) -> float:
        return self.n_excluded / self.n_total if self.n_total else 0.0

    def band(self, observable: str) -> ForecastBand:
        for band in self.bands:
            if band.observable == observable:
                return band
        raise KeyError(observable)


class CoverageReport(BaseModel):
    n_points: int
    n_covered: int
    per_observable: dict

    @property
    def coverage(self) -> float:
        return self.n_covered / self.n_points if self.n_points else float("nan")
