from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ltcinfer.core.utils import IndexArray, NDArray

STREAM_NAMES = ("H", "Pc", "pc", "D", "d", "D1", "d1", "D2", "d2")
DAILY_STREAMS = ("pc", "d", "d1", "d2")


class RawSeries(BaseModel):
    """A reported time series on consecutive integer days."""

    model_config = ConfigDict(frozen=True)

    name: str
    days: IndexArray
    values: NDArray

    @model_validator(mode="after")
    def check_days(self):
        if self.days.shape != self.values.shape or self.days.ndim != 1:
            raise ValueError(f"Series '{self.name}' needs matching 1-d days and values")
        if len(self.days) > 1 and np.any(np.diff(self.days) != 1):
            raise ValueError(f"Series '{self.name}' days must increase by exactly 1")
        return self

    @property
    def first_day(self) -> int:
        return int(self.days[0])

    @property
    def last_day(self) -> int:
        return int(self.days[-1])

    def window(self, first: int, last: int) -> "RawSeries":
        mask = (self.days >= first) & (self.days <= last)
        return RawSeries(name=self.name, days=self.days[mask], values=self.values[mask])


class StreamSet(BaseModel):
    """All observable streams on one day axis.

    Cumulative and current streams (H, Pc, D, D1, D2) and their daily
    increments (pc, d, d1, d2). Daily increments derived from a model
    trajectory are NaN on the first day.
    """

    model_config = ConfigDict(frozen=True)

    days: IndexArray
    H: NDArray
    Pc: NDArray
    pc: NDArray
    D: NDArray
    d: NDArray
    D1: NDArray
    d1: NDArray
    D2: NDArray
    d2: NDArray

    @model_validator(mode="after")
    def check_lengths(self):
        n = len(self.days)
        for name in STREAM_NAMES:
            if getattr(self, name).shape != (n,):
                raise ValueError(f"Stream '{name}' must have {n} entries")
        return self

    @property
    def t_start(self) -> int:
        return int(self.days[0])

    @property
    def t_end(self) -> int:
        return int(self.days[-1])

    def stream(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def values_on(self, name: str, days: np.ndarray) -> np.ndarray:
        return self.stream(name)[np.asarray(days) - self.t_start]


class Thresholds(BaseModel):
    """First-crossing days that open the observation spans."""

    t1_p: int
    t1_h: int
    t1_d: int
    t2_d: int


class ObservationBlock(BaseModel):
    """Log-values of one stream over its active span [start, end]."""

    model_config = ConfigDict(frozen=True)

    stream: str
    start: int
    end: int
    weight: float = Field(gt=0.0)
    log_values: NDArray

    @model_validator(mode="after")
    def check_span(self):
        if self.stream not in STREAM_NAMES:
            raise ValueError(f"Unknown stream '{self.stream}'")
        n = max(self.end - self.start + 1, 0)
        if self.log_values.shape != (n,):
            raise ValueError(f"Block '{self.stream}' span [{self.start}, {self.end}] needs {n} values")
        return self

    @property
    def days(self) -> np.ndarray:
        return np.arange(self.start, self.end + 1)

    @property
    def entries(self) -> np.ndarray:
        """Weighted log-values as they enter the data vector"""
        return self.weight * self.log_values

    def restricted(self, first: int, last: int) -> "ObservationBlock":
        start, end = max(self.start, first), min(self.end, last)
        if end < start:
            return self.model_copy(update={"start": start, "end": start - 1, "log_values": np.zeros(0)})
        return self.model_copy(
            update={"start": start, "end": end, "log_values": self.log_values[start - self.start:end - self.start + 1]}
        )


class ObservationSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    t_start: int
    t_end: int
    thresholds: Thresholds
    log_floor: float = 0.5
    blocks: List[ObservationBlock]

    def block(self, stream: str) -> Optional[ObservationBlock]:
        for block in self.blocks:
            if block.stream == stream:
                return block
        return None

    @property
    def n_entries(self) -> int:
        return sum(len(block.log_values) for block in self.blocks)

    def data_vector(self) -> np.ndarray:
        return np.concatenate([block.entries for block in self.blocks])

    def restricted(self, first: int, last: int) -> "ObservationSet":
        """Observation set keeping only the entries whose day lies in [first, last]"""
        return ObservationSet(
            t_start=self.t_start,
            t_end=last,
            thresholds=self.thresholds,
            log_floor=self.log_floor,
            blocks=[block.restricted(first, last) for block in self.blocks],
        )
