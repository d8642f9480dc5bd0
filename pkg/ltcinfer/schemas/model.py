import math
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ltcinfer.core.utils import IndexArray, NDArray

COMPARTMENTS = ("S", "E", "I", "H", "R", "D", "P_c", "P_u")
GROUPS = ("ltc", "community")
RATIO_NAMES = ("alpha", "tau", "zeta", "xi")
RATE_NAMES = ("beta", "sigma", "eta", "mu", "gamma_I", "gamma_H")
N_SCALARS = 2 * len(RATE_NAMES) + 4


class CompartmentState(BaseModel):
    """Person counts of the 8 compartments for both groups, shape (8, 2)."""

    model_config = ConfigDict(frozen=True)

    values: NDArray

    @model_validator(mode="after")
    def check_shape(self):
        if self.values.shape != (len(COMPARTMENTS), len(GROUPS)):
            raise ValueError(f"State must have shape (8, 2), got {self.values.shape}")
        return self

    @classmethod
    def from_components(cls, **components) -> "CompartmentState":
        values = np.zeros((len(COMPARTMENTS), len(GROUPS)))
        for name, pair in components.items():
            if name not in COMPARTMENTS:
                raise ValueError(f"Unknown compartment '{name}'")
            values[COMPARTMENTS.index(name)] = pair
        return cls(values=values)

    @classmethod
    def initial(
        cls,
        populations: Tuple[float, float],
        exposed: Tuple[float, float] = (1.0, 100.0),
    ) -> "CompartmentState":
        return cls.from_components(S=populations, E=exposed)

    def component(self, name: str) -> np.ndarray:
        return self.values[COMPARTMENTS.index(name)]

    @property
    def S(self) -> np.ndarray:
        return self.values[0]

    @property
    def E(self) -> np.ndarray:
        return self.values[1]

    @property
    def I(self) -> np.ndarray:  # noqa: E743
        return self.values[2]

    @property
    def H(self) -> np.ndarray:
        return self.values[3]

    @property
    def R(self) -> np.ndarray:
        return self.values[4]

    @property
    def D(self) -> np.ndarray:
        return self.values[5]

    @property
    def P_c(self) -> np.ndarray:
        return self.values[6]

    @property
    def P_u(self) -> np.ndarray:
        return self.values[7]


class TimeGrid(BaseModel):
    """Integration window in days and the knot grid of the time-dependent ratios."""

    model_config = ConfigDict(frozen=True)

    t_start: int = 0
    t_end: int
    delta_t: int = Field(1, ge=1)
    substeps_per_day: int = Field(10, ge=1)

    @model_validator(mode="after")
    def check_window(self):
        if self.t_end < self.t_start:
            raise ValueError(f"t_end ({self.t_end}) precedes t_start ({self.t_start})")
        return self

    @property
    def k(self) -> int:
        return math.ceil((self.t_end - self.t_start) / self.delta_t)

    @property
    def t_set(self) -> np.ndarray:
        return self.t_start + self.delta_t * np.arange(self.k + 1, dtype=float)

    @property
    def n_days(self) -> int:
        return self.t_end - self.t_start + 1

    @property
    def days(self) -> np.ndarray:
        return np.arange(self.t_start, self.t_end + 1)

    @property
    def n_steps(self) -> int:
        return (self.t_end - self.t_start) * self.substeps_per_day

    @property
    def step(self) -> float:
        return 1.0 / self.substeps_per_day

    def with_delta_t(self, delta_t: int) -> "TimeGrid":
        return self.model_copy(update={"delta_t": delta_t})

    def extended(self, horizon_days: int) -> "TimeGrid":
        """Grid continuing from the end of this window for ``horizon_days``."""
        return self.model_copy(update={"t_start": self.t_end, "t_end": self.t_end + horizon_days})


class ParameterSet(BaseModel):
    """Model parameters theta.

    Ratio sequences have shape (2, k+1) (group x knot), rates shape (2,),
    ``contact`` shape (2, 2). Populations are carried along but are not part
    of the inferred vector.
    """

    model_config = ConfigDict(frozen=True)

    t_set: NDArray
    alpha: NDArray
    tau: NDArray
    zeta: NDArray
    xi: NDArray
    beta: NDArray
    sigma: NDArray
    eta: NDArray
    mu: NDArray
    gamma_I: NDArray
    gamma_H: NDArray
    contact: NDArray
    populations: NDArray

    @model_validator(mode="after")
    def check_admissible(self):
        n_knots = self.t_set.shape[0]
        for name in RATIO_NAMES:
            seq = getattr(self, name)
            if seq.shape != (2, n_knots):
                raise ValueError(f"{name} must have shape (2, {n_knots}), got {seq.shape}")
            if not np.all((seq >= 0.0) & (seq <= 1.0)):
                raise ValueError(f"{name} values must lie in [0, 1]")
        for name in RATE_NAMES:
            rate = getattr(self, name)
            if rate.shape != (2,):
                raise ValueError(f"{name} must have shape (2,), got {rate.shape}")
            if not np.all(rate > 0.0):
                raise ValueError(f"{name} must be strictly positive")
        if self.contact.shape != (2, 2) or np.any(self.contact < 0.0):
            raise ValueError("contact must be a nonnegative 2x2 matrix")
        if self.populations.shape != (2,) or np.any(self.populations <= 0.0):
            raise ValueError("populations must be two positive counts")
        if n_knots > 1 and np.any(np.diff(self.t_set) <= 0.0):
            raise ValueError("t_set must be strictly increasing")
        return self

    @property
    def n_knots(self) -> int:
        return self.t_set.shape[0]

    @property
    def dimension(self) -> int:
        return 2 * len(RATIO_NAMES) * self.n_knots + N_SCALARS

    @property
    def delta_t(self) -> float:
        if self.n_knots < 2:
            return 1.0
        return float(self.t_set[1] - self.t_set[0])

    def to_vector(self) -> np.ndarray:
        parts = [getattr(self, name).ravel() for name in RATIO_NAMES]
        parts += [getattr(self, name) for name in RATE_NAMES]
        parts.append(self.contact.ravel())
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, vector: np.ndarray, t_set: np.ndarray, populations: np.ndarray) -> "ParameterSet":
        vector = np.asarray(vector, dtype=float)
        n_knots = len(t_set)
        n_ratio = 2 * n_knots
        expected = len(RATIO_NAMES) * n_ratio + N_SCALARS
        if vector.shape != (expected,):
            raise ValueError(f"Parameter vector must have length {expected}, got {vector.shape}")
        fields = {}
        offset = 0
        for name in RATIO_NAMES:
            fields[name] = vector[offset:offset + n_ratio].reshape(2, n_knots)
            offset += n_ratio
        for name in RATE_NAMES:
            fields[name] = vector[offset:offset + 2]
            offset += 2
        fields["contact"] = vector[offset:offset + 4].reshape(2, 2)
        return cls(t_set=t_set, populations=populations, **fields)

    def coordinate_names(self) -> list[str]:
        names = []
        for name in RATIO_NAMES:
            for group in (1, 2):
                names += [f"{name}_{group}[{int(t)}]" for t in self.t_set]
        for name in RATE_NAMES:
            names += [f"{name}_1", f"{name}_2"]
        names += ["C_11", "C_12", "C_21", "C_22"]
        return names


class Trajectory(BaseModel):
    """States sampled at every integer day of a window, shape (n_days, 8, 2)."""

    model_config = ConfigDict(frozen=True)

    days: IndexArray
    states: NDArray

    def component(self, name: str) -> np.ndarray:
        return self.states[:, COMPARTMENTS.index(name), :]

    def final_state(self) -> CompartmentState:
        return CompartmentState(values=self.states[-1])


class ModelSetup(BaseModel):
    """Everything needed to run the model apart from theta."""

    model_config = ConfigDict(frozen=True)

    t_start: int = 0
    t_end: int
    populations: Tuple[float, float]
    initial_exposed: Tuple[float, float] = (1.0, 100.0)
    substeps_per_day: int = Field(10, ge=1)
    divergence_factor: float = 10.0

    def grid(self, delta_t: int = 1, t_end: Optional[int] = None) -> TimeGrid:
        return TimeGrid(
            t_start=self.t_start,
            t_end=self.t_end if t_end is None else t_end,
            delta_t=delta_t,
            substeps_per_day=self.substeps_per_day,
        )

    def initial_state(self) -> CompartmentState:
        return CompartmentState.initial(self.populations, self.initial_exposed)

    @property
    def population_array(self) -> np.ndarray:
        return np.asarray(self.populations, dtype=float)
