import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ltcinfer.core.utils import NDArray


class TransformedParameters(BaseModel):
    """Unconstrained coordinates x = (g, h): arctanh-transformed ratios and log scalars."""

    model_config = ConfigDict(frozen=True)

    g: NDArray
    h: NDArray
    t_set: NDArray

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.g, self.h])

    @property
    def dimension(self) -> int:
        return self.g.size + self.h.size

    @classmethod
    def from_vector(cls, vector: np.ndarray, t_set: np.ndarray) -> "TransformedParameters":
        n_ratio = 8 * len(t_set)
        return cls(g=vector[:n_ratio], h=vector[n_ratio:], t_set=t_set)


class PriorSpec(BaseModel):
    """Gaussian prior on x: tridiagonal-precision blocks for g, diagonal for h."""

    model_config = ConfigDict(frozen=True)

    g_star: NDArray
    h_star: NDArray
    t_set: NDArray
    populations: NDArray
    s_g: float = Field(1000.0, gt=0.0)
    s_I: float = Field(1.0, gt=0.0)
    s_h: float = Field(0.1, gt=0.0)
    noise_variance: float = Field(1.0, gt=0.0)

    @model_validator(mode="after")
    def check_dimensions(self):
        if self.g_star.shape != (8 * len(self.t_set),):
            raise ValueError(f"g_star must have {8 * len(self.t_set)} entries")
        if self.h_star.shape != (16,):
            raise ValueError("h_star must have 16 entries")
        return self

    @property
    def n_knots(self) -> int:
        return len(self.t_set)

    @property
    def delta_t(self) -> float:
        return float(self.t_set[1] - self.t_set[0]) if self.n_knots > 1 else 1.0

    @property
    def dimension(self) -> int:
        return self.g_star.size + self.h_star.size

    @property
    def mean(self) -> np.ndarray:
        return np.concatenate([self.g_star, self.h_star])

    @property
    def h_std(self) -> np.ndarray:
        return self.s_h * np.abs(self.h_star)
