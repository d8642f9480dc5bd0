import json
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings

from ltcinfer.core.exceptions import ConfigurationError


class Settings(BaseSettings):
    PROJECT_NAME: str = "ltcinfer"
    VERSION: str = "1.0.0"

    LOG_LEVEL: str = "INFO"
    LOG_DIR: str = "logs"
    LOG_FILE: str = "ltcinfer.log"

    # Worker pool used by `sample` and ensemble forecasts
    DEFAULT_WORKERS: int = 1
    EXECUTOR: Literal["thread", "process"] = "thread"

    class Config:
        env_prefix = "LTCINFER_"
        env_file = ".env"
        env_file_encoding = 'utf-8'


settings = Settings()


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ThresholdConfig(_Section):
    confirmed: float = 100.0
    hospitalized: float = 10.0
    deaths: float = 10.0


class DataConfig(_Section):
    state_csv: Optional[Path] = None
    ltc_csv: Optional[Path] = None
    log_floor: float = Field(0.5, gt=0.0)
    thresholds: ThresholdConfig = ThresholdConfig()
    ltc_backfill: Literal["share", "zero"] = "share"


class ModelConfig(_Section):
    populations: Tuple[float, float]
    initial_exposed: Tuple[float, float] = (1.0, 100.0)
    substeps_per_day: int = Field(10, ge=1)
    divergence_factor: float = Field(10.0, gt=1.0)

    @field_validator("populations")
    @classmethod
    def check_populations(cls, v):
        if min(v) <= 0:
            raise ValueError("populations must be positive")
        return v


class PenaltyConfig(_Section):
    lam: float = Field(100.0, ge=0.0)
    s_t: float = Field(10.0, gt=0.0)
    s: float = Field(5.0, gt=0.0)
    tau_ref: Tuple[float, float] = (0.40, 0.10)
    zeta_ref: Tuple[float, float] = (0.25, 0.05)
    xi_ref: Tuple[float, float] = (0.40, 0.10)
    beta_ref: Tuple[float, float] = (0.30, 0.30)
    sigma_ref: Tuple[float, float] = (0.25, 0.25)
    eta_ref: Tuple[float, float] = (0.13, 0.13)
    mu_ref: Tuple[float, float] = (0.13, 0.13)
    gamma_I_ref: Tuple[float, float] = (0.20, 0.20)
    gamma_H_ref: Tuple[float, float] = (0.14, 0.14)
    contact_ref: Tuple[Tuple[float, float], Tuple[float, float]] = ((4.0, 0.5), (0.1, 2.0))

    @model_validator(mode="after")
    def check_references(self):
        for name in ("tau_ref", "zeta_ref", "xi_ref"):
            if not all(0.0 < v < 1.0 for v in getattr(self, name)):
                raise ValueError(f"{name} must lie strictly inside (0, 1)")
        for name in ("beta_ref", "sigma_ref", "eta_ref", "mu_ref", "gamma_I_ref", "gamma_H_ref"):
            if not all(v > 0.0 for v in getattr(self, name)):
                raise ValueError(f"{name} must be positive")
        if not all(v > 0.0 for row in self.contact_ref for v in row):
            raise ValueError("contact_ref entries must be positive")
        return self


class InversionConfig(_Section):
    penalty: PenaltyConfig = PenaltyConfig()
    coarse_delta_t: int = Field(7, ge=1)
    fine_delta_t: int = Field(1, ge=1)
    max_iter: int = Field(100, ge=1)
    relative_decrease_tol: float = Field(1e-4, ge=0.0)
    lbfgs_memory: int = Field(10, ge=1)
    ftol: float = Field(1e-12, ge=0.0)
    gtol: float = Field(1e-8, ge=0.0)
    alpha_initial_upper: float = Field(0.1, ge=0.0, le=1.0)
    alpha_upper: float = Field(0.9, ge=0.0, le=1.0)
    ratio_bound_factors: Tuple[float, float] = (0.25, 2.0)
    rate_bound_factors: Tuple[float, float] = (0.5, 2.0)
    skip_coarse: bool = False


class PriorConfig(_Section):
    s_g: float = Field(1000.0, gt=0.0)
    s_I: float = Field(1.0, gt=0.0)
    s_h: float = Field(0.1, gt=0.0)
    noise_variance: float = Field(1.0, gt=0.0)
    ratio_clip: float = Field(1e-4, gt=0.0, lt=0.5)


class SamplerConfig(_Section):
    n_per_worker: int = Field(125, ge=1)
    workers: int = Field(8, ge=1)
    step_size: float = Field(0.1, ge=0.0)
    step_schedule: Literal["adagrad", "constant"] = "adagrad"
    inner_iterations: int = Field(10, ge=1)
    outer_iterations: int = Field(10, ge=1)
    w_tol: float = Field(0.0, ge=0.0)
    x_tol: float = Field(0.0, ge=0.0)
    truncation_tol: float = Field(0.1, ge=0.0)
    min_rank: int = Field(1, ge=1)
    max_rank: Optional[int] = Field(None, ge=1)
    spectrum_size: int = Field(50, ge=1)
    max_degenerate_fraction: float = Field(0.5, ge=0.0, le=1.0)
    verify_eigenpairs: bool = False
    executor: Literal["thread", "process"] = settings.EXECUTOR

    @property
    def n_particles(self) -> int:
        return self.n_per_worker * self.workers


class ForecastConfig(_Section):
    quantiles: Tuple[float, float] = (0.05, 0.95)
    horizon_days: int = Field(28, ge=0)
    holdout_days: int = Field(0, ge=0)
    max_exclusion: float = Field(0.1, ge=0.0, le=1.0)

    @field_validator("quantiles")
    @classmethod
    def check_quantiles(cls, v):
        low, high = v
        if not 0.0 <= low < high <= 1.0:
            raise ValueError("quantiles must satisfy 0 <= low < high <= 1")
        return v


class SynthConfig(_Section):
    t_end: int = Field(120, ge=1)
    noise_scale: float = Field(0.0, ge=0.0)
    ltc_report_day: int = Field(0, ge=0)
    truth_file: Optional[Path] = None


class RunConfig(_Section):
    """One inference run: data, model, inversion, prior, sampler and forecast settings."""

    data: DataConfig = DataConfig()
    model: ModelConfig
    inversion: InversionConfig = InversionConfig()
    prior: PriorConfig = PriorConfig()
    sampler: SamplerConfig = SamplerConfig()
    forecast: ForecastConfig = ForecastConfig()
    synth: SynthConfig = SynthConfig()
    seed: int = 0
    output_dir: Path = Path("output")

    def with_overrides(
        self,
        seed: Optional[int] = None,
        workers: Optional[int] = None,
        output_dir: Optional[Path] = None,
        quantiles: Optional[List[float]] = None,
        holdout_days: Optional[int] = None,
    ) -> "RunConfig":
        """Apply command line flags on top of the file values"""
        data = self.model_dump()
        if seed is not None:
            data["seed"] = seed
        if workers is not None:
            data["sampler"]["workers"] = workers
        if output_dir is not None:
            data["output_dir"] = output_dir
        if quantiles is not None:
            data["forecast"]["quantiles"] = tuple(quantiles)
        if holdout_days is not None:
            data["forecast"]["holdout_days"] = holdout_days
        try:
            return RunConfig.model_validate(data)
        except ValidationError as exc:
            raise ConfigurationError(f"Invalid override: {exc}") from exc


def load_run_config(path: Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"Config file {path} is not valid JSON: {exc}") from exc
    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigurationError(f"Invalid config {path}: {exc}") from exc
    # Relative data paths resolve against the config file location
    for field in ("state_csv", "ltc_csv"):
        value = getattr(config.data, field)
        if value is not None and not value.is_absolute():
            setattr(config.data, field, path.parent / value)
    if config.synth.truth_file is not None and not config.synth.truth_file.is_absolute():
        config.synth.truth_file = path.parent / config.synth.truth_file
    return config
