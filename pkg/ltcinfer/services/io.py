import json
import logging
import zipfile
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from ltcinfer.core.exceptions import ConfigurationError, DataIngestionError
from ltcinfer.schemas.data import STREAM_NAMES, ObservationSet, RawSeries, StreamSet
from ltcinfer.schemas.forecast import EnsembleForecast
from ltcinfer.schemas.gradient import FDReport
from ltcinfer.schemas.inversion import FitResult
from ltcinfer.schemas.model import RATE_NAMES, RATIO_NAMES, ParameterSet
from ltcinfer.schemas.psvgd import Ensemble, OuterIterationRecord

logger = logging.getLogger(__name__)

ENSEMBLE_FORMAT_VERSION = 1
NPZ_TIMESTAMP = (1980, 1, 1, 0, 0, 0)


def _prepare(path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_model(path: Path, model) -> Path:
    path = _prepare(path)
    path.write_text(model.model_dump_json(indent=2))
    logger.info(f"Wrote {path}")
    return path


def read_model(path: Path, schema):
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"File not found: {path}")
    try:
        return schema.model_validate_json(path.read_text())
    except ValueError as exc:
        raise ConfigurationError(f"{path} is not a valid {schema.__name__}: {exc}") from exc


def write_fit_result(path: Path, result: FitResult) -> Path:
    return write_model(path, result)


def read_fit_result(path: Path) -> FitResult:
    return read_model(path, FitResult)


def read_parameters(path: Path) -> ParameterSet:
    return read_model(path, ParameterSet)


def write_observations(path: Path, obs: ObservationSet) -> Path:
    return write_model(path, obs)


def streams_frame(streams: StreamSet) -> pd.DataFrame:
    frame = pd.DataFrame({name: streams.stream(name) for name in STREAM_NAMES})
    frame.insert(0, "day", streams.days)
    return frame


def write_trajectory_csv(path: Path, streams: StreamSet) -> Path:
    """`day,H,Pc,pc,D,d,D1,d1,D2,d2`"""
    path = _prepare(path)
    streams_frame(streams).to_csv(path, index=False)
    logger.info(f"Wrote {path}")
    return path


def write_smoothed_csv(path: Path, raw: RawSeries, smoothed: RawSeries) -> Path:
    """`day,<stream>,<stream>_ma7`"""
    path = _prepare(path)
    pd.DataFrame({"day": raw.days, raw.name: raw.values, f"{raw.name}_ma7": smoothed.values}).to_csv(path, index=False)
    return path


def write_reports(directory: Path, state: pd.DataFrame, ltc: pd.DataFrame) -> Tuple[Path, Path]:
    state_path = _prepare(Path(directory) / "state.csv")
    ltc_path = _prepare(Path(directory) / "ltc.csv")
    state.to_csv(state_path, index=False)
    ltc.to_csv(ltc_path, index=False)
    logger.info(f"Wrote {state_path} and {ltc_path}")
    return state_path, ltc_path


def write_ensemble(path: Path, ensemble: Ensemble, t_set: np.ndarray, populations: np.ndarray) -> Path:
    """npz with the particle arrays and a JSON header.

    Members carry a fixed timestamp so equal ensembles give byte-identical files.
    """
    path = _prepare(path)
    header = {
        "format_version": ENSEMBLE_FORMAT_VERSION,
        "d_x": ensemble.dimension,
        "n_particles": ensemble.n_particles,
        "seed": ensemble.seed,
        "n_workers": ensemble.n_workers,
        "outer_iteration": ensemble.outer_iteration,
        "layout": "rows are particles; columns are 8 arctanh ratio blocks of len(t_set) knots, then 16 log scalars",
    }
    arrays = {
        "header": np.array(json.dumps(header, sort_keys=True)),
        "samples": ensemble.samples,
        "coefficients": ensemble.coefficients,
        "complements": ensemble.complements,
        "t_set": t_set,
        "populations": populations,
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as archive:
        for name, array in arrays.items():
            member = zipfile.ZipInfo(f"{name}.npy", date_time=NPZ_TIMESTAMP)
            with archive.open(member, "w", force_zip64=True) as handle:
                np.lib.format.write_array(handle, np.asanyarray(array), allow_pickle=False)
    logger.info(f"Wrote {path}")
    return path


def read_ensemble(path: Path) -> Tuple[Ensemble, np.ndarray, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Ensemble file not found: {path}")
    with np.load(path) as archive:
        header = json.loads(str(archive["header"]))
        if header.get("format_version") != ENSEMBLE_FORMAT_VERSION:
            raise DataIngestionError(f"Unsupported ensemble format {header.get('format_version')}")
        ensemble = Ensemble(
            samples=archive["samples"],
            coefficients=archive["coefficients"],
            complements=archive["complements"],
            seed=header["seed"],
            n_workers=header["n_workers"],
            outer_iteration=header["outer_iteration"],
        )
        return ensemble, archive["t_set"], archive["populations"]


def write_eigenvalue_history(path: Path, history: Sequence[OuterIterationRecord]) -> Path:
    """`outer_iter,index,lambda`"""
    path = _prepare(path)
    rows = [
        {"outer_iter": record.outer_iteration, "index": i + 1, "lambda": value}
        for record in history
        for i, value in enumerate(record.spectrum)
    ]
    pd.DataFrame(rows, columns=["outer_iter", "index", "lambda"]).to_csv(path, index=False)
    return path


def parameter_summary(samples: np.ndarray, optimal: np.ndarray, t_set: np.ndarray) -> pd.DataFrame:
    """Ratios in ratio space per knot day, scalars in log space"""
    n_knots = len(t_set)
    n_ratio = 8 * n_knots
    ratios = 0.5 * (np.tanh(samples[:, :n_ratio]) + 1.0)
    optimal_ratios = 0.5 * (np.tanh(optimal[:n_ratio]) + 1.0)
    rows: List[Dict] = []
    for b, name in enumerate(f"{n}_{g}" for n in RATIO_NAMES for g in (1, 2)):
        block = slice(b * n_knots, (b + 1) * n_knots)
        q05, q95 = np.quantile(ratios[:, block], [0.05, 0.95], axis=0)
        for k, day in enumerate(t_set):
            rows.append(
                {
                    "parameter": name,
                    "index": int(day),
                    "mean": ratios[:, block][:, k].mean(),
                    "q05": q05[k],
                    "q95": q95[k],
                    "optimal": optimal_ratios[block][k],
                }
            )
    scalar_names = [f"log_{n}_{g}" for n in RATE_NAMES for g in (1, 2)] + [f"log_C_{i}{j}" for i in (1, 2) for j in (1, 2)]
    logs = samples[:, n_ratio:]
    q05, q95 = np.quantile(logs, [0.05, 0.95], axis=0)
    for k, name in enumerate(scalar_names):
        rows.append(
            {"parameter": name, "index": 0, "mean": logs[:, k].mean(), "q05": q05[k], "q95": q95[k], "optimal": optimal[n_ratio + k]}
        )
    return pd.DataFrame(rows, columns=["parameter", "index", "mean", "q05", "q95", "optimal"])


def write_parameter_summary(path: Path, summary: pd.DataFrame) -> Path:
    path = _prepare(path)
    summary.to_csv(path, index=False)
    return path


def quantile_column(level: float) -> str:
    return f"q{int(round(100 * level)):02d}"


def forecast_frame(forecast: EnsembleForecast) -> pd.DataFrame:
    """`day,observable,q05,q50,q95,mean,optimal` with the q-columns named after the band levels"""
    frames = []
    for band in forecast.bands:
        low, high = band.levels
        frames.append(
            pd.DataFrame(
                {
                    "day": band.days,
                    "observable": band.observable,
                    quantile_column(low): band.lower,
                    "q50": band.median,
                    quantile_column(high): band.upper,
                    "mean": band.mean,
                    "optimal": band.optimal if band.optimal is not None else np.nan,
                }
            )
        )
    return pd.concat(frames, ignore_index=True)


def write_forecast_csv(path: Path, forecast: EnsembleForecast) -> Path:
    path = _prepare(path)
    forecast_frame(forecast).to_csv(path, index=False)
    logger.info(f"Wrote {path}")
    return path


def format_fd_report(report: FDReport) -> str:
    lines = [f"{'coordinate':>10} {'adjoint':>16} {'finite diff':>16} {'rel. error':>12}"]
    for i, a, f, e in zip(report.coordinates, report.analytic, report.finite_difference, report.relative_errors):
        lines.append(f"{i:>10d} {a:>16.8e} {f:>16.8e} {e:>12.3e}")
    if report.skipped:
        lines.append(f"skipped (at a bound): {report.skipped}")
    lines.append(f"max relative error:    {report.max_relative_error:.3e}")
    lines.append(f"median relative error: {report.median_relative_error:.3e}")
    lines.append(f"l2 relative error:     {report.l2_relative_error:.3e}")
    return "\n".join(lines)
