import logging
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd

from ltcinfer.core.config import DataConfig, ThresholdConfig
from ltcinfer.core.exceptions import DataIngestionError, ThresholdNotReachedError
from ltcinfer.schemas.data import DAILY_STREAMS, ObservationBlock, ObservationSet, RawSeries, StreamSet, Thresholds

logger = logging.getLogger(__name__)

STATE_COLUMNS = ("confirmed_daily", "hospitalized_current", "deceased_daily")
LTC_COLUMNS = ("ltc_deceased_daily",)

# Daily blocks enter the data vector scaled by this factor
DAILY_WEIGHT = 0.1


def _read_dated_csv(path: Path, columns, reference: Optional[pd.Timestamp]) -> Tuple[Dict[str, RawSeries], pd.Timestamp]:
    path = Path(path)
    if not path.exists():
        raise DataIngestionError(f"Data file not found: {path}")
    try:
        frame = pd.read_csv(path, parse_dates=["date"])
    except (ValueError, pd.errors.ParserError) as exc:
        raise DataIngestionError(f"Cannot parse {path}: {exc}") from exc
    missing = [c for c in ("date",) + tuple(columns) if c not in frame.columns]
    if missing:
        raise DataIngestionError(f"{path} is missing columns {missing}")
    if frame.empty:
        raise DataIngestionError(f"{path} has no rows")

    frame = frame.sort_values("date").reset_index(drop=True)
    gaps = frame["date"].diff().dropna() != pd.Timedelta(days=1)
    if gaps.any():
        bad = frame["date"][1:][gaps.to_numpy()].iloc[0]
        raise DataIngestionError(f"{path} dates are not consecutive near {bad.date()}")
    if frame[list(columns)].isna().any().any():
        raise DataIngestionError(f"{path} has empty values")

    reference = frame["date"].iloc[0] if reference is None else reference
    days = (frame["date"] - reference).dt.days.to_numpy()
    series = {
        column: RawSeries(name=column, days=days, values=frame[column].to_numpy(dtype=float))
        for column in columns
    }
    return series, reference


def read_state_csv(path: Path) -> Tuple[Dict[str, RawSeries], pd.Timestamp]:
    """Read `date,confirmed_daily,hospitalized_current,deceased_daily`; day 0 is the first date"""
    return _read_dated_csv(path, STATE_COLUMNS, None)


def read_ltc_csv(path: Path, reference: pd.Timestamp) -> RawSeries:
    """Read `date,ltc_deceased_daily` with days counted from ``reference``"""
    series, _ = _read_dated_csv(path, LTC_COLUMNS, reference)
    return series[LTC_COLUMNS[0]]


def moving_average_7(series: RawSeries) -> RawSeries:
    """Centered seven day mean, padding each end with its endpoint value"""
    padded = np.pad(series.values, 3, mode="edge")
    smoothed = np.convolve(padded, np.ones(7), mode="valid") / 7.0
    return RawSeries(name=f"{series.name}_ma7", days=series.days, values=smoothed)


def accumulate(values) -> np.ndarray:
    return np.cumsum(np.asarray(values, dtype=float))


def split_ltc_deaths(d_total: RawSeries, d_ltc: RawSeries) -> Tuple[RawSeries, RawSeries]:
    """Daily deaths inside and outside LTC on the overlap of the two streams"""
    first = max(d_total.first_day, d_ltc.first_day)
    last = min(d_total.last_day, d_ltc.last_day)
    if last < first:
        raise DataIngestionError("Total and LTC death streams do not overlap")
    total = d_total.window(first, last)
    inside = d_ltc.window(first, last)
    outside = total.values - inside.values
    if np.any(outside < 0):
        logger.warning(
            f"LTC deaths exceed total deaths on {int(np.sum(outside < 0))} days; "
            "those days fall back to the log floor"
        )
    return (
        RawSeries(name="d1", days=total.days, values=inside.values),
        RawSeries(name="d2", days=total.days, values=outside),
    )


def _first_crossing(series: RawSeries, threshold: float, stream: str) -> int:
    above = np.nonzero(series.values > threshold)[0]
    if len(above) == 0:
        raise ThresholdNotReachedError(stream, threshold)
    return int(series.days[above[0]])


def detect_thresholds(
    P: RawSeries,
    H: RawSeries,
    D: RawSeries,
    ltc_first_day: int,
    thresholds: ThresholdConfig = ThresholdConfig(),
) -> Thresholds:
    return Thresholds(
        t1_p=_first_crossing(P, thresholds.confirmed, "confirmed"),
        t1_h=_first_crossing(H, thresholds.hospitalized, "hospitalized"),
        t1_d=_first_crossing(D, thresholds.deaths, "deaths"),
        t2_d=ltc_first_day - 1,
    )


def build_streams(
    state: Dict[str, RawSeries],
    ltc: RawSeries,
    backfill: str = "share",
) -> Tuple[StreamSet, int]:
    """Smooth the reported series and derive every observable stream.

    Returns the streams and the first day of the LTC report.
    """
    pc = moving_average_7(state["confirmed_daily"])
    H = moving_average_7(state["hospitalized_current"])
    d = moving_average_7(state["deceased_daily"])
    d_ltc = moving_average_7(ltc)

    t_start = d.first_day
    t_end = d.last_day
    if d_ltc.last_day < t_end:
        logger.warning(f"LTC stream ends on day {d_ltc.last_day}, truncating the window from day {t_end}")
        t_end = d_ltc.last_day
    pc, H, d = pc.window(t_start, t_end), H.window(t_start, t_end), d.window(t_start, t_end)

    d1_reported, _ = split_ltc_deaths(d, d_ltc)
    ltc_first_day = d1_reported.first_day
    n_before = ltc_first_day - t_start

    if backfill == "share":
        first_total = d.values[n_before]
        share = float(np.clip(d1_reported.values[0] / first_total, 0.0, 1.0)) if first_total > 0 else 0.0
        logger.info(f"Back-filling LTC deaths before day {ltc_first_day} with share {share:.3f}")
        d1_before = share * d.values[:n_before]
    elif backfill == "zero":
        d1_before = np.zeros(n_before)
    else:
        raise DataIngestionError(f"Unknown LTC back-fill mode '{backfill}'")

    d1 = np.concatenate([d1_before, d1_reported.values])
    D = accumulate(d.values)
    D1 = accumulate(d1)
    Pc = accumulate(pc.values)
    streams = StreamSet(
        days=d.days,
        H=H.values,
        Pc=Pc,
        pc=pc.values,
        D=D,
        d=d.values,
        D1=D1,
        d1=d1,
        D2=D - D1,
        d2=d.values - d1,
    )
    return streams, ltc_first_day


def thresholds_for(streams: StreamSet, ltc_first_day: int, config: ThresholdConfig = ThresholdConfig()) -> Thresholds:
    def as_series(name):
        return RawSeries(name=name, days=streams.days, values=streams.stream(name))

    return detect_thresholds(as_series("Pc"), as_series("H"), as_series("D"), ltc_first_day, config)


def block_spans(thresholds: Thresholds, t_end: int) -> Dict[str, Tuple[int, int, float]]:
    """Active span and weight of every misfit block"""
    t2 = min(thresholds.t2_d, t_end)
    return {
        "H": (thresholds.t1_h, t_end, 1.0),
        "Pc": (thresholds.t1_p, t_end, 1.0),
        "pc": (thresholds.t1_p + 1, t_end, DAILY_WEIGHT),
        "D": (thresholds.t1_d, t2, 1.0),
        "d": (thresholds.t1_d + 1, t2, DAILY_WEIGHT),
        "D1": (thresholds.t2_d + 1, t_end, 1.0),
        "d1": (thresholds.t2_d + 2, t_end, DAILY_WEIGHT),
        "D2": (thresholds.t2_d + 1, t_end, 1.0),
        "d2": (thresholds.t2_d + 2, t_end, DAILY_WEIGHT),
    }


def assemble_observations(
    streams: StreamSet,
    thresholds: Thresholds,
    log_floor: float = 0.5,
    t_end: Optional[int] = None,
) -> ObservationSet:
    t_end = streams.t_end if t_end is None else min(t_end, streams.t_end)
    blocks = []
    for stream, (start, end, weight) in block_spans(thresholds, t_end).items():
        start = max(start, streams.t_start + (1 if stream in DAILY_STREAMS else 0))
        days = np.arange(start, end + 1)
        values = streams.values_on(stream, days) if len(days) else np.zeros(0)
        blocks.append(
            ObservationBlock(
                stream=stream,
                start=start,
                end=max(end, start - 1),
                weight=weight,
                log_values=np.log(np.maximum(values, log_floor)),
            )
        )
    return ObservationSet(
        t_start=streams.t_start,
        t_end=t_end,
        thresholds=thresholds,
        log_floor=log_floor,
        blocks=blocks,
    )


def load_observations(config: DataConfig) -> Tuple[StreamSet, ObservationSet]:
    """Read, smooth and assemble the observations named by a run config"""
    if config.state_csv is None or config.ltc_csv is None:
        raise DataIngestionError("Run config needs data.state_csv and data.ltc_csv")
    state, reference = read_state_csv(config.state_csv)
    ltc = read_ltc_csv(config.ltc_csv, reference)
    streams, ltc_first_day = build_streams(state, ltc, config.ltc_backfill)
    thresholds = thresholds_for(streams, ltc_first_day, config.thresholds)
    logger.info(
        f"Observation window days {streams.t_start}..{streams.t_end}, thresholds "
        f"t1_p={thresholds.t1_p} t1_h={thresholds.t1_h} t1_d={thresholds.t1_d} t2_d={thresholds.t2_d}"
    )
    return streams, assemble_observations(streams, thresholds, config.log_floor)
