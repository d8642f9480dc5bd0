import json
import time

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from ltcinfer.core.exceptions import ConfigurationError, DataIngestionError
from ltcinfer.schemas.psvgd import Ensemble
from ltcinfer.services.io import (
    parameter_summary,
    quantile_column,
    read_ensemble,
    read_fit_result,
    read_parameters,
    write_ensemble,
    write_model,
)


@pytest.fixture
def ensemble():
    rng = np.random.default_rng(0)
    samples = rng.standard_normal((5, 64))
    return Ensemble(samples=samples, coefficients=samples[:, :2], complements=samples, seed=9, n_workers=2, outer_iteration=3)


def test_ensemble_file(tmp_path, ensemble, truth):
    path = write_ensemble(tmp_path / "ensemble.npz", ensemble, truth.t_set, truth.populations)
    loaded, t_set, populations = read_ensemble(path)
    assert_array_equal(loaded.samples, ensemble.samples)
    assert (loaded.seed, loaded.n_workers, loaded.outer_iteration) == (9, 2, 3)
    assert_array_equal(t_set, truth.t_set)
    assert_array_equal(populations, truth.populations)
    with np.load(path) as archive:
        header = json.loads(str(archive["header"]))
    assert header["d_x"] == 64 and header["n_particles"] == 5


def test_ensemble_file_bytes_repeat(tmp_path, ensemble, truth, monkeypatch):
    first = write_ensemble(tmp_path / "a.npz", ensemble, truth.t_set, truth.populations).read_bytes()
    # a later wall clock must not leak into the archive
    monkeypatch.setattr(time, "time", lambda: 4.0e9)
    second = write_ensemble(tmp_path / "b.npz", ensemble, truth.t_set, truth.populations).read_bytes()
    assert first == second


def test_unknown_ensemble_format(tmp_path, ensemble):
    path = tmp_path / "old.npz"
    np.savez(path, header=np.array(json.dumps({"format_version": 0})), samples=ensemble.samples)
    with pytest.raises(DataIngestionError):
        read_ensemble(path)


def test_missing_files(tmp_path):
    with pytest.raises(ConfigurationError):
        read_ensemble(tmp_path / "absent.npz")
    with pytest.raises(ConfigurationError):
        read_fit_result(tmp_path / "absent.json")


def test_parameter_file(tmp_path, truth):
    loaded = read_parameters(write_model(tmp_path / "truth.json", truth))
    assert_allclose(loaded.to_vector(), truth.to_vector())
    assert_array_equal(loaded.t_set, truth.t_set)


def test_quantile_columns():
    assert quantile_column(0.05) == "q05"
    assert quantile_column(0.5) == "q50"
    assert quantile_column(0.95) == "q95"


def test_parameter_summary_layout(truth):
    n_knots = len(truth.t_set)
    samples = np.zeros((4, 8 * n_knots + 16))
    summary = parameter_summary(samples, samples[0], truth.t_set)
    assert len(summary) == 8 * n_knots + 16
    alpha = summary[summary["parameter"] == "alpha_1"]
    assert_array_equal(alpha["index"], truth.t_set)
    assert_allclose(alpha["mean"], 0.5)
    assert summary["parameter"].iloc[-1] == "log_C_22"
