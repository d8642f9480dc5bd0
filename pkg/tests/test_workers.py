import numpy as np
from numpy.testing import assert_array_equal

from ltcinfer.core.exceptions import DivergenceError
from ltcinfer.services.workers import WorkerPool


class NegativeDiverges:
    """Standard normal whose likelihood fails for particles with a negative first coordinate."""

    def log_likelihood_and_gradient(self, x):
        if x[0] < 0:
            raise DivergenceError(1.0)
        return -float(x @ x), -2.0 * x

    def log_prior_and_gradient(self, x):
        return -0.5 * float(x @ x), -x


def test_chunks_are_contiguous_and_cover_items():
    with WorkerPool(3, "thread") as pool:
        chunks = pool.chunks(10)
    assert [len(chunk) for chunk in chunks] == [4, 3, 3]
    assert_array_equal(np.concatenate(chunks), np.arange(10))


def test_map_keeps_item_order():
    with WorkerPool(4, "thread") as pool:
        assert pool.map(lambda v: v * v, range(11)) == [v * v for v in range(11)]


def test_serial_pool_has_no_executor():
    pool = WorkerPool(1)
    assert pool.map(str, [1, 2]) == ["1", "2"]
    pool.close()


def test_gradients_flag_degenerate_particles():
    particles = np.array([[1.0, 2.0], [-1.0, 0.5], [0.5, -3.0]])
    with WorkerPool(2, "thread") as pool:
        batch = pool.gradients(NegativeDiverges(), particles)
    assert_array_equal(batch.degenerate, [False, True, False])
    assert batch.n_degenerate == 1
    assert batch.log_likelihood[1] == -np.inf
    assert_array_equal(batch.likelihood_gradients[1], 0.0)
    assert_array_equal(batch.prior_gradients, -particles)
    assert_array_equal(batch.posterior_gradients[0], -3.0 * particles[0])
