import numpy as np
import pytest

from ballapprox import sampling


@pytest.mark.parametrize("method", sampling.METHODS)
def test_points_lie_in_cube_and_are_reproducible(method):
    a = np.concatenate(list(sampling.cube_points(3, 5000, 11, method, chunk=1024)))
    b = np.concatenate(list(sampling.cube_points(3, 5000, 11, method, chunk=1024)))
    assert a.shape == (5000, 3)
    assert np.all((a >= -1) & (a < 1))
    assert np.array_equal(a, b)


def test_seeds_differ():
    a = next(sampling.cube_points(2, 100, 1))
    b = next(sampling.cube_points(2, 100, 2))
    assert not np.array_equal(a, b)


def test_stratified_fills_every_cell():
    pts = np.concatenate(list(sampling.cube_points(2, 400, 0, "stratified")))
    cells = np.floor((pts + 1) / 2 * 20).astype(int)
    assert len({tuple(c) for c in cells}) == 400


@pytest.mark.parametrize("method", sampling.METHODS)
def test_integrate_constant_and_linear(method):
    res = sampling.integrate(lambda x: np.stack([np.ones(len(x)), x[:, 0]], 1), 3, 20000, 5, method)
    assert res.mean[0] == pytest.approx(8.0)
    assert res.std_error[0] == pytest.approx(0.0, abs=1e-12)
    assert abs(res.mean[1]) < 5 * res.std_error[1] + 1e-3


def test_thread_count_does_not_change_results():
    f = lambda x: np.sin(x).sum(1) ** 2
    one = sampling.integrate(f, 4, 300_000, 3, threads=1, chunk=4096)
    many = sampling.integrate(f, 4, 300_000, 3, threads=4, chunk=4096)
    assert np.array_equal(one.mean, many.mean)
    assert np.array_equal(one.std_error, many.std_error)


def test_child_seed_is_stateless():
    ss = np.random.SeedSequence(9)
    ss.spawn(3)
    a = np.random.default_rng(sampling.child_seed(ss, 1)).random()
    b = np.random.default_rng(sampling.child_seed(9, 1)).random()
    assert a == b
