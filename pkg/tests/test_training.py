import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ballapprox import geometry as g, relu_net as rn, training as tr
from ballapprox.errors import SlabOverlapError

AXES = g.make_directions(2, 4, "equal-angle")


def axis_slab_part(M):
    # 1/2 sum_j ∫_{-1/M}^0 (M s + 1)^2 (1 - 2 s) ds over four facets
    return 2 / (3 * M) + 1 / (3 * M * M)


def axis_weights(M):
    return rn.NetworkWeights.from_family(AXES, M)


class TestEnergy:
    def test_large_magnitude_is_half_square_excess(self):
        est = tr.energy_direct(axis_weights(1e6), AXES, 400_000, seed=2)
        assert abs(est.total - 0.5 * (1 - math.pi / 4)) < 3 * est.std_error
        assert est.sample_count == 400_000
        assert np.all(est.per_unit >= 0)

    def test_limit_indicator_callable(self):
        model = lambda x: g.polytope_contains(AXES, x).astype(float)
        est = tr.energy_direct(model, AXES, 100_000, seed=5)
        ex, _ = g.excess_volume(AXES, 100_000, seed=5)
        assert est.total == pytest.approx(0.5 * ex, abs=1e-12)

    def test_exact_model_has_zero_energy(self):
        model = lambda x: (np.einsum("ij,ij->i", x, x) <= 0.25).astype(float)
        assert tr.energy_direct(model, AXES, 10_000).total == 0.0

    def test_single_unit_slab(self):
        fam = g.HalfSpaceFamily(np.array([[1.0]]))
        est = tr.energy_decomposed(rn.NetworkWeights.from_family(fam, 100.0), fam, samples=10, excess_samples=10_000)
        assert est.per_unit[0] == pytest.approx(1 / 300, rel=1e-12)

    def test_axis_slab_part(self):
        est = tr.energy_decomposed(axis_weights(1e3), AXES, samples=100_000, seed=0)
        assert 0.5 * est.per_unit.sum() == pytest.approx(axis_slab_part(1e3), rel=0.01)
        assert 0.5 * est.per_unit.sum() == pytest.approx(6.67e-4, rel=0.01)

    def test_decomposed_approaches_half_excess(self):
        est = tr.energy_decomposed(axis_weights(1e7), AXES, samples=10_000, seed=0)
        assert est.total - 0.5 * est.excess < 1e-6

    def test_slab_overlap(self):
        with pytest.raises(SlabOverlapError):
            tr.energy_decomposed(axis_weights(2.0), AXES)

    def test_family_mismatch(self):
        with pytest.raises(ValueError):
            tr.energy_decomposed(axis_weights(100.0), g.make_directions(2, 4, "repelled-random", 1))

    @pytest.mark.parametrize("M", [1e2, 1e3, 1e4])
    def test_decomposition_consistency(self, M):
        a = tr.energy_direct(axis_weights(M), AXES, 400_000, seed=11)
        b = tr.energy_decomposed(axis_weights(M), AXES, samples=50_000, seed=11)
        assert abs(a.total - b.total) <= 3 * math.hypot(a.std_error, b.std_error) + 1.0 / M

    def test_cross_terms_non_positive(self):
        M, h = 100.0, 2.0

        def per_unit(m1):
            mags = np.full(4, M)
            mags[0] = m1
            return tr.energy_decomposed(rn.NetworkWeights(AXES.directions, mags), AXES, 100_000, seed=3).per_unit

        d = (per_unit(M + h) - per_unit(M - h)) / (2 * h)
        assert np.all(d[1:] <= 1e-9)


class TestRadial:
    def test_step(self):
        assert tr.radial_step(1.0, 1.0) == 2.0
        assert tr.radial_step(10.0, 1.0) == pytest.approx(10.01)

    def test_exact(self):
        assert tr.radial_exact(1.0, 1.0, 0) == 1.0
        assert tr.radial_exact(0.0, 1.0, 9) == pytest.approx(3.0)
        assert tr.radial_exact(100.0, 1.0, 1e6) == pytest.approx(4e6 ** (1 / 3))
        assert tr.radial_exact(100.0, 1.0, 1e6) == pytest.approx(158.74, abs=5e-3)

    def test_train_radial_tracks_ode(self):
        cfg = tr.TrainConfig(mode="radial", c=1.0, T=10**6, schedule="dyadic")
        trace = tr.train(cfg, axis_weights(100.0), AXES)
        final = trace.mags[-1]
        exact = tr.radial_exact(100.0, 1.0, 10**6)
        assert np.all(np.abs(final - exact) / exact <= 1e-3)
        mags = np.array(trace.mags)
        assert np.all(np.diff(mags, axis=0) > 0)

    def test_unequal_magnitudes(self):
        w0 = rn.NetworkWeights(AXES.directions, np.array([30.0, 40.0, 30.0, 50.0]))
        trace = tr.train(tr.TrainConfig(T=1000, schedule="every:100"), w0, AXES)
        assert trace.mags[-1][0] == trace.mags[-1][2]
        assert np.all(trace.mags[-1] > w0.magnitudes)

    def test_radial_exact_mode(self):
        trace = tr.train(tr.TrainConfig(mode="radial-exact", T=1000, c=2.0, schedule="every:250"), axis_weights(50.0), AXES)
        assert trace.t == [0, 250, 500, 750, 1000]
        assert trace.mags[-1][0] == pytest.approx(tr.radial_exact(50.0, 2.0, 1000))

    def test_zero_horizon(self):
        trace = tr.train(tr.TrainConfig(T=0), axis_weights(100.0), AXES)
        assert len(trace) == 1 and trace.t == [0]

    def test_largeness_condition(self):
        with pytest.raises(ValueError):
            tr.train(tr.TrainConfig(), axis_weights(10.0), AXES)

    @pytest.mark.parametrize("kw", [{"mode": "adam"}, {"eta": -1.0}, {"c": 0.0}, {"T": -1}])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            tr.TrainConfig(**kw)

    def test_mode_estimator_mismatch(self):
        with pytest.raises(ValueError):
            tr.train(tr.TrainConfig(mode="radial", estimator="grid"), axis_weights(100.0), AXES)


@settings(max_examples=50, deadline=None)
@given(st.floats(3.0, 1e4), st.floats(0.01, 10.0), st.integers(1, 2000))
def test_property_iterate_dominates_ode(g0, c, T):
    # the step map is increasing and Euler overshoots a concave solution
    g = g0
    for _ in range(T):
        new = tr.radial_step(g, c)
        assert new > g
        g = new
    assert g >= tr.radial_exact(g0, c, T) * (1 - 1e-12)


class TestFullDescent:
    def test_symmetric_one_dimensional(self):
        w = rn.NetworkWeights(np.array([[1.0], [-1.0]]), np.array([30.0, 30.0]))
        step = tr.full_grad_step(w, None, 0.5, {"kind": "grid", "samples": 20_001})
        assert step.weights.magnitudes[0] == pytest.approx(step.weights.magnitudes[1], rel=1e-12)
        assert abs(step.gradient[0, 0]) == pytest.approx(abs(step.gradient[1, 0]), rel=1e-12)

    def test_zero_step_is_identity(self):
        w = axis_weights(100.0)
        step = tr.full_grad_step(w, AXES, 0.0, {"samples": 1000})
        assert step.weights is w

    def test_radial_gradient_matches_decomposition(self):
        M, h = 100.0, 2.0

        def energy(m1):
            mags = np.full(4, M)
            mags[0] = m1
            return tr.energy_decomposed(rn.NetworkWeights(AXES.directions, mags), AXES, 100_000, seed=3, nodes=12).total

        fd = (energy(M + h) - energy(M - h)) / (2 * h)
        step = tr.full_grad_step(axis_weights(M), AXES, 1.0, {"kind": "grid", "samples": 4 * 10**6})
        radial = step.gradient[0] @ AXES.directions[0]
        assert radial == pytest.approx(fd, rel=0.05)
        assert np.all(step.weights.magnitudes > M)
        assert np.all(step.weights.magnitudes - M < 1e-4)

    def test_directions_fixed_on_symmetric_grid(self):
        cfg = tr.TrainConfig(mode="full", eta=1.0, T=100, estimator="grid", grad_samples=50_000, schedule="every:50")
        trace = tr.train(cfg, axis_weights(100.0), AXES)
        assert trace.diagnostics["max_direction_drift"] <= 1e-6

    def test_energy_descent(self):
        fam = g.make_directions(2, 4, "equal-angle")
        cfg = tr.TrainConfig(mode="full", eta=1.0, T=60, schedule="every:20", energy_samples=100_000,
                             grad_samples=40_000, seed=1)
        trace = tr.train(cfg, rn.NetworkWeights.from_family(fam, 30.0), fam)
        e, se = np.array(trace.energy), np.array(trace.energy_se)
        assert np.all(np.diff(e) <= 3 * np.hypot(se[1:], se[:-1]))
        assert e[-1] < e[0]


class TestErrorsAndFits:
    def test_lr_error_scales_like_inverse_magnitude(self):
        vals = [tr.lr_error(axis_weights(M), AXES, 1, 400_000, seed=0, method="sobol") for M in (50.0, 200.0)]
        # four slabs of width 1/M with mean error 1/2
        assert vals[0] == pytest.approx(2 / 50, rel=0.1)
        assert vals[0] / vals[1] == pytest.approx(4.0, rel=0.1)

    def test_lr_orders(self):
        w = axis_weights(20.0)
        assert tr.lr_error(w, AXES, 2, 50_000) <= tr.lr_error(w, AXES, 1, 50_000)
        with pytest.raises(ValueError):
            tr.lr_error(w, AXES, 3)

    def test_lr_limit(self):
        assert tr.lr_error(axis_weights(1e9), AXES, 1, 100_000) < 1e-6

    def test_fit_radial_exact_slope(self):
        w0 = axis_weights(25.0)
        trace = tr.train(tr.TrainConfig(mode="radial-exact", c=1e3, T=10**6, schedule="log:10"), w0, AXES)
        fit = tr.fit_power_law(trace, "magnitude_1", (1e4, 1e6))
        assert fit.slope == pytest.approx(1 / 3, abs=0.01)

    def test_fit_constant(self):
        trace = tr.TrainTrace()
        for t in range(1, 20):
            trace.append(t, [1.0], l1=0.5)
        fit = tr.fit_power_law(trace, "L1", (1, 100))
        assert fit.slope == pytest.approx(0.0, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(0.5))

    def test_fit_needs_ten_points(self):
        trace = tr.TrainTrace()
        for t in range(1, 6):
            trace.append(t, [float(t)])
        with pytest.raises(ValueError):
            tr.fit_power_law(trace, "mag_1", (1, 5))

    def test_trace_times_increase(self):
        trace = tr.TrainTrace()
        trace.append(3, [1.0])
        with pytest.raises(ValueError):
            trace.append(3, [1.0])

    def test_csv_round_trip(self):
        cfg = tr.TrainConfig(T=100, schedule="every:25", error_samples=2000)
        trace = tr.train(cfg, axis_weights(30.0), AXES)
        text = trace.to_csv()
        assert text.splitlines()[0] == "t,mag_1,mag_2,mag_3,mag_4,energy,energy_se,l1,l2"
        back = tr.TrainTrace.from_csv(text)
        assert back.to_csv() == text
        assert '"mode": "radial"' in trace.config_json()

    def test_schedules(self):
        assert tr.parse_schedule("dyadic", 10) == [0, 1, 2, 4, 8, 10]
        assert tr.parse_schedule("every:3", 7) == [0, 3, 6, 7]
        assert tr.parse_schedule([5, 2, 99], 10) == [0, 2, 5, 10]
        assert tr.parse_schedule("log:1", 100) == [0, 1, 10, 100]
        with pytest.raises(ValueError):
            tr.parse_schedule("weekly", 10)


def test_decomposition_kappa():
    est = lambda v, se: tr.EnergyEstimate(v, np.zeros(0), 0.0, se, 1)
    assert tr.decomposition_kappa([est(1.0, 0.01)], [est(1.02, 0.0)], [100.0]) == 0.0
    k = tr.decomposition_kappa([est(1.0, 0.0), est(1.0, 0.0)], [est(1.05, 0.0), est(1.0, 0.0)], [10.0, 1e3])
    assert k == pytest.approx(0.5)
