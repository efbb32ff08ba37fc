import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ballapprox import geometry, relu_net as rn, suites
from ballapprox.errors import OutOfCubeError, RegionBoundaryError

# n = 1, d = 1: w = (+10, -10), b = 6
TOY = rn.NetworkWeights(np.array([[1.0], [-1.0]]), np.array([10.0, 10.0]))


def direct_min(weights, x):
    pre = np.atleast_2d(x) @ weights.w.T + (np.linalg.norm(weights.w, axis=1) / 2 + 1)
    return np.minimum(np.maximum(pre, 0).min(axis=1), 1.0)


class TestBasics:
    def test_relu(self):
        assert rn.relu(-1.0) == 0.0 and rn.relu(0.0) == 0.0 and rn.relu(2.5) == 2.5
        assert rn.relu_grad(0.0) == 1.0 and rn.relu_grad(-1e-300) == 0.0

    @pytest.mark.parametrize("w,b", [(4.0, 3.0), (0.0, 1.0), ([3.0, 4.0], 3.5)])
    def test_bias_of(self, w, b):
        assert rn.bias_of(w) == b

    def test_biases_are_derived(self):
        w = rn.NetworkWeights.from_dense(np.array([[3.0, 4.0], [0.0, -2.0]]))
        assert np.array_equal(w.biases - w.magnitudes / 2 - 1, np.zeros(2))

    def test_layer_widths(self):
        w = rn.NetworkWeights.from_family(geometry.make_directions(2, 8, "equal-angle"), 5.0)
        assert w.layer_widths() == [8, 12, 4, 6, 2, 3, 1]

    def test_power_of_two_required(self):
        with pytest.raises(ValueError):
            rn.NetworkWeights(np.eye(3), np.ones(3))
        with pytest.raises(ValueError):
            rn.NetworkWeights(np.eye(2), np.array([1.0, 0.0]))

    def test_json_round_trip(self):
        w = suites.random_weights(3, 2, np.random.default_rng(1))
        back = rn.NetworkWeights.from_json(w.to_json())
        assert np.array_equal(back.w, w.w)
        doc = w.to_dict()
        assert {"d", "N", "directions", "magnitudes"} <= set(doc)


class TestForward:
    @pytest.mark.parametrize(
        "x,z1,z2,z3,f",
        [(0.0, [6, 6], [6, 0, 0], 6, 1), (0.6, [12, 0], [6, 6, 0], 0, 0), (-0.4, [2, 10], [6, 0, 4], 2, 1)],
    )
    def test_hand_examples(self, x, z1, z2, z3, f):
        out, tr = rn.forward(TOY, [x])
        assert out == f
        assert np.allclose(tr.layers[0][0], z1)
        assert np.allclose(tr.layers[1][0], z2)
        assert np.isclose(tr.output[0], z3)

    def test_outside_cube(self):
        with pytest.raises(OutOfCubeError):
            rn.forward(TOY, [1.0])

    def test_trace_csv(self):
        _, tr = rn.forward(TOY, [-0.4])
        rows = tr.to_csv().splitlines()
        assert rows[0] == "layer,index,value"
        assert rows[1:3] == ["1,1,2.0", "1,2,10.0"]
        assert rows[-1] == "f,1,1.0"

    def test_negative_control_bias(self):
        x = np.array([[0.58]])
        f_bad, _ = rn.forward(TOY, x, biases=TOY.magnitudes)
        assert f_bad[0] != direct_min(TOY, x)[0]


class TestRegions:
    def test_locate_examples(self):
        assert rn.locate_region(TOY, [0.6]) == 2
        assert rn.locate_region(TOY, [-0.4]) == 1
        assert rn.locate_region(TOY, [0.0]) == 1

    def test_region_code_examples(self):
        c = rn.region_code(3, 2)
        assert c.bits == (0, 1) and c.groups == (2, 1)
        assert rn.region_code(1, 4).bits == (0,) * 4 and rn.region_code(1, 4).groups == (1,) * 4
        last = rn.region_code(16, 4)
        assert last.bits == (1,) * 4 and last.groups == (8, 4, 2, 1)
        assert "D^1_{2,1}" in c.describe() and "D^0_{1,2}" in c.describe()

    def test_region_code_range(self):
        with pytest.raises(ValueError):
            rn.region_code(0, 2)
        with pytest.raises(ValueError):
            rn.region_code(5, 2)

    @pytest.mark.parametrize("n", range(0, 7))
    def test_region_code_invariants(self, n):
        for j in range(1, 2**n + 1):
            c = rn.region_code(j, n)
            assert j == 1 + sum(2 ** (k - 1) * b for k, b in enumerate(c.bits, 1))
            if n:
                assert c.groups[-1] == 1
            for k in range(2, n + 1):
                assert c.groups[k - 2] == 2 * c.groups[k - 1] - 1 + c.bits[k - 1]

    def test_constructed_points_exhaustive(self):
        res = suites.region_suite(2, 3)
        assert res.passed, res

    def test_explicit_examples(self):
        assert rn.explicit_value(TOY, [0.6]) == 0.0
        assert rn.explicit_value(TOY, [-0.4]) == 1.0
        assert rn.explicit_value(TOY, [0.05]) == 1.0


class TestGradient:
    def test_examples(self):
        assert np.array_equal(rn.spatial_gradient(TOY, [-0.4]), [10.0])
        # 0.65 is in region 2 where unit 2 is switched off
        assert np.array_equal(rn.spatial_gradient(TOY, [0.65]), [0.0])
        # unclipped slope -10 on the slab 0.5 < x < 0.6
        assert np.array_equal(rn.spatial_gradient(TOY, [0.55]), [-10.0])

    def test_activation_boundary_signalled(self):
        with pytest.raises(RegionBoundaryError):
            rn.spatial_gradient(TOY, [0.6])

    def test_region_boundary_signalled(self):
        with pytest.raises(RegionBoundaryError):
            rn.spatial_gradient(TOY, [0.0])

    def test_clip_mode(self):
        assert np.array_equal(rn.spatial_gradient(TOY, [-0.4], clipped=True), [0.0])
        assert np.array_equal(rn.spatial_gradient(TOY, [0.55], clipped=True), [-10.0])
        with pytest.raises(RegionBoundaryError):
            rn.spatial_gradient(TOY, [0.5], clipped=True)

    def test_scaling(self):
        w = suites.random_weights(2, 2, np.random.default_rng(4), (20.0, 30.0))
        x = np.array([0.1, -0.2])
        g1 = rn.spatial_gradient(w, x, margin=1e-6)
        g2 = rn.spatial_gradient(w.with_magnitudes(w.magnitudes * 3), x, margin=1e-6)
        assert np.allclose(g2, 3 * g1)

    def test_suite(self):
        res = suites.gradient_suite(dims=(1, 2, 3), depths=(1, 2), points=200)
        assert res.passed, res

    def test_weight_gradient_matches_finite_differences(self):
        # tied biases move with the weights
        rng = np.random.default_rng(7)
        w = suites.random_weights(2, 2, rng, (3.0, 6.0))
        x = rng.uniform(-1, 1, (400, 2))
        up = rng.standard_normal(400)
        got = rn.weight_gradient(w, x, up)
        h = 1e-7
        fd = np.zeros_like(got)
        W = w.w
        for j in range(w.N):
            for i in range(2):
                Wp, Wm = W.copy(), W.copy()
                Wp[j, i] += h
                Wm[j, i] -= h
                fp = rn.forward(rn.NetworkWeights.from_dense(Wp), x)[0]
                fm = rn.forward(rn.NetworkWeights.from_dense(Wm), x)[0]
                fd[j, i] = up @ (fp - fm) / (2 * h)
        assert np.allclose(got, fd, atol=1e-5)


class TestLimit:
    def test_limit_examples(self):
        fam = geometry.make_directions(2, 4, "equal-angle")
        assert rn.limit_indicator(fam, [0.0, 0.0]) == 1
        assert rn.limit_indicator(fam, [0.49, 0.0]) == 1
        assert rn.limit_indicator(fam, [-0.6, 0.1]) == 0

    @pytest.mark.parametrize("M", [1e2, 1e3, 1e4])
    def test_pointwise_limit(self, M):
        # error bound max(0, 1 - M eps) <= 1/(M eps) away from the polytope boundary (c = 1)
        fam = geometry.make_directions(2, 8, "equal-angle")
        w = rn.NetworkWeights.from_family(fam, M)
        x = np.random.default_rng(0).uniform(-1, 1, (20_000, 2))
        v = (x @ fam.directions.T + 0.5).min(axis=1)
        for eps in (1e-3, 1e-2, 5e-2):
            sel = np.abs(v) >= eps
            err = np.abs(rn.forward(w, x[sel])[0] - rn.limit_indicator(fam, x[sel])).max()
            assert err <= max(0.0, 1 - M * eps) + 1e-12
            assert err <= 1 / (M * eps)


weights_strategy = st.builds(
    lambda d, n, seed: suites.random_weights(d, n, np.random.default_rng(seed), (0.5, 80.0)),
    st.sampled_from([1, 2, 3, 5]),
    st.integers(0, 4),
    st.integers(0, 2**32 - 1),
)


@settings(max_examples=60, deadline=None)
@given(weights_strategy, st.integers(0, 2**32 - 1))
def test_property_tournament_min_and_explicit(w, seed):
    x = np.random.default_rng(seed).uniform(-1, 1, (500, w.d))
    f, tr = rn.forward(w, x)
    assert np.abs(f - direct_min(w, x)).max() <= 1e-9
    assert np.abs(f - rn.explicit_value(w, x)).max() <= 1e-9
    assert np.all((f >= 0) & (f <= 1))
    for k in range(w.n + 1):
        assert np.all(tr.odd(k) >= -1e-12)


@settings(max_examples=60, deadline=None)
@given(weights_strategy, st.integers(0, 2**32 - 1))
def test_property_located_unit_is_a_minimizer(w, seed):
    x = np.random.default_rng(seed).uniform(-1, 1, (300, w.d))
    _, tr = rn.forward(w, x)
    bits, j = rn.comparison_bits(tr, w.n)
    z1 = tr.layers[0]
    assert np.allclose(z1[np.arange(300), j - 1], z1.min(axis=1), atol=1e-9)
    for b, jj in zip(bits, j):
        assert tuple(b) == rn.region_code(int(jj), w.n).bits


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, 2, elements=st.floats(-0.99, 0.99)))
def test_property_symmetric_family_output_symmetric(x):
    w = rn.NetworkWeights.from_family(geometry.make_directions(2, 4, "equal-angle"), 7.0)
    assert math.isclose(rn.forward(w, x)[0], rn.forward(w, x[::-1])[0], abs_tol=1e-12)
