"""Randomized checks of the network: output formula, spatial gradient, region codes."""

from dataclasses import asdict, dataclass

import numpy as np

from . import geometry, relu_net
from .errors import RegionBoundaryError


@dataclass
class SuiteResult:
    name: str
    passed: bool
    max_deviation: float
    tolerance: float
    cases: int
    detail: str = ""

    def to_dict(self):
        return asdict(self)


def random_weights(d, n, rng, mag_range=(1.0, 50.0)):
    N = 2**n
    tau = rng.standard_normal((N, d))
    tau /= np.linalg.norm(tau, axis=1, keepdims=True)
    return relu_net.NetworkWeights(tau, rng.uniform(*mag_range, size=N))


def min_oracle(weights, x):
    """``min{1, min_j h(w_j . x + |w_j|/2 + 1)}`` evaluated without the layered network."""
    pre = x @ weights.w.T + (np.linalg.norm(weights.w, axis=1) / 2.0 + 1.0)
    return np.minimum(np.maximum(pre, 0.0).min(axis=1), 1.0)


def equivalence_suite(dims=(1, 2, 3, 5), depths=(1, 2, 3, 4), points=10_000, draws=10, seed=0,
                      tol=1e-9, bias_rule="tied"):
    """Layered forward pass against the explicit region formula and the min oracle.

    ``bias_rule="plain"`` runs the network with ``b = |w|`` as a negative control.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    cases = 0
    for d in dims:
        for n in depths:
            for _ in range(draws):
                w = random_weights(d, n, rng)
                x = rng.uniform(-1.0, 1.0, size=(points, d))
                biases = None if bias_rule == "tied" else w.magnitudes.copy()
                f, _ = relu_net.forward(w, x, biases=biases)
                dev = max(np.abs(f - relu_net.explicit_value(w, x)).max(), np.abs(f - min_oracle(w, x)).max())
                worst = max(worst, float(dev))
                cases += points
    return SuiteResult("equivalence", worst <= tol, worst, tol, cases, f"bias rule {bias_rule}")


def _unclipped(weights, x):
    return relu_net.forward(weights, x)[1].output


def gradient_suite(dims=(1, 2, 3, 5), depths=(1, 2, 3), points=1000, seed=0, h=1e-6, margin=1e-4,
                   rtol=1e-4):
    """Central differences of the unclipped output against ``w_j`` of the located region."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    cases = 0
    skipped = 0
    for d in dims:
        for n in depths:
            w = random_weights(d, n, rng)
            got = 0
            while got < points:
                x = rng.uniform(-1.0 + 2 * h, 1.0 - 2 * h, size=d)
                try:
                    g = relu_net.spatial_gradient(w, x, margin=margin)
                except RegionBoundaryError:
                    skipped += 1
                    continue
                eye = np.eye(d) * h
                fd = (_unclipped(w, x + eye) - _unclipped(w, x - eye)) / (2 * h)
                scale = max(float(np.linalg.norm(g)), 1.0)
                worst = max(worst, float(np.linalg.norm(fd - g)) / scale)
                got += 1
            cases += points
    return SuiteResult("gradient", worst <= rtol, worst, rtol, cases, f"{skipped} near-boundary draws skipped")


def region_points(weights, depth=0.3):
    """One point inside each region: ``-depth * tau_j``, where unit ``j`` has the smallest input."""
    return -depth * weights.directions


def region_suite(d=2, n=3, magnitude=10.0, seed=0, points=2000):
    """Bits of constructed points match the region codes; random points are self-consistent."""
    fam = geometry.HalfSpaceFamily(geometry.make_directions(d, 2**n, "equal-angle" if d == 2 else "repelled-random", seed).directions)
    w = relu_net.NetworkWeights.from_family(fam, magnitude)
    _, trace = relu_net.forward(w, region_points(w))
    bits, j = relu_net.comparison_bits(trace, n)
    bad = 0
    for idx in range(w.N):
        code = relu_net.region_code(idx + 1, n)
        if j[idx] != idx + 1 or tuple(bits[idx]) != code.bits:
            bad += 1
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, size=(points, d))
    _, tr = relu_net.forward(w, x)
    rb, rj = relu_net.comparison_bits(tr, n)
    for b, jj in zip(rb, rj):
        if tuple(b) != relu_net.region_code(int(jj), n).bits:
            bad += 1
    return SuiteResult("regions", bad == 0, float(bad), 0.0, w.N + points, f"d={d}, n={n}")
