"""The sparse deep ReLU network with tied biases.

The first layer has ``N = 2^n`` units ``z1_j = h(w_j . x + b_j)`` with
``b_j = |w_j|/2 + 1``.  Each following pair of layers merges neighbours
``(l, r)`` through

    (h(l/2 + r/2), h(l/2 - r/2), h(-l/2 + r/2))  ->  first - second - third

which equals ``min(l, r)`` for ``l, r >= 0``.  After ``n`` merges one scalar
remains and the output is ``min(z, 1)``.
"""

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import RegionBoundaryError


def relu(v):
    return np.maximum(v, 0.0)


def relu_grad(v):
    """Subgradient of ReLU with the convention h'(0) = 1."""
    return (np.asarray(v) >= 0).astype(np.float64)


def bias_of(w_j):
    """Tied bias ``|w_j|/2 + 1`` for one weight vector (or a magnitude)."""
    return float(np.linalg.norm(np.atleast_1d(np.asarray(w_j, dtype=np.float64)))) / 2.0 + 1.0


@dataclass(frozen=True)
class NetworkWeights:
    """First-layer weights stored as unit directions and magnitudes.

    ``w = directions * magnitudes[:, None]``; biases are always derived.
    """

    directions: np.ndarray
    magnitudes: np.ndarray

    def __post_init__(self):
        tau = np.atleast_2d(np.asarray(self.directions, dtype=np.float64)).copy()
        mags = np.atleast_1d(np.asarray(self.magnitudes, dtype=np.float64)).copy()
        if mags.shape == (1,) and tau.shape[0] > 1:
            mags = np.full(tau.shape[0], mags[0])
        if mags.shape != (tau.shape[0],):
            raise ValueError("need one magnitude per direction")
        if np.any(mags <= 0) or not np.all(np.isfinite(mags)):
            raise ValueError("magnitudes must be positive and finite")
        norms = np.linalg.norm(tau, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("directions must be unit vectors")
        N = tau.shape[0]
        if N & (N - 1):
            raise ValueError(f"unit count {N} is not a power of two")
        tau.setflags(write=False)
        mags.setflags(write=False)
        object.__setattr__(self, "directions", tau)
        object.__setattr__(self, "magnitudes", mags)

    @classmethod
    def from_dense(cls, w):
        w = np.atleast_2d(np.asarray(w, dtype=np.float64))
        mags = np.linalg.norm(w, axis=1)
        return cls(w / mags[:, None], mags)

    @classmethod
    def from_family(cls, family, magnitude):
        return cls(family.directions, np.broadcast_to(np.asarray(magnitude, float), (family.N,)))

    @property
    def N(self):
        return self.directions.shape[0]

    @property
    def n(self):
        return self.N.bit_length() - 1

    @property
    def d(self):
        return self.directions.shape[1]

    @property
    def w(self):
        return self.directions * self.magnitudes[:, None]

    @property
    def biases(self):
        return self.magnitudes / 2.0 + 1.0

    def layer_widths(self):
        widths = [self.N]
        for k in range(1, self.n + 1):
            widths += [3 * 2 ** (self.n - k), 2 ** (self.n - k)]
        return widths

    def family(self):
        return geometry.HalfSpaceFamily(self.directions)

    def with_magnitudes(self, magnitudes):
        return NetworkWeights(self.directions, magnitudes)

    def to_dict(self, scheme="custom", seed=None):
        doc = geometry.HalfSpaceFamily(self.directions, scheme, seed).to_dict()
        doc["magnitudes"] = self.magnitudes.tolist()
        return doc

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, doc):
        return cls(np.asarray(doc["directions"], float), np.asarray(doc["magnitudes"], float))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass
class LayerTrace:
    """All activations of one forward pass, each of shape ``(m, width)``.

    ``layers[0]`` is ``z^1``; ``layers[2k-1]`` and ``layers[2k]`` are the
    flipping and cancellation layers of merge ``k``.
    """

    preactivation: np.ndarray
    layers: list
    output: np.ndarray  # unclipped z^{2n+1}_1
    f: np.ndarray

    def odd(self, k):
        """The linear layer ``z^{2k+1}`` (``k = 0`` gives ``z^1``)."""
        return self.layers[2 * k]

    def to_csv(self, point=0):
        """One row per layer entry: ``layer,index,value`` (1-based, as in the layer names)."""
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["layer", "index", "value"])
        for li, z in enumerate(self.layers, start=1):
            for i, v in enumerate(z[point], start=1):
                wr.writerow([li, i, repr(float(v))])
        wr.writerow(["f", 1, repr(float(self.f[point]))])
        return buf.getvalue()


def _preactivation(weights, pts, biases=None):
    b = weights.biases if biases is None else np.asarray(biases, dtype=np.float64)
    return pts @ weights.w.T + b


def forward(weights, x, biases=None):
    """Layered forward pass.

    ``x`` is a point or an ``(m, d)`` batch.  ``biases`` overrides the tied
    rule (used only for negative controls).  Returns ``(f, trace)``.
    """
    pts, single = geometry.as_points(x, weights.d)
    geometry.check_in_cube(pts)
    pre = _preactivation(weights, pts, biases)
    z = relu(pre)
    layers = [z]
    for _ in range(weights.n):
        left, right = z[:, 0::2], z[:, 1::2]
        flip = np.empty((z.shape[0], 3 * left.shape[1]))
        flip[:, 0::3] = relu(0.5 * left + 0.5 * right)
        flip[:, 1::3] = relu(0.5 * left - 0.5 * right)
        flip[:, 2::3] = relu(-0.5 * left + 0.5 * right)
        z = flip[:, 0::3] - flip[:, 1::3] - flip[:, 2::3]
        layers += [flip, z]
    out = z[:, 0]
    f = np.minimum(out, 1.0)
    trace = LayerTrace(pre, layers, out, f)
    return (float(f[0]) if single else f), trace


def comparison_bits(trace, n):
    """Descend the merge tree choosing the smaller child at each merge.

    Returns ``(bits, j)``: ``bits[:, k-1]`` is the bit chosen at merge ``k``
    (1 = right child, only when strictly smaller), ``j`` the 1-based unit.
    """
    m = trace.output.shape[0]
    bits = np.zeros((m, n), dtype=np.int64)
    J = np.ones(m, dtype=np.int64)
    rows = np.arange(m)
    for k in range(n, 0, -1):
        z = trace.odd(k - 1)
        left = z[rows, 2 * J - 2]
        right = z[rows, 2 * J - 1]
        bit = (right < left).astype(np.int64)
        bits[:, k - 1] = bit
        J = 2 * J - 1 + bit
    return bits, J


def locate_region(weights, x):
    """Index ``j`` (1-based) of the region D_j containing ``x``; ties go to bit 0."""
    _, trace = forward(weights, x)
    _, j = comparison_bits(trace, weights.n)
    return int(j[0]) if np.ndim(x) <= 1 else j


@dataclass(frozen=True)
class RegionCode:
    """Bit decomposition ``j = 1 + sum_k 2^(k-1) bits[k-1]`` with group indices."""

    j: int
    n: int
    bits: tuple  # (delta^1, ..., delta^n)
    groups: tuple  # (J^1, ..., J^n)

    def describe(self):
        parts = [f"D^{b}_{{{k},{J}}}" for k, (b, J) in reversed(list(enumerate(zip(self.bits, self.groups), 1)))]
        return " ∩ ".join(parts + [f"D_{{0,{self.j}}}"])


def region_code(j, n):
    if not 1 <= j <= 2**n:
        raise ValueError(f"unit index {j} outside 1..{2**n}")
    bits = tuple(((j - 1) >> (k - 1)) & 1 for k in range(1, n + 1))
    groups = tuple(
        1 + sum(2 ** (l - k - 1) * bits[l - 1] for l in range(k + 1, n + 1)) for k in range(1, n + 1)
    )
    return RegionCode(j=j, n=n, bits=bits, groups=groups)


def explicit_value(weights, x):
    """``min{ sum_j h(w_j . x + b_j) chi_{D_j}(x), 1 }`` with D_j from the merge tree."""
    pts, single = geometry.as_points(x, weights.d)
    _, trace = forward(weights, pts)
    _, j = comparison_bits(trace, weights.n)
    onehot = np.zeros((pts.shape[0], weights.N))
    onehot[np.arange(pts.shape[0]), j - 1] = 1.0
    total = (relu(trace.preactivation) * onehot).sum(axis=1)
    f = np.minimum(total, 1.0)
    return float(f[0]) if single else f


def boundary_distances(weights, x):
    """Distances from ``x`` to the nearest region, activation, and clip boundaries.

    Returns ``(j, d_region, d_zero, d_clip)`` per point, where ``d_region`` is
    the distance to the nearest hyperplane ``pre_i = pre_j``, ``d_zero`` to
    ``pre_j = 0`` and ``d_clip`` to ``pre_j = 1`` (``pre`` is the first-layer
    pre-activation and ``j`` the located region).
    """
    pts, _ = geometry.as_points(x, weights.d)
    _, trace = forward(weights, pts)
    _, j = comparison_bits(trace, weights.n)
    rows = np.arange(pts.shape[0])
    pre = trace.preactivation
    w = weights.w
    pj = pre[rows, j - 1]
    wj = w[j - 1]
    gap = np.abs(pre - pj[:, None])
    wdiff = np.linalg.norm(w[None, :, :] - wj[:, None, :], axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = np.where(wdiff > 0, gap / wdiff, np.where(gap > 0, np.inf, 0.0))
    dist[rows, j - 1] = np.inf
    d_region = dist.min(axis=1) if weights.N > 1 else np.full(pts.shape[0], np.inf)
    mag = weights.magnitudes[j - 1]
    return j, d_region, np.abs(pj) / mag, np.abs(pj - 1.0) / mag


def spatial_gradient(weights, x, margin=1e-3, clipped=False):
    """Gradient of the network output with respect to ``x`` at a single point.

    Returns ``w_j`` for ``x`` in the active part of D_j and the zero vector
    where the located unit is switched off (or, with ``clipped=True``, where
    the output is saturated at 1).  Raises :class:`RegionBoundaryError` when
    ``x`` is within ``margin`` of any of those boundaries.
    """
    pts, _ = geometry.as_points(x, weights.d)
    if pts.shape[0] != 1:
        raise ValueError("spatial_gradient takes a single point")
    j, d_region, d_zero, d_clip = (v[0] for v in boundary_distances(weights, pts))
    pre = float(_preactivation(weights, pts)[0, j - 1])
    if d_zero < margin:
        raise RegionBoundaryError("point is within the margin of an activation boundary")
    if pre < 0:
        return np.zeros(weights.d)
    if d_region < margin:
        raise RegionBoundaryError("point is within the margin of a region boundary")
    if clipped:
        if d_clip < margin:
            raise RegionBoundaryError("point is within the margin of the clip boundary")
        if pre > 1:
            return np.zeros(weights.d)
    return weights.w[j - 1].copy()


def limit_indicator(family, x):
    """Indicator of the polytope ``∩ H_j`` (the large-magnitude limit of the network)."""
    out = geometry.polytope_contains(family, x)
    return int(out) if np.ndim(out) == 0 else out.astype(np.int64)


def backward(weights, trace, upstream):
    """Backpropagate ``upstream = dL/df`` (per point) to the first-layer pre-activations.

    ReLU uses h'(0) = 1 and the clip passes gradient where ``z <= 1``.
    Returns an ``(m, N)`` array.
    """
    g = upstream * (trace.output <= 1.0)
    g = g[:, None]
    n = weights.n
    for k in range(n, 0, -1):
        z_in = trace.odd(k - 1)
        left, right = z_in[:, 0::2], z_in[:, 1::2]
        ha = relu_grad(0.5 * left + 0.5 * right)
        hb = relu_grad(0.5 * left - 0.5 * right)
        hc = relu_grad(-0.5 * left + 0.5 * right)
        gl = g * (0.5 * ha - 0.5 * hb + 0.5 * hc)
        gr = g * (0.5 * ha + 0.5 * hb - 0.5 * hc)
        g = np.empty((g.shape[0], 2 * g.shape[1]))
        g[:, 0::2] = gl
        g[:, 1::2] = gr
    return g * relu_grad(trace.preactivation)


def weight_gradient(weights, x, upstream):
    """``sum_i upstream_i * d f(x_i) / d w`` as an ``(N, d)`` array."""
    pts, _ = geometry.as_points(x, weights.d)
    _, trace = forward(weights, pts)
    gpre = backward(weights, trace, np.asarray(upstream, dtype=np.float64))
    return gpre.T @ pts + gpre.sum(axis=0)[:, None] * (0.5 * weights.directions)
