"""Half-space families, the limit polytope, and Monte Carlo measure estimators.

A family of unit directions ``tau_j`` defines the open half spaces
``H_j = {x : x . tau_j > -1/2}``.  Each is tangent to the ball
``Omega = {|x| < 1/2}``, so their intersection is a polytope containing the
ball.  Denser direction sets shrink the polytope onto the ball.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import sampling
from .errors import OutOfCubeError

BALL_RADIUS = 0.5
OFFSET = 0.5
SCHEMES = ("equal-angle", "fibonacci", "repelled-random")
DEFAULT_DELTA = 0.05


@dataclass(frozen=True)
class Domain:
    """The cube [-1, 1)^d together with the ball of radius 1/2."""

    d: int
    ball_radius: float = BALL_RADIUS

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("dimension must be an integer >= 1")
        if self.ball_radius != BALL_RADIUS:
            raise ValueError("the ball radius is fixed at 1/2")

    @property
    def volume(self):
        return 2.0**self.d

    @property
    def ball_volume(self):
        return ball_volume(self.d, self.ball_radius)


def ball_volume(d, radius=BALL_RADIUS):
    # V_d = V_{d-2} 2 pi r^2 / d from V_0 = 1, V_1 = 2r; exact in d = 1
    v = 2.0 * radius if d % 2 else 1.0
    for k in range(2 + d % 2, d + 1, 2):
        v *= 2.0 * math.pi * radius * radius / k
    return v


def as_points(x, d):
    """Return ``x`` as a 2-D ``(m, d)`` float array and whether it was a single point."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim <= 1
    arr = np.atleast_2d(arr.reshape(1, -1) if arr.ndim <= 1 else arr)
    if arr.shape[1] != d:
        raise ValueError(f"expected points of dimension {d}, got {arr.shape[1]}")
    return arr, single


def in_cube(x):
    x = np.asarray(x)
    return np.all((x >= -1.0) & (x < 1.0), axis=-1)


def check_in_cube(x):
    if not np.all(in_cube(x)):
        raise OutOfCubeError("points must lie in [-1, 1)^d")


def ball_indicator(domain, x):
    """1 where ``|x| <= 1/2`` and 0 elsewhere; ``x`` may be one point or a batch."""
    pts, single = as_points(x, domain.d)
    check_in_cube(pts)
    out = (np.einsum("ij,ij->i", pts, pts) <= domain.ball_radius**2).astype(np.int64)
    return int(out[0]) if single else out


@dataclass(frozen=True)
class HalfSpaceFamily:
    """Unit directions ``tau_j`` (rows of ``directions``) with offset 1/2."""

    directions: np.ndarray
    scheme: str = "custom"
    seed: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        tau = np.atleast_2d(np.asarray(self.directions, dtype=np.float64))
        norms = np.linalg.norm(tau, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("directions must be unit vectors")
        if tau.shape[0] > 1 and np.unique(tau, axis=0).shape[0] < tau.shape[0]:
            raise ValueError("directions must be pairwise distinct")
        tau.setflags(write=False)
        object.__setattr__(self, "directions", tau)

    @property
    def d(self):
        return self.directions.shape[1]

    @property
    def N(self):
        return self.directions.shape[0]

    def min_pairwise_angle(self):
        if self.N < 2:
            return math.pi
        g = np.clip(self.directions @ self.directions.T, -1.0, 1.0)
        np.fill_diagonal(g, -1.0)
        return float(np.arccos(g.max()))

    def min_facet_separation(self):
        """Smallest distance between two tangent points ``tau_j / 2``."""
        if self.N < 2:
            return math.inf
        diff = self.directions[:, None, :] - self.directions[None, :, :]
        dist = 0.5 * np.linalg.norm(diff, axis=2)
        np.fill_diagonal(dist, np.inf)
        return float(dist.min())

    def to_dict(self):
        return {
            "d": self.d,
            "N": self.N,
            "scheme": self.scheme,
            "seed": self.seed,
            "directions": self.directions.tolist(),
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, doc):
        fam = cls(np.asarray(doc["directions"], dtype=np.float64), doc.get("scheme", "custom"), doc.get("seed"))
        if fam.d != doc.get("d", fam.d) or fam.N != doc.get("N", fam.N):
            raise ValueError("d/N fields disagree with the directions array")
        return fam

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _equal_angle(N):
    ang = 2.0 * np.pi * np.arange(N) / N
    tau = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    # exact axis entries for multiples of pi/2
    tau[np.abs(tau) < 1e-15] = 0.0
    return tau


def _fibonacci(N):
    i = np.arange(N) + 0.5
    z = 1.0 - 2.0 * i / N
    r = np.sqrt(1.0 - z * z)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * np.arange(N)
    tau = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    return tau / np.linalg.norm(tau, axis=1, keepdims=True)


def _repelled_random(d, N, seed, candidates=64, sweeps=30):
    # Sequential insertion: point i is the best of `candidates` random draws
    # (max-min angle to points 0..i-1), then `sweeps` repulsion steps against
    # the already fixed points.  Families for N are prefixes of those for 2N.
    if d == 1:
        if N > 2:
            raise ValueError("d=1 admits at most two distinct unit directions")
        return np.array([[1.0], [-1.0]])[:N]
    rng = np.random.default_rng(sampling.seed_sequence(seed))
    pts = np.zeros((N, d))
    first = rng.normal(size=d)
    pts[0] = first / np.linalg.norm(first)
    for i in range(1, N):
        cand = rng.normal(size=(candidates, d))
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        best = cand[np.argmin((cand @ pts[:i].T).max(axis=1))]
        step = 0.5 * min(1.0, (i + 1) ** (-1.0 / max(d - 1, 1)))
        for _ in range(sweeps):
            diff = best - pts[:i]
            dist2 = np.einsum("ij,ij->i", diff, diff) + 1e-12
            force = (diff / dist2[:, None] ** 1.5).sum(axis=0)
            force -= (force @ best) * best
            fn = np.linalg.norm(force)
            if fn == 0.0:
                break
            moved = best + step * force / fn
            moved /= np.linalg.norm(moved)
            if (moved @ pts[:i].T).max() <= (best @ pts[:i].T).max():
                best = moved
            else:
                step *= 0.5
        pts[i] = best
    return pts


def make_directions(d, N, scheme="repelled-random", seed=0):
    """Build a :class:`HalfSpaceFamily` of ``N`` unit directions in ``R^d``.

    ``equal-angle`` (d=2) uses angles ``2 pi k / N``; ``fibonacci`` (d=3) uses
    the golden-angle spiral; ``repelled-random`` works in any dimension and is
    nested in ``N`` for a fixed seed.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if scheme == "equal-angle":
        if d != 2:
            raise ValueError("equal-angle directions are only defined for d=2")
        tau = _equal_angle(N)
    elif scheme == "fibonacci":
        if d != 3:
            raise ValueError("fibonacci directions are only defined for d=3")
        tau = _fibonacci(N)
    elif scheme == "repelled-random":
        tau = _repelled_random(d, N, seed)
    else:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    return HalfSpaceFamily(tau, scheme=scheme, seed=seed if scheme == "repelled-random" else None)


def polytope_contains(family, x):
    """True where ``x . tau_j > -1/2`` for every direction (strict)."""
    pts, single = as_points(x, family.d)
    check_in_cube(pts)
    out = np.all(pts @ family.directions.T > -OFFSET, axis=1)
    return bool(out[0]) if single else out


def excess_volume(family, samples=200_000, seed=0, inner=None, method="uniform", threads=1):
    """Estimate the volume of ``(polytope ∩ cube) minus Omega``.

    ``inner`` replaces the ball by another membership test (a callable on
    ``(m, d)`` batches returning booleans).  Returns ``(estimate, std_error)``.
    """
    if samples < 1000:
        raise ValueError("use at least 1000 samples")
    tau = family.directions

    def integrand(x):
        inside = np.all(x @ tau.T > -OFFSET, axis=1)
        if inner is None:
            keep = np.einsum("ij,ij->i", x, x) < BALL_RADIUS**2
        else:
            keep = np.asarray(inner(x), dtype=bool)
        return (inside & ~keep).astype(np.float64)

    res = sampling.integrate(integrand, family.d, samples, seed, method=method, threads=threads)
    return float(res.mean[0]), float(res.std_error[0])


@dataclass(frozen=True)
class FacetMeasureEstimate:
    value: float
    std_error: float
    sample_count: int
    j: int
    r: float


def _orthonormal_complement(tau):
    """Orthonormal basis of tau^perp via Gram-Schmidt on the coordinate vectors."""
    d = tau.shape[0]
    basis = []
    for e in np.eye(d):
        v = e - (e @ tau) * tau
        for b in basis:
            v -= (v @ b) * b
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            basis.append(v / nv)
        if len(basis) == d - 1:
            break
    return np.array(basis).reshape(len(basis), d)


def _hyperplane_samples(tau, level, samples, seed):
    """Uniform points on ``{y . tau = level}`` inside the ball of radius sqrt(d).

    Returns the points and the (d-1)-measure of the sampled patch.
    """
    d = tau.shape[0]
    center = level * tau
    rad2 = d - level * level
    if rad2 <= 0:
        return np.empty((0, d)), 0.0
    rho = math.sqrt(rad2)
    if d == 1:
        return center[None, :], 1.0
    m = d - 1
    rng = np.random.default_rng(sampling.seed_sequence(seed))
    g = rng.normal(size=(samples, m))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    g *= rho * rng.uniform(size=(samples, 1)) ** (1.0 / m)
    pts = center + g @ _orthonormal_complement(tau)
    patch = math.pi ** (m / 2) / math.gamma(m / 2 + 1) * rho**m
    return pts, patch


def facet_patch_fraction(family, j, r, thresholds, samples, seed):
    """Measure of ``{y . tau_j = -1/2 + r} ∩ cube`` outside every ``L_i(thresholds[i])``, i != j.

    ``L_i(s) = {y : y . tau_i <= -1/2 + s}``.  ``j`` is 0-based here.
    """
    tau = family.directions
    pts, patch = _hyperplane_samples(tau[j], -OFFSET + r, samples, seed)
    if patch == 0.0:
        return 0.0, 0.0, 0
    keep = in_cube(pts)
    others = np.arange(family.N) != j
    if others.any():
        proj = pts @ tau[others].T
        keep &= np.all(proj > -OFFSET + np.asarray(thresholds)[others], axis=1)
    n = pts.shape[0]
    p = keep.mean()
    if family.d == 1:
        return patch * p, 0.0, n
    return patch * p, patch * math.sqrt(p * (1.0 - p) / n), n


def facet_measure(family, j, w_mag, r, samples=100_000, seed=0):
    """Estimate the (d-1)-measure of the active facet patch D_j(|w_j|, r).

    D_j(|w_j|, r) is the hyperplane ``{y . tau_j = -1/2 + r}`` inside the cube
    with the half spaces ``L_i(|w_j| r / |w_i|)``, i != j, removed.  ``j`` is
    1-based; ``w_mag`` holds all magnitudes (a scalar means all equal).
    """
    if not 1 <= j <= family.N:
        raise ValueError(f"facet index {j} outside 1..{family.N}")
    mags = np.broadcast_to(np.asarray(w_mag, dtype=np.float64), (family.N,))
    if np.any(mags <= 0):
        raise ValueError("magnitudes must be positive")
    mj = mags[j - 1]
    if not (-1.0 / mj < r <= 0.0):
        raise ValueError(f"slab coordinate r={r} outside (-1/|w_j|, 0]")
    thresholds = mj * r / mags
    value, se, n = facet_patch_fraction(family, j - 1, r, thresholds, samples, seed)
    return FacetMeasureEstimate(value=value, std_error=se, sample_count=n, j=j, r=r)


def gamma_estimate(family, w_mags=1.0, samples=100_000, seed=0):
    """Smallest active facet measure at ``r = 0``; returns the minimizing estimate."""
    ests = [
        facet_measure(family, j, w_mags, 0.0, samples, sampling.child_seed(seed, j))
        for j in range(1, family.N + 1)
    ]
    return min(ests, key=lambda e: e.value)


@dataclass(frozen=True)
class GammaStar:
    value: float
    spacing: float
    j: int
    r: float


def gamma_star_estimate(family, r_grid, R_grid, samples=100_000, seed=0, delta=DEFAULT_DELTA):
    """Finite-difference bound on ``|d/dR lambda(D*_j(R, r))|`` over the grids.

    ``D*_j(R, r)`` is the hyperplane at offset ``r`` with every ``L_i(R)``
    removed.  Within one ``(j, r)`` the same hyperplane samples are reused for
    every ``R`` so that differences are not swamped by sampling noise.
    """
    r_grid = np.asarray(r_grid, dtype=np.float64)
    R_grid = np.sort(np.asarray(R_grid, dtype=np.float64))
    if np.any((r_grid < 0) | (r_grid >= delta)) or np.any((R_grid <= 0) | (R_grid >= delta)):
        raise ValueError("grid values must lie inside (0, delta)")
    if R_grid.size < 2:
        raise ValueError("need at least two R values")
    best = GammaStar(0.0, float(np.diff(R_grid).min()), 1, float(r_grid[0]))
    for j in range(family.N):
        for r in r_grid:
            sub = sampling.child_seed(seed, j, int(round(r * 1e9)))
            vals = [
                facet_patch_fraction(family, j, r, np.full(family.N, R), samples, sub)[0]
                for R in R_grid
            ]
            slopes = np.abs(np.diff(vals) / np.diff(R_grid))
            if slopes.size and slopes.max() > best.value:
                best = GammaStar(float(slopes.max()), best.spacing, j + 1, float(r))
    return best
