"""Error functional, gradient descent on the ReLU network, and rate fitting.

Energy is ``E(W) = 1/2 ∫ |f(W, x) - 1_{|x|<=1/2}(x)|^2 dx`` over the cube.
Once every magnitude is large the error lives on thin slabs just outside each
facet of the limit polytope plus the polytope-minus-ball region, which gives
the slab decomposition in :func:`energy_decomposed`.

Training runs in three modes:

* ``radial``: iterate ``|w| <- |w| + c/|w|^2`` with frozen directions;
* ``radial-exact``: the ODE envelope ``(|w_0|^3 + 3 c t)^(1/3)``;
* ``full``: plain gradient descent on a sampled estimate of ``E``.
"""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import geometry, relu_net, sampling
from .errors import SlabOverlapError

MODES = ("radial", "radial-exact", "full")


@dataclass(frozen=True)
class EnergyEstimate:
    """``total = (sum(per_unit) + excess) / 2`` up to sampling error.

    ``per_unit[j]`` is the slab integral of unit ``j`` and ``excess`` the
    volume of the polytope minus the ball.
    """

    total: float
    per_unit: np.ndarray
    excess: float
    std_error: float
    sample_count: int


def _model_fn(model):
    if isinstance(model, relu_net.NetworkWeights):
        return lambda x: relu_net.forward(model, x)[0]
    return model


def energy_direct(model, family=None, samples=200_000, seed=0, method="uniform", threads=1):
    """Monte Carlo estimate of ``1/2 ∫ |f - f_ball|^2`` over the cube.

    ``model`` is a :class:`~ballapprox.relu_net.NetworkWeights` or any
    callable mapping an ``(m, d)`` batch to outputs.  For networks the
    integrand is also split by region to estimate the per-unit terms.
    """
    if isinstance(model, relu_net.NetworkWeights):
        d, N = model.d, model.N
    elif family is not None:
        d, N = family.d, 0
    else:
        raise ValueError("a family is required to fix the dimension of a callable model")
    fn = _model_fn(model)

    def integrand(x):
        target = (np.einsum("ij,ij->i", x, x) <= 0.25).astype(np.float64)
        f = np.asarray(fn(x), dtype=np.float64)
        err2 = (f - target) ** 2
        cols = [0.5 * err2]
        if N:
            _, trace = relu_net.forward(model, x)
            _, j = relu_net.comparison_bits(trace, model.n)
            slab = (f > 0) & (f < 1)
            per = np.zeros((x.shape[0], N))
            per[np.arange(x.shape[0]), j - 1] = np.where(slab, err2, 0.0)
            cols.extend(per.T)
            cols.append(((f >= 1) & (target == 0)).astype(np.float64))
        return np.stack(cols, axis=1)

    res = sampling.integrate(integrand, d, samples, seed, method=method, threads=threads)
    per_unit = res.mean[1 : 1 + N] if N else np.zeros(0)
    excess = float(res.mean[-1]) if N else float("nan")
    return EnergyEstimate(float(res.mean[0]), per_unit, excess, float(res.std_error[0]), samples)


def check_slab_separation(weights, family):
    sep = family.min_facet_separation()
    width = 1.0 / weights.magnitudes.min()
    if not width < 0.5 * sep:
        raise SlabOverlapError(
            f"slab width {width:.3g} is not below half the facet separation {sep:.3g}"
        )


def energy_decomposed(weights, family=None, samples=50_000, seed=0, nodes=8, excess_samples=400_000):
    """Slab decomposition of the energy.

    ``E = 1/2 sum_j ∫_{-1/|w_j|}^0 (|w_j| s + 1)^2 lambda(D_j(|w|, s)) ds
    + 1/2 |polytope minus ball|``, with Gauss-Legendre quadrature in ``s``
    and Monte Carlo facet measures.
    """
    family = weights.family() if family is None else family
    if not np.allclose(family.directions, weights.directions, atol=1e-12):
        raise ValueError("weights and family must share directions")
    check_slab_separation(weights, family)
    xi, wq = np.polynomial.legendre.leggauss(nodes)
    mags = weights.magnitudes
    per_unit = np.zeros(weights.N)
    var = 0.0
    for j in range(weights.N):
        M = mags[j]
        s = (xi - 1.0) / (2.0 * M)
        jac = 1.0 / (2.0 * M)
        sub = sampling.child_seed(seed, j)
        vals, ses = [], []
        for sk in s:
            est = geometry.facet_measure(family, j + 1, mags, sk, samples, sub)
            vals.append(est.value)
            ses.append(est.std_error)
        kern = wq * jac * (M * s + 1.0) ** 2
        per_unit[j] = kern @ np.asarray(vals)
        # common random numbers across nodes: errors add linearly
        var += (kern @ np.asarray(ses)) ** 2
    excess, ex_se = geometry.excess_volume(family, excess_samples, seed=sampling.child_seed(seed, weights.N))
    total = 0.5 * (per_unit.sum() + excess)
    se = 0.5 * math.sqrt(var + ex_se**2)
    return EnergyEstimate(float(total), per_unit, excess, se, samples)


def radial_step(mag, c=1.0):
    """One step of ``|w| <- |w| + c / |w|^2``."""
    return mag + c / (mag * mag)


def radial_exact(mag0, c, t):
    """Solution ``(mag0^3 + 3 c t)^(1/3)`` of ``g' = c / g^2``."""
    return (np.asarray(mag0, dtype=np.float64) ** 3 + 3.0 * c * np.asarray(t, dtype=np.float64)) ** (1.0 / 3.0)


def _grid_points(d, n):
    k = max(1, int(round(n ** (1.0 / d))))
    # odd integers over k: exactly symmetric under x -> -x
    axis = (2.0 * np.arange(k) + 1.0 - k) / k
    return np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)


def energy_gradient(weights, samples=50_000, seed=0, kind="mc", method="uniform"):
    """Gradient of the sampled energy with respect to the dense weights, ``(N, d)``.

    ``kind="mc"`` uses seeded cube samples; ``kind="grid"`` uses the midpoint
    rule on a regular grid, which is invariant under the cube's symmetries.
    Returns ``(gradient, energy)``.
    """
    d = weights.d
    if kind == "grid":
        chunks = [_grid_points(d, samples)]
        n = chunks[0].shape[0]
    elif kind == "mc":
        chunks = list(sampling.cube_points(d, samples, seed, method=method))
        n = samples
    else:
        raise ValueError(f"unknown estimator kind {kind!r}")
    vol = 2.0**d
    grad = np.zeros((weights.N, d))
    energy = 0.0
    for x in chunks:
        target = (np.einsum("ij,ij->i", x, x) <= 0.25).astype(np.float64)
        f, _ = relu_net.forward(weights, x)
        resid = f - target
        energy += 0.5 * (resid**2).sum()
        grad += relu_net.weight_gradient(weights, x, resid)
    return grad * vol / n, energy * vol / n


@dataclass(frozen=True)
class StepResult:
    weights: relu_net.NetworkWeights
    gradient: np.ndarray
    energy: float  # sampled energy before the step
    max_drift: float  # largest angle (rad) between old and new directions
    drift_ok: bool


def full_grad_step(weights, family=None, eta=None, estimator=None, drift_tol=1e-3):
    """One step ``w_j <- w_j - eta * grad_{w_j} E`` with the sampled gradient.

    ``estimator`` is a dict with keys ``kind`` (``"mc"`` or ``"grid"``),
    ``samples``, ``seed`` and ``method``.  Direction drift above ``drift_tol``
    is flagged in the result, not raised.
    """
    est = {"kind": "mc", "samples": 50_000, "seed": 0, "method": "uniform"}
    est.update(estimator or {})
    eta = 0.1 / weights.N if eta is None else eta
    if eta < 0:
        raise ValueError("step size must be non-negative")
    grad, energy = energy_gradient(weights, est["samples"], est["seed"], est["kind"], est["method"])
    if eta == 0:
        return StepResult(weights, grad, energy, 0.0, True)
    new = weights.w - eta * grad
    new_w = relu_net.NetworkWeights.from_dense(new)
    cosang = np.clip(np.einsum("ij,ij->i", new_w.directions, weights.directions), -1.0, 1.0)
    drift = float(np.arccos(cosang).max())
    return StepResult(new_w, grad, energy, drift, drift <= drift_tol)


def parse_schedule(schedule, T):
    """Snapshot times in ``[0, T]``: ``dyadic``, ``log:K`` (K per decade), ``every:K`` or a list."""
    if isinstance(schedule, (list, tuple, np.ndarray)):
        ts = {int(t) for t in schedule if 0 <= int(t) <= T}
    elif schedule == "dyadic":
        ts = {0} | {2**i for i in range(int(math.log2(T)) + 1)} if T >= 1 else {0}
    elif schedule.startswith("log:"):
        per = int(schedule.split(":", 1)[1])
        hi = math.log10(T) if T >= 1 else 0.0
        grid = np.logspace(0, hi, max(2, int(math.ceil(hi * per)) + 1))
        ts = {0} | {int(round(v)) for v in grid}
    elif schedule.startswith("every:"):
        k = int(schedule.split(":", 1)[1])
        ts = set(range(0, T + 1, k))
    else:
        raise ValueError(f"unknown schedule {schedule!r}")
    ts |= {0, T}
    return sorted(t for t in ts if 0 <= t <= T)


@dataclass
class TrainConfig:
    mode: str = "radial"
    eta: float | None = None
    c: float = 1.0
    T: int = 1000
    energy_samples: int = 0
    error_samples: int = 0
    grad_samples: int = 20_000
    seed: int = 0
    schedule: str | list = "dyadic"
    sampler: str = "uniform"
    estimator: str = "mc"
    crn: bool = True
    delta: float = geometry.DEFAULT_DELTA
    drift_tol: float = 1e-3
    threads: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.eta is not None and self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.T < 0:
            raise ValueError("T must be non-negative")

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainTrace:
    t: list = field(default_factory=list)
    mags: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    energy_se: list = field(default_factory=list)
    l1: list = field(default_factory=list)
    l2: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def append(self, t, mags, energy=math.nan, energy_se=math.nan, l1=math.nan, l2=math.nan):
        if self.t and t <= self.t[-1]:
            raise ValueError("trace times must be strictly increasing")
        self.t.append(int(t))
        self.mags.append(np.asarray(mags, dtype=np.float64).copy())
        self.energy.append(float(energy))
        self.energy_se.append(float(energy_se))
        self.l1.append(float(l1))
        self.l2.append(float(l2))

    def __len__(self):
        return len(self.t)

    def column(self, name):
        if name in ("L1", "L2"):
            name = name.lower()
        if name in ("l1", "l2", "energy", "energy_se"):
            return np.asarray(getattr(self, name))
        if name == "t":
            return np.asarray(self.t, dtype=np.float64)
        if name.startswith("mag_") or name.startswith("magnitude_"):
            j = int(name.rsplit("_", 1)[1])
            return np.asarray([m[j - 1] for m in self.mags])
        raise KeyError(name)

    def to_csv(self):
        N = len(self.mags[0]) if self.mags else 0
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t"] + [f"mag_{j}" for j in range(1, N + 1)] + ["energy", "energy_se", "l1", "l2"])
        for i, t in enumerate(self.t):
            row = [t] + [repr(float(v)) for v in self.mags[i]]
            row += [repr(v) for v in (self.energy[i], self.energy_se[i], self.l1[i], self.l2[i])]
            wr.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, config=None):
        rows = list(csv.reader(io.StringIO(text)))
        head, body = rows[0], rows[1:]
        N = sum(h.startswith("mag_") for h in head)
        tr = cls(config=dict(config or {}))
        for r in body:
            vals = [float(v) for v in r[N + 1 :]]
            tr.append(int(r[0]), [float(v) for v in r[1 : N + 1]], *vals)
        return tr

    def config_json(self):
        return json.dumps(self.config, indent=2, sort_keys=True)


def lr_error(model, family, r=1, samples=100_000, seed=0, method="uniform", threads=1):
    """Estimate ``∫ |f - 1_polytope|^r`` over the cube (the r-th power of the L^r norm)."""
    if r not in (1, 2):
        raise ValueError("r must be 1 or 2")
    fn = _model_fn(model)
    tau = family.directions

    def integrand(x):
        target = np.all(x @ tau.T > -geometry.OFFSET, axis=1).astype(np.float64)
        return np.abs(np.asarray(fn(x), dtype=np.float64) - target) ** r

    return float(sampling.integrate(integrand, family.d, samples, seed, method=method, threads=threads).mean[0])


def _snapshot(trace, t, weights, family, cfg, step_seed):
    energy = energy_se = l1 = l2 = math.nan
    if cfg.energy_samples:
        est = energy_direct(weights, family, cfg.energy_samples, seed=step_seed, method=cfg.sampler, threads=cfg.threads)
        energy, energy_se = est.total, est.std_error
    if cfg.error_samples:
        fn = _model_fn(weights)
        tau = family.directions

        def integrand(x):
            target = np.all(x @ tau.T > -geometry.OFFSET, axis=1).astype(np.float64)
            e = np.abs(fn(x) - target)
            return np.stack([e, e * e], axis=1)

        res = sampling.integrate(integrand, family.d, cfg.error_samples, step_seed, method=cfg.sampler, threads=cfg.threads)
        l1, l2 = float(res.mean[0]), float(res.mean[1])
    trace.append(t, weights.magnitudes, energy, energy_se, l1, l2)


def train(config, weights0, family=None):
    """Run ``config.mode`` for ``config.T`` steps, recording snapshots."""
    cfg = config
    family = weights0.family() if family is None else family
    if not np.allclose(family.directions, weights0.directions, atol=1e-12):
        raise ValueError("weights and family must share directions")
    if np.any(weights0.magnitudes <= 1.0 / cfg.delta):
        raise ValueError(f"initial magnitudes must exceed 1/delta = {1.0 / cfg.delta:g}")
    if cfg.mode == "full" and cfg.estimator not in ("mc", "grid"):
        raise ValueError("full mode needs estimator 'mc' or 'grid'")
    if cfg.mode != "full" and cfg.estimator == "grid":
        raise ValueError("the grid estimator only applies to full mode")
    times = parse_schedule(cfg.schedule, cfg.T)
    trace = TrainTrace(config={"train": cfg.to_dict(), "weights0": weights0.to_dict()})

    def seed_at(t):
        return cfg.seed if cfg.crn else sampling.child_seed(cfg.seed, t)

    if cfg.mode == "radial-exact":
        for t in times:
            w = weights0.with_magnitudes(radial_exact(weights0.magnitudes, cfg.c, t))
            _snapshot(trace, t, w, family, cfg, seed_at(t))
        return trace

    if cfg.mode == "radial":
        mags0 = weights0.magnitudes
        uniq, inverse = np.unique(mags0, return_inverse=True)
        rows = {t: np.empty(uniq.size) for t in times}
        want = set(times)
        c = float(cfg.c)
        for u, g0 in enumerate(uniq):
            g = float(g0)
            if 0 in want:
                rows[0][u] = g
            for t in range(1, cfg.T + 1):
                g = g + c / (g * g)
                if t in want:
                    rows[t][u] = g
        for t in times:
            w = weights0.with_magnitudes(rows[t][inverse])
            _snapshot(trace, t, w, family, cfg, seed_at(t))
        return trace

    w = weights0
    want = set(times)
    max_drift = 0.0
    for t in range(cfg.T + 1):
        if t in want:
            _snapshot(trace, t, w, family, cfg, seed_at(t))
        if t == cfg.T:
            break
        est = {"kind": cfg.estimator, "samples": cfg.grad_samples, "seed": seed_at(t), "method": cfg.sampler}
        step = full_grad_step(w, family, cfg.eta, est, cfg.drift_tol)
        max_drift = max(max_drift, float(np.arccos(np.clip(
            np.einsum("ij,ij->i", step.weights.directions, weights0.directions), -1, 1)).max()))
        w = step.weights
    trace.diagnostics["max_direction_drift"] = max_drift
    trace.diagnostics["drift_ok"] = max_drift <= cfg.drift_tol
    return trace


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    intercept: float
    residual: float  # RMS of log-log residuals
    points: int


def fit_loglog(t, y):
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if t.size < 10:
        raise ValueError(f"need at least 10 points in the window, got {t.size}")
    lt, ly = np.log(t), np.log(y)
    A = np.stack([lt, np.ones_like(lt)], axis=1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    return PowerLawFit(float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid**2))), int(t.size))


def fit_power_law(trace, field="l1", window=None):
    """Least-squares slope of ``log(field)`` against ``log(t)`` on ``window = (t_min, t_max)``."""
    t = trace.column("t")
    y = trace.column(field)
    lo, hi = window if window is not None else (1, math.inf)
    sel = (t >= lo) & (t <= hi) & (t > 0) & np.isfinite(y) & (y > 0)
    return fit_loglog(t[sel], y[sel])


def decomposition_kappa(direct, decomposed, magnitudes, n_sigma=3.0):
    """Smallest ``kappa`` with ``|direct - decomposed| <= n_sigma * se + kappa / M`` at every ``M``.

    ``direct`` and ``decomposed`` are sequences of :class:`EnergyEstimate`
    paired with ``magnitudes``.  A value of 0 means the gaps are all within
    sampling error.
    """
    kappa = 0.0
    for a, b, M in zip(direct, decomposed, magnitudes):
        slack = abs(a.total - b.total) - n_sigma * math.hypot(a.std_error, b.std_error)
        kappa = max(kappa, slack * M)
    return kappa
