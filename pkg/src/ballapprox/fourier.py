"""Fourier side: coefficients of the ball indicator and spherical partial sums.

The indicator of ``{|x| <= 1/2}`` is expanded on ``[-1, 1)^d`` in the modes
``cos(pi k.x)`` and ``sin(pi k.x)``, ``k`` in ``Z^d``.  The raw integral

    I(kappa) = ∫_{|x|<=1/2} cos(pi k.x) dx = kappa^(-d/2) J_{d/2}(pi kappa / 2),

depends only on ``kappa = |k|``; sine integrals vanish because the indicator is
even.  The spherical partial sum keeps every lattice point with ``|k| < N``:

    S_N(x) = sum_{|k| < N} c(|k|^2) cos(pi k.x),    c(m) = I(sqrt m) / 2^d.

``c`` is the coefficient per lattice point.  Grouping ``k`` with ``-k`` gives
the cosine-mode coefficient ``I / 2^(d-1)`` returned by
:func:`projection_coefficient`.

At lattice-symmetric points the sum collapses onto shells of equal ``|k|^2``,
so ``S_N(0) = sum_{m < N^2} r_d(m) c(m)`` with ``r_d(m)`` the number of
lattice vectors of squared length ``m``.
"""

import csv
import io
import math
import os
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.fft
import scipy.optimize

from . import bessel
from .errors import BudgetExceededError, UnstableStepError
from .geometry import ball_volume

POINT_BUDGET = 10**9
MEMORY_BUDGET = 4 * 2**30  # bytes
NORMALIZATIONS = ("raw", "projection", "lattice")


# coefficients

def ball_coefficient(d, kappa, normalization="raw"):
    """Fourier coefficient of the ball indicator at frequency radius ``kappa``.

    ``normalization``: ``"raw"`` is the integral against ``cos(pi k.x)``,
    ``"projection"`` divides by the squared norm of the cosine mode
    (``2^d`` at ``kappa = 0``, else ``2^(d-1)``), ``"lattice"`` divides by
    ``2^d`` everywhere (coefficient per lattice point).
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"unknown normalization {normalization!r}")
    k = np.asarray(kappa, dtype=np.float64)
    if np.any(k < 0):
        raise ValueError("kappa must be non-negative")
    flat = k.ravel()
    out = np.empty_like(flat)
    zero = flat == 0
    out[zero] = ball_volume(d)
    kk = flat[~zero]
    if kk.size:
        out[~zero] = kk ** (-0.5 * d) * bessel.jv(0.5 * d, 0.5 * math.pi * kk)
    if normalization == "lattice":
        out /= 2.0**d
    elif normalization == "projection":
        out /= np.where(zero, 2.0**d, 2.0 ** (d - 1))
    out = out.reshape(k.shape)
    return float(out) if out.ndim == 0 else out


def projection_coefficient(d, k, kind="cos"):
    """Coefficient of the orthogonal projection onto the mode ``k``.

    ``k`` is an integer vector (or a scalar in one dimension).  The cosine
    coefficient depends on ``|k|`` only; the sine coefficient is zero.
    """
    kv = np.atleast_1d(np.asarray(k, dtype=np.int64))
    if kv.shape != (d,):
        raise ValueError(f"k must have {d} integer components")
    if kind == "sin":
        return 0.0
    if kind != "cos":
        raise ValueError("kind must be 'cos' or 'sin'")
    return ball_coefficient(d, math.sqrt(int(kv @ kv)), "projection")


def lattice_coefficients(d, M, normalization="lattice", chunk=1 << 22):
    """``c(m)`` for ``0 <= m <= M`` as a float array."""
    out = np.empty(M + 1)
    for lo in range(0, M + 1, chunk):
        hi = min(lo + chunk, M + 1)
        out[lo:hi] = ball_coefficient(d, np.sqrt(np.arange(lo, hi, dtype=np.float64)), normalization)
    return out


@dataclass(frozen=True)
class RadialCoefficientTable:
    """Coefficients indexed by squared radius ``m = |k|^2``."""

    d: int
    values: np.ndarray
    normalization: str = "raw"

    @classmethod
    def build(cls, d, M, normalization="raw"):
        return cls(d, lattice_coefficients(d, M, normalization), normalization)

    @property
    def M(self):
        return self.values.size - 1

    def __getitem__(self, m):
        return self.values[m]


# lattice shell counts

@dataclass(frozen=True)
class ShellTable:
    """``counts[m] = #{k in Z^d : |k|^2 = m}`` for ``0 <= m <= M``."""

    d: int
    counts: np.ndarray

    @property
    def M(self):
        return self.counts.size - 1

    def cumulative(self):
        return np.cumsum(self.counts)

    def save(self, path):
        np.savez(path, d=self.d, counts=self.counts)

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            return cls(int(z["d"]), z["counts"].astype(np.int64))


def _r1(M):
    r = np.zeros(M + 1, dtype=np.int64)
    j = np.arange(1, math.isqrt(M) + 1)
    r[j * j] = 2
    r[0] = 1
    return r


def _r4(M):
    # Jacobi: r_4(m) = 8 * sum of the divisors of m not divisible by 4
    s = np.zeros(M + 1, dtype=np.int64)
    for a in range(1, math.isqrt(M) + 1):
        # divisor pairs (a, b) with a <= b and a * b <= M
        bs = np.arange(a, M // a + 1, dtype=np.int64)
        view = s[a * a :: a][: bs.size]
        view += np.where(bs % 4 == 0, 0, bs)
        if a % 4:
            view[1:] += a
    s *= 8
    s[0] = 1
    return s


def _add_square(r):
    """Counts in one more dimension: ``r'(m) = r(m) + 2 sum_{j>=1} r(m - j^2)``."""
    out = r.copy()
    M = r.size - 1
    for j in range(1, math.isqrt(M) + 1):
        out[j * j :] += 2 * r[: M + 1 - j * j]
    return out


def _fft_add_squares(r, extra, blocks=8):
    """Convolve with ``r_1`` ``extra`` times via block-truncated real FFTs.

    Only one block spectrum of each factor is held at a time, which trades a
    few extra transforms for a peak footprint of about three tables.
    """
    M = r.size - 1
    length = M + 1
    L = -(-length // blocks)
    n = 2 * L
    roots = np.arange(1, math.isqrt(M) + 1, dtype=np.int64) ** 2
    for _ in range(extra):
        out = np.zeros(length)
        for q in range(blocks):
            seg = np.zeros(min(L, length - q * L))
            if seg.size <= 0:
                break
            sel = roots[(roots >= q * L) & (roots < q * L + seg.size)]
            seg[sel - q * L] = 2.0
            if q == 0:
                seg[0] = 1.0
            B = scipy.fft.rfft(seg, n=n)
            del seg
            for p in range(blocks - q):
                a = r[p * L : (p + 1) * L]
                if a.size == 0:
                    break
                y = scipy.fft.irfft(scipy.fft.rfft(a.astype(np.float64), n=n) * B, n=n)
                o = (p + q) * L
                k = min(n, length - o)
                out[o : o + k] += y[:k]
            del B
        del r
        err = 0.0
        for lo in range(0, length, 1 << 22):
            blk = out[lo : lo + (1 << 22)]
            rb = np.rint(blk)
            err = max(err, float(np.abs(blk - rb).max()))
            blk[:] = rb
        if err > 0.25:
            raise ArithmeticError(f"FFT convolution rounding error {err:.3g} too large")
        r = out.astype(np.int64)
        del out
    return r


def shell_counts(d, M, cache_dir=None, memory_budget=MEMORY_BUDGET):
    """Table of ``r_d(m)`` for ``0 <= m <= M``.

    Built from ``r_1`` by repeated convolution.  Four-dimensional counts come
    from Jacobi's divisor formula; further factors use direct shifted sums
    while those stay cheap and a block FFT (with an exactness check)
    otherwise.  With ``cache_dir`` tables are stored as ``shells_d{d}_M{M}.npz``.
    """
    if d < 1 or M < 0:
        raise ValueError("need d >= 1 and M >= 0")
    need = 8 * (M + 1) * (6 if d > 4 else 3)
    if need > memory_budget:
        raise BudgetExceededError(f"shell table d={d}, M={M} needs about {need / 2**30:.1f} GiB")
    path = None
    if cache_dir is not None:
        path = os.path.join(cache_dir, f"shells_d{d}_M{M}.npz")
        if os.path.exists(path):
            return ShellTable.load(path)
    if d >= 4:
        r, have = _r4(M), 4
    else:
        r, have = _r1(M), 1
    extra = d - have
    # shifted sums cost about M^1.5 per factor
    if extra and (M + 1) * math.isqrt(M) > 2 * 10**9:
        r = _fft_add_squares(r, extra)
    else:
        for _ in range(extra):
            r = _add_square(r)
    table = ShellTable(d, r)
    if path is not None:
        os.makedirs(cache_dir, exist_ok=True)
        table.save(path)
    return table


def brute_shell_counts(d, M):
    """Direct enumeration of ``r_d(m)``, for cross-checks on small tables."""
    R = math.isqrt(M)
    axis = np.arange(-R, R + 1)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    m = sum(g.astype(np.int64) ** 2 for g in grids).ravel()
    return np.bincount(m[m <= M], minlength=M + 1)


# partial sums

def _as_N(N):
    arr = np.atleast_1d(np.asarray(N, dtype=np.int64))
    if np.any(arr < 1):
        raise ValueError("N must be >= 1")
    return arr


def partial_sum_center(d, N, table=None, chunk=1 << 22):
    """``S_N(0)`` from shell counts; ``N`` may be an int or an array."""
    Ns = _as_N(N)
    M = int(Ns.max()) ** 2 - 1
    if table is None:
        table = shell_counts(d, M)
    if table.d != d:
        raise ValueError("shell table dimension mismatch")
    if table.M < M:
        raise ValueError(f"shell table covers m <= {table.M}, need {M}")
    # running sum over m in fixed chunk order, read off at m = N^2 - 1
    want = Ns * Ns - 1
    order = np.argsort(want, kind="stable")
    out = np.empty(Ns.size)
    total = 0.0
    pos = 0
    for lo in range(0, M + 1, chunk):
        hi = min(lo + chunk, M + 1)
        c = ball_coefficient(d, np.sqrt(np.arange(lo, hi, dtype=np.float64)), "lattice")
        cs = np.cumsum(table.counts[lo:hi] * c) + total
        while pos < order.size and want[order[pos]] < hi:
            out[order[pos]] = cs[want[order[pos]] - lo]
            pos += 1
        total = cs[-1]
    return float(out[0]) if np.ndim(N) == 0 else out


def _ball_lattice(dim, N):
    """Integer points ``k`` in ``Z^dim`` with ``|k|^2 < N^2``, as ``(pts, |k|^2)``."""
    pts = np.zeros((1, 0), dtype=np.int64)
    sq = np.zeros(1, dtype=np.int64)
    axis = np.arange(-(N - 1), N, dtype=np.int64)
    for _ in range(dim):
        nsq = sq[:, None] + axis[None, :] ** 2
        keep = nsq < N * N
        rows, cols = np.nonzero(keep)
        pts = np.concatenate([pts[rows], axis[cols, None]], axis=1)
        sq = nsq[rows, cols]
    return pts, sq


def lattice_point_estimate(d, N):
    return ball_volume(d, radius=N)


def shell_phase_sums(d, N, x, budget=POINT_BUDGET, chunk=1 << 20):
    """``G(m) = sum_{|k|^2 = m} cos(pi k.x)`` for ``m < N^2`` by direct enumeration."""
    x = np.asarray(x, dtype=np.float64).reshape(d)
    if float(N) ** d > budget:
        raise BudgetExceededError(f"about {lattice_point_estimate(d, N):.3g} lattice points exceed the budget")
    M = N * N
    if d == 1:
        k = np.arange(-(N - 1), N)
        return np.bincount(k * k, weights=np.cos(math.pi * k * x[0]), minlength=M)
    head, hsq = _ball_lattice(d - 1, N)
    last = np.arange(-(N - 1), N, dtype=np.int64)
    hphase = math.pi * (head @ x[:-1])
    lphase = math.pi * last * x[-1]
    G = np.zeros(M)
    rows = max(1, chunk // last.size)
    for lo in range(0, hsq.size, rows):
        hi = min(lo + rows, hsq.size)
        m = hsq[lo:hi, None] + last[None, :] ** 2
        keep = m < M
        ph = np.cos(hphase[lo:hi, None] + lphase[None, :])
        G += np.bincount(m[keep], weights=ph[keep], minlength=M)
    return G


def partial_sum_at(d, N, x, budget=POINT_BUDGET):
    """``S_N(x)`` by direct summation over the lattice ball ``|k| < N``.

    ``x`` is one point of length ``d`` or an ``(m, d)`` batch.
    """
    pts = np.asarray(x, dtype=np.float64)
    single = pts.ndim <= 1
    pts = pts.reshape(-1, d)
    if float(N) ** d > budget:
        raise BudgetExceededError(f"about {lattice_point_estimate(d, N):.3g} lattice points exceed the budget")
    c = lattice_coefficients(d, N * N - 1)
    if pts.shape[0] == 1:
        out = np.array([c @ shell_phase_sums(d, N, pts[0], budget)])
    else:
        ks, sq = _ball_lattice(d, N)
        coef = c[sq]
        out = np.empty(pts.shape[0])
        step = max(1, (1 << 22) // max(ks.shape[0], 1))
        for lo in range(0, pts.shape[0], step):
            ph = np.cos(math.pi * (pts[lo : lo + step] @ ks.T))
            out[lo : lo + step] = ph @ coef
    return float(out[0]) if single else out


def indicator(x):
    x = np.asarray(x, dtype=np.float64)
    return 1.0 if float(x @ x) <= 0.25 else 0.0


def parse_point(spec, d):
    """Rational point from fractions like ``"1/3,0,0"``, a scalar, or a sequence."""
    if isinstance(spec, str):
        parts = [p for p in spec.replace(" ", "").split(",") if p]
    else:
        parts = list(np.atleast_1d(spec))
    fr = [Fraction(str(p)) if not isinstance(p, Fraction) else p for p in parts]
    if len(fr) == 1 and d > 1:
        fr = fr * d
    if len(fr) != d:
        raise ValueError(f"point needs {d} coordinates")
    if any(not (-1 <= f < 1) for f in fr):
        raise ValueError("point must lie in [-1, 1)^d")
    return tuple(fr)


@dataclass
class PartialSumScan:
    d: int
    x: tuple
    N: np.ndarray
    S: np.ndarray

    @property
    def target(self):
        return indicator(np.array([float(v) for v in self.x]))

    @property
    def deviation(self):
        return np.abs(self.S - self.target)

    @property
    def running_max(self):
        return np.maximum.accumulate(self.deviation)

    def window(self, lo, hi):
        sel = (self.N >= lo) & (self.N <= hi)
        if not sel.any():
            raise ValueError(f"no N in [{lo}, {hi}]")
        return sel

    def window_amplitude(self, lo, hi):
        """``max - min`` of ``S_N`` over ``lo <= N <= hi``."""
        s = self.S[self.window(lo, hi)]
        return float(s.max() - s.min())

    def window_max_deviation(self, lo, hi):
        return float(self.deviation[self.window(lo, hi)].max())

    def to_csv(self):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["N", "S_N", "deviation", "running_max"])
        for N, s, dv, rm in zip(self.N, self.S, self.deviation, self.running_max):
            wr.writerow([int(N), repr(float(s)), repr(float(dv)), repr(float(rm))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, d, x):
        rows = list(csv.reader(io.StringIO(text)))[1:]
        N = np.array([int(r[0]) for r in rows])
        S = np.array([float(r[1]) for r in rows])
        return cls(d, x, N, S)


def divergence_scan(d, x, N_list, table=None, budget=POINT_BUDGET):
    """Track ``S_N(x)`` along increasing ``N``.

    ``x`` is a rational point (see :func:`parse_point`).  The center uses
    shell counts; other points enumerate the lattice ball once at the
    largest ``N`` and read every smaller partial sum off the shell sums.
    """
    xs = parse_point(x, d)
    Ns = _as_N(N_list)
    if np.any(np.diff(Ns) <= 0):
        raise ValueError("N_list must be strictly increasing")
    if all(f == 0 for f in xs):
        S = partial_sum_center(d, Ns, table)
    else:
        Nmax = int(Ns[-1])
        G = shell_phase_sums(d, Nmax, np.array([float(f) for f in xs]), budget)
        cs = np.cumsum(lattice_coefficients(d, Nmax * Nmax - 1) * G)
        S = cs[Ns * Ns - 1]
    return PartialSumScan(d, xs, Ns, np.asarray(S, dtype=np.float64))


def gibbs_overshoot(N, grid=4001):
    """``max_x S_N(x) - 1`` in one dimension, searched just inside the jump at 1/2."""
    lo, hi = 0.5 - 6.0 / N, 0.5
    xs = np.linspace(lo, hi, grid)
    vals = partial_sum_at(1, N, xs[:, None])
    i = int(np.argmax(vals))
    a, b = xs[max(i - 1, 0)], xs[min(i + 1, grid - 1)]
    res = scipy.optimize.minimize_scalar(
        lambda t: -partial_sum_at(1, N, [t]), bounds=(a, b), method="bounded",
        options={"xatol": 1e-12},
    )
    return max(-float(res.fun), float(vals[i])) - 1.0


def parseval_partial(d, N, table=None):
    """``||S_N||^2`` on the cube, ``2^d sum_{m < N^2} r_d(m) c(m)^2``; bounded by the ball volume."""
    Ns = _as_N(N)
    M = int(Ns.max()) ** 2 - 1
    table = shell_counts(d, M) if table is None else table
    c = lattice_coefficients(d, M)
    cs = np.cumsum(table.counts[: M + 1] * c * c) * 2.0**d
    out = cs[Ns * Ns - 1]
    return float(out[0]) if np.ndim(N) == 0 else out


# gradient descent on coefficients

@dataclass(frozen=True)
class FourierGD:
    """Coefficients ``a_k, b_k`` of ``sum_k a_k cos(pi k.x) + b_k sin(pi k.x)`` over ``|k| < N``."""

    d: int
    N: int
    k: np.ndarray  # (K, d) lattice points
    a: np.ndarray
    b: np.ndarray

    def mirror(self):
        return _mirror_index(self.k)

    def cosine_coefficients(self):
        """Coefficient of each cosine mode, ``a_k + a_{-k}`` (``a_0`` at the origin)."""
        mir = self.mirror()
        return np.where(mir == np.arange(self.k.shape[0]), self.a, self.a + self.a[mir])

    def projection_error(self):
        """Max distance of the cosine and sine mode coefficients to the projection."""
        sq = np.einsum("ij,ij->i", self.k, self.k)
        target = ball_coefficient(self.d, np.sqrt(sq.astype(np.float64)), "projection")
        mir = self.mirror()
        sine = np.where(mir == np.arange(self.k.shape[0]), 0.0, self.b - self.b[mir])
        return float(max(np.abs(self.cosine_coefficients() - target).max(), np.abs(sine).max()))


def _mirror_index(k):
    lookup = {tuple(row): i for i, row in enumerate(k.tolist())}
    return np.array([lookup[tuple(-v for v in row)] for row in k.tolist()])


def fourier_gd(d, N, eta, T, start=None, allow_unstable=False):
    """Gradient descent on ``E = 1/2 ∫ |f - f_ball|^2`` over the coefficients with ``|k| < N``.

    The update is linear and block diagonal in the pairs ``(k, -k)``, so
    ``T`` steps are applied in closed form.  ``start`` is ``(a, b)`` in the
    lattice order of the result (default zeros).
    """
    k, sq = _ball_lattice(d, N)
    K = k.shape[0]
    a0 = np.zeros(K) if start is None else np.asarray(start[0], dtype=np.float64).copy()
    b0 = np.zeros(K) if start is None else np.asarray(start[1], dtype=np.float64).copy()
    if T < 0:
        raise ValueError("T must be non-negative")
    norm = 2.0**d
    if not 0 < eta < 2.0 / norm and not allow_unstable:
        raise UnstableStepError(f"step {eta} violates 0 < eta < 2/2^d = {2.0 / norm}")
    if T == 0:
        return FourierGD(d, N, k, a0, b0)
    raw = ball_coefficient(d, np.sqrt(sq.astype(np.float64)), "raw")
    mir = _mirror_index(k)
    origin = mir == np.arange(K)
    rho = (1.0 - eta * norm) ** T
    # sum modes a_k + a_{-k} contract towards 2 raw / 2^d, b_k - b_{-k} towards 0
    s0 = np.where(origin, a0, a0 + a0[mir])
    p = np.where(origin, raw / norm, 2.0 * raw / norm)
    s = p + (s0 - p) * rho
    dif = a0 - a0[mir]
    a = np.where(origin, s, 0.5 * (s + dif))
    u = (b0 - b0[mir]) * rho
    bs = b0 + b0[mir]
    b = np.where(origin, b0, 0.5 * (bs + u))
    return FourierGD(d, N, k, a, b)


def fourier_gd_step(state, eta):
    """One explicit gradient step, used to cross-check the closed form."""
    mir = state.mirror()
    origin = mir == np.arange(state.k.shape[0])
    half = 2.0 ** (state.d - 1)
    sq = np.einsum("ij,ij->i", state.k, state.k)
    raw = ball_coefficient(state.d, np.sqrt(sq.astype(np.float64)), "raw")
    ga = half * (state.a + state.a[mir]) - raw
    gb = np.where(origin, 0.0, half * (state.b - state.b[mir]))
    return FourierGD(state.d, state.N, state.k, state.a - eta * ga, state.b - eta * gb)
