"""Seeded, chunked Monte Carlo sampling over the cube [-1, 1)^d.

Every estimator splits its sample budget into fixed-size chunks.  Chunk ``i``
draws from its own child of ``SeedSequence(seed)``, so the sample set depends
only on ``(seed, n, chunk)`` and never on how many worker threads consume the
chunks.  Per-chunk partial sums are reduced in chunk order, which keeps
results bitwise identical between single- and multi-threaded runs.
"""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

DEFAULT_CHUNK = 1 << 16
METHODS = ("uniform", "stratified", "sobol")


@dataclass(frozen=True)
class MCResult:
    mean: np.ndarray  # integral estimates, one per integrand column
    std_error: np.ndarray
    n: int


def _chunk_bounds(n, chunk):
    return [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]


def _strata_per_axis(n, d):
    k = int(np.floor(n ** (1.0 / d) + 1e-9))
    while (k + 1) ** d <= n:
        k += 1
    while k > 1 and k**d > n:
        k -= 1
    return max(k, 1)


def seed_sequence(seed):
    """Fresh ``SeedSequence`` from an int, a list of ints or another sequence.

    A passed ``SeedSequence`` is copied so that spawning never depends on how
    often the caller already spawned from it.
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key)
    return np.random.SeedSequence(seed)


def child_seed(seed, *keys):
    """Independent stream for ``keys`` under ``seed`` (an int, int list or ``SeedSequence``)."""
    ss = seed_sequence(seed)
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + tuple(int(k) for k in keys))


def cube_points(d, n, seed, method="uniform", chunk=DEFAULT_CHUNK):
    """Yield the sample points in chunks of at most ``chunk`` rows.

    ``method="stratified"`` places one jittered point in each of the ``k^d``
    congruent sub-cubes (``k = floor(n^(1/d))``) and the remaining
    ``n - k^d`` points uniformly.  ``method="sobol"`` draws an Owen-scrambled
    Sobol sequence, seeded like the others.
    """
    if method not in METHODS:
        raise ValueError(f"unknown sampling method {method!r}")
    bounds = _chunk_bounds(n, chunk)
    if method == "sobol":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # n need not be a power of two
            pts = qmc.Sobol(d, scramble=True, seed=np.random.default_rng(seed_sequence(seed))).random(n)
        for lo, hi in bounds:
            yield 2.0 * pts[lo:hi] - 1.0
        return
    children = seed_sequence(seed).spawn(len(bounds))
    k = _strata_per_axis(n, d) if method == "stratified" else 0
    n_strata = k**d if method == "stratified" else 0
    for (lo, hi), child in zip(bounds, children):
        rng = np.random.default_rng(child)
        if method == "uniform":
            yield rng.uniform(-1.0, 1.0, size=(hi - lo, d))
            continue
        pts = np.empty((hi - lo, d))
        s_hi = min(hi, n_strata)
        if s_hi > lo:
            cells = np.arange(lo, s_hi)
            idx = np.stack(np.unravel_index(cells, (k,) * d), axis=1)
            pts[: s_hi - lo] = (idx + rng.uniform(size=idx.shape)) / k
        if hi > max(lo, n_strata):
            m = hi - max(lo, n_strata)
            pts[hi - lo - m :] = rng.uniform(size=(m, d))
        yield 2.0 * pts - 1.0


def integrate(func, d, n, seed, method="uniform", chunk=DEFAULT_CHUNK, threads=1):
    """Monte Carlo estimate of the integral of ``func`` over [-1, 1)^d.

    ``func`` maps an ``(m, d)`` array of points to an ``(m,)`` or ``(m, c)``
    array.  The standard error is the i.i.d. formula; for stratified samples
    it is conservative.
    """
    chunks = list(cube_points(d, n, seed, method=method, chunk=chunk))

    def partial(x):
        v = np.asarray(func(x), dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        return v.sum(axis=0), (v * v).sum(axis=0)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(partial, chunks))
    else:
        parts = [partial(x) for x in chunks]
    s1 = np.zeros_like(parts[0][0])
    s2 = np.zeros_like(parts[0][1])
    for a, b in parts:
        s1 += a
        s2 += b
    vol = 2.0**d
    mean = s1 / n
    var = np.maximum(s2 / n - mean**2, 0.0)
    se = vol * np.sqrt(var / max(n - 1, 1))
    return MCResult(mean=vol * mean, std_error=se, n=n)
