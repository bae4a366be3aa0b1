"""Kernel-weighted check-loss minimisation in one or two local parameters.

The local linear problem

    minimise  sum_i w_i * rho_alpha(y_i - b0 - b1 * x_i)

is a piecewise-linear convex function of ``(b0, b1)``; its minimum is
attained at a line through two data points.  ``fit_weighted`` finds it
exactly by pivoting: pin the line at one data point, choose the best slope
through it (a weighted quantile of the pairwise slopes), pin at the point
that slope lands on, and repeat until neither pinned family improves.  At
such a vertex the loss is non-decreasing along every edge, hence globally
minimal.  ``enumerate_vertices`` is the brute-force O(m^3) reference.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import DegenerateDesignError, InsufficientSupportError
from .kernel import EPANECHNIKOV, KernelSpec

WEIGHT_FLOOR = 1e-14


@dataclass(frozen=True)
class UnitTimeSeries:
    """Observations X_1..X_n, the i-th attributed to time i/n."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size < 1:
            raise ValueError("series must contain at least one observation")
        if not np.all(np.isfinite(v)):
            raise ValueError("series contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(1, self.n + 1) / self.n

    def __len__(self):
        return self.n


def as_series(x) -> UnitTimeSeries:
    return x if isinstance(x, UnitTimeSeries) else UnitTimeSeries(x)


@dataclass(frozen=True)
class LocalFitProblem:
    series: UnitTimeSeries
    t: float
    alpha: float
    bandwidth: float
    kernel: KernelSpec = EPANECHNIKOV


@dataclass(frozen=True)
class QuantileFit:
    qhat: float
    slope: float
    loss: float
    support_count: int
    degenerate: bool = False


def check_loss(alpha, x):
    """``rho_alpha(x) = alpha x^+ + (1 - alpha)(-x)^+``; vectorised."""
    x = np.asarray(x, dtype=float)
    out = np.where(x > 0, alpha * x, (alpha - 1.0) * x)
    return out if out.ndim else float(out)


def psi(alpha, x):
    """Left derivative of the check function, ``alpha - 1{x <= 0}``."""
    x = np.asarray(x, dtype=float)
    out = np.where(x <= 0, alpha - 1.0, alpha)
    return out if out.ndim else float(out)


@numba.njit(cache=True, nogil=True)
def _loss(x, y, w, alpha, b0, b1):
    s = 0.0
    for i in range(y.size):
        r = y[i] - b0 - b1 * x[i]
        if r > 0:
            s += w[i] * alpha * r
        else:
            s -= w[i] * (1.0 - alpha) * r
    return s


@numba.njit(cache=True, nogil=True)
def _select(v, c, need, idx):
    """Smallest ``v_k`` with ``sum(c[v <= v_k]) >= need``; returns (value, index).

    Weighted quickselect with three-way partitioning; scrambles its inputs.
    """
    lo = 0
    hi = v.size
    below = 0.0  # weight of elements already known to be smaller
    tol = 1e-12 * need
    while True:
        if hi - lo == 1:
            return v[lo], idx[lo]
        a = v[lo]
        b = v[(lo + hi) // 2]
        d = v[hi - 1]
        piv = max(min(a, b), min(max(a, b), d))
        # v[lo:lt] < piv, v[lt:gt] == piv, v[gt:hi] > piv
        lt = lo
        i = lo
        gt = hi
        while i < gt:
            if v[i] < piv:
                v[lt], v[i] = v[i], v[lt]
                c[lt], c[i] = c[i], c[lt]
                idx[lt], idx[i] = idx[i], idx[lt]
                lt += 1
                i += 1
            elif v[i] > piv:
                gt -= 1
                v[gt], v[i] = v[i], v[gt]
                c[gt], c[i] = c[i], c[gt]
                idx[gt], idx[i] = idx[i], idx[gt]
            else:
                i += 1
        wl = 0.0
        for k in range(lo, lt):
            wl += c[k]
        if lt > lo and below + wl >= need - tol:
            hi = lt
            continue
        we = 0.0
        first = lt
        for k in range(lt, gt):
            we += c[k]
            if idx[k] < idx[first]:
                first = k
        if below + wl + we >= need - tol or gt == hi:
            return piv, idx[first]
        below += wl + we
        lo = gt


@numba.njit(cache=True, nogil=True)
def _weighted_quantile_index(v, c, alpha):
    # index of the lower-endpoint minimiser of sum c_i rho_alpha(v_i - b)
    m = v.size
    vv = v.copy()
    cc = c.copy()
    idx = np.arange(m)
    total = 0.0
    for i in range(m):
        total += c[i]
    return _select(vv, cc, alpha * total, idx)[1]


@numba.njit(cache=True, nogil=True)
def _best_line_through(x, y, w, alpha, p):
    """Best slope among lines pinned at point ``p``; returns (slope, landing index)."""
    m = y.size
    s = np.empty(m)
    c = np.empty(m)
    idx = np.empty(m, dtype=np.int64)
    k = 0
    need = 0.0
    for i in range(m):
        dx = x[i] - x[p]
        if dx == 0.0:
            continue
        s[k] = (y[i] - y[p]) / dx
        if dx > 0:
            c[k] = w[i] * dx
            need += c[k] * alpha
        else:
            c[k] = -w[i] * dx
            need += c[k] * (1.0 - alpha)
        idx[k] = i
        k += 1
    if k == 0:
        return 0.0, -1
    return _select(s[:k], c[:k], need, idx[:k])


@numba.njit(cache=True, nogil=True)
def _pivot_fit(x, y, w, alpha, b1_init, max_iter):
    m = y.size
    # start: best intercept for the initial slope
    r = y - b1_init * x
    p = _weighted_quantile_index(r, w, alpha)
    b1 = b1_init
    b0 = y[p] - b1 * x[p]
    best = _loss(x, y, w, alpha, b0, b1)
    scale = 0.0
    for i in range(m):
        scale += w[i] * abs(y[i] - b0)
    tol = 1e-13 * (scale + 1e-300)
    pin = p
    prev = -1
    it = 0
    while it < max_iter:
        it += 1
        slope, q = _best_line_through(x, y, w, alpha, pin)
        if q < 0:
            return b0, b1, best, it
        nb0 = y[pin] - slope * x[pin]
        loss = _loss(x, y, w, alpha, nb0, slope)
        if loss < best - tol:
            b0, b1, best = nb0, slope, loss
            prev = pin
            pin = q
            continue
        # no progress pinned at `pin`; try every other interpolated point
        improved = False
        for i in range(m):
            if i == pin or i == prev:
                continue
            ri = y[i] - b0 - b1 * x[i]
            if abs(ri) > 1e-12 * (abs(y[i]) + abs(b0) + abs(b1 * x[i]) + 1e-300):
                continue
            slope, q = _best_line_through(x, y, w, alpha, i)
            if q < 0:
                continue
            nb0 = y[i] - slope * x[i]
            loss = _loss(x, y, w, alpha, nb0, slope)
            if loss < best - tol:
                b0, b1, best = nb0, slope, loss
                prev = i
                pin = q
                improved = True
                break
        if not improved:
            return b0, b1, best, it
    return b0, b1, best, it


@numba.njit(cache=True, nogil=True)
def _local_constant(y, w, alpha):
    p = _weighted_quantile_index(y, w, alpha)
    b0 = y[p]
    s = 0.0
    for i in range(y.size):
        r = y[i] - b0
        s += w[i] * (alpha * r if r > 0 else (alpha - 1.0) * r)
    return b0, s


def _prepare(x, y, w):
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    keep = w > WEIGHT_FLOOR
    return x[keep], y[keep], w[keep]


def fit_weighted(x, y, w, alpha: float, slope_init: float = 0.0, max_iter: int = 500) -> QuantileFit:
    """Exact minimiser of ``sum w_i rho_alpha(y_i - b0 - b1 x_i)``.

    Weights at or below 1e-14 are dropped.  If all remaining ``x`` coincide
    the slope is unidentified; the local constant fit is returned with
    ``degenerate=True``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    x, y, w = _prepare(x, y, w)
    m = y.size
    if m < 2:
        raise InsufficientSupportError(f"local linear fit needs >= 2 weighted points, got {m}")
    if np.all(x == x[0]):
        b0, loss = _local_constant(y, w, alpha)
        return QuantileFit(float(b0), 0.0, float(loss), m, degenerate=True)
    b0, b1, loss, _ = _pivot_fit(x, y, w, float(alpha), float(slope_init), max_iter)
    return QuantileFit(float(b0), float(b1), float(loss), m)


def fit_weighted_constant(y, w, alpha: float) -> QuantileFit:
    """Lower-endpoint weighted alpha-quantile of ``y``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    _, y, w = _prepare(np.zeros(len(y)), y, w)
    if y.size < 1:
        raise InsufficientSupportError("local constant fit needs >= 1 weighted point")
    b0, loss = _local_constant(y, w, float(alpha))
    return QuantileFit(float(b0), 0.0, float(loss), int(y.size))


def enumerate_vertices(x, y, w, alpha: float) -> QuantileFit:
    """Brute-force minimiser over every line through two weighted points.

    O(m^3); intended for windows of a few hundred points at most.  Ties are
    broken towards the lexicographically smallest ``(b0, b1)``.
    """
    x, y, w = _prepare(x, y, w)
    m = y.size
    if m < 2:
        raise InsufficientSupportError(f"local linear fit needs >= 2 weighted points, got {m}")
    i, j = np.triu_indices(m, 1)
    ok = x[i] != x[j]
    if not ok.any():
        raise DegenerateDesignError("all weighted observations share one time point")
    i, j = i[ok], j[ok]
    b1 = (y[j] - y[i]) / (x[j] - x[i])
    b0 = y[i] - b1 * x[i]
    loss = np.empty(b0.size)
    for start in range(0, b0.size, 4096):
        sl = slice(start, start + 4096)
        res = y[None, :] - b0[sl, None] - b1[sl, None] * x[None, :]
        loss[sl] = (np.where(res > 0, alpha * res, (alpha - 1.0) * res) * w[None, :]).sum(axis=1)
    lmin = loss.min()
    tied = np.flatnonzero(loss <= lmin + 1e-12 * max(1.0, abs(lmin)))
    k = tied[np.lexsort((b1[tied], b0[tied]))[0]]
    best = (lmin, b0[k], b1[k])
    return QuantileFit(float(best[1]), float(best[2]), float(best[0]), m)


def local_weights(n: int, t: float, b: float, kernel: KernelSpec = EPANECHNIKOV):
    """Offsets ``i/n - t`` and weights ``K((i/n - t)/b)`` restricted to the kernel window."""
    times = np.arange(1, n + 1) / n
    d = times - t
    lo = np.searchsorted(times, t - b * kernel.support_radius, side="left")
    hi = np.searchsorted(times, t + b * kernel.support_radius, side="right")
    d = d[lo:hi]
    w = np.asarray(kernel(d / b), dtype=float)
    return slice(lo, hi), d, w


def fit_local_linear(p: LocalFitProblem, slope_init: float = 0.0) -> QuantileFit:
    if p.bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    sl, d, w = local_weights(p.series.n, p.t, p.bandwidth, p.kernel)
    return fit_weighted(d, p.series.values[sl], w, p.alpha, slope_init=slope_init)


def fit_local_constant(p: LocalFitProblem) -> QuantileFit:
    if p.bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    sl, _, w = local_weights(p.series.n, p.t, p.bandwidth, p.kernel)
    return fit_weighted_constant(p.series.values[sl], w, p.alpha)
