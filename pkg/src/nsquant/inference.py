"""Long-run variance and density plug-ins, and pointwise confidence bands."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .curvefit import (
    IqrCurve,
    QuantileCurve,
    _fmt,
    _nan_to_none,
    default_grid,
    jackknife_parts,
    validate_grid,
)
from .errors import InsufficientDataError
from .kernel import EPANECHNIKOV, KernelSpec, jackknife_kernel
from .solver import as_series, fit_weighted, local_weights, psi

SIGMA_FLOOR = 1e-10
DENSITY_FLOOR = 1e-8
_EPS = 1e-9


@dataclass(frozen=True)
class LocalNeighborhood:
    """Indices ``s..l`` (1-based, inclusive) of observations near ``t``."""

    t: float
    s: int
    l: int

    @property
    def size(self) -> int:
        return self.l - self.s + 1

    @property
    def slice(self) -> slice:
        return slice(self.s - 1, self.l)


def neighborhood(n: int, t: float, b: float) -> LocalNeighborhood:
    s = max(math.floor(n * t - n * b + _EPS), 1)
    l = min(math.floor(n * t + n * b + _EPS), n)
    if s > l:
        s = l = min(max(round(n * t), 1), n)
    return LocalNeighborhood(float(t), s, l)


def block_length(size: int, lam: float = 1.0) -> int:
    return max(int(math.floor(lam * size ** (1.0 / 3.0) + _EPS)), 2)


def block_variance(z, m: int) -> float:
    """Overlapping-block long-run variance estimate of the sequence ``z``.

    ``m / (N - m + 1) * sum_j (mean(z[j:j+m]) - mean(z))^2``.
    """
    z = np.asarray(z, dtype=float)
    N = z.size
    if m < 1 or N < m:
        raise InsufficientDataError(f"need at least m={m} observations, got {N}")
    if np.all(z == z[0]):
        return 0.0
    zbar = z.mean()
    c = np.concatenate(([0.0], np.cumsum(z - zbar)))
    dev = (c[m:] - c[:-m]) / m
    return float(m / (N - m + 1) * np.dot(dev, dev))


def block_variance_direct(z, m: int) -> float:
    z = [float(v) for v in z]
    N = len(z)
    if m < 1 or N < m:
        raise InsufficientDataError(f"need at least m={m} observations, got {N}")
    zbar = math.fsum(z) / N
    total = 0.0
    for j in range(N - m + 1):
        total += (math.fsum(z[j:j + m]) / m - zbar) ** 2
    return m / (N - m + 1) * total


def _residual_signs(series, alpha, curve_values, sl=slice(None)):
    return psi(alpha, series.values[sl] - curve_values)


def long_run_variance(series, alpha: float, curve: QuantileCurve, t: float, b: float,
                      m_n: int | None = None, lam: float = 1.0) -> float:
    """Localised block estimate of the long-run variance of ``psi_alpha`` residuals.

    ``curve`` is the raw estimate on the full grid ``{i/n}``.
    """
    series = as_series(series)
    if curve.values.size != series.n:
        raise ValueError("curve must be evaluated on the full grid {i/n}")
    nb = neighborhood(series.n, t, b)
    m = block_length(nb.size, lam) if m_n is None else int(m_n)
    if m < 2 or nb.size <= m:
        raise InsufficientDataError(f"neighborhood of size {nb.size} too small for block length {m}")
    sl = nb.slice
    z = _residual_signs(series, alpha, np.nan_to_num(curve.values[sl], nan=np.inf), sl)
    return block_variance(z, m)


def silverman_bandwidth(values, scale: float = 1.06) -> float:
    v = np.asarray(values, dtype=float)
    sd = v.std(ddof=1) if v.size > 1 else 0.0
    q75, q25 = np.percentile(v, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if spread <= 0:
        spread = sd
    return scale * spread * v.size ** (-0.2)


def _density_raw(x, qhat, h, kernel):
    return float(np.sum(kernel((qhat - x) / h)) / (x.size * h))


def density_at_quantile(series, t: float, b: float, qhat: float, h_n: float | None = None,
                        kernel_sharp: KernelSpec = EPANECHNIKOV) -> float:
    """Kernel density estimate at ``qhat`` from observations in the neighborhood of ``t``.

    Floored at 1e-8 when no observation falls within ``h_n`` of ``qhat``.
    """
    series = as_series(series)
    x = series.values[neighborhood(series.n, t, b).slice]
    if h_n is None:
        h_n = silverman_bandwidth(x)
    if not h_n > 0:
        h_n = DENSITY_FLOOR
    return max(_density_raw(x, qhat, h_n, kernel_sharp), DENSITY_FLOOR)


@dataclass(frozen=True, eq=False)
class PlugIns:
    sigma_sq: np.ndarray
    density: np.ndarray
    m_n: np.ndarray
    h_n: np.ndarray
    sigma_floored: np.ndarray = field(repr=False)
    density_floored: np.ndarray = field(repr=False)


@dataclass(frozen=True, eq=False)
class PointwiseBand:
    center: QuantileCurve | IqrCurve
    lower: np.ndarray
    upper: np.ndarray
    nominal: float
    plugins: PlugIns
    first_bandwidth: float | np.ndarray
    flags: list = field(default_factory=list)

    @property
    def grid(self):
        return self.center.grid

    @property
    def values(self):
        return self.center.values

    @property
    def half_width(self):
        return 0.5 * (self.upper - self.lower)

    def rows(self):
        slopes = getattr(self.center, "slopes", None)
        for i, t in enumerate(self.grid):
            yield {
                "t": t,
                "center": self.values[i],
                "lower": self.lower[i],
                "upper": self.upper[i],
                "slope": slopes[i] if slopes is not None else float("nan"),
                "sigma_sq": self.plugins.sigma_sq[i],
                "density": self.plugins.density[i],
                "flags": self.flags[i],
            }

    def to_csv(self, path, with_slope: bool = True) -> None:
        cols = ["t", "center", "lower", "upper", "slope", "sigma_sq", "density", "flags"]
        if not with_slope:
            cols.remove("slope")
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for r in self.rows():
                fh.write(",".join(r[c] if c == "flags" else _fmt(r[c]) for c in cols) + "\n")

    def to_dict(self) -> dict:
        return {
            "nominal": self.nominal,
            "first_bandwidth": np.asarray(self.first_bandwidth).tolist(),
            "t": self.grid.tolist(),
            "center": _nan_to_none(self.values),
            "lower": _nan_to_none(self.lower),
            "upper": _nan_to_none(self.upper),
            "sigma_sq": _nan_to_none(self.plugins.sigma_sq),
            "density": _nan_to_none(self.plugins.density),
            "flags": list(self.flags),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def normal_quantile(p: float) -> float:
    return float(ndtri(p))


def band_half_width(sigma_sq, density, n: int, b, gamma: float, phi_star: float):
    """``z_{1-gamma/2} sqrt(phi* sigma^2) / (f sqrt(n b))``."""
    z = normal_quantile(1.0 - gamma / 2.0)
    return z * np.sqrt(phi_star * np.asarray(sigma_sq)) / (np.asarray(density) * np.sqrt(n * np.asarray(b)))


def _qhat_at(series, alpha, raw_full, t, b, kernel):
    n = series.n
    i = t * n
    if abs(i - round(i)) < 1e-9 and 1 <= round(i) <= n:
        v = raw_full.values[int(round(i)) - 1]
        if np.isfinite(v):
            return float(v)
    sl, d, w = local_weights(n, t, b, kernel)
    return fit_weighted(d, series.values[sl], w, alpha).qhat


def _flags_join(parts):
    return "|".join(parts)


def pointwise_band(series, alpha: float, b, bbar=None, gamma: float = 0.05,
                   kernel: KernelSpec = EPANECHNIKOV, grid=None, lam: float = 1.0,
                   h_scale: float = 1.06, kernel_sharp: KernelSpec | None = None,
                   exclude_boundary: bool = False, parts=None) -> PointwiseBand:
    """Jackknifed quantile curve with a pointwise normal-theory band.

    Grid points outside ``[b, 1 - b]`` carry a ``boundary`` flag; with
    ``exclude_boundary`` their limits are NaN instead.
    """
    series = as_series(series)
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    kernel_sharp = kernel if kernel_sharp is None else kernel_sharp
    n = series.n
    grid = default_grid(n) if grid is None else validate_grid(grid)
    if parts is None:
        keep = float(np.max(b)) + 1.0 / n
        parts = jackknife_parts(series, alpha, b, bbar, kernel, grid, keep_radius=keep)
    center = parts.curve
    raw = parts.raw
    full = np.arange(1, n + 1) / n
    b_grid = np.broadcast_to(np.asarray(center.bandwidth, dtype=float), grid.shape)
    phi_star = jackknife_kernel(kernel).phi
    sig = np.full(grid.size, np.nan)
    dens = np.full(grid.size, np.nan)
    m_arr = np.zeros(grid.size, dtype=int)
    h_arr = np.full(grid.size, np.nan)
    sfl = np.zeros(grid.size, dtype=bool)
    dfl = np.zeros(grid.size, dtype=bool)
    lower = np.full(grid.size, np.nan)
    upper = np.full(grid.size, np.nan)
    flags = []
    z_all = _residual_signs(series, alpha, np.nan_to_num(raw.values, nan=np.inf))
    for k, t in enumerate(grid):
        f = []
        bk = float(b_grid[k])
        boundary = t < bk - 1e-12 or t > 1.0 - bk + 1e-12
        if boundary:
            f.append("boundary")
        if not np.isfinite(center.values[k]):
            f.append("missing")
            flags.append(_flags_join(f))
            continue
        nb = neighborhood(n, t, bk)
        m = block_length(nb.size, lam)
        m_arr[k] = m
        if nb.size <= m:
            f.append("small_neighborhood")
            flags.append(_flags_join(f))
            continue
        s2 = block_variance(z_all[nb.slice], m)
        if s2 < SIGMA_FLOOR:
            s2 = SIGMA_FLOOR
            sfl[k] = True
            f.append("sigma_floor")
        x = series.values[nb.slice]
        h = silverman_bandwidth(x, h_scale)
        if not h > 0:
            h = DENSITY_FLOOR
            f.append("h_floor")
        qhat = _qhat_at(series, alpha, raw, t, bk, kernel)
        fd = _density_raw(x, qhat, h, kernel_sharp)
        if fd < DENSITY_FLOOR:
            fd = DENSITY_FLOOR
            dfl[k] = True
            f.append("density_floor")
        sig[k], dens[k], h_arr[k] = s2, fd, h
        if not (boundary and exclude_boundary):
            hw = float(band_half_width(s2, fd, n, bk, gamma, phi_star))
            lower[k] = center.values[k] - hw
            upper[k] = center.values[k] + hw
        flags.append(_flags_join(f))
    plug = PlugIns(sig, dens, m_arr, h_arr, sfl, dfl)
    return PointwiseBand(center, lower, upper, gamma, plug, center.bandwidth, flags)


def iqr_variance(z75, z25, f75: float, f25: float, m: int) -> float:
    """Block long-run variance of ``z75 / f75 - z25 / f25``."""
    w = np.asarray(z75, dtype=float) / f75 - np.asarray(z25, dtype=float) / f25
    return block_variance(w, m)


def iqr_band(series, b25, b75, bbar=None, gamma: float = 0.05, kernel: KernelSpec = EPANECHNIKOV,
             grid=None, lam: float = 1.0, h_scale: float = 1.06,
             kernel_sharp: KernelSpec | None = None, exclude_boundary: bool = False) -> PointwiseBand:
    series = as_series(series)
    kernel_sharp = kernel if kernel_sharp is None else kernel_sharp
    n = series.n
    grid = default_grid(n) if grid is None else validate_grid(grid)
    keep = float(max(np.max(b25), np.max(b75))) + 1.0 / n
    p25 = jackknife_parts(series, 0.25, b25, bbar, kernel, grid, keep_radius=keep)
    p75 = jackknife_parts(series, 0.75, b75, bbar, kernel, grid, keep_radius=keep)
    vals = p75.curve.values - p25.curve.values
    center = IqrCurve(grid, vals, p25.curve, p75.curve, vals < 0)
    b25g = np.broadcast_to(np.asarray(p25.curve.bandwidth, dtype=float), grid.shape)
    b75g = np.broadcast_to(np.asarray(p75.curve.bandwidth, dtype=float), grid.shape)
    b_eff = np.minimum(b25g, b75g)
    phi_star = jackknife_kernel(kernel).phi
    z_crit = normal_quantile(1.0 - gamma / 2.0)
    z25 = _residual_signs(series, 0.25, np.nan_to_num(p25.raw.values, nan=np.inf))
    z75 = _residual_signs(series, 0.75, np.nan_to_num(p75.raw.values, nan=np.inf))
    size = grid.size
    sig = np.full(size, np.nan)
    dens = np.full(size, np.nan)
    m_arr = np.zeros(size, dtype=int)
    h_arr = np.full(size, np.nan)
    sfl = np.zeros(size, dtype=bool)
    dfl = np.zeros(size, dtype=bool)
    lower = np.full(size, np.nan)
    upper = np.full(size, np.nan)
    flags = []
    for k, t in enumerate(grid):
        f = []
        be = float(b_eff[k])
        boundary = t < be - 1e-12 or t > 1.0 - be + 1e-12
        if boundary:
            f.append("boundary")
        if center.crossing[k]:
            f.append("crossing")
        if not np.isfinite(vals[k]):
            f.append("missing")
            flags.append(_flags_join(f))
            continue
        nb = neighborhood(n, t, be)
        m = block_length(nb.size, lam)
        m_arr[k] = m
        if nb.size <= m:
            f.append("small_neighborhood")
            flags.append(_flags_join(f))
            continue
        x = series.values[nb.slice]
        h = silverman_bandwidth(x, h_scale)
        if not h > 0:
            h = DENSITY_FLOOR
            f.append("h_floor")
        fs = []
        for alpha, parts, bg in ((0.25, p25, b25g), (0.75, p75, b75g)):
            q = _qhat_at(series, alpha, parts.raw, t, float(bg[k]), kernel)
            fd = _density_raw(x, q, h, kernel_sharp)
            if fd < DENSITY_FLOOR:
                fd = DENSITY_FLOOR
                dfl[k] = True
            fs.append(fd)
        if dfl[k]:
            f.append("density_floor")
        s2 = iqr_variance(z75[nb.slice], z25[nb.slice], fs[1], fs[0], m)
        if s2 < SIGMA_FLOOR:
            s2 = SIGMA_FLOOR
            sfl[k] = True
            f.append("sigma_floor")
        sig[k], dens[k], h_arr[k] = s2, min(fs), h
        if not (boundary and exclude_boundary):
            hw = z_crit * math.sqrt(phi_star * s2) / math.sqrt(n * be)
            lower[k] = vals[k] - hw
            upper[k] = vals[k] + hw
        flags.append(_flags_join(f))
    plug = PlugIns(sig, dens, m_arr, h_arr, sfl, dfl)
    return PointwiseBand(center, lower, upper, gamma, plug, b_eff.copy(), flags)
