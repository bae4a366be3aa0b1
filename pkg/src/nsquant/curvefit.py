"""Quantile curves: raw local linear fits, second-stage smoothing, jackknife, IQR."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateWindowError, InsufficientSupportError
from .kernel import EPANECHNIKOV, KernelSpec
from .solver import UnitTimeSeries, as_series, fit_weighted, local_weights

STAGES = ("raw", "smoothed", "jackknifed")
FULL_GRID_MAX = 5000


def validate_grid(grid) -> np.ndarray:
    g = np.array(grid, dtype=float).ravel()
    if g.size == 0:
        raise ValueError("evaluation grid is empty")
    if np.any(~np.isfinite(g)) or g.min() < 0.0 or g.max() > 1.0:
        raise ValueError("grid points must lie in [0, 1]")
    if np.any(np.diff(g) <= 0):
        raise ValueError("grid must be strictly increasing")
    return g


def default_grid(n: int, m: int | None = None) -> np.ndarray:
    """``{i/n}`` for ``n <= 5000`` (or when ``m`` is None and n small), else ``m`` uniform points."""
    if m is None:
        if n <= FULL_GRID_MAX:
            return np.arange(1, n + 1) / n
        m = 1000
    return np.linspace(0.0, 1.0, m)


def _is_full_grid(grid: np.ndarray, n: int) -> bool:
    return grid.size == n and np.allclose(grid, np.arange(1, n + 1) / n, rtol=0, atol=1e-12)


@dataclass(frozen=True, eq=False)
class QuantileCurve:
    alpha: float
    grid: np.ndarray
    values: np.ndarray
    slopes: np.ndarray | None = None
    bandwidth: float | np.ndarray = float("nan")
    second_bandwidth: float | None = None
    stage: str = "raw"
    missing: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")

    def bandwidth_at(self, i: int) -> float:
        b = self.bandwidth
        return float(b[i]) if np.ndim(b) else float(b)

    def to_rows(self):
        for i, t in enumerate(self.grid):
            slope = self.slopes[i] if self.slopes is not None else float("nan")
            yield t, self.values[i], slope, self.stage, self.alpha, self.bandwidth_at(i)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,value,slope,stage,alpha,bandwidth\n")
            for t, v, s, st, a, b in self.to_rows():
                fh.write(f"{_fmt(t)},{_fmt(v)},{_fmt(s)},{st},{_fmt(a)},{_fmt(b)}\n")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "stage": self.stage,
            "bandwidth": np.asarray(self.bandwidth).tolist(),
            "second_bandwidth": self.second_bandwidth,
            "t": self.grid.tolist(),
            "value": _nan_to_none(self.values),
            "slope": None if self.slopes is None else _nan_to_none(self.slopes),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _nan_to_none(a):
    return [None if not math.isfinite(v) else float(v) for v in np.asarray(a, dtype=float)]


def _bandwidth_array(b, size: int) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(b, dtype=float), (size,))
    if np.any(~(arr > 0)) or np.any(arr > 1.0):
        raise ValueError("bandwidths must lie in (0, 1]")
    return arr


def estimate_raw_curve(series, alpha: float, b, kernel: KernelSpec = EPANECHNIKOV, grid=None,
                       mask=None) -> QuantileCurve:
    """Local linear quantile fit at every grid point.

    ``b`` is a scalar or one bandwidth per grid point.  Points whose window
    holds fewer than two weighted observations are left as NaN and marked
    in ``missing``.  With a boolean ``mask`` only the selected points are
    fitted; the rest stay NaN without being marked missing.
    """
    series = as_series(series)
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    grid = default_grid(series.n) if grid is None else validate_grid(grid)
    bw = _bandwidth_array(b, grid.size)
    values = np.full(grid.size, np.nan)
    slopes = np.full(grid.size, np.nan)
    missing = np.zeros(grid.size, dtype=bool)
    x = series.values
    slope0 = 0.0
    todo = np.ones(grid.size, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    for k, t in enumerate(grid):
        if not todo[k]:
            continue
        sl, d, w = local_weights(series.n, t, bw[k], kernel)
        try:
            fit = fit_weighted(d, x[sl], w, alpha, slope_init=slope0)
        except InsufficientSupportError:
            missing[k] = True
            continue
        values[k] = fit.qhat
        slopes[k] = fit.slope
        slope0 = fit.slope
    if missing[todo].all():
        raise InsufficientSupportError("no grid point has two weighted observations; bandwidth too small")
    b_out = float(bw[0]) if np.ndim(b) == 0 else bw.copy()
    return QuantileCurve(alpha, grid, values, slopes, b_out, None, "raw", missing)


def local_linear_weights(grid, n: int, bbar: float, kernel: KernelSpec = EPANECHNIKOV):
    """Matrix ``W[k, i] = w_n(t_k, i)`` of second-stage local linear weights.

    Rows whose denominator ``B2 B0 - B1^2`` degenerates are returned as NaN.
    """
    grid = np.asarray(grid, dtype=float)
    times = np.arange(1, n + 1) / n
    D = grid[:, None] - times[None, :]
    Kb = np.asarray(kernel(D / bbar), dtype=float)
    B0 = Kb.sum(axis=1)
    B1 = (D * Kb).sum(axis=1)
    B2 = (D * D * Kb).sum(axis=1)
    den = B2 * B0 - B1 * B1
    bad = ~(den > 1e-12 * np.maximum(B2 * B0, 1e-300))
    with np.errstate(divide="ignore", invalid="ignore"):
        W = Kb * (B2[:, None] - D * B1[:, None]) / den[:, None]
    W[bad] = np.nan
    return W


def second_stage_smooth(raw: QuantileCurve, bbar: float, kernel: KernelSpec = EPANECHNIKOV, grid=None) -> QuantileCurve:
    """Local linear re-smoothing of a raw curve evaluated on ``{i/n}``."""
    if raw.stage != "raw":
        raise ValueError("second-stage smoothing expects a raw curve")
    if not bbar > 0:
        raise ValueError("second-stage bandwidth must be positive")
    n = raw.grid.size
    if not _is_full_grid(raw.grid, n):
        raise ValueError("raw curve must be evaluated on the full grid {i/n}")
    if np.ndim(raw.bandwidth) == 0 and bbar >= raw.bandwidth:
        warnings.warn("second-stage bandwidth is not smaller than the first-stage bandwidth", stacklevel=2)
    grid = raw.grid if grid is None else validate_grid(grid)
    values = np.empty(grid.size)
    for start in range(0, grid.size, 512):
        sl = slice(start, start + 512)
        W = local_linear_weights(grid[sl], n, bbar, kernel)
        # zero weights must not propagate NaN from unfitted raw points
        values[sl] = np.where(W != 0, W * raw.values[None, :], 0.0).sum(axis=1)
        values[sl][np.isnan(W).any(axis=1)] = np.nan
    missing = ~np.isfinite(values)
    if missing.all():
        raise DegenerateWindowError("second-stage window degenerate at every grid point")
    return QuantileCurve(raw.alpha, grid, values, None, raw.bandwidth, bbar, "smoothed", missing)


@dataclass(frozen=True, eq=False)
class JackknifeParts:
    raw: QuantileCurve
    raw_wide: QuantileCurve
    smooth: QuantileCurve
    smooth_wide: QuantileCurve
    curve: QuantileCurve


def _near(full, grid, radius):
    """Mask of ``full`` points within ``radius`` of some grid point."""
    pos = np.searchsorted(grid, full)
    left = np.abs(full - grid[np.clip(pos - 1, 0, grid.size - 1)])
    right = np.abs(full - grid[np.clip(pos, 0, grid.size - 1)])
    return np.minimum(left, right) <= radius + 1e-12


def jackknife_parts(series, alpha: float, b, bbar=None, kernel: KernelSpec = EPANECHNIKOV, grid=None,
                    keep_radius: float = 0.0) -> JackknifeParts:
    """Raw, smoothed and jackknifed curves at first-stage bandwidths ``b`` and ``sqrt(2) b``.

    Raw fits are only computed where the second-stage window (or
    ``keep_radius``, for the ``b`` curve) reaches them from the grid.
    """
    series = as_series(series)
    full = np.arange(1, series.n + 1) / series.n
    b_full = np.asarray(b, dtype=float)
    if bbar is None:
        bbar = 0.5 * float(np.median(b_full))
    grid = default_grid(series.n) if grid is None else validate_grid(grid)
    reach = bbar * kernel.support_radius
    need = _near(full, grid, reach)
    need_b = need | _near(full, grid, keep_radius) if keep_radius > 0 else need
    raw = estimate_raw_curve(series, alpha, b_full, kernel, full, mask=need_b)
    raw_wide = estimate_raw_curve(series, alpha, math.sqrt(2.0) * b_full, kernel, full, mask=need)
    sm = second_stage_smooth(raw, bbar, kernel, grid)
    sm_wide = second_stage_smooth(raw_wide, bbar, kernel, grid)
    values = 2.0 * sm.values - sm_wide.values
    missing = ~np.isfinite(values)
    b_grid = raw.bandwidth if np.ndim(raw.bandwidth) == 0 else np.interp(grid, full, b_full)
    # slope of the first-stage fit, reported where a grid point is an observation time
    idx = np.rint(grid * series.n).astype(int)
    on_obs = (np.abs(grid * series.n - idx) < 1e-9) & (idx >= 1)
    slopes = np.full(grid.size, np.nan)
    slopes[on_obs] = raw.slopes[idx[on_obs] - 1]
    curve = QuantileCurve(alpha, grid, values, slopes, b_grid, bbar, "jackknifed", missing)
    return JackknifeParts(raw, raw_wide, sm, sm_wide, curve)


def jackknife_curve(series, alpha: float, b, bbar=None, kernel: KernelSpec = EPANECHNIKOV, grid=None) -> QuantileCurve:
    """``2 * smooth(b) - smooth(sqrt(2) b)``; ``bbar`` defaults to ``b / 2``.

    ``b`` may also be an array of bandwidths over ``{i/n}`` (local mode).
    """
    return jackknife_parts(series, alpha, b, bbar, kernel, grid).curve


@dataclass(frozen=True, eq=False)
class IqrCurve:
    grid: np.ndarray
    values: np.ndarray
    lower: QuantileCurve
    upper: QuantileCurve
    crossing: np.ndarray

    @property
    def stage(self) -> str:
        return self.upper.stage


def iqr_curve(series, b25, b75, bbar=None, kernel: KernelSpec = EPANECHNIKOV, grid=None) -> IqrCurve:
    q25 = jackknife_curve(series, 0.25, b25, bbar, kernel, grid)
    q75 = jackknife_curve(series, 0.75, b75, bbar, kernel, grid)
    vals = q75.values - q25.values
    return IqrCurve(q25.grid, vals, q25, q75, vals < 0)
