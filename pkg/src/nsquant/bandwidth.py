"""First-stage bandwidth selection with a dependence correction."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.stats import norm

from .curvefit import estimate_raw_curve, validate_grid
from .errors import InsufficientDataError
from .inference import SIGMA_FLOOR, block_variance, long_run_variance
from .kernel import EPANECHNIKOV, KernelSpec
from .solver import as_series, psi

B_MAX = 0.45
CURVATURE_FLOOR = 1e-8


@dataclass(frozen=True)
class BandwidthSelection:
    alpha: float
    b_yj: float
    sigma_tilde_sq: float
    rho_star: float
    b_star: float
    m_tilde: int
    pilot_bandwidth: float
    clamped: bool = False
    sigma_floored: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class LocalBandwidthProfile:
    alpha: float
    grid: np.ndarray
    sigma_sq: np.ndarray
    rho_star_local: np.ndarray
    b_local: np.ndarray
    b_yj: float
    clamped: np.ndarray


def quantile_multiplier(alpha: float) -> float:
    """``{alpha(1-alpha) / phi(Phi^{-1}(alpha))^2}^{1/5}``; symmetric in alpha."""
    # rounding makes alpha and 1 - alpha land on the same float
    a = round(min(alpha, 1.0 - alpha), 12)
    z = norm.ppf(a)
    return (a * (1.0 - a) / norm.pdf(z) ** 2) ** 0.2


def mean_regression_bandwidth(series, kernel: KernelSpec = EPANECHNIKOV) -> float:
    """Plug-in bandwidth for a local linear mean fit, from a global quartic pilot."""
    x = as_series(series).values
    n = x.size
    t = np.arange(1, n + 1) / n
    coef = P.polyfit(t, x, 4)
    res = x - P.polyval(t, coef)
    s2 = float(res @ res) / (n - 5)
    d2 = P.polyder(coef, 2)
    curv = float(P.polyval(1.0, P.polyint(P.polymul(d2, d2))))
    curv = max(curv, CURVATURE_FLOOR)
    return (s2 * kernel.phi / (n * kernel.mu2**2 * curv)) ** 0.2


def yj_rule_of_thumb(series, alpha: float, kernel: KernelSpec = EPANECHNIKOV) -> float:
    series = as_series(series)
    if series.n < 20:
        raise InsufficientDataError("rule-of-thumb bandwidth needs n >= 20")
    return mean_regression_bandwidth(series, kernel) * quantile_multiplier(alpha)


def _clamp(b: float, n: int) -> tuple[float, bool]:
    lo = 2.0 / n
    c = min(max(b, lo), B_MAX)
    return c, c != b


def variance_correction(series, alpha: float, pilot_b: float, kernel: KernelSpec = EPANECHNIKOV,
                        pilot_curve=None) -> tuple[float, float, bool]:
    """Return ``(rho_star, sigma_tilde_sq, floored)`` for the pilot bandwidth."""
    series = as_series(series)
    n = series.n
    if n < 27:
        raise InsufficientDataError("variance correction needs n >= 27")
    if pilot_curve is None:
        pilot_b, _ = _clamp(pilot_b, n)
        pilot_curve = estimate_raw_curve(series, alpha, pilot_b, kernel, np.arange(1, n + 1) / n)
    z = psi(alpha, series.values - np.nan_to_num(pilot_curve.values, nan=np.inf))
    m = int(math.floor(n ** (1.0 / 3.0) + 1e-9))
    s2 = block_variance(z, m)
    floored = s2 <= SIGMA_FLOOR
    if floored:
        s2 = SIGMA_FLOOR
    return (s2 / (alpha * (1.0 - alpha))) ** 0.2, s2, floored


def select_bandwidth(series, alpha: float, kernel: KernelSpec = EPANECHNIKOV) -> BandwidthSelection:
    series = as_series(series)
    n = series.n
    if n < 27:
        raise InsufficientDataError("bandwidth selection needs n >= 27")
    b_yj = yj_rule_of_thumb(series, alpha, kernel)
    rho, s2, floored = variance_correction(series, alpha, b_yj, kernel)
    b_star, clamped = _clamp(b_yj * rho, n)
    m = int(math.floor(n ** (1.0 / 3.0) + 1e-9))
    return BandwidthSelection(alpha, b_yj, s2, rho, b_star, m, _clamp(b_yj, n)[0], clamped, floored)


def local_bandwidth_profile(series, alpha: float, kernel: KernelSpec = EPANECHNIKOV, grid=None,
                            lam: float = 1.0) -> LocalBandwidthProfile:
    """Pointwise correction ``b_yj * (sigma^2(t) / (alpha(1-alpha)))^{1/5}``."""
    series = as_series(series)
    n = series.n
    full = np.arange(1, n + 1) / n
    grid = full if grid is None else validate_grid(grid)
    b_yj = yj_rule_of_thumb(series, alpha, kernel)
    pilot_b, _ = _clamp(b_yj, n)
    pilot = estimate_raw_curve(series, alpha, pilot_b, kernel, full)
    sig = np.array([long_run_variance(series, alpha, pilot, t, pilot_b, lam=lam) for t in grid])
    sig = np.maximum(sig, SIGMA_FLOOR)
    rho = (sig / (alpha * (1.0 - alpha))) ** 0.2
    raw_b = b_yj * rho
    b_local = np.clip(raw_b, 2.0 / n, B_MAX)
    return LocalBandwidthProfile(alpha, grid, sig, rho, b_local, b_yj, b_local != raw_b)
