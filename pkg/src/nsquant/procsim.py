"""Simulators of locally stationary processes, quantile oracles and Monte Carlo harnesses.

Two families are provided:

* time-varying linear filters ``X_i = sum_j a_j(i/n) eps_{i-j}`` (finite order), and
* threshold autoregressions ``zeta_i(t) = a(t) zeta^+ + b(t) (-zeta)^+ + eps_i``
  evaluated at frozen ``t = i/n`` by an ``M``-step backward iteration over
  the shared innovation stream.

Innovations for indices ``i >= 1`` and for the pre-sample past come from two
separate child streams of the seed, the past one drawn backwards in time, so
lengthening the burn-in or filter order never reshuffles later draws.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtri

from .bandwidth import select_bandwidth
from .curvefit import jackknife_parts
from .errors import SpecValidationError
from .inference import normal_quantile, pointwise_band
from .kernel import EPANECHNIKOV, KernelSpec
from .solver import UnitTimeSeries, fit_local_constant, fit_local_linear, LocalFitProblem

VALIDATION_GRID = np.linspace(0.0, 1.0, 1000)


# -- coefficient functions -------------------------------------------------

@dataclass(frozen=True)
class CoefFunction:
    """``poly``: ``sum_k p_k t^k``; ``trig``: ``p_0 + sum_k p_{2k-1} cos(k pi t) + p_{2k} sin(k pi t)``."""

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in ("poly", "trig"):
            raise SpecValidationError(f"unknown coefficient type {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.kind == "poly":
            out = np.zeros_like(t)
            for c in reversed(p):
                out = out * t + c
            return out
        out = np.full_like(t, p[0] if p else 0.0)
        for k in range(1, (len(p) - 1) // 2 + 2):
            if 2 * k - 1 < len(p):
                out = out + p[2 * k - 1] * np.cos(k * math.pi * t)
            if 2 * k < len(p):
                out = out + p[2 * k] * np.sin(k * math.pi * t)
        return out

    def to_dict(self):
        return {"type": self.kind, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["type"], tuple(d.get("params", ())))


def const(c: float) -> CoefFunction:
    return CoefFunction("poly", (c,))


def _eval(fn, t):
    return np.broadcast_to(np.asarray(fn(np.asarray(t, dtype=float)), dtype=float), np.shape(t))


@dataclass(frozen=True)
class Innovation:
    dist: str = "normal"
    loc: float = 0.0
    scale: float = 1.0
    df: float = 5.0

    def __post_init__(self):
        if self.dist not in ("normal", "student_t"):
            raise SpecValidationError(f"unknown innovation distribution {self.dist!r}")
        if self.dist == "student_t" and not self.df > 0:
            raise SpecValidationError("student_t needs df > 0")
        if not self.scale > 0:
            raise SpecValidationError("innovation scale must be positive")

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.dist == "normal":
            return self.loc + self.scale * rng.standard_normal(size)
        return self.loc + self.scale * rng.standard_t(self.df, size)

    def to_dict(self):
        d = {"dist": self.dist, "loc": self.loc, "scale": self.scale}
        if self.dist == "student_t":
            d["df"] = self.df
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("dist", "normal"), float(d.get("loc", 0.0)), float(d.get("scale", 1.0)),
                   float(d.get("df", 5.0)))


@dataclass(frozen=True, eq=False)
class LsLinearSpec:
    coefficients: Sequence[Callable]
    innovation: Innovation = field(default_factory=Innovation)

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    def validate(self) -> None:
        if not self.coefficients:
            raise SpecValidationError("linear process needs at least a_0")
        vals = np.array([_eval(a, VALIDATION_GRID) for a in self.coefficients])
        if not np.all(np.isfinite(vals)):
            raise SpecValidationError("coefficient functions must be finite on [0, 1]")
        if np.min(np.abs(vals[0])) <= 0:
            raise SpecValidationError("min_t |a_0(t)| > 0 violated")

    def scale_at(self, t) -> np.ndarray:
        vals = np.array([_eval(a, t) for a in self.coefficients])
        return np.sqrt((vals**2).sum(axis=0))


@dataclass(frozen=True, eq=False)
class TvtarSpec:
    a_fn: Callable
    b_fn: Callable
    innovation: Innovation = field(default_factory=Innovation)
    burn_in: int = 200

    def contraction(self) -> float:
        """Lipschitz modulus ``sup_t max(|a(t)|, |b(t)|)`` of the threshold map."""
        a = np.abs(_eval(self.a_fn, VALIDATION_GRID))
        b = np.abs(_eval(self.b_fn, VALIDATION_GRID))
        return float(np.max(np.maximum(a, b)))

    def contraction_sum(self) -> float:
        """The cruder bound ``sup_t (|a(t)| + |b(t)|)``."""
        a = np.abs(_eval(self.a_fn, VALIDATION_GRID))
        b = np.abs(_eval(self.b_fn, VALIDATION_GRID))
        return float(np.max(a + b))

    def validate(self, strict: bool = False) -> None:
        """Check the contraction condition; ``strict`` uses the ``|a| + |b|`` bound."""
        if strict:
            chi, label = self.contraction_sum(), "sup|a|+|b|"
        else:
            chi, label = self.contraction(), "sup max(|a|,|b|)"
        if not math.isfinite(chi) or chi >= 1.0:
            raise SpecValidationError(f"contraction condition violated: {label} = {chi:.4g} >= 1")
        if self.burn_in < 50:
            raise SpecValidationError("burn-in M must be at least 50")


def spec_from_dict(d: dict):
    kind = d.get("type", "linear")
    innov = Innovation.from_dict(d.get("innovation", {}))
    if kind == "linear":
        coefs = [CoefFunction.from_dict(c) for c in d["coefficients"]]
        return LsLinearSpec(coefs, innov)
    if kind == "tvtar":
        return TvtarSpec(CoefFunction.from_dict(d["a"]), CoefFunction.from_dict(d["b"]), innov,
                         int(d.get("burn_in", 200)))
    raise SpecValidationError(f"unknown process type {kind!r}")


def spec_to_dict(spec) -> dict:
    if isinstance(spec, LsLinearSpec):
        return {"type": "linear", "coefficients": [c.to_dict() for c in spec.coefficients],
                "innovation": spec.innovation.to_dict()}
    return {"type": "tvtar", "a": spec.a_fn.to_dict(), "b": spec.b_fn.to_dict(),
            "innovation": spec.innovation.to_dict(), "burn_in": spec.burn_in}


# -- seeds and innovation streams -------------------------------------------

def _seed_seq(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def child_seed(seed, *key: int) -> np.random.SeedSequence:
    """Counter-based child of ``seed``; independent of call order."""
    ss = _seed_seq(seed)
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + tuple(key))


def innovation_streams(innovation: Innovation, n: int, past: int, seed):
    """``(eps_1..eps_n, [eps_0, eps_-1, ...])`` of lengths ``n`` and ``past``."""
    present = innovation.draw(np.random.default_rng(child_seed(seed, 0)), n)
    back = innovation.draw(np.random.default_rng(child_seed(seed, 1)), past)
    return present, back


def _stream(innovation, n, past, seed):
    present, back = innovation_streams(innovation, n, past, seed)
    return np.concatenate((back[::-1], present))


def gen_ls_linear(spec: LsLinearSpec, n: int, seed) -> UnitTimeSeries:
    spec.validate()
    J = spec.order
    e = _stream(spec.innovation, n, J, seed)  # e[J + i - 1] = eps_i
    t = np.arange(1, n + 1) / n
    x = np.zeros(n)
    for j, a in enumerate(spec.coefficients):
        x += _eval(a, t) * e[J - j:J - j + n]
    return UnitTimeSeries(x)


def _tar_step(z, a, b, e):
    return a * np.maximum(z, 0.0) + b * np.maximum(-z, 0.0) + e


def gen_tvtar(spec: TvtarSpec, n: int, seed) -> UnitTimeSeries:
    spec.validate()
    M = spec.burn_in
    e = _stream(spec.innovation, n, M - 1, seed)  # e[M - 2 + i] = eps_i
    t = np.arange(1, n + 1) / n
    a = _eval(spec.a_fn, t)
    b = _eval(spec.b_fn, t)
    z = np.zeros(n)
    for k in range(M):
        z = _tar_step(z, a, b, e[k:k + n])
    return UnitTimeSeries(z)


def simulate(spec, n: int, seed) -> UnitTimeSeries:
    if isinstance(spec, LsLinearSpec):
        return gen_ls_linear(spec, n, seed)
    return gen_tvtar(spec, n, seed)


# -- quantile oracles -----------------------------------------------------

def oracle_quantile_linear_gaussian(spec: LsLinearSpec, t, alpha: float):
    if not isinstance(spec, LsLinearSpec) or spec.innovation.dist != "normal":
        raise NotImplementedError("closed-form oracle needs a linear spec with normal innovations")
    vals = np.array([_eval(a, t) for a in spec.coefficients])
    inn = spec.innovation
    mean = inn.loc * vals.sum(axis=0)
    return mean + inn.scale * ndtri(alpha) * np.sqrt((vals**2).sum(axis=0))


@dataclass(frozen=True)
class MCQuantile:
    value: float
    se: float
    draws: int


def frozen_draws(spec, t: float, draws: int, seed) -> np.ndarray:
    """Independent draws of the stationary marginal ``zeta(t)``."""
    rng = np.random.default_rng(_seed_seq(seed))
    if isinstance(spec, LsLinearSpec):
        spec.validate()
        out = np.zeros(draws)
        for a in spec.coefficients:
            out += float(_eval(a, t)) * spec.innovation.draw(rng, draws)
        return out
    spec.validate()
    a = float(_eval(spec.a_fn, t))
    b = float(_eval(spec.b_fn, t))
    z = np.zeros(draws)
    for _ in range(spec.burn_in):
        z = _tar_step(z, a, b, spec.innovation.draw(rng, draws))
    return z


def empirical_quantile(x, alpha: float) -> MCQuantile:
    """Sample alpha-quantile with a distribution-free standard error.

    The error comes from the order statistics bracketing a 95% binomial
    interval for the quantile's rank.
    """
    x = np.sort(np.asarray(x, dtype=float))
    N = x.size
    k = max(math.ceil(alpha * N) - 1, 0)
    z = 1.959963984540054
    half = z * math.sqrt(N * alpha * (1 - alpha))
    lo = min(max(int(math.floor(alpha * N - half)), 0), N - 1)
    hi = min(max(int(math.ceil(alpha * N + half)), 0), N - 1)
    return MCQuantile(float(x[k]), float((x[hi] - x[lo]) / (2 * z)), N)


def oracle_quantile_mc(spec, t: float, alpha: float, draws: int = 100_000, seed=0) -> MCQuantile:
    if draws < 10_000:
        raise ValueError("Monte Carlo oracle needs at least 10^4 draws")
    return empirical_quantile(frozen_draws(spec, t, draws, seed), alpha)


def true_quantile(spec, t, alpha: float, draws: int = 200_000, seed=12345):
    """Closed form when available, otherwise a Monte Carlo oracle per point."""
    try:
        return np.asarray(oracle_quantile_linear_gaussian(spec, t, alpha), dtype=float)
    except NotImplementedError:
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        vals = [oracle_quantile_mc(spec, float(s), alpha, draws, child_seed(seed, k)).value
                for k, s in enumerate(ts)]
        return np.asarray(vals).reshape(np.shape(t))


# -- experiment harnesses --------------------------------------------------

def n_workers() -> int:
    try:
        cap = int(os.environ.get("NSQUANT_THREADS", "0"))
    except ValueError:
        cap = 0
    cpus = os.cpu_count() or 1
    return max(1, min(cap, cpus) if cap > 0 else cpus)


def run_replications(func: Callable[[int], object], R: int, workers: int | None = None) -> dict:
    """``{r: func(r)}``; exceptions are stored in place of results."""
    workers = n_workers() if workers is None else workers

    def safe(r):
        try:
            return func(r)
        except Exception as exc:  # noqa: BLE001 - recorded per replication
            return exc

    if workers <= 1 or R <= 1:
        return {r: safe(r) for r in range(R)}
    with ThreadPoolExecutor(workers) as pool:
        return dict(zip(range(R), pool.map(safe, range(R))))


@dataclass(frozen=True, eq=False)
class ExperimentSpec:
    process: object
    n: int
    alpha: float = 0.5
    gamma: float = 0.05
    replications: int = 100
    test_points: tuple = (0.25, 0.5, 0.75)
    seed: int = 0
    bandwidth: float | None = None
    second_ratio: float = 0.5
    kernel: KernelSpec = EPANECHNIKOV

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")


@dataclass(frozen=True, eq=False)
class CoverageReport:
    """Per-replication standardized errors; coverage for any nominal level follows."""

    test_points: np.ndarray
    truth: np.ndarray
    stat: np.ndarray  # |center - truth| / (half-width / z), NaN for failures
    half_width: np.ndarray
    bandwidths: np.ndarray
    gamma: float
    failures: int
    errors: list

    @property
    def replications(self) -> int:
        return self.stat.shape[0]

    def coverage(self, gamma: float | None = None) -> np.ndarray:
        gamma = self.gamma if gamma is None else gamma
        z = normal_quantile(1.0 - gamma / 2.0)
        ok = np.isfinite(self.stat)
        cov = np.where(ok, self.stat <= z, False).sum(axis=0)
        cnt = ok.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return cov / cnt

    def mean_width(self, gamma: float | None = None) -> np.ndarray:
        gamma = self.gamma if gamma is None else gamma
        scale = normal_quantile(1.0 - gamma / 2.0) / normal_quantile(1.0 - self.gamma / 2.0)
        hw = self.half_width
        ok = np.isfinite(hw)
        with np.errstate(invalid="ignore", divide="ignore"):
            return 2.0 * scale * np.where(ok, hw, 0.0).sum(axis=0) / ok.sum(axis=0)

    def to_dict(self) -> dict:
        return {
            "replications": self.replications,
            "failures": self.failures,
            "gamma": self.gamma,
            "t": self.test_points.tolist(),
            "truth": self.truth.tolist(),
            "coverage": [None if not np.isfinite(c) else float(c) for c in self.coverage()],
            "mean_width": [None if not np.isfinite(c) else float(c) for c in self.mean_width()],
            "mean_bandwidth": float(np.nanmean(self.bandwidths)) if np.isfinite(self.bandwidths).any() else None,
            "errors": self.errors[:20],
        }


def coverage_study(spec: ExperimentSpec, workers: int | None = None) -> CoverageReport:
    pts = np.asarray(spec.test_points, dtype=float)
    truth = np.asarray(true_quantile(spec.process, pts, spec.alpha), dtype=float)
    z = normal_quantile(1.0 - spec.gamma / 2.0)

    def one(r):
        x = simulate(spec.process, spec.n, child_seed(spec.seed, r))
        if spec.bandwidth is None:
            b = select_bandwidth(x, spec.alpha, spec.kernel).b_star
        else:
            b = spec.bandwidth
        band = pointwise_band(x, spec.alpha, b, spec.second_ratio * b, spec.gamma, spec.kernel, pts)
        hw = band.half_width
        return np.abs(band.values - truth) / (hw / z), hw, b

    out = run_replications(one, spec.replications, workers)
    R, P_ = spec.replications, pts.size
    stat = np.full((R, P_), np.nan)
    hw = np.full((R, P_), np.nan)
    bws = np.full(R, np.nan)
    errors = []
    for r in range(R):
        res = out[r]
        if isinstance(res, Exception):
            errors.append(f"replication {r}: {type(res).__name__}: {res}")
            continue
        stat[r], hw[r], bws[r] = res
    return CoverageReport(pts, truth, stat, hw, bws, spec.gamma, len(errors), errors)


@dataclass(frozen=True)
class EstimatorSummary:
    bias: float
    bias_se: float
    rmse: float
    rmse_se: float


def _summarize(err) -> EstimatorSummary:
    err = np.asarray(err, dtype=float)
    err = err[np.isfinite(err)]
    R = err.size
    mse = float(np.mean(err**2))
    rmse = math.sqrt(mse)
    mse_se = float(np.std(err**2, ddof=1) / math.sqrt(R)) if R > 1 else float("nan")
    return EstimatorSummary(
        float(err.mean()),
        float(err.std(ddof=1) / math.sqrt(R)) if R > 1 else float("nan"),
        rmse,
        mse_se / (2 * rmse) if rmse > 0 else float("nan"),
    )


@dataclass(frozen=True)
class BoundaryReport:
    t: float
    truth: float
    local_linear: EstimatorSummary
    local_constant: EstimatorSummary
    replications: int
    mean_bandwidth: float

    @property
    def ratio(self) -> float:
        return self.local_linear.rmse / self.local_constant.rmse


def boundary_experiment(spec, alpha: float, n: int, R: int, b: float | None = None, seed=0,
                        t: float = 0.0, kernel: KernelSpec = EPANECHNIKOV, workers=None) -> BoundaryReport:
    """Local linear vs local constant error at a boundary point over ``R`` replications.

    ``b=None`` selects the bandwidth per replication.
    """
    truth = float(true_quantile(spec, t, alpha))

    def one(r):
        x = simulate(spec, n, child_seed(seed, r))
        bw = select_bandwidth(x, alpha, kernel).b_star if b is None else b
        p = LocalFitProblem(x, t, alpha, bw, kernel)
        return fit_local_linear(p).qhat - truth, fit_local_constant(p).qhat - truth, bw

    out = run_replications(one, R, workers)
    res = np.array([out[r] for r in range(R) if not isinstance(out[r], Exception)])
    return BoundaryReport(t, truth, _summarize(res[:, 0]), _summarize(res[:, 1]), len(res),
                          float(res[:, 2].mean()))


@dataclass(frozen=True)
class BiasReport:
    t: float
    truth: float
    two_stage: EstimatorSummary
    jackknifed: EstimatorSummary
    replications: int


def bias_experiment(spec, alpha: float, n: int, R: int, b: float | None = None, bbar: float | None = None,
                    seed=0, t: float = 0.5, kernel: KernelSpec = EPANECHNIKOV, workers=None) -> BiasReport:
    """Error of the two-stage and jackknifed estimates at ``t``."""
    truth = float(true_quantile(spec, t, alpha))
    grid = np.array([t])

    def one(r):
        x = simulate(spec, n, child_seed(seed, r))
        bw = select_bandwidth(x, alpha, kernel).b_star if b is None else b
        parts = jackknife_parts(x, alpha, bw, bbar if bbar is not None else bw / 2, kernel, grid)
        return parts.smooth.values[0] - truth, parts.curve.values[0] - truth

    out = run_replications(one, R, workers)
    res = np.array([out[r] for r in range(R) if not isinstance(out[r], Exception)])
    return BiasReport(t, truth, _summarize(res[:, 0]), _summarize(res[:, 1]), len(res))


def curve_mse(spec, alpha: float, n: int, R: int, seed=0, t_range=(0.1, 0.9), points: int = 41,
              b: float | None = None, kernel: KernelSpec = EPANECHNIKOV, workers=None) -> tuple[float, float]:
    """Mean (over replications) squared error of the jackknifed curve on a grid in ``t_range``.

    Returns ``(mse, standard error)``.
    """
    grid = np.linspace(t_range[0], t_range[1], points)
    truth = np.asarray(true_quantile(spec, grid, alpha), dtype=float)

    def one(r):
        x = simulate(spec, n, child_seed(seed, r))
        bw = select_bandwidth(x, alpha, kernel).b_star if b is None else b
        cur = jackknife_parts(x, alpha, bw, bw / 2, kernel, grid).curve
        return float(np.nanmean((cur.values - truth) ** 2))

    out = run_replications(one, R, workers)
    vals = np.array([out[r] for r in range(R) if not isinstance(out[r], Exception)])
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size))
