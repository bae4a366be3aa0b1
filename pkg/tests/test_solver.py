import itertools

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from nsquant.errors import DegenerateDesignError, InsufficientSupportError
from nsquant.kernel import EPANECHNIKOV
from nsquant.solver import (LocalFitProblem, UnitTimeSeries, check_loss, enumerate_vertices,
                            fit_local_constant, fit_local_linear, fit_weighted, fit_weighted_constant,
                            local_weights, psi)


def oracle_min_loss(x, y, w, alpha):
    """Minimum check loss over every two-point line and every flat line through a point."""
    keep = w > 0
    x, y, w = x[keep], y[keep], w[keep]
    best = np.inf

    def loss(b0, b1):
        r = y - b0 - b1 * x
        return float(np.sum(w * np.where(r > 0, alpha * r, (alpha - 1) * r)))

    for i, j in itertools.combinations(range(len(x)), 2):
        if x[i] != x[j]:
            b1 = (y[j] - y[i]) / (x[j] - x[i])
            best = min(best, loss(y[i] - b1 * x[i], b1))
    for i in range(len(x)):
        best = min(best, loss(y[i], 0.0))
    return best


def oracle_weighted_quantile(y, w, alpha):
    order = np.argsort(y, kind="stable")
    cw = np.cumsum(w[order])
    return y[order][np.searchsorted(cw, alpha * cw[-1] * (1 - 1e-12))]


def random_problem(rng, m=None):
    m = m or int(rng.integers(5, 41))
    n = int(rng.integers(m, 4 * m))
    t = float(rng.uniform(0, 1))
    b = (m / 2) / n
    series = UnitTimeSeries(rng.standard_t(3, n) + rng.uniform(-1, 1) * np.arange(n) / n)
    return LocalFitProblem(series, t, float(rng.uniform(0.05, 0.95)), b)


def test_check_loss_examples():
    assert check_loss(0.5, 2) == 1.0
    assert check_loss(0.3, -2) == pytest.approx(1.4)
    assert check_loss(0.9, 0) == 0.0


def test_psi_examples():
    assert psi(0.5, -3) == -0.5
    assert psi(0.3, 0) == pytest.approx(-0.7)
    assert psi(0.9, 1) == pytest.approx(0.9)


def test_constant_data():
    s = UnitTimeSeries(np.full(200, 3.5))
    fit = fit_local_linear(LocalFitProblem(s, 0.4, 0.8, 0.1))
    assert fit.qhat == 3.5 and fit.slope == 0.0 and fit.loss == 0.0


def test_exact_linear_data():
    n, t = 300, 0.37
    s = UnitTimeSeries(2 + 3 * (np.arange(1, n + 1) / n - t))
    fit = fit_local_linear(LocalFitProblem(s, t, 0.25, 0.1))
    assert fit.qhat == pytest.approx(2, abs=1e-12)
    assert fit.slope == pytest.approx(3, abs=1e-10)
    assert fit.loss <= 1e-9


def test_random_instances_match_oracle():
    rng = np.random.default_rng(11)
    for _ in range(40):
        p = random_problem(rng, m=25)
        sl, d, w = local_weights(p.series.n, p.t, p.bandwidth, p.kernel)
        y = p.series.values[sl]
        fit = fit_local_linear(p)
        assert fit.loss <= oracle_min_loss(d, y, w, p.alpha) + 1e-7


def test_enumeration_agrees_with_independent_oracle():
    rng = np.random.default_rng(5)
    for _ in range(20):
        m = 12
        x = np.sort(rng.uniform(-1, 1, m))
        y = rng.normal(size=m)
        w = rng.uniform(0.1, 1, m)
        a = float(rng.uniform(0.1, 0.9))
        assert enumerate_vertices(x, y, w, a).loss == pytest.approx(oracle_min_loss(x, y, w, a), abs=1e-10)


def test_enumeration_tie_break_is_lexicographic():
    # two points: every line through them is optimal only once; add symmetric ties
    x = np.array([-1.0, 0.0, 1.0])
    y = np.array([0.0, 0.0, 0.0])
    fit = enumerate_vertices(x, y, np.ones(3), 0.5)
    assert (fit.qhat, fit.slope) == (0.0, 0.0)


@settings(max_examples=60, deadline=None)
@given(ys=st.lists(st.integers(-3, 3), min_size=3, max_size=14),
       alpha=st.floats(0.05, 0.95), seed=st.integers(0, 10_000))
def test_ties_and_duplicates(ys, alpha, seed):
    rng = np.random.default_rng(seed)
    m = len(ys)
    x = rng.integers(-4, 5, m).astype(float)
    assume(np.unique(x).size >= 2)
    y = np.array(ys, dtype=float)
    w = rng.integers(1, 4, m).astype(float)
    fit = fit_weighted(x, y, w, alpha)
    assert fit.loss <= oracle_min_loss(x, y, w, alpha) + 1e-7
    res = y - fit.qhat - fit.slope * x
    assert fit.loss == pytest.approx(float(np.sum(w * check_loss(alpha, res))), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), shift=st.floats(-50, 50), scale=st.floats(0.1, 20))
def test_shift_scale_equivariance(seed, shift, scale):
    rng = np.random.default_rng(seed)
    p = random_problem(rng, m=30)
    base = fit_local_linear(p)
    q = LocalFitProblem(UnitTimeSeries(shift + scale * p.series.values), p.t, p.alpha, p.bandwidth)
    moved = fit_local_linear(q)
    # the minimiser may be non-unique; compare optimal losses and check the mapped point is optimal
    assert moved.loss == pytest.approx(scale * base.loss, rel=1e-9, abs=1e-9)
    sl, d, w = local_weights(q.series.n, q.t, q.bandwidth)
    mapped = np.sum(w * check_loss(p.alpha, q.series.values[sl] - (shift + scale * base.qhat) - scale * base.slope * d))
    assert mapped == pytest.approx(moved.loss, rel=1e-9, abs=1e-9)


def test_sign_flip_swaps_level():
    rng = np.random.default_rng(3)
    p = random_problem(rng, m=30)
    q = LocalFitProblem(UnitTimeSeries(-p.series.values), p.t, 1 - p.alpha, p.bandwidth)
    assert fit_local_linear(q).loss == pytest.approx(fit_local_linear(p).loss, rel=1e-9)


def test_warm_start_does_not_change_optimum():
    rng = np.random.default_rng(8)
    for _ in range(10):
        p = random_problem(rng)
        assert fit_local_linear(p, slope_init=50.0).loss == pytest.approx(fit_local_linear(p).loss, abs=1e-9)


def test_insufficient_support():
    s = UnitTimeSeries(np.arange(10.0))
    with pytest.raises(InsufficientSupportError):
        fit_local_linear(LocalFitProblem(s, 0.5, 0.5, 0.05))
    with pytest.raises(InsufficientSupportError):
        fit_weighted([0.0, 1.0], [1.0, 2.0], [1.0, 0.0], 0.5)


def test_single_time_point_design():
    fit = fit_weighted([0.2, 0.2, 0.2], [1.0, 5.0, 2.0], [1.0, 1.0, 1.0], 0.5)
    assert fit.degenerate and fit.qhat == 2.0 and fit.slope == 0.0
    with pytest.raises(DegenerateDesignError):
        enumerate_vertices([0.2, 0.2], [1.0, 2.0], [1.0, 1.0], 0.5)


def test_local_constant_examples():
    assert fit_weighted_constant([1.0, 2.0, 100.0], np.ones(3), 0.5).qhat == 2.0
    for a in (0.1, 0.5, 0.9):
        assert fit_weighted_constant([5.0], [1.0], a).qhat == 5.0
    with pytest.raises(InsufficientSupportError):
        fit_weighted_constant([1.0], [0.0], 0.5)


def test_local_constant_matches_accumulation_oracle():
    rng = np.random.default_rng(21)
    for _ in range(50):
        y = rng.normal(size=15).round(1)
        w = rng.uniform(0.05, 1, 15)
        a = float(rng.uniform(0.05, 0.95))
        assert fit_weighted_constant(y, w, a).qhat == oracle_weighted_quantile(y, w, a)


def test_local_fit_problem_constant_fit():
    s = UnitTimeSeries(np.array([4.0, 1.0, 3.0, 2.0, 5.0]))
    fit = fit_local_constant(LocalFitProblem(s, 0.6, 0.5, 1.0))
    sl, _, w = local_weights(5, 0.6, 1.0, EPANECHNIKOV)
    assert fit.qhat == oracle_weighted_quantile(s.values[sl], w, 0.5)


def test_series_validation():
    with pytest.raises(ValueError):
        UnitTimeSeries(np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        UnitTimeSeries(np.array([]))
    s = UnitTimeSeries([1.0, 2.0, 3.0, 4.0])
    assert s.n == 4
    assert np.allclose(s.times, [0.25, 0.5, 0.75, 1.0])
    with pytest.raises(ValueError):
        fit_local_linear(LocalFitProblem(s, 0.5, 1.2, 0.5))
