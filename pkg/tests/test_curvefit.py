import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsquant.bandwidth import select_bandwidth
from nsquant.curvefit import (default_grid, estimate_raw_curve, iqr_curve, jackknife_curve, jackknife_parts,
                              local_linear_weights, second_stage_smooth, validate_grid)
from nsquant.errors import DegenerateWindowError, InsufficientSupportError
from nsquant.kernel import EPANECHNIKOV
from nsquant.procsim import LsLinearSpec, CoefFunction, child_seed, const, simulate
from nsquant.solver import UnitTimeSeries


def weight_oracle(t, n, bbar):
    """Second-stage local linear weights evaluated term by term."""
    times = [i / n for i in range(1, n + 1)]
    K = [0.75 * (1 - ((t - s) / bbar) ** 2) if abs((t - s) / bbar) <= 1 else 0.0 for s in times]
    B = [math.fsum(k * (t - s) ** j for k, s in zip(K, times)) for j in range(3)]
    den = B[2] * B[0] - B[1] ** 2
    return [k * (B[2] - (t - s) * B[1]) / den for k, s in zip(K, times)]


def noisy(n=400, seed=0):
    rng = np.random.default_rng(seed)
    return UnitTimeSeries(np.sin(3 * np.arange(1, n + 1) / n) + rng.standard_normal(n))


def test_constant_series_curve():
    s = UnitTimeSeries(np.full(150, 7.0))
    c = estimate_raw_curve(s, 0.3, 0.1)
    assert np.all(c.values == 7.0) and np.all(c.slopes == 0.0)
    assert np.allclose(jackknife_curve(s, 0.3, 0.1).values, 7.0, atol=1e-12)


def test_linear_trend_reproduced():
    n = 500
    s = UnitTimeSeries(np.arange(1, n + 1) / n)
    grid = np.linspace(0.2, 0.8, 13)
    c = estimate_raw_curve(s, 0.5, 0.1, grid=grid)
    assert np.allclose(c.values, grid, atol=1e-9)
    assert np.allclose(c.slopes, 1.0, atol=1e-9)


def test_raw_median_calibration():
    # bandwidth chosen by the package's own selector, as in the fitting pipeline
    hits = 0
    for r in range(100):
        x = simulate(LsLinearSpec([const(1.0)]), 2000, child_seed(31, r))
        b = select_bandwidth(x, 0.5).b_star
        hits += abs(estimate_raw_curve(x, 0.5, b, grid=[0.5]).values[0]) <= 0.1
    assert hits >= 95


def test_tiny_bandwidth_raises():
    with pytest.raises(InsufficientSupportError):
        estimate_raw_curve(noisy(50), 0.5, 0.001)


def test_invalid_inputs():
    s = noisy(50)
    with pytest.raises(ValueError):
        estimate_raw_curve(s, 1.0, 0.1)
    with pytest.raises(ValueError):
        estimate_raw_curve(s, 0.5, 1.5)
    with pytest.raises(ValueError):
        validate_grid([0.2, 0.1])
    with pytest.raises(ValueError):
        validate_grid([-0.1, 0.5])


def test_default_grid():
    assert np.allclose(default_grid(10), np.arange(1, 11) / 10)
    assert default_grid(6000).size == 1000


def test_weights_match_independent_formula():
    n, bbar = 60, 0.13
    grid = np.array([0.05, 0.3, 0.5, 0.97])
    W = local_linear_weights(grid, n, bbar)
    for k, t in enumerate(grid):
        assert np.allclose(W[k], weight_oracle(t, n, bbar), atol=1e-10, rtol=0)


def test_smoother_matches_oracle_on_arbitrary_curve():
    s = noisy(80, 4)
    raw = estimate_raw_curve(s, 0.5, 0.2)
    sm = second_stage_smooth(raw, 0.1)
    for k in (0, 20, 40, 79):
        expect = math.fsum(w * v for w, v in zip(weight_oracle(raw.grid[k], 80, 0.1), raw.values))
        assert sm.values[k] == pytest.approx(expect, abs=1e-10)
    assert sm.stage == "smoothed"


def test_smoother_reproduces_linear_and_constant():
    n = 300
    g = np.arange(1, n + 1) / n
    raw = estimate_raw_curve(UnitTimeSeries(1.5 - 2 * g), 0.5, 0.2)
    sm = second_stage_smooth(raw, 0.05)
    assert np.allclose(sm.values, 1.5 - 2 * g, atol=1e-9)
    const_raw = estimate_raw_curve(UnitTimeSeries(np.full(n, 4.0)), 0.5, 0.2)
    assert np.allclose(second_stage_smooth(const_raw, 0.05).values, 4.0, atol=1e-12)


def test_smoother_degenerate_window():
    raw = estimate_raw_curve(noisy(100), 0.5, 0.2)
    with pytest.raises(DegenerateWindowError):
        second_stage_smooth(raw, 0.1 / 100)


def test_smoother_warns_on_large_second_bandwidth():
    raw = estimate_raw_curve(noisy(100), 0.5, 0.1)
    with pytest.warns(UserWarning):
        second_stage_smooth(raw, 0.2)


def test_smoother_needs_full_raw_grid():
    raw = estimate_raw_curve(noisy(100), 0.5, 0.1, grid=[0.5])
    with pytest.raises(ValueError):
        second_stage_smooth(raw, 0.05)


def test_jackknife_identity():
    s = noisy(400, 2)
    parts = jackknife_parts(s, 0.7, 0.2, 0.05)
    assert np.allclose(parts.curve.values, 2 * parts.smooth.values - parts.smooth_wide.values, atol=1e-12, rtol=0)
    assert parts.raw.bandwidth == 0.2
    assert parts.raw_wide.bandwidth == pytest.approx(0.2 * math.sqrt(2))
    assert parts.curve.stage == "jackknifed"


def test_jackknife_equal_inputs():
    n = 400
    g = np.arange(1, n + 1) / n
    parts = jackknife_parts(UnitTimeSeries(0.5 + g), 0.5, 0.1, 0.04)
    interior = (g > 0.1) & (g < 0.9)
    assert np.allclose(parts.raw.values[interior], parts.raw_wide.values[interior], atol=1e-9)
    assert np.allclose(parts.curve.values[interior], 0.5 + g[interior], atol=1e-9)


def test_lazy_fitting_matches_full_fit():
    s = noisy(300, 9)
    grid = np.array([0.3, 0.31, 0.7])
    lazy = jackknife_curve(s, 0.4, 0.15, 0.06, grid=grid)
    full = jackknife_curve(s, 0.4, 0.15, 0.06)
    idx = np.rint(grid * 300).astype(int) - 1
    assert np.allclose(lazy.values, full.values[idx], atol=1e-12, rtol=0)


def test_local_bandwidth_array_accepted():
    s = noisy(200, 1)
    b = np.linspace(0.15, 0.25, 200)
    c = jackknife_curve(s, 0.5, b)
    assert np.all(np.isfinite(c.values))
    assert np.ndim(c.bandwidth) == 1


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 1000), shift=st.floats(-20, 20), scale=st.floats(0.1, 10))
def test_curve_stages_equivariant(seed, shift, scale):
    s = noisy(150, seed)
    moved = UnitTimeSeries(shift + scale * s.values)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = jackknife_parts(s, 0.3, 0.2, 0.06)
        b = jackknife_parts(moved, 0.3, 0.2, 0.06)
    for ca, cb in ((a.raw, b.raw), (a.smooth, b.smooth), (a.curve, b.curve)):
        ok = np.isfinite(ca.values)
        assert np.max(np.abs(cb.values[ok] - (shift + scale * ca.values[ok]))) <= 1e-9 * max(1, scale, abs(shift))


def test_iqr_constant_and_positive():
    z = iqr_curve(UnitTimeSeries(np.full(200, 2.0)), 0.1, 0.1)
    assert np.allclose(z.values, 0.0, atol=1e-12)
    iq = iqr_curve(noisy(400), 0.2, 0.2)
    assert np.all(iq.values[np.isfinite(iq.values)] > 0)


@pytest.mark.slow
def test_iqr_tracks_scale():
    spec = LsLinearSpec([CoefFunction("poly", (1.0, 1.0))])
    grid = np.array([0.3, 0.5, 0.7])
    vals = np.mean([iqr_curve(simulate(spec, 2000, child_seed(77, r)), 0.2, 0.2, grid=grid).values
                    for r in range(20)], axis=0)
    target = 2 * 0.6744897501960817 * (1 + grid)
    assert np.allclose(vals / target, 1.0, atol=0.05)


def test_curve_export(tmp_path):
    c = jackknife_curve(noisy(100), 0.5, 0.2)
    c.to_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "t,value,slope,stage,alpha,bandwidth"
    assert len(lines) == 101
    assert float(lines[50].split(",")[1]) == c.values[49]
    d = c.to_dict()
    assert d["stage"] == "jackknifed" and len(d["value"]) == 100
