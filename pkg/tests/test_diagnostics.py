import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chemflux.diagnostics import (
    CSV_COLUMNS,
    RateFitError,
    WeightSingularity,
    classical_functional,
    fit_decay_rate,
    lyapunov_weighted,
    record_step,
    tail_window,
    weight_w,
    weight_w_prime,
    weight_w_second,
)
from chemflux.grid import face_gradient, make_grid, vector_l2_norm
from chemflux.sensitivity import ThresholdParams

TH = ThresholdParams(2.0, 1 / 96, 0.05, "quadratic")


def test_weight_reference_values():
    assert weight_w(0.0, TH) == pytest.approx(math.exp(math.log(20) / 96), rel=1e-15)
    # 1.03168 is a loose decimal for 1.0316975
    assert weight_w(0.0, TH) == pytest.approx(1.03168, abs=2e-5)
    tiny = ThresholdParams(2.0, 1e-14, 0.05, "quadratic")
    assert weight_w(0.03, tiny) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(WeightSingularity):
        weight_w(0.05, TH)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 0.0499), st.floats(1e-4, 1 / 48 - 1e-4))
def test_weight_derivative_identities(c, h):
    th = ThresholdParams(2.0, h, 0.05, "quadratic")
    assert weight_w_prime(c, th) / weight_w(c, th) == pytest.approx(h / (0.05 - c), rel=1e-13)
    d = 0.05 - c
    e = 1e-4 * d
    fd1 = (weight_w(c + e, th) - weight_w(c - e, th)) / (2 * e)
    # w'' from central differences of w' (a second difference of w loses too
    # many digits when h is tiny and w is nearly flat)
    fd2 = (weight_w_prime(c + e, th) - weight_w_prime(c - e, th)) / (2 * e)
    assert fd1 == pytest.approx(float(weight_w_prime(c, th)), rel=1e-6)
    assert fd2 == pytest.approx(float(weight_w_second(c, th)), rel=1e-6)


def test_lyapunov_values(unit32):
    one = np.ones(unit32.shape)
    assert lyapunov_weighted(unit32, one, 0 * one, TH) == pytest.approx(0.05 ** (-1 / 96), rel=1e-14)
    assert lyapunov_weighted(unit32, 0 * one, 0 * one, TH) == 0.0
    r = np.random.default_rng(0)
    n, c = r.uniform(0, 2, unit32.shape), r.uniform(0, 0.04, unit32.shape)
    assert lyapunov_weighted(unit32, 2 * n, c, TH) == pytest.approx(4 * lyapunov_weighted(unit32, n, c, TH), rel=1e-14)
    with pytest.raises(WeightSingularity, match="0.06"):
        lyapunov_weighted(unit32, one, 0.06 * one, TH)


def test_classical_functional(unit32):
    one = np.ones(unit32.shape)
    assert classical_functional(unit32, one, 0.3 * one) == 0.0
    assert classical_functional(unit32, math.e * one, 0.3 * one) == pytest.approx(math.e, rel=1e-14)
    assert classical_functional(unit32, 0 * one, 0.3 * one) == 0.0
    with pytest.raises(ValueError):
        classical_functional(unit32, one, one, c_floor=0.0)


def test_classical_functional_small_perturbation():
    g = make_grid(2, [1, 1], [64, 64])
    x = g.cell_points()[0]
    cbar, eps = 0.5, 1e-4
    c = cbar + eps * np.cos(np.pi * x)
    val = classical_functional(g, np.ones(g.shape), c)
    G = face_gradient(g, c)
    ref = 0.5 * vector_l2_norm(g, G) ** 2 / cbar
    # same leading order; the centre-averaged gradient differs from face values by O(h^2)
    assert val == pytest.approx(ref, rel=2e-3)
    assert val == pytest.approx(0.5 * eps**2 * np.pi**2 / 2 / cbar, rel=5e-3)


def test_record_of_uniform_state(unit32):
    n = np.full(unit32.shape, 1.0)
    rec = record_step(unit32, 0.0, n, 0.01 * n, unit32.zero_vector(), 1.0, th=TH, scalar_sensitivity=True)
    assert rec.kinetic == 0 and rec.linf_n_dev == 0 and rec.div_u_inf == 0
    assert rec.mass_n == pytest.approx(1.0, rel=1e-14)
    assert rec.classical == 0.0 and rec.lyapunov is not None
    rec = record_step(unit32, 0.0, n, 0.01 * n, unit32.zero_vector(), 1.0)
    assert rec.lyapunov is None and rec.classical is None
    row = rec.csv_row().split(",")
    assert len(row) == len(CSV_COLUMNS) and row[3] == "" and row[4] == ""


def test_csv_row_roundtrips_17_digits(unit32):
    r = np.random.default_rng(5)
    n = r.uniform(0.5, 1.5, unit32.shape)
    rec = record_step(unit32, 0.1 + 0.2, n, 0.02 * n, unit32.zero_vector(), float(n.mean()), th=TH)
    vals = [float(v) for v in rec.csv_row().split(",") if v]
    assert vals[0] == 0.1 + 0.2 and vals[1] == rec.mass_n and vals[3] == rec.lyapunov


def test_fit_exact_exponential():
    t = np.linspace(0, 3, 40)
    fit = fit_decay_rate(t, 5 * np.exp(-2 * t))
    assert fit.rate == pytest.approx(2.0, abs=1e-10) and fit.r_squared == pytest.approx(1.0, abs=1e-10)
    assert fit.n_points == 40 and fit.window == (0.0, 3.0)
    const = fit_decay_rate(t, np.full_like(t, 0.7))
    assert const.rate == 0.0


def test_fit_perturbed_exponential():
    t = np.linspace(0, 10, 1001)
    v = np.exp(-t) * (1 + 0.01 * np.cos(10 * t))
    fit = fit_decay_rate(t, v, (5, 10))
    # explicit regression oracle: slope of log values by the normal equations
    sel = (t >= 5) & (t <= 10)
    ts, ys = t[sel], np.log(v[sel])
    slope = np.sum((ts - ts.mean()) * (ys - ys.mean())) / np.sum((ts - ts.mean()) ** 2)
    assert fit.rate == pytest.approx(-slope, rel=1e-10)
    assert abs(fit.rate - 1) <= 0.02


@settings(max_examples=40, deadline=None)
@given(st.floats(-5, 5), st.floats(1e-100, 1e100), st.integers(10, 60))
def test_fit_scale_invariant(rate, scale, m):
    t = np.linspace(0, 2, m)
    v = np.exp(-rate * t)
    a = fit_decay_rate(t, v)
    b = fit_decay_rate(t, scale * v)
    assert a.rate == pytest.approx(rate, abs=1e-10)
    assert b.rate == pytest.approx(a.rate, abs=1e-10)


def test_fit_errors():
    t = np.linspace(0, 1, 20)
    with pytest.raises(RateFitError, match="10"):
        fit_decay_rate(t[:9], np.exp(-t[:9]))
    v = np.exp(-t)
    v[4] = 0.0
    with pytest.raises(RateFitError, match="log"):
        fit_decay_rate(t, v)
    with pytest.raises(RateFitError):
        fit_decay_rate(t, np.exp(-t), (2, 3))


def test_tail_window_stops_at_noise_floor():
    t = np.linspace(0, 10, 101)
    v = np.maximum(np.exp(-5 * t), 1e-16)
    w = tail_window(t, v, 1.0, 1e-13)
    assert w[1] < math.log(1e13) / 5
    assert fit_decay_rate(t, v, w).rate == pytest.approx(5.0, rel=1e-8)
    with pytest.raises(RateFitError):
        tail_window(t, v, 9.0, 1e-13)
