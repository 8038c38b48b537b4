import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sebrw.asymptotics import (compute_scaling, feasible_s_max, minimize_rate_objective, rate_I,
                               rate_objective, solve_d_n, solve_s_star, solve_tau_n)
from sebrw.cumulants import CumulantTable, K_eval, cumulant_table
from sebrw.displacement import DomainError, StdWeibullDisplacement, TailSpec, Variant

DIST = StdWeibullDisplacement(1.0, 0.5)
TABLE = cumulant_table(DIST)
NOMINAL = TailSpec(0.5)


def test_d_n_examples():
    assert solve_d_n(NOMINAL, 10, 2.0) == pytest.approx((10 * math.log(2)) ** 2, rel=1e-10)
    assert solve_d_n(NOMINAL, 10, 2.0) == pytest.approx(48.04530, rel=1e-6)
    assert solve_d_n(NOMINAL, 1, 2.0) == pytest.approx(0.480453, rel=1e-6)


def test_d_n_three_quarters_closed_form():
    d16 = solve_d_n(TailSpec(0.75), 16, 2.0)
    assert d16 == pytest.approx((16 * math.log(2)) ** (4 / 3), rel=1e-10)
    assert d16 == pytest.approx(24.7321, rel=1e-5)


@settings(max_examples=60, deadline=None)
@given(r=st.floats(0.2, 0.9), lam=st.floats(0.3, 3.0), m=st.floats(1.05, 5.0), n=st.integers(1, 5000))
def test_d_n_closed_form_property(r, lam, m, n):
    exact = (n * math.log(m) / lam) ** (1 / r)
    assert solve_d_n(TailSpec(r, lam=lam), n, m) == pytest.approx(exact, rel=1e-10)


def test_d_n_solves_equation_for_log_variant_and_effective_tail():
    for spec in (TailSpec(0.5, variant=Variant.WEIBULL_LOG, p=1.0), DIST.tail):
        for n in (3, 20, 300):
            d = solve_d_n(spec, n, 2.0)
            assert spec.R(d) == pytest.approx(n * math.log(2.0), rel=1e-10)


def test_d_n_errors():
    with pytest.raises(ValueError):
        solve_d_n(NOMINAL, 0, 2.0)
    with pytest.raises(ValueError):
        solve_d_n(NOMINAL, 10, 1.0)


def test_a_n_example():
    sc = compute_scaling(NOMINAL, TABLE, 10, 2.0, with_tau=False)
    assert sc.a_n == pytest.approx(2 * 10 * math.log(2), rel=1e-10)
    assert sc.a_n == pytest.approx(1.0 / NOMINAL.R(sc.d_n, 1), rel=1e-12)


def test_tau_n_leading_order_trend():
    ratios = []
    for n in (10, 100, 1000, 10000):
        sc = compute_scaling(NOMINAL, TABLE, n, 2.0)
        ratios.append(sc.tau_n / (n * NOMINAL.R(sc.d_n, 1) / 2))
    dev = [abs(q - 1) for q in ratios]
    assert all(b < a for a, b in zip(dev, dev[1:]))
    assert dev[1] < 0.25


def test_tau_n_defining_residual():
    for spec, n in ((NOMINAL, 100), (DIST.tail, 20)):
        d = solve_d_n(spec, n, 2.0)
        tau = solve_tau_n(spec, TABLE, n, 2.0)
        assert rate_I(spec, TABLE, d + tau, n).value == pytest.approx(spec.R(d), rel=1e-10)


def test_tau_n_zero_table():
    assert solve_tau_n(NOMINAL, CumulantTable.zero(3), 50, 2.0) == 0.0


def test_window_ordering():
    for spec in (NOMINAL, TailSpec(0.75), DIST.tail):
        for n in (10, 100):
            sc = compute_scaling(spec, cumulant_table(StdWeibullDisplacement(1.0, spec.r)), n, 2.0, with_tau=False)
            assert sc.y_n < sc.d_n < sc.w_n
            assert sc.H_lo < sc.H_hi
            assert sc.delta_n == pytest.approx(0.9 * sc.d_n)


def test_delta_validation():
    with pytest.raises(ValueError):
        compute_scaling(NOMINAL, TABLE, 10, 2.0, delta=0.5)


def test_s_star_n_zero():
    st_ = solve_s_star(NOMINAL, TABLE, 9.0, 0)
    assert st_.s == pytest.approx(NOMINAL.R(9.0, 1))


def test_s_star_example_against_dense_grid():
    x = solve_d_n(NOMINAL, 10, 2.0)
    st_ = solve_s_star(NOMINAL, TABLE, x, 10)
    assert st_.method == "fixed_point" and st_.residual < 1e-12
    assert st_.s == pytest.approx(0.0727, abs=5e-4)
    ss = np.linspace(0.0, feasible_s_max(NOMINAL, TABLE, x, 10), 100_001)
    grid_s = ss[np.argmin(rate_objective(NOMINAL, TABLE, x, 10, ss))]
    assert abs(st_.s - grid_s) < 1e-4


def test_s_star_monotone_over_window():
    # implicit differentiation of s = R'(x - n K'(s)): ds/dx = R''/(1 + n K'' R''), negative here
    sc = compute_scaling(NOMINAL, TABLE, 100, 2.0, with_tau=False)
    xs = np.linspace(sc.H_lo, sc.H_hi, 40)
    s = np.array([solve_s_star(NOMINAL, TABLE, x, 100).s for x in xs])
    assert np.all(np.diff(s) < 0)
    x, si = xs[20], s[20]
    y = x - 100 * K_eval(TABLE, si, 1)
    R2 = NOMINAL.R(y, 2)
    slope = R2 / (1 + 100 * K_eval(TABLE, si, 2) * R2)
    h = 1e-3 * (sc.H_hi - sc.H_lo)
    fd = (solve_s_star(NOMINAL, TABLE, x + h, 100).s - solve_s_star(NOMINAL, TABLE, x - h, 100).s) / (2 * h)
    assert fd == pytest.approx(slope, rel=1e-4)


def test_s_star_domain():
    with pytest.raises(DomainError):
        solve_s_star(NOMINAL, TABLE, 0.0, 10)


def test_rate_zero_table_is_R():
    z = CumulantTable.zero(3)
    for x in (1.0, 50.0, 400.0):
        assert rate_I(NOMINAL, z, x, 30).value == pytest.approx(NOMINAL.R(x), rel=1e-12)


def test_rate_gap_shrinks_for_half():
    gaps = []
    for n in (10, 100, 1000):
        d = solve_d_n(NOMINAL, n, 2.0)
        gaps.append(abs(rate_I(NOMINAL, TABLE, d, n).value - NOMINAL.R(d)))
    assert gaps[0] > gaps[1] > gaps[2]


def test_rate_gap_bounded_for_three_quarters():
    spec = TailSpec(0.75)
    table = cumulant_table(StdWeibullDisplacement(1.0, 0.75))
    scaled = []
    for n in (8, 16, 32, 64, 128, 256, 512):
        d = solve_d_n(spec, n, 2.0)
        scaled.append(abs(rate_I(spec, table, d, n).value - spec.R(d)) / n ** (4 - 3 / 0.75))
    assert max(scaled) < 10 * min(s for s in scaled if s > 0) + 1.0
    assert max(scaled[-3:]) <= max(scaled[:3]) * 1.5


def test_rate_global_minimum_when_objective_has_two_basins():
    # effective tail at n = 15: the fixed point is a local minimum only
    sc = compute_scaling(DIST.tail, TABLE, 15, 2.0, with_tau=False)
    rv = rate_I(DIST.tail, TABLE, sc.d_n, 15)
    ss = np.linspace(0.0, feasible_s_max(DIST.tail, TABLE, sc.d_n, 15), 200_001)
    brute = float(np.min(rate_objective(DIST.tail, TABLE, sc.d_n, 15, ss)))
    assert rv.value == pytest.approx(brute, abs=1e-6)
    assert rv.value <= brute + 1e-12


@settings(max_examples=25, deadline=None)
@given(frac=st.floats(0.0, 1.0), n=st.sampled_from([10, 100]))
def test_rate_routes_agree_on_window(frac, n):
    sc = compute_scaling(NOMINAL, TABLE, n, 2.0, with_tau=False)
    x = sc.H_lo + frac * (sc.H_hi - sc.H_lo)
    rv = rate_I(NOMINAL, TABLE, x, n)
    gs, gv = minimize_rate_objective(NOMINAL, TABLE, x, n)
    assert abs(rv.value - gv) <= 1e-8
    assert rv.residual < 1e-12
    assert rv.value <= NOMINAL.R(x) + 1e-12
