import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from camtrap.glm import f_test, fit_quasipoisson, placement_test, rate_ratio, trail_bias
from camtrap.simulator import CommunitySpec, SimConfig, SpeciesSpec, simulate_community


def two_group(y_trail, d_trail, y_random, d_random):
    y = np.r_[y_trail, y_random]
    d = np.r_[d_trail, d_random]
    x = np.r_[np.ones(len(y_trail)), np.zeros(len(y_random))]
    return placement_test(y, d, x)


def test_saturated_two_group_closed_form():
    fit = fit_quasipoisson([12, 2], [[1, 1], [1, 0]], np.log([10.0, 10.0]))
    assert fit.coefficients[1] == pytest.approx(math.log(6), abs=1e-8)
    assert fit.coefficients[0] == pytest.approx(math.log(0.2), abs=1e-8)
    assert fit.df_residual == 0 and math.isnan(fit.dispersion) and fit.converged


@settings(max_examples=60, deadline=None)
@given(
    yt=st.lists(st.integers(0, 40), min_size=1, max_size=6),
    yr=st.lists(st.integers(0, 40), min_size=1, max_size=6),
    data=st.data(),
)
def test_group_design_matches_closed_form(yt, yr, data):
    if sum(yt) == 0 or sum(yr) == 0:
        return
    dt = data.draw(st.lists(st.floats(0.5, 20), min_size=len(yt), max_size=len(yt)))
    dr = data.draw(st.lists(st.floats(0.5, 20), min_size=len(yr), max_size=len(yr)))
    x = np.r_[np.ones(len(yt)), np.zeros(len(yr))]
    full = fit_quasipoisson(np.r_[yt, yr], np.column_stack([np.ones_like(x), x]),
                            np.log(np.r_[dt, dr]))
    base = sum(yr) / sum(dr)
    assert full.coefficients[1] == pytest.approx(math.log(sum(yt) / sum(dt) / base), abs=1e-8)
    assert full.coefficients[0] == pytest.approx(math.log(base), abs=1e-8)


def test_equal_rates_zero_coefficient():
    full, _, ft = two_group([4, 6], [10, 10], [5, 5], [10, 10])
    assert abs(full.coefficients[1]) < 1e-12 and ft.F == pytest.approx(0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(c=st.floats(0.01, 100), seed=st.integers(0, 1000))
def test_offset_scaling_changes_intercept_only(c, seed):
    rng = np.random.default_rng(seed)
    days = rng.uniform(2, 10, 30)
    x = (np.arange(30) % 3 == 0).astype(float)
    y = rng.poisson(days * np.exp(-1 + 0.7 * x))
    a, _, _ = placement_test(y, days, x)
    b, _, _ = placement_test(y, days * c, x)
    assert b.coefficients[1] == pytest.approx(a.coefficients[1], abs=1e-10)
    assert b.coefficients[0] == pytest.approx(a.coefficients[0] - math.log(c), abs=1e-9)


def test_deviance_never_increases_and_convergence():
    rng = np.random.default_rng(1)
    days = rng.uniform(1, 30, 80)
    x = rng.random(80) < 0.3
    y = rng.poisson(days * np.where(x, 2.5, 0.05))
    full, _, _ = placement_test(y, days, x)
    h = np.array(full.deviance_history)
    assert np.all(np.diff(h) <= 1e-9 * h[:-1])
    assert full.converged and full.iterations < 50


def test_non_convergence_reported():
    y = np.r_[0, 0, 0, 5, 7]
    X = np.column_stack([np.ones(5), [1, 1, 1, 0, 0]])
    fit = fit_quasipoisson(y, X, max_iter=2)
    assert not fit.converged and fit.iterations == 2


def test_dispersion_behaviour():
    rng = np.random.default_rng(2)
    n = 4000
    days = rng.uniform(4, 12, n)
    x = (np.arange(n) % 2).astype(float)
    pois, _, _ = placement_test(rng.poisson(0.5 * days), days, x)
    assert pois.dispersion == pytest.approx(1.0, abs=0.08)
    mu = 0.5 * days
    over = rng.poisson(rng.gamma(0.7, mu / 0.7))
    od, _, _ = placement_test(over, days, x)
    assert od.dispersion > 1.5


def test_rank_and_input_errors():
    with pytest.raises(ValueError, match="rank"):
        fit_quasipoisson([1, 2, 3], np.ones((3, 2)))
    with pytest.raises(ValueError):
        fit_quasipoisson([1, -2, 3], np.ones((3, 1)))
    with pytest.raises(ValueError):
        fit_quasipoisson([1, 2, 3], np.ones((3, 1)), [0, np.inf, 0])


def test_f_test_rules():
    y = np.array([3, 5, 9, 2, 0, 4.0])
    X = np.column_stack([np.ones(6), [1, 1, 1, 0, 0, 0]])
    full = fit_quasipoisson(y, X)
    same = f_test(full, fit_quasipoisson(y, X))
    assert (same.F, same.p_value) == (0.0, 1.0)
    other = fit_quasipoisson(y, np.column_stack([np.ones(6), [0, 1, 0, 1, 0, 1]]))
    with pytest.raises(ValueError, match="nested"):
        f_test(full, other)
    with pytest.raises(ValueError, match="same data"):
        f_test(full, fit_quasipoisson(y + 1, X[:, :1]))
    sat = fit_quasipoisson(y[:2], np.eye(2))
    with pytest.raises(ValueError, match="residual degrees"):
        f_test(sat, fit_quasipoisson(y[:2], np.ones((2, 1))))
    ft = f_test(full, fit_quasipoisson(y, X[:, :1]))
    assert ft.F >= 0 and 0 <= ft.p_value <= 1 and (ft.df_num, ft.df_den) == (1, 4)


def test_rate_ratio_examples():
    class Fake:
        coefficients = np.array([0.0, 0.0])

    f = Fake()
    assert rate_ratio(f) == 1.0
    f.coefficients = np.array([0.0, math.log(6)])
    assert rate_ratio(f) == pytest.approx(6.0)
    f.coefficients = np.array([0.0, -math.log(2.8)])
    assert rate_ratio(f) == pytest.approx(0.357, abs=1e-3)


def test_brocket_like_power():
    significant = 0
    for rep in range(200):
        rng = np.random.default_rng([33, rep])
        days = rng.uniform(5, 9, 100)
        trail = (np.arange(100) < 20).astype(float)
        mu = 0.1 * days * np.where(trail == 1, 1 / 3.3, 1.0)
        y = rng.poisson(rng.gamma(2.0, mu / 2.0))  # moderately overdispersed
        _, _, ft = placement_test(y, days, trail)
        significant += ft.p_value < 0.05
    assert significant > 100


def test_trail_bias_on_simulated_ocelot():
    spec = CommunitySpec((SpeciesSpec("ocelot", trail_ratio=6.0), SpeciesSpec("agouti", 4.0),
                          SpeciesSpec("rare", 0.001)))
    cfg = SimConfig(density_per_km2=300, n_cameras=50, trail_fraction=0.5, seed=4)
    res = simulate_community(spec, 400, cfg)
    rows = {r.species: r for r in trail_bias(res.store, min_detections=10)}
    assert "rare" not in rows
    assert rows["ocelot"].rate_ratio == pytest.approx(6.0, rel=0.2) and rows["ocelot"].p < 1e-6
    assert rows["agouti"].rate_ratio == pytest.approx(1.0, abs=0.15)
