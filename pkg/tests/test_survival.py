import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import grid_mle
from pdmp_relapse.model import weibull_survival
from pdmp_relapse.simulate import sample_weibull
from pdmp_relapse.survival import (
    SurvivalSample,
    UnfittableError,
    as_arrays,
    fit_weibull_censored,
    kaplan_meier,
    profile_scale,
    survival_samples,
    weibull_loglik,
)


def censored_sample(rng, n, alpha, beta):
    w = sample_weibull(rng, alpha, beta, n)
    c = rng.uniform(0.3, 2.0, n) * beta
    return np.minimum(w, c), w <= c


def test_matches_grid_oracle():
    rng = np.random.default_rng(0)
    for _ in range(10):
        n = int(rng.integers(5, 51))
        t, e = censored_sample(rng, n, rng.uniform(0.7, 6), rng.uniform(10, 3000))
        if e.sum() == 0 or e.sum() == n and np.ptp(t) == 0:
            continue
        fit = fit_weibull_censored(t, e)
        a, b = grid_mle(t, e)
        assert fit.converged
        assert fit.alpha_hat == pytest.approx(a, rel=1e-3)
        assert fit.beta_hat == pytest.approx(b, rel=1e-3)


def test_large_uncensored_sample():
    rng = np.random.default_rng(1)
    t = sample_weibull(rng, 4.69, 1650.0, 5000)
    fit = fit_weibull_censored(t, np.ones_like(t, bool))
    assert fit.alpha_hat == pytest.approx(4.69, rel=0.05)
    assert fit.beta_hat == pytest.approx(1650.0, rel=0.02)
    assert (fit.n_events, fit.n_censored) == (5000, 0)


def test_profile_identity():
    t = np.full(7, 321.0)
    fit = fit_weibull_censored(t, np.ones(7, bool), alpha=1.0)
    assert fit.beta_hat == pytest.approx(321.0, rel=1e-15)


def test_profile_scale_maximises_likelihood():
    rng = np.random.default_rng(2)
    t, e = censored_sample(rng, 40, 2.0, 500.0)
    b = profile_scale(2.0, t, e)
    here = weibull_loglik(2.0, b, t, e)
    for f in (0.99, 1.01):
        assert weibull_loglik(2.0, b * f, t, e) < here


def test_fit_is_a_stationary_point():
    rng = np.random.default_rng(3)
    t, e = censored_sample(rng, 200, 1.5, 2500.0)
    fit = fit_weibull_censored(t, e)
    ll = fit.log_likelihood
    for da, db in ((1e-4, 0), (-1e-4, 0), (0, 1e-4), (0, -1e-4)):
        a = fit.alpha_hat * (1 + da)
        b = fit.beta_hat * (1 + db)
        assert weibull_loglik(a, b, t, e) <= ll + 1e-9


def test_no_event_is_unfittable():
    with pytest.raises(UnfittableError):
        fit_weibull_censored([10.0, 20.0], [False, False])


def test_nonpositive_durations_dropped(caplog):
    with caplog.at_level(logging.WARNING):
        fit = fit_weibull_censored([0.0, -5.0, 100.0, 200.0, 250.0], [True, True, True, True, False])
    assert fit.n_events + fit.n_censored == 3
    assert "dropped" in caplog.text.lower()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(1e-3, 1e4))
def test_scale_equivariance(seed, lam):
    rng = np.random.default_rng(seed)
    t, e = censored_sample(rng, 30, rng.uniform(0.5, 8), 1000.0)
    if not e.any():
        return
    a = fit_weibull_censored(t, e)
    b = fit_weibull_censored(t * lam, e)
    assert b.alpha_hat == pytest.approx(a.alpha_hat, rel=1e-8)
    assert b.beta_hat == pytest.approx(a.beta_hat * lam, rel=1e-8)


def test_json_summary_keys():
    fit = fit_weibull_censored([1.0, 2.0, 3.0], [True, True, False])
    assert set(fit.to_json()) == {"alpha_hat", "beta_hat", "log_likelihood", "n_events", "n_censored", "converged"}


# --- Kaplan-Meier -----------------------------------------------------------


def test_km_single_event():
    km = kaplan_meier([5.0], [True])
    assert km(0.0) == 1.0 and km(4.999) == 1.0 and km(5.0) == 0.0


def test_km_all_censored():
    km = kaplan_meier([3.0, 8.0, 1.0], [False, False, False])
    np.testing.assert_array_equal(km(np.linspace(0, 8, 17)), 1.0)


def test_km_two_events():
    km = kaplan_meier([2.0, 6.0], [True, True])
    np.testing.assert_array_equal(km(np.array([0.0, 1.9, 2.0, 5.9, 6.0, 9.0])), [1, 1, 0.5, 0.5, 0, 0])


def test_km_hand_product_limit():
    # times 1(e) 2(c) 3(e) 3(e) 4(c) 5(e): S = 5/6, then * (1 - 2/4), then * (1 - 1/1)
    km = kaplan_meier([1, 2, 3, 3, 4, 5], [1, 0, 1, 1, 0, 1])
    np.testing.assert_allclose(km.survival, [5 / 6, 5 / 6, 5 / 12, 5 / 12, 0.0])
    np.testing.assert_array_equal(km.at_risk, [6, 5, 4, 2, 1])
    np.testing.assert_array_equal(km.events, [1, 0, 2, 0, 1])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0.1, 1e3), st.booleans()), min_size=1, max_size=60))
def test_km_monotone_and_banded(rows):
    t = np.array([r[0] for r in rows])
    e = np.array([r[1] for r in rows])
    km = kaplan_meier(t, e)
    assert np.all(np.diff(km.survival) <= 0)
    assert np.all((km.survival >= 0) & (km.survival <= 1))
    assert np.all(km.ci_low <= km.survival + 1e-12) and np.all(km.survival <= km.ci_high + 1e-12)
    # right-continuity: value at each jump time equals the value just after it
    assert np.array_equal(km(km.time), km.survival)
    assert np.array_equal(km(km.time + 1e-9), km.survival)


@given(st.lists(st.floats(0.1, 1e3), min_size=1, max_size=60))
def test_km_is_empirical_without_censoring(t):
    t = np.array(t)
    km = kaplan_meier(t, np.ones(t.size, bool))
    grid = np.r_[km.time, km.time.max() + 1]
    empirical = np.array([(t > g).mean() for g in grid])
    np.testing.assert_allclose(km(grid), empirical, atol=1e-12)


def test_fitted_curve_inside_km_band():
    rng = np.random.default_rng(4)
    t, e = censored_sample(rng, 1000, 4.69, 1650.0)
    fit = fit_weibull_censored(t, e)
    km = kaplan_meier(t, e)
    at = km.time[km.events > 0]
    s = weibull_survival(at, fit.alpha_hat, fit.beta_hat)
    lo = km.ci_low[km.events > 0]
    hi = km.ci_high[km.events > 0]
    inside = (s >= lo) & (s <= hi)
    assert inside.mean() >= 0.99


def test_survival_samples_and_arrays():
    out = survival_samples([10.0, 20.0], [110.0, None], [500.0, 400.0])
    assert out == [SurvivalSample(100.0, True), SurvivalSample(380.0, False)]
    t, e = as_arrays(out)
    np.testing.assert_array_equal(t, [100.0, 380.0])
    np.testing.assert_array_equal(e, [True, False])
