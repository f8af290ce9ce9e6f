import numpy as np
import pytest

from siph.exceptions import ConfigurationError, DomainError
from siph.hazard import (
    PiecewiseHazard,
    StepFunction,
    choose_cuts,
    cumulative_hazard,
    hazard_at,
    interval_exposure,
    kaplan_meier,
    nelson_aalen,
)

H = PiecewiseHazard(cuts=(0.0, 1.0, 2.0), rates=(0.5, 1.0, 2.0))


def test_cumulative_hazard_accumulates_piecewise():
    assert cumulative_hazard(0.0, H) == 0.0
    assert cumulative_hazard(1.5, H) == pytest.approx(1.0)
    assert cumulative_hazard(3.0, H) == pytest.approx(3.5)
    assert cumulative_hazard(np.array([0.5, 2.0]), H) == pytest.approx([0.25, 1.5])


def test_cumulative_hazard_matches_riemann_sum():
    grid = np.linspace(1e-9, 6.0, 7)
    fine = np.linspace(0, 6.0, 600001)
    dense = hazard_at(fine[1:], H)
    for t in grid:
        riemann = dense[fine[1:] <= t].sum() * (fine[1] - fine[0])
        assert cumulative_hazard(t, H) == pytest.approx(riemann, abs=1e-3)


def test_hazard_at_uses_right_closed_intervals():
    assert hazard_at(1.0, H) == 0.5
    assert hazard_at(1.0001, H) == 1.0
    assert hazard_at(10.0, H) == 2.0


def test_hazard_domain_checks():
    with pytest.raises(DomainError):
        hazard_at(0.0, H)
    with pytest.raises(DomainError):
        cumulative_hazard(-1.0, H)


def test_piecewise_hazard_validation():
    with pytest.raises(ConfigurationError):
        PiecewiseHazard(cuts=(0.5, 1.0), rates=(1.0, 1.0))
    with pytest.raises(ConfigurationError):
        PiecewiseHazard(cuts=(0.0, 1.0), rates=(1.0, -1.0))
    with pytest.raises(ConfigurationError):
        PiecewiseHazard(cuts=(0.0, 1.0), rates=(1.0,))


def test_interval_exposure_rows_sum_to_t():
    t = np.array([0.0, 0.3, 1.0, 2.5, 9.0])
    exposure = interval_exposure(t, H.cuts)
    assert exposure.sum(axis=1) == pytest.approx(t)
    assert exposure[3] == pytest.approx([1.0, 1.0, 0.5])


def test_step_function_evaluation():
    f = StepFunction(jump_times=np.array([1.0, 2.0]), values=np.array([0.5, 0.2]), initial=1.0)
    assert f(0.5) == 1.0
    assert f(1.0) == 0.5
    assert f(1.5) == 0.5
    assert f(5.0) == 0.2


def test_kaplan_meier_small_example():
    km = kaplan_meier([1.0, 2.0, 3.0], [1, 0, 1])
    assert km(1.0) == pytest.approx(2.0 / 3.0)
    assert km(2.5) == pytest.approx(2.0 / 3.0)
    assert km(3.0) == pytest.approx(0.0)


def test_nelson_aalen_with_ties():
    na = nelson_aalen([1.0, 1.0, 2.0], [1, 1, 1])
    assert na(1.0) == pytest.approx(2.0 / 3.0)
    assert na(2.0) == pytest.approx(2.0 / 3.0 + 1.0)
    assert na(0.5) == 0.0


def test_km_na_consistency_on_random_data():
    # -log S(t) and the Nelson-Aalen curve agree to first order in d/n
    rng = np.random.default_rng(3)
    times = rng.exponential(size=400)
    status = (rng.uniform(size=400) < 0.7).astype(int)
    km = kaplan_meier(times, status)
    na = nelson_aalen(times, status)
    grid = np.quantile(times, [0.2, 0.4, 0.6])
    assert -np.log(km(grid)) == pytest.approx(na(grid), rel=0.02)


def test_choose_cuts_reads_km_levels():
    times = np.arange(1.0, 9.0)
    status = np.ones(8, dtype=int)
    cuts, fallback = choose_cuts(times, status, n_pieces=4)
    assert cuts == pytest.approx((0.0, 2.0, 4.0, 6.0))
    assert not fallback


def test_choose_cuts_falls_back_under_heavy_censoring():
    # half the sample censored at a fixed time below the median event time:
    # the KM curve never reaches the deepest level, so all cuts fall back
    # to event-time quantiles
    rng = np.random.default_rng(5)
    events = rng.exponential(size=120)
    cap = np.quantile(events, 0.45)
    times = np.minimum(events, cap)
    status = (events <= cap).astype(int)
    cuts, fallback = choose_cuts(times, status, n_pieces=4)
    assert fallback
    event_times = times[status == 1]
    expected = np.quantile(event_times, [0.25, 0.5, 0.75])
    assert cuts == pytest.approx((0.0, *expected))


def test_choose_cuts_requires_enough_events():
    with pytest.raises(ConfigurationError):
        choose_cuts([1.0, 2.0], [1, 0], n_pieces=3)
