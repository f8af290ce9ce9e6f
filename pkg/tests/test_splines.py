import numpy as np
import pytest
from scipy.integrate import quad

from siph.exceptions import ConfigurationError, DomainError
from siph.splines import (
    SplineConfig,
    SplineCoefficients,
    choose_knots,
    index_basis,
    ispline_basis,
    mspline_basis,
    psi,
    psi_derivative,
)

CFG = SplineConfig(order=3, interior=(-0.3, 0.1, 0.55), lower=-1.7, upper=1.9)


def all_knots(cfg):
    return [cfg.lower, *cfg.interior, cfg.upper]


def test_order_one_single_piece_is_constant_density():
    cfg = SplineConfig(order=1, interior=(), lower=0.0, upper=1.0)
    assert mspline_basis(0.5, cfg) == pytest.approx([1.0])
    assert mspline_basis(0.0, cfg) == pytest.approx([1.0])
    assert mspline_basis(1.0, cfg) == pytest.approx([1.0])


def test_msplines_are_nonnegative_and_local():
    grid = np.linspace(CFG.lower, CFG.upper, 301)
    design = mspline_basis(grid, CFG)
    assert design.shape == (301, CFG.n_basis)
    assert np.all(design >= 0)
    # order-3 basis 0 is supported on [lower, interior[0]] only
    beyond = grid > CFG.interior[2]
    assert np.all(design[beyond, 0] == 0)


def test_each_mspline_integrates_to_one():
    for i in range(CFG.n_basis):
        total, err = quad(
            lambda u, i=i: mspline_basis(u, CFG)[i],
            CFG.lower,
            CFG.upper,
            points=all_knots(CFG),
            limit=200,
        )
        assert total == pytest.approx(1.0, abs=1e-10)


def test_ispline_matches_quadrature_of_mspline():
    grid = np.linspace(CFG.lower, CFG.upper, 9)
    design = ispline_basis(grid, CFG)
    for i in range(CFG.n_basis):
        for g, u in enumerate(grid):
            integral, err = quad(
                lambda t, i=i: mspline_basis(t, CFG)[i],
                CFG.lower,
                u,
                points=all_knots(CFG),
                limit=200,
            )
            assert design[g, i] == pytest.approx(integral, abs=1e-8)


def test_ispline_boundary_values():
    assert ispline_basis(CFG.lower, CFG) == pytest.approx(np.zeros(CFG.n_basis))
    assert ispline_basis(CFG.upper, CFG) == pytest.approx(np.ones(CFG.n_basis))


def test_ispline_order_one_is_linear_ramp():
    cfg = SplineConfig(order=1, interior=(), lower=-2.0, upper=3.0)
    grid = np.linspace(-2.0, 3.0, 11)
    assert ispline_basis(grid, cfg)[:, 0] == pytest.approx((grid + 2.0) / 5.0)


def test_isplines_monotone_in_u():
    grid = np.linspace(CFG.lower, CFG.upper, 200)
    design = ispline_basis(grid, CFG)
    assert np.all(np.diff(design, axis=0) >= -1e-12)


def test_psi_at_zero_is_exactly_zero():
    rng = np.random.default_rng(7)
    coef = SplineCoefficients(gamma=rng.normal(size=CFG.n_basis))
    assert psi(0.0, CFG, coef) == 0.0


def test_psi_with_unit_gamma_at_upper_end():
    coef = SplineCoefficients(gamma=np.ones(CFG.n_basis))
    expected = CFG.n_basis - ispline_basis(0.0, CFG).sum()
    assert psi(CFG.upper, CFG, coef) == pytest.approx(expected)


def test_psi_derivative_matches_finite_difference():
    rng = np.random.default_rng(11)
    coef = SplineCoefficients(gamma=rng.normal(size=CFG.n_basis))
    h = 1e-6
    inner = np.linspace(CFG.lower + 0.05, CFG.upper - 0.05, 23)
    for u in inner:
        fd = (psi(u + h, CFG, coef) - psi(u - h, CFG, coef)) / (2 * h)
        assert psi_derivative(u, CFG, coef) == pytest.approx(fd, abs=1e-6)


def test_psi_extends_linearly_beyond_domain():
    rng = np.random.default_rng(13)
    coef = SplineCoefficients(gamma=rng.normal(size=CFG.n_basis))
    slope_hi = psi_derivative(CFG.upper, CFG, coef)
    value_hi = psi(CFG.upper, CFG, coef)
    assert psi(CFG.upper + 0.7, CFG, coef) == pytest.approx(value_hi + 0.7 * slope_hi)
    slope_lo = psi_derivative(CFG.lower, CFG, coef)
    value_lo = psi(CFG.lower, CFG, coef)
    assert psi(CFG.lower - 0.4, CFG, coef) == pytest.approx(value_lo - 0.4 * slope_lo)
    design, n_outside = index_basis(np.array([CFG.lower - 0.4, 0.0, CFG.upper + 0.7]), CFG)
    assert n_outside == 2


def test_basis_rejects_points_outside_domain():
    with pytest.raises(DomainError):
        mspline_basis(CFG.upper + 1e-3, CFG)
    with pytest.raises(DomainError):
        ispline_basis(CFG.lower - 1e-3, CFG)
    with pytest.raises(DomainError):
        psi(CFG.upper + 0.5, CFG, np.ones(CFG.n_basis), extrapolate=False)
    # round-off excursions are clipped, not rejected
    mspline_basis(CFG.upper + 1e-14, CFG)


def test_gamma_length_is_checked():
    with pytest.raises(ConfigurationError):
        psi(0.5, CFG, np.ones(CFG.n_basis + 1))


def test_choose_knots_uses_equal_count_quantiles():
    cfg = choose_knots(np.arange(1.0, 9.0), n_interior=3, order=3)
    assert cfg.interior == pytest.approx((2.75, 4.5, 6.25), abs=1e-12)
    assert cfg.lower < 0.0 < cfg.upper
    assert cfg.lower == pytest.approx(0.0, abs=1e-5)
    assert cfg.upper == pytest.approx(8.0, abs=1e-5)
    assert cfg.n_basis == 6


def test_choose_knots_without_interior_knots():
    cfg = choose_knots(np.arange(1.0, 9.0), n_interior=0, order=3)
    assert cfg.interior == ()
    assert cfg.n_basis == 3


def test_choose_knots_rejects_concentrated_values():
    with pytest.raises(ConfigurationError):
        choose_knots(np.ones(50), n_interior=2)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SplineConfig(order=0, interior=(), lower=0.0, upper=1.0)
    with pytest.raises(ConfigurationError):
        SplineConfig(order=3, interior=(0.5, 0.2), lower=0.0, upper=1.0)
    with pytest.raises(ConfigurationError):
        SplineConfig(order=3, interior=(1.5,), lower=0.0, upper=1.0)
