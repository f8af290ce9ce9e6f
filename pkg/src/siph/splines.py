"""Monotone spline machinery for the nonlinear index effect.

The nonlinear effect of the index u = alpha' v is represented as

    psi(u) = gamma' (I(u) - I(0)),

where I is a vector of integrated spline (I-spline) basis functions and the
anchoring at zero removes the intercept ambiguity against the baseline
hazards.  The derivative psi'(u) = gamma' M(u) uses the M-spline basis that
the I-splines integrate.  Nonnegative gamma would make psi monotone; the
model does not restrict gamma, so psi is a free smooth curve.

M-splines of order m are defined recursively from indicator functions over
a knot vector whose boundary knots are repeated m times.  Each basis
function integrates to one over its support.  I-splines of order m are
running integrals of the order-(m+1) M-spline family and rise from 0 to 1.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import ConfigurationError, DomainError

# slack for evaluation points that fall outside the domain by round-off,
# relative to the domain width
_EDGE_SLACK = 1e-12


@dataclass(frozen=True)
class SplineConfig:
    """Knot layout shared by the M-spline and I-spline bases.

    Parameters
    ----------
    order : int
        Spline order (degree + 1); 3 gives quadratic M-splines and cubic
        I-splines.
    interior : tuple of float
        Interior knots, strictly increasing, strictly inside the domain.
    lower, upper : float
        Domain endpoints; boundary knots are stacked here.
    """

    order: int
    interior: tuple
    lower: float
    upper: float

    def __post_init__(self):
        object.__setattr__(self, "interior", tuple(float(k) for k in self.interior))
        if self.order < 1:
            raise ConfigurationError(f"spline order must be >= 1, got {self.order}")
        if not self.lower < self.upper:
            raise ConfigurationError(
                f"spline domain is empty: [{self.lower}, {self.upper}]"
            )
        knots = np.asarray(self.interior)
        if knots.size and not (
            np.all(np.diff(knots) > 0)
            and knots[0] > self.lower
            and knots[-1] < self.upper
        ):
            raise ConfigurationError(
                "interior knots must increase strictly inside the domain; "
                f"got {self.interior} in [{self.lower}, {self.upper}]"
            )

    @property
    def n_basis(self):
        """Number of basis functions (length of gamma)."""
        return self.order + len(self.interior)


@dataclass
class SplineCoefficients:
    """Coefficient vector gamma for the I-spline expansion of psi."""

    gamma: np.ndarray

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        if self.gamma.ndim != 1:
            raise ConfigurationError("gamma must be a one-dimensional vector")


def _coef_vector(coef, cfg):
    gamma = coef.gamma if isinstance(coef, SplineCoefficients) else np.asarray(coef, float)
    if gamma.shape != (cfg.n_basis,):
        raise ConfigurationError(
            f"gamma has length {gamma.shape[0] if gamma.ndim == 1 else gamma.shape}, "
            f"config needs {cfg.n_basis}"
        )
    return gamma


@lru_cache(maxsize=None)
def _padded_knots(cfg, order):
    """Knot vector with boundary knots repeated `order` times."""
    knots = np.concatenate(
        [np.full(order, cfg.lower), np.asarray(cfg.interior, float), np.full(order, cfg.upper)]
    )
    knots.flags.writeable = False
    return knots


def _mspline_design(u, knots, order):
    """Order-`order` M-spline design matrix at points u over `knots`.

    Returns an array of shape (len(u), len(knots) - order).  The last
    interval of positive width is treated as closed on the right so the
    upper domain endpoint has a defined value.
    """
    u = np.asarray(u, dtype=float)
    nk = len(knots)
    widths = np.diff(knots)
    positive = np.flatnonzero(widths > 0)
    last = positive[-1]
    design = np.zeros((u.shape[0], nk - 1))
    for i in positive:
        if i == last:
            inside = (u >= knots[i]) & (u <= knots[i + 1])
        else:
            inside = (u >= knots[i]) & (u < knots[i + 1])
        design[inside, i] = 1.0 / widths[i]
    for k in range(2, order + 1):
        prev = design
        design = np.zeros((u.shape[0], nk - k))
        for i in range(nk - k):
            span = knots[i + k] - knots[i]
            if span <= 0:
                continue
            mixed = (u - knots[i]) * prev[:, i] + (knots[i + k] - u) * prev[:, i + 1]
            design[:, i] = k * mixed / ((k - 1) * span)
    return design


def _check_domain(u, cfg):
    """Clip round-off excursions; reject genuine domain violations."""
    slack = _EDGE_SLACK * (cfg.upper - cfg.lower)
    if np.any(u < cfg.lower - slack) or np.any(u > cfg.upper + slack):
        bad = u[(u < cfg.lower - slack) | (u > cfg.upper + slack)]
        raise DomainError(
            f"index value {bad.flat[0]:.6g} outside spline domain "
            f"[{cfg.lower:.6g}, {cfg.upper:.6g}]"
        )
    return np.clip(u, cfg.lower, cfg.upper)


def mspline_basis(u, cfg):
    """Evaluate the order-`cfg.order` M-spline basis at u.

    Parameters
    ----------
    u : float or array
        Points in [cfg.lower, cfg.upper] (round-off excursions tolerated).
    cfg : SplineConfig

    Returns
    -------
    numpy.ndarray
        Shape (cfg.n_basis,) for scalar u, else (len(u), cfg.n_basis).
    """
    scalar = np.isscalar(u) or np.ndim(u) == 0
    pts = _check_domain(np.atleast_1d(np.asarray(u, float)), cfg)
    design = _mspline_design(pts, _padded_knots(cfg, cfg.order), cfg.order)
    return design[0] if scalar else design


def _ispline_design(u, cfg):
    """I-spline design matrix at points u (assumed inside the domain).

    Uses the identity expressing order-m I-splines through the
    order-(m+1) M-spline family on the (m+1)-padded knot vector: with j
    the 1-based index of the knot interval containing u,

        I_i(u) = 0                                   for i > j,
        I_i(u) = sum_{l=i+1..j} w_l M_l(u)           for j - m <= i <= j,
        I_i(u) = 1                                   for i < j - m,

    where w_l = (t_{l+m+1} - t_l) / (m + 1).
    """
    m = cfg.order
    knots = _padded_knots(cfg, m + 1)
    msplines = _mspline_design(u, knots, m + 1)  # (npts, n_basis + 1)
    nb = msplines.shape[1]
    weights = (knots[m + 1 : m + 1 + nb] - knots[:nb]) / (m + 1.0)
    weighted = msplines * weights
    # tail[:, c] = sum over columns >= c; terms beyond the containing
    # interval vanish because the M-splines are zero there
    tail = np.cumsum(weighted[:, ::-1], axis=1)[:, ::-1]
    design = tail[:, 1:].copy()  # (npts, cfg.n_basis)
    interval = np.searchsorted(knots, u, side="right")  # 1-based interval index
    cols = np.arange(1, nb)  # 1-based basis index i
    design[cols[None, :] < (interval - m)[:, None]] = 1.0
    np.clip(design, 0.0, 1.0, out=design)
    return design


def ispline_basis(u, cfg):
    """Evaluate the order-`cfg.order` I-spline basis at u.

    Each basis function increases from 0 at the lower domain endpoint to 1
    at the upper endpoint.  Shapes follow mspline_basis.
    """
    scalar = np.isscalar(u) or np.ndim(u) == 0
    pts = _check_domain(np.atleast_1d(np.asarray(u, float)), cfg)
    design = _ispline_design(pts, cfg)
    return design[0] if scalar else design


def index_basis(u, cfg):
    """I-spline basis extended linearly beyond the spline domain.

    Outside [cfg.lower, cfg.upper] the basis continues with the slope it
    has at the nearer endpoint, so psi extends linearly.  Returns the
    design matrix and the number of points that required extension.
    """
    u = np.asarray(u, dtype=float)
    clipped = np.clip(u, cfg.lower, cfg.upper)
    design = _ispline_design(clipped, cfg)
    outside = np.flatnonzero((u < cfg.lower) | (u > cfg.upper))
    if outside.size:
        slopes = _mspline_design(clipped[outside], _padded_knots(cfg, cfg.order), cfg.order)
        design[outside] += (u[outside] - clipped[outside])[:, None] * slopes
    return design, outside.size


def psi(u, cfg, coef, extrapolate=True):
    """Nonlinear index effect psi(u) = gamma' (I(u) - I(0)).

    With extrapolate=True (default) points beyond the spline domain use
    the linear extension psi(u_c) + (u - u_c) psi'(u_c) at the clipped
    point u_c; otherwise such points raise DomainError.
    """
    gamma = _coef_vector(coef, cfg)
    scalar = np.isscalar(u) or np.ndim(u) == 0
    pts = np.atleast_1d(np.asarray(u, float))
    if extrapolate:
        design, _ = index_basis(pts, cfg)
    else:
        design = _ispline_design(_check_domain(pts, cfg), cfg)
    anchor = _ispline_design(np.zeros(1), cfg)[0]
    values = (design - anchor) @ gamma
    return float(values[0]) if scalar else values


def psi_derivative(u, cfg, coef, extrapolate=True):
    """Derivative psi'(u) = gamma' M(u); constant beyond the domain."""
    gamma = _coef_vector(coef, cfg)
    scalar = np.isscalar(u) or np.ndim(u) == 0
    pts = np.atleast_1d(np.asarray(u, float))
    if extrapolate:
        pts = np.clip(pts, cfg.lower, cfg.upper)
    else:
        pts = _check_domain(pts, cfg)
    values = _mspline_design(pts, _padded_knots(cfg, cfg.order), cfg.order) @ gamma
    return float(values[0]) if scalar else values


def choose_knots(index_values, n_interior, order=3):
    """Build a SplineConfig from observed index values.

    Interior knots are the quantiles splitting the values into
    n_interior + 1 groups of equal count.  The domain covers the observed
    range and zero (so psi(0) is always an interior evaluation), widened
    by a small margin.
    """
    values = np.asarray(index_values, dtype=float)
    if values.size == 0:
        raise ConfigurationError("cannot place knots on an empty set of index values")
    if n_interior < 0:
        raise ConfigurationError(f"n_interior must be >= 0, got {n_interior}")
    lo = min(values.min(), 0.0)
    hi = max(values.max(), 0.0)
    margin = 1e-6 * (hi - lo if hi > lo else 1.0)
    lo, hi = lo - margin, hi + margin
    if n_interior:
        probs = np.arange(1, n_interior + 1) / (n_interior + 1)
        interior = np.quantile(values, probs)
        if not (
            np.all(np.diff(interior) > 0) and interior[0] > lo and interior[-1] < hi
        ):
            raise ConfigurationError(
                "index values too concentrated for the requested knot count; "
                f"quantile knots {interior} are not strictly separated"
            )
    else:
        interior = ()
    return SplineConfig(order=order, interior=tuple(interior), lower=lo, upper=hi)
