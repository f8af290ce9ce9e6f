"""Two-stage maximum-likelihood fitting.

A fit proceeds in a fixed order.  Baseline cut points come first, read
off the Kaplan-Meier curve of each margin.  A reference model with a
plain linear index effect is then maximized; its fitted direction picks
the spline knots and seeds the full model, whose likelihood is maximized
by BFGS over the unconstrained parametrization with central-difference
gradients.  Standard errors come from the inverse outer product of the
per-cluster scores, mapped to the natural scale by the delta method.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.optimize import minimize

from .exceptions import DomainError, SingularVarianceError
from .hazard import PiecewiseHazard, choose_cuts, interval_exposure
from .likelihood import (
    LikelihoodEvaluator,
    LinearLikelihoodEvaluator,
    _hazard_pieces,
)
from .params import ClusterDataset, ModelStructure, TransformedParams
from .reparam import (
    angles_from_direction,
    from_unconstrained,
    jacobian,
    logits_from_angles,
)
from .splines import choose_knots, psi

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class FitOptions:
    """Knobs of the fitting pipeline with their defaults."""

    n_pieces: int = 4
    n_interior: int = 3
    order: int = 3
    gtol: float = 1e-5
    ftol: float = 1e-9
    max_iter: int = 500


@dataclass
class Maximized:
    """Raw outcome of one likelihood maximization."""

    vec: np.ndarray
    loglik: float
    converged: bool
    n_iter: int
    gradient_norm: float
    rel_change: float
    message: str


@dataclass
class LinearFitResult:
    """Fitted reference model with eta = beta' x + alpha~' v.

    The unconstrained direction factors as alpha~ = b * alpha with
    |alpha| = 1; b carries the sign that makes the last entry of alpha
    nonnegative.
    """

    alpha_tilde: np.ndarray
    b: float
    alpha: np.ndarray
    beta: np.ndarray
    phi: float
    rho: PiecewiseHazard
    tau: PiecewiseHazard
    loglik: float
    converged: bool
    n_iter: int
    gradient_norm: float
    cov: np.ndarray | None
    slices: dict
    cuts_fallback: tuple

    def se(self, block):
        """Standard error of a packed block ('varrho', 'beta', ...)."""
        if self.cov is None:
            return None
        return np.sqrt(np.diag(self.cov))[self.slices[block]]


@dataclass
class InitResult:
    """Starting point and fixed structure for the full model."""

    tparams: TransformedParams
    structure: ModelStructure
    linear: LinearFitResult
    cuts_fallback: tuple


@dataclass
class FitResult:
    """Fitted single-index model with its uncertainty and diagnostics."""

    structure: ModelStructure
    theta_star: TransformedParams
    params: object
    loglik: float
    converged: bool
    n_iter: int
    gradient_norm: float
    rel_change: float
    cov_theta_star: np.ndarray | None
    cov_theta: np.ndarray | None
    cuts_fallback: tuple
    extrapolation_active: bool
    n_extrapolated: int
    linear: LinearFitResult
    message: str = ""
    init_vector: np.ndarray = field(default=None, repr=False)

    def theta_vector(self):
        p = self.params
        return np.concatenate(
            [[p.phi], p.rho.rates, p.tau.rates, p.alpha, p.beta, p.gamma.gamma]
        )

    def se_theta(self):
        if self.cov_theta is None:
            return None
        return np.sqrt(np.maximum(np.diag(self.cov_theta), 0.0))

    def psi_at(self, u):
        """Fitted nonlinear effect on a grid (linear beyond the knots)."""
        return psi(u, self.structure.spline, self.params.gamma)

    def parameter_table(self):
        """All natural-scale parameters with delta-method standard errors."""
        st = self.structure
        names = (
            ["phi"]
            + [f"rho_{k + 1}" for k in range(st.r)]
            + [f"tau_{k + 1}" for k in range(st.s)]
            + [f"alpha_{k + 1}" for k in range(st.n_index)]
            + [f"beta_{k + 1}" for k in range(st.n_linear)]
            + [f"gamma_{k + 1}" for k in range(st.d)]
        )
        se = self.se_theta()
        return pd.DataFrame(
            {
                "parameter": names,
                "estimate": self.theta_vector(),
                "se": se if se is not None else np.full(st.dim_theta, np.nan),
            }
        )

    def transformed_table(self):
        """Unconstrained-scale parameters with their direct standard errors."""
        st = self.structure
        names = (
            ["varrho"]
            + [f"xi_{k + 1}" for k in range(st.r)]
            + [f"zeta_{k + 1}" for k in range(st.s)]
            + [f"varphi_{k + 1}" for k in range(st.n_index - 1)]
            + [f"beta_{k + 1}" for k in range(st.n_linear)]
            + [f"gamma_{k + 1}" for k in range(st.d)]
        )
        if self.cov_theta_star is not None:
            se = np.sqrt(np.maximum(np.diag(self.cov_theta_star), 0.0))
        else:
            se = np.full(st.dim_theta_star, np.nan)
        return pd.DataFrame(
            {"parameter": names, "estimate": self.theta_star.to_vector(), "se": se}
        )


def _initial_log_rates(y_col, delta_col, cuts):
    """Occurrence/exposure rates per interval, smoothed away from zero."""
    exposure = interval_exposure(y_col, np.asarray(cuts)).sum(axis=0)
    events = np.zeros(len(cuts))
    np.add.at(events, _hazard_pieces(y_col, cuts)[delta_col == 1], 1.0)
    return np.log((events + 0.5) / np.maximum(exposure, 1e-10))


def maximize(evaluator, init_vec, *, gtol=1e-5, ftol=1e-9, max_iter=500):
    """Maximize the evaluator's total log-likelihood from init_vec by BFGS.

    Convergence demands a gradient max-norm below gtol and a relative
    log-likelihood change below ftol between the last two iterates.  A
    run that exhausts max_iter or stalls comes back flagged, never as an
    exception.
    """
    init_vec = np.asarray(init_vec, dtype=float)
    first = evaluator.total(init_vec)
    if not np.isfinite(first):
        raise DomainError("non-finite log-likelihood at the initial point")
    history = [first]
    result = minimize(
        lambda v: -evaluator.total(v),
        init_vec,
        jac=lambda v: -evaluator.gradient_safe(v),
        method="BFGS",
        callback=lambda xk: history.append(evaluator.total(xk)),
        options={"gtol": gtol, "maxiter": max_iter, "norm": np.inf},
    )
    try:
        gradient_norm = float(np.max(np.abs(evaluator.gradient(result.x))))
    except DomainError:
        gradient_norm = np.inf
    if len(history) >= 2:
        rel_change = abs(history[-1] - history[-2]) / (1.0 + abs(history[-1]))
    else:
        rel_change = 0.0
    return Maximized(
        vec=result.x,
        loglik=float(-result.fun),
        converged=bool(gradient_norm < gtol and rel_change < ftol),
        n_iter=int(result.nit),
        gradient_norm=gradient_norm,
        rel_change=rel_change,
        message=str(result.message),
    )


def variance_theta_star(evaluator, vec, cond_limit=_COND_LIMIT):
    """Covariance of the unconstrained estimate from per-cluster scores.

    Inverts the outer-product information sum_i g_i g_i'; a condition
    number beyond cond_limit aborts instead of returning garbage.
    """
    scores = evaluator.score_matrix(np.asarray(vec, dtype=float))
    info = scores.T @ scores
    cond = np.linalg.cond(info)
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularVarianceError(
            f"score outer-product matrix has condition number {cond:.3g}; "
            "the model is too rich for the data, consider fewer baseline "
            "pieces or interior knots"
        )
    cov = np.linalg.inv(info)
    return (cov + cov.T) / 2.0


def variance_theta(cov_theta_star, tparams, structure):
    """Delta-method covariance on the natural scale."""
    jac = jacobian(tparams, structure)
    cov = jac @ cov_theta_star @ jac.T
    return (cov + cov.T) / 2.0


def fit_ph_linear(dataset, *, options=FitOptions(), cuts=None, compute_cov=True):
    """Fit the reference model with a linear index effect.

    Cut points are chosen per margin unless supplied.  Returns a
    LinearFitResult; non-convergence is flagged on it, not raised.
    """
    if not isinstance(dataset, ClusterDataset):
        dataset = ClusterDataset.from_observations(dataset)
    if cuts is None:
        cuts1, fb1 = choose_cuts(dataset.y[:, 0], dataset.delta[:, 0], options.n_pieces)
        cuts2, fb2 = choose_cuts(dataset.y[:, 1], dataset.delta[:, 1], options.n_pieces)
        fallback = (fb1, fb2)
    else:
        (cuts1, cuts2), fallback = cuts, (False, False)
    evaluator = LinearLikelihoodEvaluator(dataset, cuts1, cuts2)
    init = np.zeros(evaluator.dim)
    init[evaluator.slices["xi"]] = _initial_log_rates(
        dataset.y[:, 0], dataset.delta[:, 0], cuts1
    )
    init[evaluator.slices["zeta"]] = _initial_log_rates(
        dataset.y[:, 1], dataset.delta[:, 1], cuts2
    )
    done = maximize(
        evaluator, init, gtol=options.gtol, ftol=options.ftol, max_iter=options.max_iter
    )
    sl = evaluator.slices
    alpha_tilde = done.vec[sl["alpha_tilde"]]
    norm = float(np.linalg.norm(alpha_tilde))
    sign = 1.0 if alpha_tilde[-1] >= 0 else -1.0
    b = sign * norm
    if norm > 1e-12:
        alpha = alpha_tilde / b
    else:
        alpha = np.zeros(evaluator.q)
        alpha[-1] = 1.0
    cov = None
    if compute_cov:
        try:
            cov = variance_theta_star(evaluator, done.vec)
        except SingularVarianceError:
            cov = None
    return LinearFitResult(
        alpha_tilde=alpha_tilde,
        b=b,
        alpha=alpha,
        beta=done.vec[sl["beta"]].copy(),
        phi=float(np.exp(done.vec[0])),
        rho=PiecewiseHazard(cuts=cuts1, rates=tuple(np.exp(done.vec[sl["xi"]]))),
        tau=PiecewiseHazard(cuts=cuts2, rates=tuple(np.exp(done.vec[sl["zeta"]]))),
        loglik=done.loglik,
        converged=done.converged,
        n_iter=done.n_iter,
        gradient_norm=done.gradient_norm,
        cov=cov,
        slices=sl,
        cuts_fallback=fallback,
    )


def initialize(dataset, options=FitOptions()):
    """Choose cuts and knots and seed the full model from the linear fit.

    The fitted linear direction fixes the spline domain and knots; they
    are not revisited later.  gamma starts at the constant vector whose
    spline reproduces the average slope b of the linear fit.
    """
    if not isinstance(dataset, ClusterDataset):
        dataset = ClusterDataset.from_observations(dataset)
    linear = fit_ph_linear(dataset, options=options, compute_cov=False)
    alpha0 = linear.alpha.copy()
    if alpha0[-1] < 1e-6:
        alpha0[-1] = 1e-6
        alpha0 /= np.linalg.norm(alpha0)
    index_values = dataset.v.reshape(-1, dataset.n_index) @ alpha0
    spline = choose_knots(index_values, options.n_interior, options.order)
    structure = ModelStructure(
        cuts1=linear.rho.cuts,
        cuts2=linear.tau.cuts,
        spline=spline,
        n_linear=dataset.n_linear,
        n_index=dataset.n_index,
    )
    slope = linear.b * (spline.upper - spline.lower) / spline.n_basis
    tparams = TransformedParams(
        varrho=0.0,
        xi=np.log(np.asarray(linear.rho.rates)),
        zeta=np.log(np.asarray(linear.tau.rates)),
        varphi=logits_from_angles(angles_from_direction(alpha0)),
        beta=linear.beta.copy(),
        gamma=np.full(spline.n_basis, slope),
    )
    return InitResult(
        tparams=tparams,
        structure=structure,
        linear=linear,
        cuts_fallback=linear.cuts_fallback,
    )


def fit_model(dataset, options=FitOptions()):
    """Full fitting pipeline; returns a FitResult, flagged if not converged."""
    if not isinstance(dataset, ClusterDataset):
        dataset = ClusterDataset.from_observations(dataset)
    init = initialize(dataset, options)
    evaluator = LikelihoodEvaluator(dataset, init.structure)
    done = maximize(
        evaluator,
        init.tparams.to_vector(),
        gtol=options.gtol,
        ftol=options.ftol,
        max_iter=options.max_iter,
    )
    theta_star = TransformedParams.from_vector(done.vec, init.structure)
    params = from_unconstrained(theta_star, init.structure)
    evaluator.per_cluster(done.vec)
    n_extrapolated = evaluator.n_extrapolated
    cov_star = cov_nat = None
    if done.converged:
        cov_star = variance_theta_star(evaluator, done.vec)
        cov_nat = variance_theta(cov_star, theta_star, init.structure)
    return FitResult(
        structure=init.structure,
        theta_star=theta_star,
        params=params,
        loglik=done.loglik,
        converged=done.converged,
        n_iter=done.n_iter,
        gradient_norm=done.gradient_norm,
        rel_change=done.rel_change,
        cov_theta_star=cov_star,
        cov_theta=cov_nat,
        cuts_fallback=init.cuts_fallback,
        extrapolation_active=n_extrapolated > 0,
        n_extrapolated=n_extrapolated,
        linear=init.linear,
        message=done.message,
        init_vector=init.tparams.to_vector(),
    )


def predict_individual(x, v, fit, margin=1, times=None):
    """Model-based cumulative hazard and survival for one individual.

    times defaults to a 100-point grid over the margin's fitted range.
    Returns a dict with times, cumulative_hazard, and survival arrays.
    """
    if margin not in (1, 2):
        raise DomainError(f"margin must be 1 or 2, got {margin}")
    baseline = fit.params.rho if margin == 1 else fit.params.tau
    if times is None:
        horizon = 2.0 * baseline.cuts[-1] if len(baseline.cuts) > 1 else 1.0
        times = np.linspace(0.0, horizon, 100)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise DomainError("prediction times must be nonnegative")
    x = np.asarray(x, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    index = float(v @ fit.params.alpha)
    eta = float(x @ fit.params.beta) + fit.psi_at(index)
    base = interval_exposure(times, baseline.cuts) @ np.asarray(baseline.rates)
    cumhaz = base * np.exp(eta)
    return {
        "times": times,
        "cumulative_hazard": cumhaz,
        "survival": np.exp(-cumhaz),
        "linear_predictor": eta,
    }
