import numpy as np
import pytest

from siph.exceptions import DomainError
from siph.hazard import PiecewiseHazard
from siph.copula import joint_survival
from siph.likelihood import (
    LikelihoodEvaluator,
    cluster_loglik,
    linear_predictor,
    marginal_survival,
    score_per_cluster,
    total_loglik,
)
from siph.params import ClusterDataset, ClusterObservation, ModelParams, ModelStructure
from siph.reparam import to_unconstrained
from siph.splines import SplineCoefficients, SplineConfig, psi

CFG = SplineConfig(order=3, interior=(-0.5, 0.0, 0.5), lower=-2.2, upper=2.2)
CUTS1 = (0.0, 0.7, 1.4)
CUTS2 = (0.0, 0.5, 1.1)
STRUCTURE = ModelStructure(cuts1=CUTS1, cuts2=CUTS2, spline=CFG, n_linear=1, n_index=3)


def random_params(rng):
    alpha = rng.normal(size=3)
    alpha /= np.linalg.norm(alpha)
    alpha[-1] = abs(alpha[-1]) + 1e-3
    alpha /= np.linalg.norm(alpha)
    return ModelParams(
        phi=float(rng.uniform(0.3, 4.0)),
        rho=PiecewiseHazard(cuts=CUTS1, rates=tuple(rng.uniform(0.2, 1.5, 3))),
        tau=PiecewiseHazard(cuts=CUTS2, rates=tuple(rng.uniform(0.2, 1.5, 3))),
        alpha=alpha,
        beta=rng.normal(size=1),
        gamma=SplineCoefficients(gamma=rng.normal(size=6) * 0.8),
    )


def random_cluster(rng, delta):
    cuts = np.array(sorted(set(CUTS1 + CUTS2)))
    while True:
        y = rng.uniform(0.1, 2.5, size=2)
        if np.all(np.abs(y[:, None] - cuts[None, :]) > 2e-3):
            break
    return ClusterObservation(
        y=y,
        delta=np.asarray(delta),
        x=rng.integers(0, 2, size=(2, 1)).astype(float),
        v=rng.uniform(-1, 1, size=(2, 3)),
    )


def joint_surv_at(t1, t2, obs, params):
    s1 = marginal_survival(t1, 1, obs.x[0], obs.v[0], params, CFG)
    s2 = marginal_survival(t2, 2, obs.x[1], obs.v[1], params, CFG)
    return joint_survival(s1, s2, params.phi)


def test_linear_predictor_combines_both_effects():
    params = random_params(np.random.default_rng(1))
    x = np.array([1.0])
    v = np.array([0.3, -0.2, 0.5])
    expected = params.beta[0] * 1.0 + psi(v @ params.alpha, CFG, params.gamma)
    assert linear_predictor(x, v, params, CFG) == pytest.approx(expected)


def test_marginal_survival_closed_form():
    params = random_params(np.random.default_rng(2))
    x = np.array([0.0])
    v = np.zeros(3)
    eta = psi(0.0, CFG, params.gamma)
    t = 1.2
    lam = 0.7 * params.rho.rates[0] + 0.5 * params.rho.rates[1]
    assert marginal_survival(t, 1, x, v, params, CFG) == pytest.approx(
        np.exp(-lam * np.exp(eta))
    )
    assert marginal_survival(0.0, 2, x, v, params, CFG) == 1.0


def test_doubly_censored_cluster_is_log_joint_survival():
    rng = np.random.default_rng(3)
    for _ in range(20):
        params = random_params(rng)
        obs = random_cluster(rng, (0, 0))
        direct = np.log(joint_surv_at(obs.y[0], obs.y[1], obs, params))
        assert cluster_loglik(obs, params, CFG) == pytest.approx(direct, rel=1e-10)


def test_single_event_cluster_matches_time_derivative():
    rng = np.random.default_rng(4)
    h = 1e-5
    for _ in range(40):
        params = random_params(rng)
        obs = random_cluster(rng, (1, 0))
        fd = -(
            joint_surv_at(obs.y[0] + h, obs.y[1], obs, params)
            - joint_surv_at(obs.y[0] - h, obs.y[1], obs, params)
        ) / (2 * h)
        assert np.exp(cluster_loglik(obs, params, CFG)) == pytest.approx(fd, rel=1e-4)


def test_censored_then_event_cluster_matches_time_derivative():
    rng = np.random.default_rng(5)
    h = 1e-5
    for _ in range(40):
        params = random_params(rng)
        obs = random_cluster(rng, (0, 1))
        fd = -(
            joint_surv_at(obs.y[0], obs.y[1] + h, obs, params)
            - joint_surv_at(obs.y[0], obs.y[1] - h, obs, params)
        ) / (2 * h)
        assert np.exp(cluster_loglik(obs, params, CFG)) == pytest.approx(fd, rel=1e-4)


def test_double_event_cluster_matches_mixed_difference():
    rng = np.random.default_rng(6)
    h = 1e-4
    for _ in range(100):
        params = random_params(rng)
        obs = random_cluster(rng, (1, 1))
        mixed = (
            joint_surv_at(obs.y[0] + h, obs.y[1] + h, obs, params)
            - joint_surv_at(obs.y[0] + h, obs.y[1] - h, obs, params)
            - joint_surv_at(obs.y[0] - h, obs.y[1] + h, obs, params)
            + joint_surv_at(obs.y[0] - h, obs.y[1] - h, obs, params)
        ) / (4 * h * h)
        assert np.exp(cluster_loglik(obs, params, CFG)) == pytest.approx(mixed, rel=1e-3)


def test_near_independence_splits_into_univariate_terms():
    rng = np.random.default_rng(7)
    params = random_params(rng)
    params.phi = 1e4
    obs = random_cluster(rng, (1, 1))
    univariate = 0.0
    for j, baseline in ((0, params.rho), (1, params.tau)):
        eta = linear_predictor(obs.x[j], obs.v[j], params, CFG)
        lam = baseline.rates[np.searchsorted(baseline.cuts, obs.y[j]) - 1]
        cum = np.sum(
            np.clip(np.minimum(obs.y[j], np.append(baseline.cuts[1:], np.inf)) - baseline.cuts, 0, None)
            * baseline.rates
        )
        univariate += np.log(lam) + eta - cum * np.exp(eta)
    assert cluster_loglik(obs, params, CFG) == pytest.approx(univariate, abs=1e-3)


def test_continuity_across_cut_points():
    rng = np.random.default_rng(8)
    params = random_params(rng)
    obs = random_cluster(rng, (0, 0))
    eps = 1e-9
    for cut in CUTS1[1:]:
        lo = ClusterObservation(y=[cut - eps, obs.y[1]], delta=[0, 0], x=obs.x, v=obs.v)
        hi = ClusterObservation(y=[cut + eps, obs.y[1]], delta=[0, 0], x=obs.x, v=obs.v)
        assert cluster_loglik(lo, params, CFG) == pytest.approx(
            cluster_loglik(hi, params, CFG), abs=1e-6
        )
    # with an event at the cut the log-hazard itself jumps by the log rate ratio
    cut = CUTS1[1]
    lo = ClusterObservation(y=[cut - eps, obs.y[1]], delta=[1, 0], x=obs.x, v=obs.v)
    hi = ClusterObservation(y=[cut + eps, obs.y[1]], delta=[1, 0], x=obs.x, v=obs.v)
    jump = cluster_loglik(hi, params, CFG) - cluster_loglik(lo, params, CFG)
    assert jump == pytest.approx(np.log(params.rho.rates[1] / params.rho.rates[0]), abs=1e-6)


def test_raising_rates_lowers_censored_loglik():
    rng = np.random.default_rng(9)
    params = random_params(rng)
    dataset = ClusterDataset.from_observations(
        [random_cluster(rng, (0, 0)) for _ in range(10)]
    )
    bumped = ModelParams(
        phi=params.phi,
        rho=PiecewiseHazard(cuts=CUTS1, rates=tuple(2.0 * r for r in params.rho.rates)),
        tau=PiecewiseHazard(cuts=CUTS2, rates=tuple(2.0 * r for r in params.tau.rates)),
        alpha=params.alpha,
        beta=params.beta,
        gamma=params.gamma,
    )
    assert total_loglik(dataset, bumped, CFG) < total_loglik(dataset, params, CFG)


def test_total_is_sum_of_clusters():
    rng = np.random.default_rng(10)
    params = random_params(rng)
    observations = [
        random_cluster(rng, d) for d in ((0, 0), (1, 0), (0, 1), (1, 1), (1, 1))
    ]
    total = total_loglik(observations, params, CFG)
    assert total == pytest.approx(
        sum(cluster_loglik(o, params, CFG) for o in observations)
    )
    doubled = total_loglik(observations + observations, params, CFG)
    assert doubled == pytest.approx(2 * total)


def test_event_at_time_zero_names_cluster():
    rng = np.random.default_rng(11)
    params = random_params(rng)
    good = random_cluster(rng, (1, 1))
    bad = ClusterObservation(y=[0.0, 1.0], delta=[1, 0], x=good.x, v=good.v)
    with pytest.raises(DomainError, match="cluster 1"):
        total_loglik([good, bad], params, CFG)


def test_evaluator_agrees_with_reference_path():
    rng = np.random.default_rng(12)
    params = random_params(rng)
    observations = [
        random_cluster(rng, d) for d in ((0, 0), (1, 0), (0, 1), (1, 1))
    ] * 5
    dataset = ClusterDataset.from_observations(observations)
    evaluator = LikelihoodEvaluator(dataset, STRUCTURE)
    vec = to_unconstrained(params).to_vector()
    assert evaluator.total(vec) == pytest.approx(
        total_loglik(dataset, params, CFG), rel=1e-12
    )
    # repeated evaluation through the design cache stays identical
    first = evaluator.per_cluster(vec).copy()
    evaluator.per_cluster(vec + 1e-3)  # populate cache with a second design
    assert evaluator.per_cluster(vec) == pytest.approx(first, rel=0, abs=0)


def test_score_columns_sum_to_total_gradient():
    rng = np.random.default_rng(13)
    params = random_params(rng)
    observations = [random_cluster(rng, (1, 1)) for _ in range(8)]
    observations += [random_cluster(rng, (1, 0)) for _ in range(4)]
    dataset = ClusterDataset.from_observations(observations)
    evaluator = LikelihoodEvaluator(dataset, STRUCTURE)
    tparams = to_unconstrained(params)
    scores = score_per_cluster(dataset, tparams, STRUCTURE)
    grad = evaluator.gradient(tparams.to_vector())
    assert scores.shape == (12, STRUCTURE.dim_theta_star)
    assert scores.sum(axis=0) == pytest.approx(grad, abs=1e-8)


def test_score_is_stable_under_step_halving():
    rng = np.random.default_rng(14)
    params = random_params(rng)
    dataset = ClusterDataset.from_observations(
        [random_cluster(rng, (1, 1)) for _ in range(6)]
    )
    evaluator = LikelihoodEvaluator(dataset, STRUCTURE)
    vec = to_unconstrained(params).to_vector()

    def score_with_step(scale):
        h = scale * (1.0 + np.abs(vec))
        out = np.empty((dataset.n_clusters, vec.size))
        for j in range(vec.size):
            up, down = vec.copy(), vec.copy()
            up[j] += h[j]
            down[j] -= h[j]
            out[:, j] = (evaluator.per_cluster(up) - evaluator.per_cluster(down)) / (
                2 * h[j]
            )
        return out

    full = score_with_step(1e-6)
    half = score_with_step(5e-7)
    scale = np.maximum(np.abs(full), 1.0)
    assert np.max(np.abs(full - half) / scale) < 1e-4


def test_gradient_rejects_probes_beyond_parameter_bound():
    rng = np.random.default_rng(15)
    dataset = ClusterDataset.from_observations(
        [random_cluster(rng, (1, 1)) for _ in range(3)]
    )
    evaluator = LikelihoodEvaluator(dataset, STRUCTURE)
    vec = to_unconstrained(random_params(rng)).to_vector()
    vec[0] = 200.0
    with pytest.raises(DomainError, match="coordinate 0"):
        evaluator.gradient(vec)
