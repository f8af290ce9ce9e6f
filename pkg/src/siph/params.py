"""Containers for data, parameters, and the model layout they share."""

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, DatasetError
from .hazard import PiecewiseHazard
from .splines import SplineCoefficients, SplineConfig


@dataclass
class ClusterObservation:
    """One two-member cluster: times, event indicators, covariates."""

    y: np.ndarray      # (2,) observation times
    delta: np.ndarray  # (2,) 1 = event, 0 = censored
    x: np.ndarray      # (2, p) covariates with linear effect
    v: np.ndarray      # (2, q) covariates entering the index

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).reshape(2)
        self.delta = np.asarray(self.delta, dtype=np.int8).reshape(2)
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float)).reshape(2, -1)
        self.v = np.atleast_2d(np.asarray(self.v, dtype=float)).reshape(2, -1)


class ClusterDataset:
    """Vectorized storage for n clusters of paired observations."""

    def __init__(self, y, delta, x, v):
        self.y = np.asarray(y, dtype=float)
        self.delta = np.asarray(delta, dtype=np.int8)
        self.x = np.asarray(x, dtype=float)
        self.v = np.asarray(v, dtype=float)
        n = self.y.shape[0]
        if self.y.shape != (n, 2) or self.delta.shape != (n, 2):
            raise DatasetError(
                f"times and status must have shape (n, 2), got {self.y.shape} "
                f"and {self.delta.shape}"
            )
        if self.x.ndim != 3 or self.x.shape[:2] != (n, 2):
            raise DatasetError(f"x must have shape (n, 2, p), got {self.x.shape}")
        if self.v.ndim != 3 or self.v.shape[:2] != (n, 2):
            raise DatasetError(f"v must have shape (n, 2, q), got {self.v.shape}")
        for name, arr in (("y", self.y), ("x", self.x), ("v", self.v)):
            if not np.all(np.isfinite(arr)):
                bad = int(np.argwhere(~np.isfinite(arr))[0][0])
                raise DatasetError(f"non-finite value in {name} at cluster {bad}")
        if np.any(self.y < 0):
            bad = int(np.argwhere(self.y < 0)[0][0])
            raise DatasetError(f"negative observation time at cluster {bad}")
        if not np.all(np.isin(self.delta, (0, 1))):
            bad = int(np.argwhere(~np.isin(self.delta, (0, 1)))[0][0])
            raise DatasetError(f"status must be 0 or 1, offending cluster {bad}")

    @property
    def n_clusters(self):
        return self.y.shape[0]

    @property
    def n_linear(self):
        return self.x.shape[2]

    @property
    def n_index(self):
        return self.v.shape[2]

    @classmethod
    def from_observations(cls, observations):
        obs = list(observations)
        if not obs:
            raise DatasetError("empty dataset")
        return cls(
            y=np.stack([o.y for o in obs]),
            delta=np.stack([o.delta for o in obs]),
            x=np.stack([o.x for o in obs]),
            v=np.stack([o.v for o in obs]),
        )

    def observations(self):
        return [
            ClusterObservation(y=self.y[i], delta=self.delta[i], x=self.x[i], v=self.v[i])
            for i in range(self.n_clusters)
        ]


@dataclass(frozen=True)
class ModelStructure:
    """Fixed layout a fit works within: cuts, knots, covariate counts."""

    cuts1: tuple
    cuts2: tuple
    spline: SplineConfig
    n_linear: int
    n_index: int

    @property
    def r(self):
        return len(self.cuts1)

    @property
    def s(self):
        return len(self.cuts2)

    @property
    def d(self):
        return self.spline.n_basis

    @property
    def dim_theta(self):
        return 1 + self.r + self.s + self.n_index + self.n_linear + self.d

    @property
    def dim_theta_star(self):
        return self.dim_theta - 1

    def star_slices(self):
        """Named slices into the packed unconstrained vector."""
        r, s, q, p, d = self.r, self.s, self.n_index, self.n_linear, self.d
        bounds = np.cumsum([1, r, s, q - 1, p, d])
        names = ("varrho", "xi", "zeta", "varphi", "beta", "gamma")
        starts = np.concatenate([[0], bounds[:-1]])
        return {k: slice(int(a), int(b)) for k, a, b in zip(names, starts, bounds)}


@dataclass
class ModelParams:
    """Natural-scale parameters of the fitted model."""

    phi: float
    rho: PiecewiseHazard
    tau: PiecewiseHazard
    alpha: np.ndarray
    beta: np.ndarray
    gamma: SplineCoefficients

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        if not self.phi > 0:
            raise ConfigurationError(f"phi must be positive, got {self.phi}")
        norm = np.linalg.norm(self.alpha)
        if abs(norm - 1.0) > 1e-6:
            raise ConfigurationError(f"alpha must have unit norm, got norm {norm}")
        if not self.alpha[-1] > 0:
            raise ConfigurationError(
                f"the last index coefficient must be positive, got {self.alpha[-1]}"
            )


@dataclass
class TransformedParams:
    """Unconstrained parameters: logs of phi and the rates, angle logits
    for the index direction, and the untouched beta and gamma blocks."""

    varrho: float
    xi: np.ndarray
    zeta: np.ndarray
    varphi: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        self.zeta = np.asarray(self.zeta, dtype=float)
        self.varphi = np.asarray(self.varphi, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)

    def to_vector(self):
        return np.concatenate(
            [[self.varrho], self.xi, self.zeta, self.varphi, self.beta, self.gamma]
        )

    @classmethod
    def from_vector(cls, vec, structure):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (structure.dim_theta_star,):
            raise ConfigurationError(
                f"parameter vector has length {vec.shape}, structure needs "
                f"{structure.dim_theta_star}"
            )
        sl = structure.star_slices()
        return cls(
            varrho=float(vec[0]),
            xi=vec[sl["xi"]].copy(),
            zeta=vec[sl["zeta"]].copy(),
            varphi=vec[sl["varphi"]].copy(),
            beta=vec[sl["beta"]].copy(),
            gamma=vec[sl["gamma"]].copy(),
        )
