"""Clayton copula pieces used by the pairwise likelihood.

The joint survival function of a cluster is

    S(t1, t2) = (s1^(-1/phi) + s2^(-1/phi) - 1)^(-phi),

with marginal survival values s1, s2 and association parameter phi > 0.
Small phi means strong positive dependence; phi -> infinity approaches
independence.  Kendall's tau is 1 / (1 + 2 phi).

All heavy lifting happens on the log scale: with z_j = -log(s_j)/phi >= 0
the bracket is A = expm1(z1) + expm1(z2) + 1, and log A is computed either
through log1p (moderate z) or a shifted log-sum-exp (large z), so clusters
deep in the tail stay finite.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError

# below this, exp(z) cannot overflow and expm1/log1p keep full precision
_Z_SMALL = 30.0
# floor for A - 1 so independence-limit round-off cannot push A below 1
_BRACKET_FLOOR = 1e-15


@dataclass(frozen=True)
class ClaytonParam:
    """Association parameter of the Clayton copula."""

    phi: float

    def __post_init__(self):
        if not self.phi > 0:
            raise DomainError(f"phi must be positive, got {self.phi}")


def _phi_value(phi):
    value = phi.phi if isinstance(phi, ClaytonParam) else float(phi)
    if not value > 0:
        raise DomainError(f"phi must be positive, got {value}")
    return value


def _check_unit_open(name, s):
    if np.any(s <= 0) or np.any(s > 1):
        raise DomainError(f"{name} must lie in (0, 1], got values outside")


def log_bracket(log_s1, log_s2, phi):
    """log(s1^(-1/phi) + s2^(-1/phi) - 1) from log survival values.

    Accepts arrays; log survival values must be <= 0.  Stable for both
    the near-independence regime (tiny z) and deep tails (huge z).
    """
    phi = _phi_value(phi)
    z1 = -np.asarray(log_s1, dtype=float) / phi
    z2 = -np.asarray(log_s2, dtype=float) / phi
    z1, z2 = np.broadcast_arrays(z1, z2)
    zmax = np.maximum(z1, z2)
    out = np.empty_like(zmax)
    small = zmax < _Z_SMALL
    if np.any(small):
        bracket_m1 = np.expm1(z1[small]) + np.expm1(z2[small])
        out[small] = np.log1p(np.maximum(bracket_m1, _BRACKET_FLOOR))
    if not np.all(small):
        big = ~small
        m = zmax[big]
        out[big] = m + np.log(
            np.exp(z1[big] - m) + np.exp(z2[big] - m) - np.exp(-m)
        )
    return out


def joint_survival(s1, s2, phi):
    """Joint survival probability of the pair at marginal levels (s1, s2)."""
    phi = _phi_value(phi)
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    _check_unit_open("s1", s1)
    _check_unit_open("s2", s2)
    scalar = s1.ndim == 0 and s2.ndim == 0
    value = np.exp(-phi * log_bracket(np.log(s1), np.log(s2), phi))
    return float(value) if scalar else value


def copula_partial_factor(s_self, s_other, phi):
    """Copula factor A^(-phi-1) s_self^(-1/phi) in the partial derivative.

    The derivative of the joint survival function with respect to the
    failure time of the `self` member equals this factor times the
    marginal hazard contribution of that member; it carries the whole
    dependence adjustment for a cluster with one event.
    """
    phi = _phi_value(phi)
    s_self = np.asarray(s_self, dtype=float)
    s_other = np.asarray(s_other, dtype=float)
    _check_unit_open("s_self", s_self)
    _check_unit_open("s_other", s_other)
    scalar = s_self.ndim == 0 and s_other.ndim == 0
    ls_self = np.log(s_self)
    log_a = log_bracket(ls_self, np.log(s_other), phi)
    value = np.exp((-phi - 1.0) * log_a - ls_self / phi)
    return float(value) if scalar else value


def copula_density_factor(s1, s2, phi):
    """Copula factor (s1 s2)^(-1/phi) A^(-phi-2) (1 + 1/phi) in the density.

    Multiplying by both members' marginal hazard contributions gives the
    joint density for a cluster with two events.
    """
    phi = _phi_value(phi)
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    _check_unit_open("s1", s1)
    _check_unit_open("s2", s2)
    scalar = s1.ndim == 0 and s2.ndim == 0
    ls1, ls2 = np.log(s1), np.log(s2)
    log_a = log_bracket(ls1, ls2, phi)
    value = np.exp((-phi - 2.0) * log_a - (ls1 + ls2) / phi) * (1.0 + 1.0 / phi)
    return float(value) if scalar else value


def sample_pair(phi, rng):
    """Draw one pair (u1, u2) of uniform margins from the copula.

    Uses inversion of the conditional distribution: with u1 and w
    independent uniforms,

        u2 = (u1^(-1/phi) (w^(-1/(phi+1)) - 1) + 1)^(-phi).
    """
    u1, u2 = sample_pairs(phi, 1, rng)[0]
    return float(u1), float(u2)


def sample_pairs(phi, n, rng):
    """Draw n pairs of uniform margins from the copula; shape (n, 2)."""
    phi = _phi_value(phi)
    u1 = rng.uniform(size=n)
    w = rng.uniform(size=n)
    u2 = (u1 ** (-1.0 / phi) * (w ** (-1.0 / (phi + 1.0)) - 1.0) + 1.0) ** -phi
    return np.column_stack([u1, u2])


def kendall_tau(phi):
    """Population Kendall's tau implied by phi."""
    phi = _phi_value(phi)
    return 1.0 / (1.0 + 2.0 * phi)
