"""Bijection between natural and unconstrained parametrizations.

The likelihood is maximized over an unconstrained vector

    theta* = (varrho, xi, zeta, varphi, beta, gamma)

that maps to the natural parameters theta = (phi, rho, tau, alpha, beta,
gamma) through exponentials for the positive blocks and a two-stage map
for the unit-norm index direction alpha: hyperspherical angles omega in
(-pi/2, pi/2)^(q-1) build alpha with its last entry positive, and a
log-ratio squashing makes each angle a free real,

    omega_i = (pi/2) tanh(varphi_i / 2).

Standard errors for theta come from the covariance of theta* via the
Jacobian of this map.
"""

import numpy as np

from .exceptions import ConfigurationError
from .hazard import PiecewiseHazard
from .params import ModelParams, TransformedParams
from .splines import SplineCoefficients

_HALF_PI = np.pi / 2.0
# keep recovered angles strictly inside the open interval so the logit
# map stays finite
_ANGLE_NUDGE = 1e-12


def angles_from_logits(varphi):
    """Map free reals to angles in (-pi/2, pi/2)."""
    return _HALF_PI * np.tanh(np.asarray(varphi, dtype=float) / 2.0)


def logits_from_angles(omega):
    """Inverse of angles_from_logits."""
    omega = np.asarray(omega, dtype=float)
    if np.any(np.abs(omega) >= _HALF_PI):
        raise ConfigurationError("angles must lie strictly inside (-pi/2, pi/2)")
    return np.log((_HALF_PI + omega) / (_HALF_PI - omega))


def direction_from_angles(omega):
    """Unit vector with positive last entry from q - 1 angles.

    The last coordinate is cos(omega_1); earlier coordinates peel off one
    sine each, alpha_{q-k} = sin(omega_1) ... sin(omega_k) cos(omega_{k+1}),
    down to alpha_1 which is the full product of sines.
    """
    omega = np.asarray(omega, dtype=float)
    q = omega.size + 1
    alpha = np.empty(q)
    alpha[q - 1] = 1.0
    sines = np.sin(omega)
    cosines = np.cos(omega)
    sin_prod = np.concatenate([[1.0], np.cumprod(sines)])
    if q > 1:
        alpha[q - 1] = cosines[0]
        for k in range(1, q - 1):
            alpha[q - 1 - k] = sin_prod[k] * cosines[k]
        alpha[0] = sin_prod[q - 1]
    return alpha


def angles_from_direction(alpha):
    """Recover the angles of a unit vector with positive last entry.

    Works down the coordinates keeping track of the signed product of
    sines consumed so far, so negative components land on negative
    angles rather than being folded into the wrong quadrant.
    """
    alpha = np.asarray(alpha, dtype=float)
    q = alpha.size
    if abs(np.linalg.norm(alpha) - 1.0) > 1e-6:
        raise ConfigurationError("alpha must have unit norm")
    if q > 1 and not alpha[-1] > 0:
        raise ConfigurationError("the last entry of alpha must be positive")
    omega = np.zeros(q - 1)
    signed_tail = 1.0  # signed product sin(omega_1) ... sin(omega_k)
    for k in range(1, q):
        if abs(signed_tail) < 1e-300:
            break  # remaining coordinates are exactly zero; any angles fit
        cos_k = alpha[q - k] / signed_tail
        rest_norm = np.linalg.norm(alpha[: q - k])
        sign = 1.0 if alpha[q - k - 1] >= 0 else -1.0
        next_tail = sign * rest_norm
        omega[k - 1] = np.arctan2(next_tail / signed_tail, cos_k)
        signed_tail = next_tail
    return np.clip(omega, -_HALF_PI + _ANGLE_NUDGE, _HALF_PI - _ANGLE_NUDGE)


def to_unconstrained(params):
    """Transform natural parameters into the free vector."""
    return TransformedParams(
        varrho=float(np.log(params.phi)),
        xi=np.log(np.asarray(params.rho.rates)),
        zeta=np.log(np.asarray(params.tau.rates)),
        varphi=logits_from_angles(angles_from_direction(params.alpha)),
        beta=params.beta.copy(),
        gamma=params.gamma.gamma.copy(),
    )


def from_unconstrained(tparams, structure):
    """Rebuild natural parameters; needs the structure for the cut points."""
    if tparams.xi.shape != (structure.r,) or tparams.zeta.shape != (structure.s,):
        raise ConfigurationError("rate blocks do not match the structure")
    return ModelParams(
        phi=float(np.exp(tparams.varrho)),
        rho=PiecewiseHazard(cuts=structure.cuts1, rates=tuple(np.exp(tparams.xi))),
        tau=PiecewiseHazard(cuts=structure.cuts2, rates=tuple(np.exp(tparams.zeta))),
        alpha=direction_from_angles(angles_from_logits(tparams.varphi)),
        beta=tparams.beta.copy(),
        gamma=SplineCoefficients(gamma=tparams.gamma.copy()),
    )


def _replaced_sine_product(sines, cosines, upto, replaced):
    """prod over j < upto of sin, with factor `replaced` swapped for cos."""
    factors = sines[:upto].copy()
    factors[replaced] = cosines[replaced]
    return np.prod(factors)


def direction_jacobian(omega):
    """d alpha / d omega, shape (q, q - 1), by product differentiation."""
    omega = np.asarray(omega, dtype=float)
    q = omega.size + 1
    jac = np.zeros((q, q - 1))
    if q == 1:
        return jac
    sines, cosines = np.sin(omega), np.cos(omega)
    jac[q - 1, 0] = -sines[0]
    for k in range(1, q - 1):
        row = q - 1 - k
        for i in range(k):
            jac[row, i] = _replaced_sine_product(sines, cosines, k, i) * cosines[k]
        jac[row, k] = -np.prod(sines[:k]) * sines[k]
    for i in range(q - 1):
        jac[0, i] = _replaced_sine_product(sines, cosines, q - 1, i)
    return jac


def jacobian(tparams, structure):
    """Jacobian of the map theta*(free) -> theta(natural).

    Rows follow theta = (phi, rho rates, tau rates, alpha, beta, gamma),
    columns follow theta* = (varrho, xi, zeta, varphi, beta, gamma).
    """
    r, s = structure.r, structure.s
    q, p, d = structure.n_index, structure.n_linear, structure.d
    jac = np.zeros((structure.dim_theta, structure.dim_theta_star))
    jac[0, 0] = np.exp(tparams.varrho)
    jac[1 : 1 + r, 1 : 1 + r] = np.diag(np.exp(tparams.xi))
    jac[1 + r : 1 + r + s, 1 + r : 1 + r + s] = np.diag(np.exp(tparams.zeta))
    row0, col0 = 1 + r + s, 1 + r + s
    omega = angles_from_logits(tparams.varphi)
    dangle = _HALF_PI / 2.0 / np.cosh(tparams.varphi / 2.0) ** 2
    jac[row0 : row0 + q, col0 : col0 + q - 1] = direction_jacobian(omega) * dangle
    row0, col0 = row0 + q, col0 + q - 1
    jac[row0 : row0 + p + d, col0 : col0 + p + d] = np.eye(p + d)
    return jac
