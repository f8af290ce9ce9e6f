"""Piecewise-constant baseline hazards and nonparametric reference curves."""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, DomainError


@dataclass(frozen=True)
class PiecewiseHazard:
    """Baseline hazard that is constant on intervals (c_{k-1}, c_k].

    cuts holds the interval start points 0 = c_0 < c_1 < ... < c_{K-1};
    the last interval is unbounded.  rates holds the K positive hazard
    levels.
    """

    cuts: tuple
    rates: tuple

    def __post_init__(self):
        object.__setattr__(self, "cuts", tuple(float(c) for c in self.cuts))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        cuts = np.asarray(self.cuts)
        if cuts.size == 0 or cuts[0] != 0.0 or np.any(np.diff(cuts) <= 0):
            raise ConfigurationError(
                f"cuts must start at 0 and increase strictly, got {self.cuts}"
            )
        if len(self.rates) != len(self.cuts):
            raise ConfigurationError(
                f"{len(self.cuts)} intervals need {len(self.cuts)} rates, "
                f"got {len(self.rates)}"
            )
        if any(r <= 0 for r in self.rates):
            raise ConfigurationError(f"rates must be positive, got {self.rates}")

    @property
    def n_pieces(self):
        return len(self.cuts)


def interval_exposure(t, cuts):
    """Time spent in each rate interval up to t.

    Returns an array of shape (len(t), len(cuts)) whose row sums are t.
    Entry k is the length of (0, t] inside (c_k, c_{k+1}] (last interval
    unbounded).
    """
    t = np.asarray(t, dtype=float)
    cuts = np.asarray(cuts, dtype=float)
    upper = np.append(cuts[1:], np.inf)
    return np.clip(np.minimum(t[:, None], upper[None, :]) - cuts[None, :], 0.0, None)


def cumulative_hazard(t, h):
    """Integrated baseline hazard at times t (scalar or array)."""
    scalar = np.isscalar(t) or np.ndim(t) == 0
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(times < 0):
        raise DomainError("cumulative hazard is undefined for negative times")
    values = interval_exposure(times, h.cuts) @ np.asarray(h.rates)
    return float(values[0]) if scalar else values


def hazard_at(t, h):
    """Hazard level at times t; intervals are closed on the right."""
    scalar = np.isscalar(t) or np.ndim(t) == 0
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(times <= 0):
        raise DomainError("the hazard is defined for positive times only")
    # side="left" puts t = c_k into the interval ending at c_k
    idx = np.searchsorted(np.asarray(h.cuts), times, side="left") - 1
    values = np.asarray(h.rates)[idx]
    return float(values[0]) if scalar else values


@dataclass
class StepFunction:
    """Right-continuous step function with a starting value before any jump."""

    jump_times: np.ndarray
    values: np.ndarray
    initial: float = field(default=0.0)

    def __post_init__(self):
        self.jump_times = np.asarray(self.jump_times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.jump_times.shape != self.values.shape:
            raise ConfigurationError("jump_times and values must align")
        if np.any(np.diff(self.jump_times) <= 0):
            raise ConfigurationError("jump_times must increase strictly")

    def __call__(self, t):
        scalar = np.isscalar(t) or np.ndim(t) == 0
        times = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.searchsorted(self.jump_times, times, side="right")
        padded = np.concatenate([[self.initial], self.values])
        out = padded[idx]
        return float(out[0]) if scalar else out


def _event_table(times, status):
    """Distinct event times with event counts and risk-set sizes."""
    times = np.asarray(times, dtype=float)
    status = np.asarray(status)
    if times.shape != status.shape:
        raise ConfigurationError("times and status must align")
    if np.any(times < 0):
        raise DomainError("negative observation time")
    event_times = np.unique(times[status == 1])
    deaths = np.array([np.sum((times == s) & (status == 1)) for s in event_times])
    at_risk = np.array([np.sum(times >= s) for s in event_times])
    return event_times, deaths, at_risk


def kaplan_meier(times, status):
    """Kaplan-Meier survival curve as a StepFunction starting at 1."""
    event_times, deaths, at_risk = _event_table(times, status)
    surv = np.cumprod(1.0 - deaths / at_risk)
    return StepFunction(jump_times=event_times, values=surv, initial=1.0)


def nelson_aalen(times, status):
    """Nelson-Aalen cumulative-hazard curve as a StepFunction starting at 0."""
    event_times, deaths, at_risk = _event_table(times, status)
    cumhaz = np.cumsum(deaths / at_risk)
    return StepFunction(jump_times=event_times, values=cumhaz, initial=0.0)


def choose_cuts(times, status, n_pieces):
    """Place baseline cut points from the observed survival experience.

    The preferred rule reads the first n_pieces - 1 survival levels
    1 - j/n_pieces off the Kaplan-Meier curve: cut j is the earliest
    observed event time where the curve has dropped to or below that
    level.  Heavy censoring can leave the deepest levels unreached; the
    rule then falls back, for all cuts, to event-time quantiles that
    split the events into n_pieces groups of equal count.

    Returns (cuts, used_fallback) where cuts is a tuple starting at 0.0.
    """
    if n_pieces < 1:
        raise ConfigurationError(f"n_pieces must be >= 1, got {n_pieces}")
    if n_pieces == 1:
        return (0.0,), False
    times = np.asarray(times, dtype=float)
    status = np.asarray(status)
    event_times = np.sort(times[status == 1])
    if event_times.size < n_pieces:
        raise ConfigurationError(
            f"{event_times.size} events cannot support {n_pieces} hazard pieces"
        )
    km = kaplan_meier(times, status)
    surv_at_events = km(event_times)
    levels = 1.0 - np.arange(1, n_pieces) / n_pieces
    interior = np.empty(n_pieces - 1)
    used_fallback = False
    for j, level in enumerate(levels):
        reached = np.flatnonzero(surv_at_events <= level + 1e-12)
        if reached.size == 0:
            used_fallback = True
            break
        interior[j] = event_times[reached[0]]
    if used_fallback:
        probs = np.arange(1, n_pieces) / n_pieces
        interior = np.quantile(event_times, probs)
    cuts = np.concatenate([[0.0], interior])
    if np.any(np.diff(cuts) <= 0):
        raise ConfigurationError(
            f"degenerate cut points {tuple(cuts)}; reduce n_pieces"
        )
    return tuple(cuts), used_fallback
