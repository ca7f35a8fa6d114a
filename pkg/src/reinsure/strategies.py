"""Retention strategies sharing one (t, pi) -> u evaluation interface.

Beyond constant and table-feedback strategies, the special-case closed
forms express the optimal retention directly through the ratio of the
value factor after and before a claim-time filter update, so they can be
evaluated from a solved value table without re-running the optimizer.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DomainError
from .filtering import jump_map
from .model import MarketParams, ModelSpec, claim_mean, claim_second_moment, model_arrays
from .solver import FullInfoPolicy, PolicyTable, ValueTable, _dist_nodes

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConstantStrategy:
    retention: float

    def describe(self) -> str:
        return f"constant(u={self.retention:g})"

    def evaluate(self, t: float, pi) -> float:
        return self.retention

    def evaluate_many(self, ts, pis) -> np.ndarray:
        return np.full(np.atleast_1d(ts).shape[0], self.retention)


@dataclass(frozen=True)
class FeedbackStrategy:
    """Interpolates a solved policy table; the optimal feedback control."""

    policy: PolicyTable = field(repr=False)

    def describe(self) -> str:
        return "feedback(policy table)"

    def evaluate(self, t: float, pi) -> float:
        return float(self.policy.u_at(t, np.atleast_2d(pi))[0])

    def evaluate_many(self, ts, pis) -> np.ndarray:
        return self.policy.u_at_many(np.atleast_1d(ts), pis)


@dataclass(frozen=True)
class FullInfoStrategy:
    """Deterministic benchmark retention; ignores the filter."""

    policy: FullInfoPolicy

    def describe(self) -> str:
        return "full-information(deterministic)"

    def evaluate(self, t: float, pi) -> float:
        return self.policy.u(t)

    def evaluate_many(self, ts, pis) -> np.ndarray:
        return self.policy.u_many(np.atleast_1d(ts))


def _value_ratio(value: ValueTable, model: ModelSpec, t, pis) -> np.ndarray:
    """v(t, W(pi)) / v(t, pi) for a shared claim law, per row."""
    pis = np.atleast_2d(getattr(pis, "pi", pis))
    ts = np.full(pis.shape[0], t) if np.ndim(t) == 0 else np.asarray(t, dtype=float)
    v = value.value_at_many(ts, pis)
    vw = value.value_at_many(ts, jump_map(pis, model))
    return vw / v


def _excess_ev_vec(eta_t, ratio, theta) -> np.ndarray:
    return np.maximum(0.0, np.log((1.0 + theta) / ratio) / eta_t)


def _prop_ev_vec(eta_t, ratio, dist, theta, tol: float = 1e-10) -> np.ndarray:
    ratio = np.atleast_1d(np.asarray(ratio, dtype=float))
    m1 = claim_mean(dist)
    target = (1.0 + theta) * m1
    u = np.empty_like(ratio)
    at_zero = ratio * m1 >= target
    at_one = ratio * dist.exp_z_moment(eta_t) <= target
    u[at_zero] = 0.0
    u[at_one] = 1.0
    interior = ~(at_zero | at_one)
    if np.any(interior):
        lo = np.zeros(interior.sum())
        hi = np.ones(interior.sum())
        r = ratio[interior]
        for _ in range(max(1, int(math.ceil(math.log2(1.0 / tol))))):
            mid = 0.5 * (lo + hi)
            below = r * dist.exp_z_moment(eta_t * mid) < target
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        u[interior] = 0.5 * (lo + hi)
    return u


def _prop_var_vec(eta_t, ratio, dist, theta, tol: float = 1e-10) -> np.ndarray:
    ratio = np.atleast_1d(np.asarray(ratio, dtype=float))
    m1 = claim_mean(dist)
    m2 = claim_second_moment(dist)
    u = np.empty_like(ratio)
    at_zero = 2.0 * theta * m2 <= (ratio - 1.0) * m1
    u[at_zero] = 0.0
    interior = ~at_zero
    if np.any(interior):
        lo = np.zeros(interior.sum())
        hi = np.ones(interior.sum())
        r = ratio[interior]
        for _ in range(max(1, int(math.ceil(math.log2(1.0 / tol))))):
            mid = 0.5 * (lo + hi)
            lhs = m1 + 2.0 * theta * (1.0 - mid) * m2
            below = r * dist.exp_z_moment(eta_t * mid) < lhs
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        u[interior] = 0.5 * (lo + hi)
    return u


def u_star_excess_ev(
    t: float, pi, value: ValueTable, model: ModelSpec, mkt: MarketParams, theta: float = None
) -> float:
    """Optimal excess-of-loss retention under the expected-value principle.

    u = max(0, log((1+theta) v(t,pi) / v(t,W(pi))) / eta_t); the value
    ratio can push the unconstrained stationary point negative for small
    loadings, in which case full reinsurance (u = 0) is optimal.
    """
    theta = mkt.theta if theta is None else theta
    if model.shared_claim_dist is None:
        raise DomainError("closed form requires a shared claim law")
    eta_t = mkt.compounded_aversion(t)
    ratio = _value_ratio(value, model, t, pi)
    return float(_excess_ev_vec(eta_t, ratio, theta)[0])


def u_star_prop_ev(
    t: float, pi, value: ValueTable, model: ModelSpec, mkt: MarketParams, theta: float = None
) -> float:
    """Optimal proportional retention under the expected-value principle.

    Full reinsurance below the loading threshold B, null reinsurance above
    D, otherwise the root of the loaded-mean first-order condition; the
    left side is strictly increasing in u so bisection applies.
    """
    theta = mkt.theta if theta is None else theta
    eta_t = mkt.compounded_aversion(t)
    dist = model.shared_claim_dist
    if dist is not None:
        ratio = _value_ratio(value, model, t, pi)
        return float(_prop_ev_vec(eta_t, ratio, dist, theta)[0])

    # state-dependent claim laws: the claim size moves the filter, so the
    # thresholds and root integrate the post-claim value over sizes
    pis = np.atleast_2d(getattr(pi, "pi", pi))
    v = float(value.value_at_many(np.array([t]), pis)[0])
    lam = model_arrays(model).lam
    num_b = num_d = den = 0.0
    node_data = []
    for i, d in enumerate(model.claim_dists):
        z, w = _dist_nodes(d, 160)
        vw = np.array(
            [float(value.value_at_many(np.array([t]), jump_map(pis, model, float(zk)))[0]) for zk in z]
        )
        coef = float(pis[0, i]) * lam[i]
        node_data.append((coef, z, w, vw))
        den += coef * float(np.sum(z * w))
        num_b += coef * float(np.sum(vw / v * z * w))
        num_d += coef * float(np.sum(vw / v * np.exp(eta_t * z) * z * w))
    b_thr = num_b / den - 1.0
    d_thr = num_d / den - 1.0
    if theta <= b_thr:
        return 0.0
    if theta >= d_thr:
        return 1.0

    target = (1.0 + theta) * den

    def big_g(u):
        acc = 0.0
        for coef, z, w, vw in node_data:
            acc += coef * float(np.sum(vw / v * np.exp(eta_t * u * z) * z * w))
        return acc

    lo, hi = 0.0, 1.0
    g_lo, g_hi = big_g(lo), big_g(hi)
    if not (g_lo <= target <= g_hi):
        # threshold said interior but the bracket collapsed (numerical
        # edge); clamp to the nearest boundary rather than guess
        log.warning("proportional-EV interior bracket collapsed; clamping")
        return 0.0 if abs(g_lo - target) < abs(g_hi - target) else 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if big_g(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def u_star_prop_var(
    t: float, pi, value: ValueTable, model: ModelSpec, mkt: MarketParams, theta: float = None
) -> float:
    """Optimal proportional retention under the variance principle.

    Full reinsurance when 2 theta E[Z^2] <= (v(t,W(pi))/v(t,pi) - 1) E[Z];
    otherwise the unique crossing of the decreasing loading side with the
    increasing exponential-moment side, which always lies in (0, 1].
    """
    theta = mkt.theta if theta is None else theta
    dist = model.shared_claim_dist
    if dist is None:
        raise DomainError("closed form requires a shared claim law")
    eta_t = mkt.compounded_aversion(t)
    ratio = _value_ratio(value, model, t, pi)
    return float(_prop_var_vec(eta_t, ratio, dist, theta)[0])


@dataclass(frozen=True)
class ClosedFormExcessEV:
    value: ValueTable = field(repr=False)
    model: ModelSpec
    mkt: MarketParams

    def describe(self) -> str:
        return "closed-form(excess-of-loss, expected-value)"

    def evaluate(self, t: float, pi) -> float:
        return u_star_excess_ev(t, pi, self.value, self.model, self.mkt)

    def evaluate_many(self, ts, pis) -> np.ndarray:
        eta_ts = self.mkt.eta * np.exp(self.mkt.rate_r * (self.mkt.horizon_t - np.atleast_1d(ts)))
        ratio = _value_ratio(self.value, self.model, np.atleast_1d(ts), pis)
        return _excess_ev_vec(eta_ts, ratio, self.mkt.theta)


@dataclass(frozen=True)
class ClosedFormPropEV:
    value: ValueTable = field(repr=False)
    model: ModelSpec
    mkt: MarketParams

    def describe(self) -> str:
        return "closed-form(proportional, expected-value)"

    def evaluate(self, t: float, pi) -> float:
        return u_star_prop_ev(t, pi, self.value, self.model, self.mkt)

    def evaluate_many(self, ts, pis) -> np.ndarray:
        dist = self.model.shared_claim_dist
        if dist is None:
            return np.array([self.evaluate(float(t), p) for t, p in zip(np.atleast_1d(ts), pis)])
        ts = np.atleast_1d(ts)
        ratio = _value_ratio(self.value, self.model, ts, pis)
        out = np.empty(ratio.shape[0])
        for j, t in enumerate(ts):
            eta_t = self.mkt.compounded_aversion(float(t))
            out[j] = _prop_ev_vec(eta_t, ratio[j : j + 1], dist, self.mkt.theta)[0]
        return out


@dataclass(frozen=True)
class ClosedFormPropVar:
    value: ValueTable = field(repr=False)
    model: ModelSpec
    mkt: MarketParams

    def describe(self) -> str:
        return "closed-form(proportional, variance)"

    def evaluate(self, t: float, pi) -> float:
        return u_star_prop_var(t, pi, self.value, self.model, self.mkt)

    def evaluate_many(self, ts, pis) -> np.ndarray:
        dist = self.model.shared_claim_dist
        ts = np.atleast_1d(ts)
        ratio = _value_ratio(self.value, self.model, ts, pis)
        out = np.empty(ratio.shape[0])
        for j, t in enumerate(ts):
            eta_t = self.mkt.compounded_aversion(float(t))
            out[j] = _prop_var_vec(eta_t, ratio[j : j + 1], dist, self.mkt.theta)[0]
        return out


Strategy = Union[
    ConstantStrategy,
    FeedbackStrategy,
    FullInfoStrategy,
    ClosedFormExcessEV,
    ClosedFormPropEV,
    ClosedFormPropVar,
]


def evaluate(strategy: Strategy, t: float, pi, horizon: float = None) -> float:
    """Retention chosen by a strategy at (t, pi), validated against the horizon."""
    if t < -1e-12:
        raise DomainError("evaluation time before 0")
    if horizon is not None and t > horizon + 1e-12:
        raise DomainError("evaluation time beyond the horizon")
    return float(strategy.evaluate(t, np.asarray(pi, dtype=float)))
