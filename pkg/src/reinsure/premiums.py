"""Filter-dependent premium rates.

Both the insurer's gross premium and the reinsurance premium load the
compensator of the loss process as estimated by the filter: under the
expected-value principle the loading multiplies the expected loss rate,
under the variance principle it multiplies the second-moment rate.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import DomainError
from .model import (
    Contract,
    MarketParams,
    ModelSpec,
    ceded_mean,
    ceded_second_moment,
    claim_mean,
    claim_second_moment,
    model_arrays,
)


class PremiumPrinciple(enum.Enum):
    EXPECTED_VALUE = "expected_value"
    VARIANCE = "variance"


@lru_cache(maxsize=256)
def _state_moments(model: ModelSpec):
    m1 = np.array([claim_mean(d) for d in model.claim_dists])
    m2 = np.array([claim_second_moment(d) for d in model.claim_dists])
    lam = model_arrays(model).lam
    return lam * m1, lam * m2


def insurer_premium(pi, model: ModelSpec, principle: PremiumPrinciple, theta_i: float):
    """Gross premium rate collected by the insurer at filter state pi."""
    pi = np.asarray(getattr(pi, "pi", pi), dtype=float)
    lm1, lm2 = _state_moments(model)
    if principle is PremiumPrinciple.EXPECTED_VALUE:
        out = (1.0 + theta_i) * (pi @ lm1)
    else:
        out = pi @ lm1 + theta_i * (pi @ lm2)
    return float(out) if np.ndim(out) == 0 else out


def reinsurance_premium(
    pi,
    model: ModelSpec,
    principle: PremiumPrinciple,
    theta: float,
    contract: Contract,
    u,
):
    """Reinsurance premium rate for retention u at filter state pi.

    Vectorized: pi may be (M,) or (n, M) and u scalar or (n,).
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0.0) or np.any(u_arr > contract.cap):
        raise DomainError("retention outside contract bounds")
    pi = np.asarray(getattr(pi, "pi", pi), dtype=float)
    lam = model_arrays(model).lam
    ced1 = np.stack([lam[i] * np.asarray(ceded_mean(d, contract, u_arr), dtype=float)
                     for i, d in enumerate(model.claim_dists)], axis=-1)
    if principle is PremiumPrinciple.EXPECTED_VALUE:
        out = (1.0 + theta) * np.sum(pi * ced1, axis=-1)
    else:
        ced2 = np.stack([lam[i] * np.asarray(ceded_second_moment(d, contract, u_arr), dtype=float)
                         for i, d in enumerate(model.claim_dists)], axis=-1)
        out = np.sum(pi * ced1, axis=-1) + theta * np.sum(pi * ced2, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


class StandardPremiums:
    """Bundles model, principle, loadings and contract behind the
    (t, pi, u) premium interface used by simulation and control.

    Moment mixtures are precomputed so the per-node cost inside the wealth
    quadrature stays a few vector operations.
    """

    def __init__(
        self,
        model: ModelSpec,
        principle: PremiumPrinciple,
        contract: Contract,
        mkt: MarketParams,
    ):
        self.model = model
        self.principle = principle
        self.contract = contract
        self.theta = mkt.theta
        self.theta_i = mkt.theta_i
        self._lm1, self._lm2 = _state_moments(model)
        self._lam = model_arrays(model).lam

    def c(self, t, pi):
        pi = np.asarray(pi, dtype=float)
        if self.principle is PremiumPrinciple.EXPECTED_VALUE:
            return (1.0 + self.theta_i) * (pi @ self._lm1)
        return pi @ self._lm1 + self.theta_i * (pi @ self._lm2)

    def q(self, t, pi, u):
        pi = np.asarray(pi, dtype=float)
        u = np.asarray(u, dtype=float)
        dists = self.model.claim_dists
        shared = self.model.shared_claim_dist
        plam = pi @ self._lam
        if shared is not None:
            ced1 = ceded_mean(shared, self.contract, u)
            if self.principle is PremiumPrinciple.EXPECTED_VALUE:
                return (1.0 + self.theta) * plam * ced1
            ced2 = ceded_second_moment(shared, self.contract, u)
            return plam * (ced1 + self.theta * ced2)
        ced1 = np.stack([self._lam[i] * np.asarray(ceded_mean(d, self.contract, u), dtype=float)
                         for i, d in enumerate(dists)], axis=-1)
        if self.principle is PremiumPrinciple.EXPECTED_VALUE:
            return (1.0 + self.theta) * np.sum(pi * ced1, axis=-1)
        ced2 = np.stack([self._lam[i] * np.asarray(ceded_second_moment(d, self.contract, u), dtype=float)
                         for i, d in enumerate(dists)], axis=-1)
        return np.sum(pi * ced1, axis=-1) + self.theta * np.sum(pi * ced2, axis=-1)


@dataclass(frozen=True)
class PremiumContractReport:
    """Numerical sanity checks of a premium rule against contract axioms."""

    decreasing_ok: bool
    continuity_ok: bool
    null_protection_ok: bool
    no_free_profit_ok: bool
    max_increase: float
    max_gap: float
    worst_margin: float

    @property
    def passed(self) -> bool:
        return (
            self.decreasing_ok
            and self.continuity_ok
            and self.null_protection_ok
            and self.no_free_profit_ok
        )

    def as_dict(self) -> dict:
        return {
            "decreasing_ok": self.decreasing_ok,
            "continuity_ok": self.continuity_ok,
            "null_protection_ok": self.null_protection_ok,
            "no_free_profit_ok": self.no_free_profit_ok,
            "max_increase": self.max_increase,
            "max_gap": self.max_gap,
            "worst_margin": self.worst_margin,
            "passed": self.passed,
        }


def validate_premium_contract(
    model: ModelSpec,
    principle: PremiumPrinciple,
    contract: Contract,
    mkt: MarketParams,
    pi_samples: Optional[np.ndarray] = None,
    n_u: int = 200,
    premiums=None,
) -> PremiumContractReport:
    """Check a premium rule on sampled filter states: q decreasing and
    continuous in u, q at the cap equals zero, and q(0) exceeds c."""
    if premiums is None:
        premiums = StandardPremiums(model, principle, contract, mkt)
    m = model.num_states
    if pi_samples is None:
        rng = np.random.default_rng(7)
        raw = rng.dirichlet(np.ones(m), size=16)
        pi_samples = np.vstack([np.eye(m), raw])

    u_hi = contract.cap
    if not np.isfinite(u_hi):
        u_hi = max(d.quantile(1.0 - 1e-9) for d in model.claim_dists) * 2.0
    us = np.linspace(0.0, u_hi, n_u)
    gap_tol = 16.0 * np.max(np.diff(us))

    max_inc = -np.inf
    max_gap = 0.0
    worst_margin = np.inf
    null_ok = True
    for pi in np.atleast_2d(pi_samples):
        qs = np.array([float(premiums.q(0.0, pi, float(u))) for u in us])
        diffs = np.diff(qs)
        max_inc = max(max_inc, float(diffs.max(initial=-np.inf)))
        scale = max(1.0, float(qs[0]))
        max_gap = max(max_gap, float(np.abs(diffs).max(initial=0.0)) / scale)
        c0 = float(premiums.c(0.0, pi))
        worst_margin = min(worst_margin, qs[0] - c0)
        if np.isfinite(contract.cap):
            null_ok = null_ok and abs(qs[-1]) <= 1e-12 * scale
        else:
            null_ok = null_ok and qs[-1] <= 1e-6 * scale

    return PremiumContractReport(
        decreasing_ok=max_inc <= 1e-12,
        continuity_ok=max_gap <= gap_tol,
        null_protection_ok=null_ok,
        no_free_profit_ok=worst_margin > 0.0,
        max_increase=max_inc,
        max_gap=max_gap,
        worst_margin=worst_margin,
    )
