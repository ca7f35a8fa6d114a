"""Monte-Carlo utility estimation, martingale diagnostics and comparisons.

Every path owns a counter-based random stream keyed by (seed, path index),
so estimates are bit-identical across worker counts; strategy comparisons
reuse the same streams (common random numbers) to sharpen orderings.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError
from .filtering import jump_map, run_filter
from .model import MarketParams, ModelSpec
from .premiums import PremiumPrinciple
from .simulate import simulate_chain, simulate_claims, wealth_path
from .solver import (
    SolverConfig,
    ValueTable,
    full_info_policy,
    solve_backward,
)
from .strategies import _excess_ev_vec, _prop_ev_vec, _prop_var_vec

WORKERS_ENV = "REINSURE_THREADS"


def worker_count(explicit: Optional[int] = None) -> int:
    if explicit is not None:
        return max(1, int(explicit))
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class UtilityEstimate:
    """Sample mean and standard error of terminal expected utility."""

    mean: float
    std_error: float
    n_paths: int
    seed: int
    strategy: str

    def __post_init__(self):
        if self.std_error < 0.0:
            raise DomainError("standard error cannot be negative")

    def as_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "strategy": self.strategy,
        }


@dataclass(frozen=True)
class SnellDiagnostics:
    """Per-interval drift of the running objective process J along paths."""

    interval_starts: np.ndarray
    interval_ends: np.ndarray
    drift: np.ndarray
    std_error: np.ndarray
    n_paths: int
    strategy: str

    def z_scores(self) -> np.ndarray:
        se = np.where(self.std_error > 0.0, self.std_error, np.inf)
        return self.drift / se

    def martingale_ok(self, n_se: float = 3.0) -> bool:
        return bool(np.all(np.abs(self.z_scores()) <= n_se))

    def submartingale_ok(self, n_se: float = 3.0) -> bool:
        return bool(np.all(self.z_scores() >= -n_se))


# ---------------------------------------------------------------------------
# path pipelines (module level so process pools can pickle them)
# ---------------------------------------------------------------------------


def _utility_chunk(args) -> Tuple[int, np.ndarray]:
    model, premiums, strategies, mkt, seed, start, stop = args
    horizon = mkt.horizon_t
    out = np.empty((len(strategies), stop - start))
    for j, k in enumerate(range(start, stop)):
        chain = simulate_chain(model, horizon, seed, k)
        claims = simulate_claims(model, chain, seed, k)
        traj = run_filter(claims.events, model, horizon=horizon)
        for s, strat in enumerate(strategies):
            ws = wealth_path(claims, strat, premiums, mkt, [horizon], filter_traj=traj)
            out[s, j] = 1.0 - math.exp(-mkt.eta * ws.wealth[-1])
    return start, out


def _objective_chunk(args) -> Tuple[int, np.ndarray]:
    model, premiums, strategies, value, mkt, seed, grid, start, stop = args
    horizon = mkt.horizon_t
    scale = mkt.eta * math.exp(mkt.rate_r * horizon)
    out = np.empty((len(strategies), stop - start, grid.shape[0]))
    for j, k in enumerate(range(start, stop)):
        chain = simulate_chain(model, horizon, seed, k)
        claims = simulate_claims(model, chain, seed, k)
        traj = run_filter(claims.events, model, horizon=horizon)
        pis = traj.pi_grid(grid)
        v = value.value_at_many(grid, pis)
        for s, strategy in enumerate(strategies):
            ws = wealth_path(claims, strategy, premiums, mkt, grid, filter_traj=traj)
            out[s, j] = np.exp(-scale * ws.discounted) * v
    return start, out


def _run_chunks(worker_fn, common_args, n_paths: int, workers: int, out_shape, axis: int):
    out = np.empty(out_shape)
    chunk = max(1, math.ceil(n_paths / max(workers * 4, 1)))
    tasks = [(start, min(start + chunk, n_paths)) for start in range(0, n_paths, chunk)]
    if workers <= 1:
        results = [worker_fn(common_args + (a, b)) for a, b in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(worker_fn, [common_args + (a, b) for a, b in tasks]))
    for start, arr in results:
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(start, start + arr.shape[axis])
        out[tuple(sl)] = arr
    return out


def mc_utilities(
    model: ModelSpec,
    strategies: Sequence,
    premiums,
    mkt: MarketParams,
    n_paths: int,
    seed: int,
    workers: Optional[int] = None,
) -> Tuple[np.ndarray, list]:
    """Terminal utilities for several strategies on common random paths.

    Returns the (n_strategies, n_paths) utility array and the per-strategy
    ``UtilityEstimate`` list.
    """
    w = worker_count(workers)
    utils = _run_chunks(
        _utility_chunk,
        (model, premiums, tuple(strategies), mkt, seed),
        n_paths,
        w,
        (len(strategies), n_paths),
        axis=1,
    )
    estimates = []
    for s, strat in enumerate(strategies):
        mean = float(utils[s].mean())
        se = float(utils[s].std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
        estimates.append(
            UtilityEstimate(mean=mean, std_error=se, n_paths=n_paths, seed=seed,
                            strategy=strat.describe())
        )
    return utils, estimates


def mc_expected_utility(
    model: ModelSpec,
    strategy,
    premiums,
    mkt: MarketParams,
    n_paths: int,
    seed: int,
    workers: Optional[int] = None,
) -> UtilityEstimate:
    """Monte-Carlo estimate of E[1 - e^{-eta X_T}] under one strategy."""
    _, estimates = mc_utilities(model, [strategy], premiums, mkt, n_paths, seed, workers)
    return estimates[0]


def bellman_diagnostics(
    model: ModelSpec,
    strategies: Sequence,
    value,
    mkt: MarketParams,
    premiums,
    n_paths: int,
    seed: int,
    n_intervals: int = 20,
    workers: Optional[int] = None,
) -> list:
    """Drift of J_t = e^{-eta e^{RT} Xbar_t} v(t, pi_t) for several
    strategies on common random paths.

    Under the optimal feedback the increments are centered; under any
    admissible strategy the process drifts upward, so negative drifts
    beyond noise flag an inconsistency between value table and dynamics.
    """
    grid = np.linspace(0.0, mkt.horizon_t, n_intervals + 1)
    w = worker_count(workers)
    j_paths = _run_chunks(
        _objective_chunk,
        (model, premiums, tuple(strategies), value, mkt, seed, grid),
        n_paths,
        w,
        (len(strategies), n_paths, grid.shape[0]),
        axis=1,
    )
    out = []
    for s, strategy in enumerate(strategies):
        inc = np.diff(j_paths[s], axis=1)
        out.append(
            SnellDiagnostics(
                interval_starts=grid[:-1],
                interval_ends=grid[1:],
                drift=inc.mean(axis=0),
                std_error=inc.std(axis=0, ddof=1) / math.sqrt(n_paths),
                n_paths=n_paths,
                strategy=strategy.describe(),
            )
        )
    return out


def bellman_diagnostic(
    model: ModelSpec,
    strategy,
    value,
    mkt: MarketParams,
    premiums,
    n_paths: int,
    seed: int,
    n_intervals: int = 20,
    workers: Optional[int] = None,
) -> SnellDiagnostics:
    return bellman_diagnostics(
        model, [strategy], value, mkt, premiums, n_paths, seed, n_intervals, workers
    )[0]


# ---------------------------------------------------------------------------
# structural comparisons
# ---------------------------------------------------------------------------


def closed_form_retention_lattice(
    value: ValueTable,
    model: ModelSpec,
    mkt: MarketParams,
    contract,
    principle: PremiumPrinciple,
) -> np.ndarray:
    """Closed-form optimal retentions on the full (time x lattice) grid."""
    from .model import ExcessOfLoss, Proportional

    dist = model.shared_claim_dist
    if dist is None:
        raise DomainError("lattice closed forms require a shared claim law")
    pts = value.grid.points
    w_pts = jump_map(pts, model)
    out = np.empty_like(value.values)
    for k, t in enumerate(value.times):
        eta_t = mkt.compounded_aversion(float(t))
        v = value.values[k]
        vw = value.grid.interpolate(v, w_pts)
        ratio = vw / v
        if isinstance(contract, ExcessOfLoss) and principle is PremiumPrinciple.EXPECTED_VALUE:
            out[k] = _excess_ev_vec(eta_t, ratio, mkt.theta)
        elif isinstance(contract, Proportional) and principle is PremiumPrinciple.EXPECTED_VALUE:
            out[k] = _prop_ev_vec(eta_t, ratio, dist, mkt.theta)
        elif isinstance(contract, Proportional) and principle is PremiumPrinciple.VARIANCE:
            out[k] = _prop_var_vec(eta_t, ratio, dist, mkt.theta)
        else:
            raise DomainError("no closed form for this contract/principle pair")
    return out


@dataclass(frozen=True)
class InfoComparisonReport:
    """Partial- vs full-information retentions and the jump-dominance margin."""

    precondition_ok: bool
    precondition_note: str
    times: np.ndarray = field(repr=False)
    lattice: np.ndarray = field(repr=False)
    u_partial: Optional[np.ndarray] = field(default=None, repr=False)
    u_full: Optional[np.ndarray] = field(default=None, repr=False)
    max_retention_violation: Optional[float] = None
    min_jump_margin: Optional[float] = None

    def as_dict(self) -> dict:
        return {
            "precondition_ok": self.precondition_ok,
            "precondition_note": self.precondition_note,
            "max_retention_violation": self.max_retention_violation,
            "min_jump_margin": self.min_jump_margin,
        }


def compare_information(
    model: ModelSpec,
    contract,
    principle: PremiumPrinciple,
    mkt: MarketParams,
    config: SolverConfig,
    value: Optional[ValueTable] = None,
) -> InfoComparisonReport:
    """Check that partial-information retentions never exceed the
    full-information benchmark and that the value factor does not drop
    across a claim-time filter update.

    Requires a shared claim law with intensities sorted non-decreasing;
    violated preconditions are reported, not asserted.
    """
    notes = []
    if model.shared_claim_dist is None:
        notes.append("claim law differs across states")
    if not model.lambda_sorted():
        notes.append("intensities are not sorted non-decreasing")
    if notes:
        return InfoComparisonReport(
            precondition_ok=False,
            precondition_note="; ".join(notes),
            times=np.empty(0),
            lattice=np.empty((0, model.num_states)),
        )

    if value is None:
        value, _policy = solve_backward(model, contract, principle, mkt, config)
    u_partial = closed_form_retention_lattice(value, model, mkt, contract, principle)
    benchmark = full_info_policy(model, contract, principle, mkt)
    u_full = benchmark.u_many(value.times)

    w_pts = jump_map(value.grid.points, model)
    margins = np.empty_like(value.values)
    for k in range(value.times.shape[0]):
        margins[k] = value.grid.interpolate(value.values[k], w_pts) - value.values[k]

    return InfoComparisonReport(
        precondition_ok=True,
        precondition_note="",
        times=value.times,
        lattice=value.grid.points,
        u_partial=u_partial,
        u_full=u_full,
        max_retention_violation=float(np.max(u_partial - u_full[:, None])),
        min_jump_margin=float(np.min(margins)),
    )


@dataclass(frozen=True)
class ThetaSweepResult:
    """Optimal retention tables across reinsurance safety loadings."""

    thetas: Tuple[float, ...]
    times: np.ndarray = field(repr=False)
    lattice: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)  # (n_theta, n_times, n_points)
    guaranteed: bool = True

    @property
    def min_increment(self) -> float:
        if len(self.thetas) < 2:
            return 0.0
        return float(np.min(np.diff(self.u, axis=0)))

    def monotone_ok(self, slack: float = 1e-9) -> bool:
        return self.min_increment >= -slack

    def as_dict(self) -> dict:
        return {
            "thetas": list(self.thetas),
            "min_increment": self.min_increment,
            "monotone_ok": self.monotone_ok(),
            "guaranteed": self.guaranteed,
        }


def theta_sweep(
    model: ModelSpec,
    contract,
    principle: PremiumPrinciple,
    mkt: MarketParams,
    thetas: Sequence[float],
    config: SolverConfig,
) -> ThetaSweepResult:
    """Re-solve the control problem across safety loadings.

    The retention is guaranteed non-decreasing in theta for the
    proportional contract under the expected-value principle; other
    configurations are swept with no-guarantee tagging.
    """
    from .model import Proportional

    thetas = tuple(float(t) for t in thetas)
    if any(t2 <= t1 for t1, t2 in zip(thetas, thetas[1:])):
        raise DomainError("thetas must be strictly increasing")
    if any(t <= mkt.theta_i for t in thetas):
        raise DomainError("every theta must exceed the insurer loading theta_i")
    guaranteed = isinstance(contract, Proportional) and principle is PremiumPrinciple.EXPECTED_VALUE

    tables = []
    times = lattice = None
    for th in thetas:
        mkt_th = replace(mkt, theta=th)
        _value, policy = solve_backward(model, contract, principle, mkt_th, config)
        tables.append(policy.u)
        times, lattice = policy.times, policy.grid.points
    return ThetaSweepResult(
        thetas=thetas,
        times=times,
        lattice=lattice,
        u=np.stack(tables),
        guaranteed=guaranteed,
    )
