"""Seeded simulation of the hidden chain, claim events and controlled wealth.

Randomness uses counter-based Philox streams keyed by (seed, path index,
purpose), so path k is bit-identical whether paths run serially or across
workers. Claim sizes are drawn by inverse-cdf so every distribution family
consumes exactly one uniform per claim.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError
from .filtering import FilterTrajectory, run_filter
from .model import MarketParams, ModelSpec, model_arrays

_CHAIN_STREAM = 0
_CLAIM_STREAM = 1


def path_rng(seed: int, path_index: int = 0, purpose: int = 0) -> np.random.Generator:
    """Independent Philox stream keyed by (seed, path index, purpose).

    Counter-based keying makes path k identical no matter how paths are
    distributed over workers.
    """
    key = np.array(
        [seed & 0xFFFFFFFFFFFFFFFF, ((path_index << 1) | (purpose & 1)) & 0xFFFFFFFFFFFFFFFF],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class ChainPath:
    """Piecewise-constant trajectory of the hidden state on [0, horizon]."""

    times: np.ndarray
    states: np.ndarray
    horizon: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.states, dtype=int)
        if t[0] != 0.0 or np.any(np.diff(t) <= 0.0):
            raise DomainError("chain must start at 0 with strictly increasing jump times")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", s)

    def state_at(self, t: float) -> int:
        idx = int(np.searchsorted(self.times, t, side="right") - 1)
        return int(self.states[max(idx, 0)])

    def sojourns(self):
        """Yield (start, end, state) covering [0, horizon]."""
        bounds = np.append(self.times, self.horizon)
        for k in range(len(self.states)):
            if bounds[k] >= self.horizon:
                break
            yield float(bounds[k]), float(min(bounds[k + 1], self.horizon)), int(self.states[k])


@dataclass(frozen=True)
class ClaimPath:
    """Hidden-chain trajectory plus observed claim events for one path."""

    chain: ChainPath
    times: np.ndarray
    sizes: np.ndarray
    seed: int

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        z = np.asarray(self.sizes, dtype=float)
        if t.shape != z.shape:
            raise DomainError("event times and sizes must align")
        if t.size and (np.any(np.diff(t) <= 0.0) or t[0] <= 0.0 or t[-1] > self.chain.horizon):
            raise DomainError("event times must be strictly increasing within (0, horizon]")
        if np.any(z <= 0.0):
            raise DomainError("claim sizes must be positive")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "sizes", z)

    @property
    def events(self) -> Tuple[Tuple[float, float], ...]:
        return tuple(zip(self.times.tolist(), self.sizes.tolist()))


@dataclass(frozen=True)
class WealthSample:
    """Wealth path sampled on a grid, with the discounted path computed
    by an independent quadrature pass."""

    times: np.ndarray
    wealth: np.ndarray
    discounted: np.ndarray


def simulate_chain(
    model: ModelSpec,
    horizon: float,
    seed: int,
    path_index: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> ChainPath:
    """Exact continuous-time chain path: exponential holding times, jump
    probabilities proportional to the off-diagonal generator rates."""
    if horizon <= 0.0:
        raise DomainError("horizon must be positive")
    if rng is None:
        rng = path_rng(seed, path_index, _CHAIN_STREAM)
    ops = model_arrays(model)
    q = ops.q
    m = model.num_states

    cum0 = np.cumsum(model.initial_distribution)
    state = int(np.searchsorted(cum0, rng.random(), side="right"))
    state = min(state, m - 1)

    times = [0.0]
    states = [state]
    t = 0.0
    while True:
        rate = -q[state, state]
        if rate <= 0.0:
            break
        t += rng.exponential(1.0 / rate)
        if t >= horizon:
            break
        probs = np.maximum(q[state], 0.0)
        probs[state] = 0.0
        cum = np.cumsum(probs / rate)
        state = int(min(np.searchsorted(cum, rng.random(), side="right"), m - 1))
        times.append(t)
        states.append(state)
    return ChainPath(times=np.asarray(times), states=np.asarray(states), horizon=horizon)


def _draw_claim(dist, rng: np.random.Generator) -> float:
    u = rng.random()
    if u <= 0.0:
        u = 5e-17
    z = float(dist.quantile(u))
    if z <= 0.0:
        raise DomainError(
            "drew a nonpositive claim size; claim distributions must not carry mass at 0"
        )
    return z


def simulate_claims(
    model: ModelSpec,
    chain: ChainPath,
    seed: int,
    path_index: int = 0,
    method: str = "sojourn",
    rng: Optional[np.random.Generator] = None,
) -> ClaimPath:
    """Claim events conditional on the chain.

    ``sojourn`` draws a homogeneous Poisson stream at the state's own rate
    on each chain sojourn; ``thinning`` draws candidates at the maximal
    rate and accepts state-proportionally. Both are exact; thinning exists
    for cross-validation.
    """
    if rng is None:
        rng = path_rng(seed, path_index, _CLAIM_STREAM)
    lam = model_arrays(model).lam
    times, sizes = [], []

    if method == "sojourn":
        for start, end, state in chain.sojourns():
            rate = lam[state]
            t = start
            while True:
                t += rng.exponential(1.0 / rate)
                if t >= end:
                    break
                times.append(t)
                sizes.append(_draw_claim(model.claim_dists[state], rng))
    elif method == "thinning":
        big = float(np.max(lam))
        t = 0.0
        while True:
            t += rng.exponential(1.0 / big)
            if t >= chain.horizon:
                break
            state = chain.state_at(t)
            if rng.random() <= lam[state] / big:
                times.append(t)
                sizes.append(_draw_claim(model.claim_dists[state], rng))
    else:
        raise DomainError(f"unknown claim sampling method {method!r}")

    return ClaimPath(
        chain=chain,
        times=np.asarray(times),
        sizes=np.asarray(sizes),
        seed=seed,
    )


def simulate_path(model: ModelSpec, horizon: float, seed: int, path_index: int = 0) -> ClaimPath:
    chain = simulate_chain(model, horizon, seed, path_index)
    return simulate_claims(model, chain, seed, path_index)


# ---------------------------------------------------------------------------
# controlled wealth
# ---------------------------------------------------------------------------

_SIMPSON_TOL = 1e-9
_SIMPSON_LEVELS = (8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096)
_UNIT_GRIDS = {n: np.linspace(0.0, 1.0, n + 1) for n in _SIMPSON_LEVELS}


def _simpson(fv: np.ndarray, a: float, b: float) -> float:
    n = fv.shape[0] - 1
    return (b - a) / (3.0 * n) * (fv[0] + 4.0 * fv[1::2].sum() + 2.0 * fv[2:-1:2].sum() + fv[-1])


def _refine_interval(seg, flow, net_rate, a: float, b: float, r: float) -> Tuple[float, float]:
    """Slow path: re-run the doubling rule on one interval until 1e-9."""
    for n in _SIMPSON_LEVELS[1:]:
        ts = a + (b - a) * _UNIT_GRIDS[n]
        rates = net_rate(ts, flow.flow_many(seg.pi_start, ts - seg.start))
        fd = np.exp(-r * ts) * rates
        i_disc = _simpson(fd, a, b)
        if abs(i_disc - _simpson(fd[::2], a, b)) <= 15.0 * _SIMPSON_TOL:
            break
    return i_disc, _simpson(np.exp(r * (b - ts)) * rates, a, b)


def wealth_path(
    path: ClaimPath,
    strategy,
    premiums,
    mkt: MarketParams,
    times: Sequence[float],
    filter_traj: Optional[FilterTrajectory] = None,
) -> WealthSample:
    """Wealth along one claim path under a retention strategy.

    Between events the premium drift integral is evaluated by composite
    Simpson quadrature refined to 1e-9, with the filter flowed exactly to
    each node; claim losses hit the wealth at the event times. The
    discounted path accumulates its own quadrature so the two can be
    cross-checked against each other.
    """
    r = mkt.rate_r
    horizon = path.chain.horizon
    sample_times = np.asarray(sorted(set(float(t) for t in times)))
    if sample_times.size and (sample_times[0] < 0.0 or sample_times[-1] > horizon + 1e-12):
        raise DomainError("sample times must lie in [0, horizon]")

    # the premium object carries the contract and model it prices
    contract = premiums.contract
    if filter_traj is None:
        filter_traj = run_filter(path.events, premiums.model, horizon=horizon)
    flow_model = filter_traj.model
    from .filtering import filter_flow  # local import avoids cycle at module load

    flow = filter_flow(flow_model)
    cap = contract.cap

    breaks = np.unique(np.concatenate([[0.0], path.times, sample_times, [horizon]]))
    seg_starts = np.array([s.start for s in filter_traj.segments])
    event_lookup = {float(t): float(z) for t, z in zip(path.times, path.sizes)}
    sample_set = set(sample_times.tolist())

    x_disc = mkt.initial_wealth
    x_fwd = mkt.initial_wealth
    out_t, out_w, out_d = [], [], []
    if 0.0 in sample_set:
        out_t.append(0.0)
        out_w.append(x_fwd)
        out_d.append(x_disc)

    flow_cache = getattr(filter_traj, "_node_cache", None)
    if flow_cache is None:
        flow_cache = {}
        object.__setattr__(filter_traj, "_node_cache", flow_cache)

    def net_rate(ts: np.ndarray, pis: np.ndarray) -> np.ndarray:
        us = np.asarray(strategy.evaluate_many(ts, pis), dtype=float)
        if us.min() < -1e-12 or us.max() > cap * (1.0 + 1e-12):
            raise DomainError("strategy returned a retention outside [0, cap]")
        us = np.clip(us, 0.0, cap)
        return np.asarray(premiums.c(ts, pis), dtype=float) - np.asarray(
            premiums.q(ts, pis, us), dtype=float
        )

    # group breakpoint intervals by their enclosing inter-event segment so
    # the filter flow, strategy and premia evaluate once per group
    n0 = _SIMPSON_LEVELS[0]
    groups = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b <= a:
            continue
        anchor = int(np.clip(np.searchsorted(seg_starts, a, side="right") - 1, 0, len(seg_starts) - 1))
        if groups and groups[-1][0] == anchor:
            groups[-1][1].append((a, b))
        else:
            groups.append((anchor, [(a, b)]))

    for anchor, subs in groups:
        key = (anchor, subs[0][0], subs[-1][1], len(subs))
        hit = flow_cache.get(key)
        if hit is None:
            seg = filter_traj.segments[anchor]
            ts_all = np.concatenate([a + (b - a) * _UNIT_GRIDS[n0] for a, b in subs])
            pis_all = flow.flow_many(seg.pi_start, ts_all - seg.start)
            hit = (ts_all, pis_all)
            flow_cache[key] = hit
        ts_all, pis_all = hit
        rates_all = net_rate(ts_all, pis_all)

        for j, (a, b) in enumerate(subs):
            sl = slice((n0 + 1) * j, (n0 + 1) * (j + 1))
            ts, rates = ts_all[sl], rates_all[sl]
            fd = np.exp(-r * ts) * rates
            i_disc = _simpson(fd, a, b)
            # the half-resolution rule reuses every other node
            if abs(i_disc - _simpson(fd[::2], a, b)) <= 15.0 * _SIMPSON_TOL:
                i_fwd = _simpson(np.exp(r * (b - ts)) * rates, a, b)
            else:
                i_disc, i_fwd = _refine_interval(
                    filter_traj.segments[anchor], flow, net_rate, a, b, r
                )
            x_disc += i_disc
            x_fwd = x_fwd * math.exp(r * (b - a)) + i_fwd

            if b in event_lookup:
                z = event_lookup[b]
                seg = filter_traj.segments[anchor]
                pi_left = flow.flow(seg.pi_start, b - seg.start)
                u_b = float(strategy.evaluate(b, pi_left))
                if not -1e-12 <= u_b <= cap * (1.0 + 1e-12):
                    raise DomainError("strategy returned a retention outside [0, cap]")
                loss = float(contract.retained_fn(z, min(max(u_b, 0.0), cap)))
                x_disc -= math.exp(-r * b) * loss
                x_fwd -= loss

            if b in sample_set:
                out_t.append(b)
                out_w.append(x_fwd)
                out_d.append(x_disc)

    return WealthSample(
        times=np.asarray(out_t),
        wealth=np.asarray(out_w),
        discounted=np.asarray(out_d),
    )
