"""Exact finite-state filter for claim observations.

Between claims the conditional law of the hidden state follows a linear
ODE in unnormalized form, whose solution is a matrix exponential of the
chain generator minus the intensity diagonal; normalizing recovers the
probability vector. At a claim time the law is reweighted by intensity
and claim-size likelihood. The nonlinear drift of the normalized filter
is provided separately so an explicit integrator can cross-check the
linear propagation.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from .errors import DegenerateObservation, DomainError, NumericalError
from .model import ModelSpec, model_arrays

_SUM_TOL = 1e-12
_NEG_TOL = 1e-14
# keep max(lambda) * substep small enough that the unnormalized mass
# cannot underflow within one propagation step
_MAX_DECAY_PER_STEP = 20.0


@dataclass(frozen=True)
class FilterState:
    """Probability vector over hidden states, valid at time t."""

    pi: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float).copy()
        if pi.ndim != 1:
            raise DomainError("filter state must be a vector")
        if np.any(pi < -_NEG_TOL):
            raise DomainError(f"negative filter mass: {pi.min()}")
        pi[pi < 0.0] = 0.0
        s = pi.sum()
        if abs(s - 1.0) > _SUM_TOL:
            raise DomainError(f"filter mass {s} deviates from 1 beyond tolerance")
        pi /= s
        pi.flags.writeable = False
        object.__setattr__(self, "pi", pi)

    @property
    def num_states(self) -> int:
        return self.pi.shape[0]


def initial_filter(model: ModelSpec) -> FilterState:
    return FilterState(pi=np.asarray(model.initial_distribution, dtype=float), t=0.0)


# ---------------------------------------------------------------------------
# propagation flow
# ---------------------------------------------------------------------------


class FilterFlow:
    """Semigroup of the unnormalized filter flow, with an eigen fast path.

    The public ``propagate`` uses scipy's scaling-and-squaring matrix
    exponential. Simulation loops evaluate the flow at many offsets, so a
    one-off eigendecomposition is kept when it reproduces the matrix
    exponential to 1e-11; otherwise every call falls back to expm.
    """

    def __init__(self, model: ModelSpec):
        ops = model_arrays(model)
        self.a = ops.drift
        self.lam = ops.lam
        self.m = model.num_states
        self._eig = None
        if self.m > 1:
            self._try_eigen()

    def _try_eigen(self):
        try:
            w, s = np.linalg.eig(self.a)
            s_inv = np.linalg.inv(s)
        except np.linalg.LinAlgError:
            return
        for tau in (0.01, 1.0):
            approx = (s * np.exp(w * tau)) @ s_inv
            if not np.allclose(approx.real, expm(self.a * tau), atol=1e-11, rtol=0.0):
                return
        self._eig = (w, s, s_inv)

    def transition(self, dt: float) -> np.ndarray:
        return _expm_cached(self._key(), dt)

    def _key(self):
        return tuple(map(tuple, self.a))

    def unnormalized(self, pi: np.ndarray, dt: float) -> np.ndarray:
        if self._eig is not None:
            w, s, s_inv = self._eig
            return ((s * np.exp(w * dt)) @ (s_inv @ pi)).real
        return self.transition(dt) @ pi

    def flow(self, pi: np.ndarray, dt: float) -> np.ndarray:
        """Normalized filter after dt with no claim observed."""
        if dt == 0.0 or self.m == 1:
            return pi
        rho = self.unnormalized(pi, dt)
        rho = np.maximum(rho, 0.0)
        s = rho.sum()
        if not np.isfinite(s) or s <= 1e-290:
            raise NumericalError("unnormalized filter mass underflow; sub-step the propagation")
        return rho / s

    def flow_many(self, pi: np.ndarray, dts: np.ndarray) -> np.ndarray:
        """Normalized filter at several offsets from the same start, (n, M)."""
        dts = np.asarray(dts, dtype=float)
        if self.m == 1:
            return np.ones((dts.shape[0], 1))
        if self._eig is not None:
            w, s, s_inv = self._eig
            coef = s_inv @ pi
            rho = (np.exp(np.multiply.outer(dts, w)) * coef) @ s.T
            rho = np.maximum(rho.real, 0.0)
        else:
            rho = np.stack([np.maximum(self.transition(float(d)) @ pi, 0.0) for d in dts])
        mass = rho.sum(axis=1, keepdims=True)
        if np.any(~np.isfinite(mass)) or np.any(mass <= 1e-290):
            raise NumericalError("unnormalized filter mass underflow")
        return rho / mass


@lru_cache(maxsize=4096)
def _expm_cached(a_key: tuple, dt: float) -> np.ndarray:
    a = np.asarray(a_key, dtype=float)
    return expm(a * dt)


@lru_cache(maxsize=256)
def filter_flow(model: ModelSpec) -> FilterFlow:
    return FilterFlow(model)


def propagate(state: FilterState, dt: float, model: ModelSpec) -> FilterState:
    """Filter after dt time units with no claim observed.

    Computes the unnormalized vector exp((Q^T - diag(lambda)) dt) pi via
    scaling-and-squaring and normalizes. Sub-steps internally so the
    decaying mass stays representable.
    """
    if dt < 0.0:
        raise DomainError("dt must be nonnegative")
    if dt == 0.0 or state.num_states == 1:
        return FilterState(pi=state.pi, t=state.t + dt)
    flow = filter_flow(model)
    n_sub = max(1, math.ceil(model.lambda_max * dt / _MAX_DECAY_PER_STEP))
    pi = state.pi
    h = dt / n_sub
    trans = flow.transition(h)
    for _ in range(n_sub):
        rho = np.maximum(trans @ pi, 0.0)
        s = rho.sum()
        if not np.isfinite(s) or s <= 1e-290:
            raise NumericalError("unnormalized filter mass underflow during propagation")
        pi = rho / s
    return FilterState(pi=pi, t=state.t + dt)


def jump_update(state: FilterState, z: float, model: ModelSpec) -> FilterState:
    """Filter reweighting at a claim of size z.

    With state-dependent claim laws the posterior weight of state i is
    proportional to lambda_i * f_i(z) * pi_i with f_i the density or atom
    mass at z; with a shared claim law the size carries no information and
    the weights reduce to lambda_i * pi_i.
    """
    if z <= 0.0:
        raise DomainError("claim size must be positive")
    ops = model_arrays(model)
    if model.shared_claim_dist is not None:
        w = ops.lam * state.pi
    else:
        if model.claim_dists[0].is_discrete:
            like = np.array([d.atom_mass(z) for d in model.claim_dists])
        else:
            like = np.array([float(d.density(z)) for d in model.claim_dists])
        w = ops.lam * like * state.pi
    s = w.sum()
    if s <= 0.0:
        raise DegenerateObservation(f"claim of size {z} has zero likelihood in every state")
    return FilterState(pi=w / s, t=state.t)


def jump_map(pi: np.ndarray, model: ModelSpec, z: Optional[float] = None) -> np.ndarray:
    """Array-level jump reweighting; pi may be a batch of shape (..., M)."""
    ops = model_arrays(model)
    if z is None:
        if model.shared_claim_dist is None:
            raise DomainError("claim size required for state-dependent claim laws")
        like = ops.lam
    else:
        if model.shared_claim_dist is not None:
            like = ops.lam
        elif model.claim_dists[0].is_discrete:
            like = ops.lam * np.array([d.atom_mass(z) for d in model.claim_dists])
        else:
            like = ops.lam * np.array([float(d.density(z)) for d in model.claim_dists])
    w = np.asarray(pi, dtype=float) * like
    s = w.sum(axis=-1, keepdims=True)
    if np.any(s <= 0.0):
        raise DegenerateObservation("claim has zero likelihood in every state")
    return w / s


def ks_drift(state: FilterState, model: ModelSpec) -> np.ndarray:
    """No-jump drift of the normalized filter.

    d pi_i / dt = sum_j a_ji pi_j - lambda_i pi_i + pi_i * sum_j lambda_j pi_j.
    Used only to cross-check ``propagate`` with an explicit integrator.
    """
    ops = model_arrays(model)
    pi = state.pi
    plam = float(ops.lam @ pi)
    return ops.q.T @ pi - ops.lam * pi + pi * plam


def integrate_ks_rk4(state: FilterState, dt: float, model: ModelSpec, n_steps: int = 1000) -> FilterState:
    """Classic RK4 on the nonlinear drift; the independent propagation route."""
    if dt < 0.0:
        raise DomainError("dt must be nonnegative")
    ops = model_arrays(model)
    qt = ops.q.T
    lam = ops.lam

    def rhs(pi):
        return qt @ pi - lam * pi + pi * (lam @ pi)

    h = dt / n_steps
    pi = state.pi.copy()
    for _ in range(n_steps):
        k1 = rhs(pi)
        k2 = rhs(pi + 0.5 * h * k1)
        k3 = rhs(pi + 0.5 * h * k2)
        k4 = rhs(pi + h * k3)
        pi = pi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return FilterState(pi=np.maximum(pi, 0.0) / np.maximum(pi, 0.0).sum(), t=state.t + dt)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JumpRecord:
    time: float
    pi_before: np.ndarray
    size: float
    pi_after: np.ndarray


@dataclass(frozen=True)
class Segment:
    """Inter-jump interval [start, end) started at the filter value pi_start."""

    start: float
    end: float
    pi_start: np.ndarray


@dataclass(frozen=True)
class FilterTrajectory:
    """Filter path: sampled values, jump records and exact segment anchors.

    ``times``/``pi`` hold the right-continuous samples on the requested
    grid plus a row per jump; ``pi_at`` evaluates the exact filter at any
    time by flowing from the enclosing segment anchor.
    """

    times: np.ndarray
    pi: np.ndarray
    is_jump: np.ndarray
    jumps: Tuple[JumpRecord, ...]
    segments: Tuple[Segment, ...]
    model: ModelSpec = field(repr=False)

    def _segment_index(self, t: float) -> int:
        starts = [s.start for s in self.segments]
        idx = bisect.bisect_right(starts, t) - 1
        return max(idx, 0)

    def pi_at(self, t: float, left: bool = False) -> np.ndarray:
        """Filter value at time t; ``left`` requests the pre-jump limit."""
        flow = filter_flow(self.model)
        if left:
            for rec in self.jumps:
                if rec.time == t:
                    return rec.pi_before
        seg = self.segments[self._segment_index(t)]
        return flow.flow(seg.pi_start, t - seg.start)

    def pi_grid(self, ts: np.ndarray) -> np.ndarray:
        """Vectorized right-continuous evaluation at sorted times, (n, M)."""
        ts = np.asarray(ts, dtype=float)
        flow = filter_flow(self.model)
        out = np.empty((ts.shape[0], self.pi.shape[1]))
        starts = np.array([s.start for s in self.segments])
        idx = np.clip(np.searchsorted(starts, ts, side="right") - 1, 0, len(starts) - 1)
        for seg_i in np.unique(idx):
            mask = idx == seg_i
            seg = self.segments[seg_i]
            out[mask] = flow.flow_many(seg.pi_start, ts[mask] - seg.start)
        return out


def run_filter(
    events: Sequence[Tuple[float, float]],
    model: ModelSpec,
    sample_grid: Optional[np.ndarray] = None,
    horizon: Optional[float] = None,
) -> FilterTrajectory:
    """Run the filter through ordered (time, size) claim events.

    Starts from the model's initial distribution, alternates propagation
    and jump reweighting, records pre- and post-jump values at every event
    and samples the filter on ``sample_grid``.
    """
    events = list(events)
    for k in range(1, len(events)):
        if events[k][0] <= events[k - 1][0]:
            raise DomainError("event times must be strictly increasing")
    if events and events[0][0] <= 0.0:
        raise DomainError("event times must be positive")

    flow = filter_flow(model)
    ops = model_arrays(model)
    shared = model.shared_claim_dist is not None
    discrete = model.claim_dists[0].is_discrete
    t_end = horizon
    if t_end is None:
        candidates = [t for t, _ in events]
        if sample_grid is not None and len(sample_grid):
            candidates.append(float(np.max(sample_grid)))
        t_end = max(candidates, default=0.0)

    grid = np.asarray(sample_grid, dtype=float) if sample_grid is not None else np.empty(0)
    if np.any(np.diff(grid) < 0.0):
        raise DomainError("sample grid must be sorted")

    sample_times, sample_pi, sample_flag = [], [], []
    jumps, segments = [], []

    pi = np.asarray(model.initial_distribution, dtype=float)
    t_cur = 0.0
    g = 0

    def emit_grid_until(t_stop):
        nonlocal g
        while g < grid.shape[0] and grid[g] < t_stop:
            ts = float(grid[g])
            sample_times.append(ts)
            sample_pi.append(flow.flow(pi, ts - t_cur))
            sample_flag.append(False)
            g += 1

    for t_n, z_n in events:
        emit_grid_until(t_n)
        segments.append(Segment(start=t_cur, end=t_n, pi_start=pi))
        pi_before = flow.flow(pi, t_n - t_cur)
        if shared:
            w = ops.lam * pi_before
        elif discrete:
            w = ops.lam * np.array([d.atom_mass(z_n) for d in model.claim_dists]) * pi_before
        else:
            w = ops.lam * np.array([float(d.density(z_n)) for d in model.claim_dists]) * pi_before
        mass = w.sum()
        if mass <= 0.0:
            raise DegenerateObservation(f"claim of size {z_n} has zero likelihood in every state")
        pi_after = w / mass
        jumps.append(JumpRecord(time=t_n, pi_before=pi_before, size=z_n, pi_after=pi_after))
        pi = pi_after
        t_cur = t_n
        # grid points that coincide with the jump take the post-jump value
        while g < grid.shape[0] and grid[g] == t_n:
            sample_times.append(t_n)
            sample_pi.append(pi)
            sample_flag.append(True)
            g += 1
        sample_times.append(t_n)
        sample_pi.append(pi)
        sample_flag.append(True)

    emit_grid_until(math.inf)
    segments.append(Segment(start=t_cur, end=max(t_end, t_cur), pi_start=pi))

    n = len(sample_times)
    return FilterTrajectory(
        times=np.asarray(sample_times),
        pi=np.asarray(sample_pi).reshape(n, model.num_states),
        is_jump=np.asarray(sample_flag, dtype=bool),
        jumps=tuple(jumps),
        segments=tuple(segments),
        model=model,
    )
