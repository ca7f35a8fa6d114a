"""Backward dynamic-programming solver for the control problem.

The value factor v(t, pi) multiplies exp(-eta * discounted wealth) to give
the running objective, so wealth drops out of the state entirely and the
solver works on a time x probability-simplex grid. Each backward step
combines the exact no-claim filter flow (a matrix exponential), a premium
accrual factor, and the claim-arrival jump term; the retention is chosen
pointwise from the first-order condition of the driver

    h(t, pi, u) = -v(t, pi) * eta_t * q(pi, u)
                  + sum_i pi_i lam_i int v(t, W(pi, z))
                        (e^{eta_t z} - e^{eta_t g(z, u)}) F_i(dz),

with eta_t = eta e^{R(T-t)} and W the claim-time filter update. h is
concave in u for premia and contracts that are linear or convex in u, so
a sign test at the interval ends plus bisection locates the unique
maximizer.

A single-state backward ODE oracle and the deterministic full-information
retentions provide independent checks of the scheme.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.linalg import expm

from .errors import DomainError, NonConcaveError, NumericalError, StabilityError
from .filtering import jump_map
from .model import (
    Contract,
    CustomContract,
    ExcessOfLoss,
    MarketParams,
    ModelSpec,
    Proportional,
    ceded_mean,
    ceded_second_moment,
    check_admissibility,
    claim_mean,
    claim_second_moment,
    model_arrays,
    retained_exp_moment,
    retention_gradient_kernel,
)
from .premiums import PremiumPrinciple, insurer_premium


class Tag(enum.IntEnum):
    """Boundary classification of the pointwise optimizer."""

    AT_ZERO = 0
    INTERIOR = 1
    AT_I = 2


@dataclass(frozen=True)
class SolverConfig:
    n_time_steps: int = 200
    simplex_resolution: int = 101
    root_find_tol: float = 1e-10
    u_grid_size: int = 200
    excess_quantile: float = 0.999
    quad_nodes: int = 160

    def __post_init__(self):
        if self.n_time_steps < 1:
            raise DomainError("n_time_steps must be >= 1")
        if self.simplex_resolution < 2:
            raise DomainError("simplex_resolution must be >= 2")
        if self.root_find_tol <= 0.0 or self.u_grid_size < 2:
            raise DomainError("invalid u-search settings")


# ---------------------------------------------------------------------------
# simplex grid and interpolation
# ---------------------------------------------------------------------------


class SimplexGrid:
    """Regular lattice on the probability simplex with barycentric
    interpolation (linear on [0,1] for two states, Delaunay for more)."""

    def __init__(self, num_states: int, resolution: int):
        self.m = num_states
        self.resolution = resolution if num_states > 1 else 1
        if num_states == 1:
            self.points = np.array([[1.0]])
        elif num_states == 2:
            x = np.linspace(0.0, 1.0, resolution)
            self.points = np.column_stack([x, 1.0 - x])
        else:
            d = resolution - 1
            combos = itertools.combinations(range(d + num_states - 1), num_states - 1)
            pts = []
            for cut in combos:
                prev = -1
                parts = []
                for c in cut:
                    parts.append(c - prev - 1)
                    prev = c
                parts.append(d + num_states - 2 - prev)
                pts.append(parts)
            self.points = np.asarray(pts, dtype=float) / d
        self._tri = None

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def _triangulation(self):
        if self._tri is None:
            from scipy.spatial import Delaunay

            self._tri = Delaunay(self.points[:, :-1])
        return self._tri

    def weights(self, p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Vertex indices and barycentric weights for points p of shape (n, M)."""
        p = np.atleast_2d(np.asarray(p, dtype=float))
        n = p.shape[0]
        if self.m == 1:
            return np.zeros((n, 1), dtype=int), np.ones((n, 1))
        if self.m == 2:
            x = np.clip(p[:, 0], 0.0, 1.0) * (self.resolution - 1)
            i0 = np.clip(np.floor(x).astype(int), 0, self.resolution - 2)
            frac = x - i0
            idx = np.column_stack([i0, i0 + 1])
            w = np.column_stack([1.0 - frac, frac])
            return idx, w
        tri = self._triangulation()
        x = p[:, :-1]
        simplex = tri.find_simplex(x)
        bad = simplex < 0
        if np.any(bad):
            # renormalize boundary fuzz and retry; snap leftovers to the
            # nearest vertex
            q = np.clip(p[bad], 0.0, 1.0)
            q /= q.sum(axis=1, keepdims=True)
            simplex2 = tri.find_simplex(q[:, :-1])
            simplex[bad] = simplex2
            x = x.copy()
            x[bad] = q[:, :-1]
            still = simplex < 0
            if np.any(still):
                simplex[still] = 0
        trans = tri.transform[simplex]
        b = np.einsum("nij,nj->ni", trans[:, : self.m - 1], x - trans[:, self.m - 1])
        w = np.column_stack([b, 1.0 - b.sum(axis=1)])
        w = np.clip(w, 0.0, None)
        w /= w.sum(axis=1, keepdims=True)
        idx = tri.simplices[simplex]
        still = tri.find_simplex(x) < 0
        if np.any(still):
            near = np.argmin(
                np.linalg.norm(self.points[None, :, :] - p[still][:, None, :], axis=2), axis=1
            )
            idx[still] = near[:, None]
            w[still] = 0.0
            w[still, 0] = 1.0
        return idx, w

    def interpolate(self, values: np.ndarray, p: np.ndarray) -> np.ndarray:
        idx, w = self.weights(p)
        return np.sum(np.asarray(values)[idx] * w, axis=1)


def _time_bracket(times: np.ndarray, t: float) -> Tuple[int, float]:
    t = min(max(float(t), float(times[0])), float(times[-1]))
    k = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
    dt = times[k + 1] - times[k]
    return k, (t - times[k]) / dt


def _table_at_many(times, grid, table, ts, p) -> np.ndarray:
    """Bilinear (time x simplex) lookup at per-row (t, pi) pairs."""
    ts = np.clip(np.asarray(ts, dtype=float), times[0], times[-1])
    p = np.atleast_2d(np.asarray(p, dtype=float))
    k = np.clip(np.searchsorted(times, ts, side="right") - 1, 0, len(times) - 2)
    w = (ts - times[k]) / (times[k + 1] - times[k])
    idx, gw = grid.weights(p)
    lo = np.sum(table[k[:, None], idx] * gw, axis=1)
    hi = np.sum(table[k[:, None] + 1, idx] * gw, axis=1)
    return (1.0 - w) * lo + w * hi


@dataclass(frozen=True)
class ValueTable:
    """v(t, pi) on the time grid x simplex lattice; terminal slice is 1."""

    times: np.ndarray
    grid: SimplexGrid = field(repr=False)
    values: np.ndarray

    def value_at(self, t: float, p: np.ndarray) -> np.ndarray:
        k, w = _time_bracket(self.times, t)
        lo = self.grid.interpolate(self.values[k], p)
        hi = self.grid.interpolate(self.values[k + 1], p)
        out = (1.0 - w) * lo + w * hi
        return out

    def value_at_many(self, ts: np.ndarray, p: np.ndarray) -> np.ndarray:
        """Value at per-row (t, pi) pairs; ts (n,), p (n, M)."""
        return _table_at_many(self.times, self.grid, self.values, ts, p)

    def slice_interpolator(self, k: int) -> Callable[[np.ndarray], np.ndarray]:
        vals = self.values[k]
        return lambda p: self.grid.interpolate(vals, p)


@dataclass(frozen=True)
class PolicyTable:
    """Feedback retention u*(t, pi) with a boundary tag per lattice point."""

    times: np.ndarray
    grid: SimplexGrid = field(repr=False)
    u: np.ndarray
    tags: np.ndarray
    u_cap: float

    def u_at(self, t: float, p: np.ndarray) -> np.ndarray:
        k, w = _time_bracket(self.times, t)
        lo = self.grid.interpolate(self.u[k], p)
        hi = self.grid.interpolate(self.u[k + 1], p)
        return np.clip((1.0 - w) * lo + w * hi, 0.0, self.u_cap)

    def u_at_many(self, ts: np.ndarray, p: np.ndarray) -> np.ndarray:
        return np.clip(_table_at_many(self.times, self.grid, self.u, ts, p), 0.0, self.u_cap)


# ---------------------------------------------------------------------------
# claim-size quadrature nodes (state-dependent claim laws)
# ---------------------------------------------------------------------------


def _dist_nodes(dist, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights turning int phi(z) F(dz) into sum w_k phi(z_k)."""
    if dist.is_discrete:
        z, p = dist._arrays
        return z, p
    qs = [0.0, dist.quantile(0.5), dist.quantile(0.9), dist.quantile(0.99), dist.quantile(1.0 - 1e-9)]
    per = max(8, n // 4)
    x, w = np.polynomial.legendre.leggauss(per)
    zs, ws = [], []
    for a, b in zip(qs[:-1], qs[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        zk = mid + half * x
        zs.append(zk)
        ws.append(half * w * dist.density(zk))
    return np.concatenate(zs), np.concatenate(ws)


# ---------------------------------------------------------------------------
# retention optimization kernels
# ---------------------------------------------------------------------------


def driver_concavity_ok(contract: Contract, principle: PremiumPrinciple) -> bool:
    """The driver is strictly concave when premium and retained loss are
    linear or convex in u; that covers both standard principles and both
    standard contracts."""
    return not isinstance(contract, CustomContract)


def _scan_concavity(kernel, u_cap: float, n: int) -> bool:
    us = np.linspace(0.0, u_cap, n)
    s = np.array([float(kernel.deriv(np.full(kernel.size, uu))[0]) for uu in us])
    return bool(np.all(np.diff(s) <= 1e-9 * max(1.0, np.abs(s).max())))


class _SharedKernel:
    """Driver pieces for a claim law shared by all states: the claim-time
    filter update does not depend on the claim size, so the z-integrals
    reduce to scalar moment kernels."""

    def __init__(self, dist, contract, principle, theta):
        self.dist = dist
        self.contract = contract
        self.principle = principle
        self.theta = theta
        self.m1 = claim_mean(dist)
        self.m2 = claim_second_moment(dist)

    def bind(self, eta_t, plam, v0, vw):
        self.eta_t = eta_t
        self.plam = plam
        self.v0 = v0
        self.vw = vw
        self.size = plam.shape[0]
        return self

    def _egu(self, u):
        if isinstance(self.contract, Proportional):
            return self.m1 * np.ones_like(u)
        if isinstance(self.contract, ExcessOfLoss):
            return 1.0 - self.dist.cdf(u)
        eps = 1e-6
        return (ceded_mean(self.dist, self.contract, u) -
                ceded_mean(self.dist, self.contract, u + eps)) / eps

    def q_of(self, u):
        ced1 = ceded_mean(self.dist, self.contract, u)
        if self.principle is PremiumPrinciple.EXPECTED_VALUE:
            return (1.0 + self.theta) * self.plam * ced1
        ced2 = ceded_second_moment(self.dist, self.contract, u)
        return self.plam * (ced1 + self.theta * ced2)

    def qprime(self, u):
        egu = self._egu(u)
        if self.principle is PremiumPrinciple.EXPECTED_VALUE:
            return -(1.0 + self.theta) * self.plam * egu
        if isinstance(self.contract, Proportional):
            cross = (1.0 - u) * self.m2
        else:
            cross = ceded_mean(self.dist, self.contract, u)
        return self.plam * (-egu - 2.0 * self.theta * cross)

    def deriv(self, u):
        foc = self.vw * self.plam * retention_gradient_kernel(self.dist, self.eta_t, self.contract, u)
        return -self.v0 * self.qprime(u) - foc

    def jump_term(self, u):
        return self.vw * self.plam * retained_exp_moment(self.dist, self.eta_t, self.contract, u)

    def null_jump_term(self):
        return self.vw * self.plam * self.dist.mgf(self.eta_t)


class _PerStateKernel:
    """Driver pieces with state-dependent claim laws: the claim-time update
    depends on the observed size, so z-integrals run over per-state nodes
    carrying the continuation value at the post-claim filter."""

    def __init__(self, model, contract, principle, theta, n_nodes):
        self.model = model
        self.contract = contract
        self.principle = principle
        self.theta = theta
        self.lam = model_arrays(model).lam
        self.nodes = [_dist_nodes(d, n_nodes) for d in model.claim_dists]
        self.m1 = np.array([claim_mean(d) for d in model.claim_dists])
        self.m2 = np.array([claim_second_moment(d) for d in model.claim_dists])

    def bind(self, eta_t, pis, v0, vw_nodes):
        # vw_nodes: list per state of (K, n_nodes_i) continuation values
        self.eta_t = eta_t
        self.pis = pis
        self.v0 = v0
        self.vw_nodes = vw_nodes
        self.size = pis.shape[0]
        return self

    def _mix(self, per_state_fn):
        out = np.zeros(self.size)
        for i, d in enumerate(self.model.claim_dists):
            out += self.pis[:, i] * self.lam[i] * per_state_fn(i, d)
        return out

    def q_of(self, u):
        if self.principle is PremiumPrinciple.EXPECTED_VALUE:
            return (1.0 + self.theta) * self._mix(lambda i, d: ceded_mean(d, self.contract, u))
        return self._mix(
            lambda i, d: ceded_mean(d, self.contract, u)
            + self.theta * ceded_second_moment(d, self.contract, u)
        )

    def qprime(self, u):
        def egu(i, d):
            if isinstance(self.contract, Proportional):
                return self.m1[i] * np.ones_like(u)
            if isinstance(self.contract, ExcessOfLoss):
                return 1.0 - d.cdf(u)
            eps = 1e-6
            return (ceded_mean(d, self.contract, u) - ceded_mean(d, self.contract, u + eps)) / eps

        if self.principle is PremiumPrinciple.EXPECTED_VALUE:
            return -(1.0 + self.theta) * self._mix(egu)

        def var_prime(i, d):
            if isinstance(self.contract, Proportional):
                cross = (1.0 - u) * self.m2[i]
            else:
                cross = ceded_mean(d, self.contract, u)
            return -egu(i, d) - 2.0 * self.theta * cross

        return self._mix(var_prime)

    def _node_sum(self, u, with_gradient):
        out = np.zeros(self.size)
        ue = u[:, None]
        for i, d in enumerate(self.model.claim_dists):
            z, w = self.nodes[i]
            g = self.contract.retained_fn(z[None, :], ue)
            vals = np.exp(self.eta_t * g)
            if with_gradient:
                vals = vals * self.contract.retained_du(z[None, :], ue)
            out += self.pis[:, i] * self.lam[i] * np.sum(vals * w * self.vw_nodes[i], axis=1)
        return out

    def deriv(self, u):
        return -self.v0 * self.qprime(u) - self._node_sum(u, with_gradient=True)

    def jump_term(self, u):
        return self._node_sum(u, with_gradient=False)

    def null_jump_term(self):
        out = np.zeros(self.size)
        for i, d in enumerate(self.model.claim_dists):
            z, w = self.nodes[i]
            out += self.pis[:, i] * self.lam[i] * np.sum(np.exp(self.eta_t * z) * w * self.vw_nodes[i], axis=1)
        return out


def _jump_map_grid(pts: np.ndarray, model: ModelSpec, z: Optional[float]) -> np.ndarray:
    """Jump reweighting over a lattice, tolerating zero-probability rows.

    A lattice vertex can make a given claim size impossible; those rows
    only ever enter the induction with weight zero, so they are sent to
    the states that could have produced the claim instead of failing.
    """
    ops = model_arrays(model)
    if z is None or model.shared_claim_dist is not None:
        like = ops.lam
    elif model.claim_dists[0].is_discrete:
        like = ops.lam * np.array([d.atom_mass(z) for d in model.claim_dists])
    else:
        like = ops.lam * np.array([float(d.density(z)) for d in model.claim_dists])
    w = np.asarray(pts, dtype=float) * like
    s = w.sum(axis=1, keepdims=True)
    dead = s[:, 0] <= 0.0
    if np.any(dead):
        fallback = like.copy()
        if fallback.sum() <= 0.0:
            fallback = np.ones_like(fallback)
        w[dead] = fallback / fallback.sum()
        s = w.sum(axis=1, keepdims=True)
    return w / s


def _retention_cap(model: ModelSpec, contract: Contract, mkt: MarketParams, config: SolverConfig) -> float:
    if np.isfinite(contract.cap):
        return float(contract.cap)
    q_hi = max(d.quantile(config.excess_quantile) for d in model.claim_dists)
    return max(q_hi, math.log1p(mkt.theta) / mkt.eta)


def _solve_retention(kernel, u_cap: float, tol: float) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized boundary test plus bisection on the driver derivative."""
    k = kernel.size
    zeros = np.zeros(k)
    caps = np.full(k, u_cap)
    s0 = kernel.deriv(zeros)
    s1 = kernel.deriv(caps)
    at0 = s0 <= 0.0
    at_cap = (~at0) & (s1 >= 0.0)
    interior = ~(at0 | at_cap)

    u = np.where(at_cap, u_cap, 0.0)
    tags = np.full(k, int(Tag.INTERIOR), dtype=np.int8)
    tags[at0] = int(Tag.AT_ZERO)
    tags[at_cap] = int(Tag.AT_I)

    if np.any(interior):
        lo = np.zeros(k)
        hi = caps.copy()
        n_iter = min(100, int(math.ceil(math.log2(max(u_cap / tol, 2.0)))) + 1)
        for _ in range(n_iter):
            mid = 0.5 * (lo + hi)
            s = kernel.deriv(mid)
            go_right = s > 0.0
            lo = np.where(interior & go_right, mid, lo)
            hi = np.where(interior & ~go_right, mid, hi)
        u = np.where(interior, 0.5 * (lo + hi), u)
    return u, tags


# ---------------------------------------------------------------------------
# driver and pointwise optimizer (public operations)
# ---------------------------------------------------------------------------


def _as_interpolant(v_next) -> Callable[[np.ndarray], np.ndarray]:
    if callable(v_next):
        return v_next
    raise DomainError("v_next must be callable on filter vectors")


def _build_kernel(model, contract, principle, mkt, config, eta_t, pis, v_fn):
    v0 = np.atleast_1d(np.asarray(v_fn(pis), dtype=float))
    if model.shared_claim_dist is not None:
        vw = np.atleast_1d(np.asarray(v_fn(jump_map(pis, model)), dtype=float))
        plam = pis @ model_arrays(model).lam
        kern = _SharedKernel(model.shared_claim_dist, contract, principle, mkt.theta)
        return kern.bind(eta_t, np.atleast_1d(plam), v0, vw)
    kern = _PerStateKernel(model, contract, principle, mkt.theta, config.quad_nodes)
    vw_nodes = []
    for i, d in enumerate(model.claim_dists):
        z, _ = kern.nodes[i]
        vals = np.empty((pis.shape[0], z.shape[0]))
        for kk, zk in enumerate(z):
            vals[:, kk] = np.atleast_1d(v_fn(_jump_map_grid(pis, model, float(zk))))
        vw_nodes.append(vals)
    return kern.bind(eta_t, pis, v0, vw_nodes)


def hamiltonian_h(
    t: float,
    pi: np.ndarray,
    u: float,
    v_next,
    model: ModelSpec,
    principle: PremiumPrinciple,
    mkt: MarketParams,
    contract: Contract,
    config: SolverConfig = SolverConfig(),
) -> float:
    """Driver value h(t, pi, u); the maximizer over u is the optimal retention."""
    if not 0.0 <= u <= contract.cap:
        raise DomainError("retention outside contract bounds")
    v_fn = _as_interpolant(v_next)
    eta_t = mkt.compounded_aversion(t)
    for d in model.claim_dists:
        if eta_t >= d.mgf_bound():
            raise NumericalError("exponential moment overflows: model is inadmissible at this eta")
    pis = np.atleast_2d(np.asarray(getattr(pi, "pi", pi), dtype=float))
    kern = _build_kernel(model, contract, principle, mkt, config, eta_t, pis, v_fn)
    u_arr = np.full(pis.shape[0], float(u))
    q = kern.q_of(u_arr)
    premium_part = -kern.v0 * eta_t * q
    jump_part = kern.null_jump_term() - kern.jump_term(u_arr)
    out = premium_part + jump_part
    return float(out[0]) if out.shape[0] == 1 else out


def optimize_u(
    t: float,
    pi: np.ndarray,
    v_next,
    model: ModelSpec,
    principle: PremiumPrinciple,
    mkt: MarketParams,
    contract: Contract,
    config: SolverConfig = SolverConfig(),
) -> Tuple[float, Tag]:
    """Pointwise maximizer of the driver with its boundary classification.

    Tests the derivative sign at u = 0 and at the retention cap (a finite
    search cap stands in for an unbounded excess-of-loss retention), and
    bisects the first-order condition in between.
    """
    v_fn = _as_interpolant(v_next)
    eta_t = mkt.compounded_aversion(t)
    pis = np.atleast_2d(np.asarray(getattr(pi, "pi", pi), dtype=float))
    kern = _build_kernel(model, contract, principle, mkt, config, eta_t, pis, v_fn)
    u_cap = _retention_cap(model, contract, mkt, config)
    if not driver_concavity_ok(contract, principle):
        if not _scan_concavity(kern, u_cap, config.u_grid_size):
            raise NonConcaveError(
                "driver derivative is not monotone in u; premium or contract "
                "violates the linear-or-convex condition"
            )
    u, tags = _solve_retention(kern, u_cap, config.root_find_tol)
    return float(u[0]), Tag(int(tags[0]))


# ---------------------------------------------------------------------------
# backward induction
# ---------------------------------------------------------------------------


def solve_backward(
    model: ModelSpec,
    contract: Contract,
    principle: PremiumPrinciple,
    mkt: MarketParams,
    config: SolverConfig,
    terminal: Optional[np.ndarray] = None,
) -> Tuple[ValueTable, PolicyTable]:
    """Backward induction of v(t, pi) and the feedback retention.

    One step from t_{k+1} to t_k applies, at each lattice point,

        v_k = min_u exp(eta_t (q(pi,u) - c(pi)) dt) * [
                  (1 - pi(lam) dt) * v_{k+1}(flow(pi, dt))
                  + dt * sum_i pi_i lam_i int e^{eta_t g(z,u)}
                                              v_{k+1}(W(pi, z)) F_i(dz) ],

    the exact filter flow handling the no-claim branch and the claim
    branch carrying both the retained-loss penalty and the filter jump.
    The premium accrual includes the insurer income c: the value process
    conditions on future wealth increments, which earn c and pay q.
    """
    report = check_admissibility(model, mkt)
    if not report.passed:
        raise DomainError(f"model fails the admissibility check:\n{report}")
    if not driver_concavity_ok(contract, principle):
        # custom contracts get a one-off numeric concavity scan below
        pass

    t_end = mkt.horizon_t
    nt = config.n_time_steps
    dt = t_end / nt
    if dt * model.lambda_max > 0.5:
        raise StabilityError(
            f"dt * max(lambda) = {dt * model.lambda_max:.3g} > 0.5; increase n_time_steps"
        )

    grid = SimplexGrid(model.num_states, config.simplex_resolution)
    pts = grid.points
    k_pts = grid.size
    ops = model_arrays(model)
    plam = pts @ ops.lam
    c_of_pi = np.array(
        [insurer_premium(p, model, principle, mkt.theta_i) for p in pts]
    )

    # no-claim filter flow of every lattice point over one step (exact)
    if model.num_states > 1:
        trans = expm(ops.drift * dt)
        rho = pts @ trans.T
        rho = np.maximum(rho, 0.0)
        prop_pts = rho / rho.sum(axis=1, keepdims=True)
    else:
        prop_pts = pts
    prop_idx, prop_w = grid.weights(prop_pts)

    shared = model.shared_claim_dist is not None
    if shared:
        w_pts = jump_map(pts, model)
        w_idx, w_w = grid.weights(w_pts)
        kernel = _SharedKernel(model.shared_claim_dist, contract, principle, mkt.theta)
    else:
        kernel = _PerStateKernel(model, contract, principle, mkt.theta, config.quad_nodes)
        node_weights = []
        for i, d in enumerate(model.claim_dists):
            z, _ = kernel.nodes[i]
            per_node = [grid.weights(_jump_map_grid(pts, model, float(zk))) for zk in z]
            node_weights.append(per_node)

    u_cap = _retention_cap(model, contract, mkt, config)
    is_excess = not np.isfinite(contract.cap)

    times = np.linspace(0.0, t_end, nt + 1)
    values = np.empty((nt + 1, k_pts))
    u_tbl = np.empty((nt + 1, k_pts))
    tag_tbl = np.empty((nt + 1, k_pts), dtype=np.int8)

    if terminal is None:
        values[nt] = 1.0
    else:
        terminal = np.asarray(terminal, dtype=float)
        if terminal.shape != (k_pts,) or np.any(terminal <= 0.0):
            raise DomainError("terminal slice must be positive on the lattice")
        values[nt] = terminal

    concavity_checked = driver_concavity_ok(contract, principle)

    def bind_kernel(eta_t, v_next):
        v0 = v_next
        if shared:
            vw = np.sum(v_next[w_idx] * w_w, axis=1)
            return kernel.bind(eta_t, plam, v0, vw)
        vw_nodes = []
        for i, _d in enumerate(model.claim_dists):
            z, _ = kernel.nodes[i]
            vals = np.empty((k_pts, z.shape[0]))
            for kk in range(z.shape[0]):
                idx, w = node_weights[i][kk]
                vals[:, kk] = np.sum(v_next[idx] * w, axis=1)
            vw_nodes.append(vals)
        return kernel.bind(eta_t, pts, v0, vw_nodes)

    for k in range(nt, -1, -1):
        t_k = times[k]
        eta_t = mkt.compounded_aversion(t_k)
        v_next = values[min(k + 1, nt)]
        kern = bind_kernel(eta_t, v_next)
        if not concavity_checked:
            if not _scan_concavity(kern, u_cap, config.u_grid_size):
                raise NonConcaveError("driver derivative is not monotone in u")
            concavity_checked = True
        u_k, tags_k = _solve_retention(kern, u_cap, config.root_find_tol)
        u_tbl[k] = u_k
        tag_tbl[k] = tags_k
        if k == nt:
            continue

        v_prop = np.sum(v_next[prop_idx] * prop_w, axis=1)
        no_claim = (1.0 - plam * dt) * v_prop
        jump = kern.jump_term(u_k)
        accrual = np.exp(eta_t * (kern.q_of(u_k) - c_of_pi) * dt)
        v_new = accrual * (no_claim + dt * jump)
        if is_excess:
            null_val = np.exp(eta_t * (-c_of_pi) * dt) * (no_claim + dt * kern.null_jump_term())
            better_null = null_val < v_new
            v_new = np.where(better_null, null_val, v_new)
            u_tbl[k] = np.where(better_null, u_cap, u_tbl[k])
            tag_tbl[k] = np.where(better_null, int(Tag.AT_I), tag_tbl[k])
        if np.any(~np.isfinite(v_new)) or np.any(v_new <= 0.0):
            raise NumericalError("value update produced a nonpositive or nonfinite slice")
        values[k] = v_new

    return (
        ValueTable(times=times, grid=grid, values=values),
        PolicyTable(times=times, grid=grid, u=u_tbl, tags=tag_tbl, u_cap=u_cap),
    )


# ---------------------------------------------------------------------------
# single-state oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleSolution:
    times: np.ndarray
    v: np.ndarray
    u: np.ndarray

    def value_at(self, t: float, p=None) -> float:
        k, w = _time_bracket(self.times, t)
        return float((1.0 - w) * self.v[k] + w * self.v[k + 1])

    def value_at_many(self, ts: np.ndarray, p=None) -> np.ndarray:
        return np.interp(np.asarray(ts, dtype=float), self.times, self.v)


def single_state_oracle(
    model: ModelSpec,
    contract: Contract,
    principle: PremiumPrinciple,
    mkt: MarketParams,
    dt: float,
    config: SolverConfig = SolverConfig(),
) -> OracleSolution:
    """Backward ODE for the single-state value factor, integrated by RK4.

    With one state the filter is degenerate and the value factor solves

        v'(t) = v(t) [eta_t c + lam
                      - min_u (eta_t q(u) + lam E[e^{eta_t g(Z,u)}])],
        v(T) = 1,

    which is the scalar reduction of the driver recursion: the claim-size
    integral of the continuation value factors out because the filter no
    longer moves.
    """
    if model.num_states != 1:
        raise DomainError("single_state_oracle requires a one-state model")
    report = check_admissibility(model, mkt)
    if not report.passed:
        raise DomainError("model fails the admissibility check")

    lam = float(model_arrays(model).lam[0])
    dist = model.claim_dists[0]
    c0 = insurer_premium(np.array([1.0]), model, principle, mkt.theta_i)
    u_cap = _retention_cap(model, contract, mkt, config)
    is_excess = not np.isfinite(contract.cap)
    kernel = _SharedKernel(dist, contract, principle, mkt.theta)
    one = np.ones(1)

    def step_min(t: float) -> Tuple[float, float]:
        eta_t = mkt.compounded_aversion(t)
        kern = kernel.bind(eta_t, lam * one, one, one)
        u, _tags = _solve_retention(kern, u_cap, config.root_find_tol)
        psi = eta_t * float(kern.q_of(u)[0]) + float(kern.jump_term(u)[0])
        if is_excess:
            psi_null = float(kern.null_jump_term()[0])
            if psi_null < psi:
                return psi_null, u_cap
        return psi, float(u[0])

    n = max(1, int(round(mkt.horizon_t / dt)))
    h = mkt.horizon_t / n
    times = np.linspace(0.0, mkt.horizon_t, n + 1)

    cache = {}

    def rate(t: float) -> float:
        key = round(t, 12)
        if key not in cache:
            eta_t = mkt.compounded_aversion(t)
            psi, _ = step_min(t)
            cache[key] = eta_t * c0 + lam - psi
        return cache[key]

    v = np.empty(n + 1)
    v[n] = 1.0
    for k in range(n, 0, -1):
        t = times[k]
        vk = v[k]
        k1 = vk * rate(t)
        k2 = (vk - 0.5 * h * k1) * rate(t - 0.5 * h)
        k3 = (vk - 0.5 * h * k2) * rate(t - 0.5 * h)
        k4 = (vk - h * k3) * rate(t - h)
        v[k - 1] = vk - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    u = np.array([step_min(t)[1] for t in times])
    return OracleSolution(times=times, v=v, u=u)


# ---------------------------------------------------------------------------
# full-information benchmark
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FullInfoPolicy:
    """Deterministic retention u(t) when the hidden state is observable.

    Valid for a claim law shared by all states, where the optimal
    full-information retention does not depend on the running state.
    """

    contract: Contract
    principle: PremiumPrinciple
    mkt: MarketParams
    dist: object = field(repr=False)

    def u(self, t: float) -> float:
        return float(self.u_many(np.array([t]))[0])

    def u_many(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        mkt = self.mkt
        eta_ts = mkt.eta * np.exp(mkt.rate_r * (mkt.horizon_t - ts))
        if isinstance(self.contract, ExcessOfLoss):
            if self.principle is not PremiumPrinciple.EXPECTED_VALUE:
                raise DomainError("excess-of-loss benchmark requires the expected-value principle")
            return np.log1p(mkt.theta) / eta_ts
        if not isinstance(self.contract, Proportional):
            raise DomainError("full-information benchmark covers proportional and excess-of-loss")

        m1 = claim_mean(self.dist)
        m2 = claim_second_moment(self.dist)
        out = np.empty_like(ts)
        for j, eta_t in enumerate(eta_ts):
            if self.principle is PremiumPrinciple.EXPECTED_VALUE:
                target = (1.0 + mkt.theta) * m1
                if target >= float(self.dist.exp_z_moment(eta_t)):
                    out[j] = 1.0
                    continue

                def gap(u):
                    return float(self.dist.exp_z_moment(eta_t * u)) - target

            else:

                def gap(u):
                    lhs = m1 + 2.0 * mkt.theta * (1.0 - u) * m2
                    return float(self.dist.exp_z_moment(eta_t * u)) - lhs

                if gap(1.0) <= 0.0:
                    out[j] = 1.0
                    continue
            lo, hi = 0.0, 1.0
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if gap(mid) < 0.0:
                    lo = mid
                else:
                    hi = mid
            out[j] = 0.5 * (lo + hi)
        return out


def full_info_policy(
    model: ModelSpec,
    contract: Contract,
    principle: PremiumPrinciple,
    mkt: MarketParams,
) -> FullInfoPolicy:
    """Deterministic optimal retention under an observable state.

    Proportional with the expected-value principle solves
    (1+theta) E[Z] = E[Z e^{eta_t u Z}] and never returns full reinsurance;
    with the variance principle the loading side is
    E[Z] + 2 theta (1-u) E[Z^2]. Excess-of-loss with the expected-value
    principle is closed form: u(t) = e^{-R(T-t)} log(1+theta) / eta.
    """
    dist = model.shared_claim_dist
    if dist is None:
        raise DomainError("full-information benchmark requires a shared claim law")
    if isinstance(contract, CustomContract):
        raise DomainError("full-information benchmark covers the standard contracts only")
    if isinstance(contract, ExcessOfLoss) and principle is not PremiumPrinciple.EXPECTED_VALUE:
        raise DomainError("excess-of-loss benchmark requires the expected-value principle")
    return FullInfoPolicy(contract=contract, principle=principle, mkt=mkt, dist=dist)
