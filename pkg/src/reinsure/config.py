"""Scenario configuration: strict JSON parsing into package types.

Unknown keys are rejected with their path so typos fail loudly instead of
silently running defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Tuple

from .errors import ConfigError
from .model import (
    Contract,
    Discrete,
    ExcessOfLoss,
    Gamma,
    Exponential,
    MarketParams,
    ModelSpec,
    Proportional,
    TruncatedNormal,
)
from .premiums import PremiumPrinciple
from .solver import SolverConfig


@dataclass(frozen=True)
class EvaluationConfig:
    n_paths: int = 10000
    seed: int = 0
    n_intervals: int = 20


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "feedback"
    retention: float = 0.5


@dataclass(frozen=True)
class ScenarioConfig:
    model: ModelSpec
    market: MarketParams
    contract: Contract
    principle: PremiumPrinciple
    solver: SolverConfig
    evaluation: EvaluationConfig
    strategy: StrategyConfig
    sweep_thetas: Tuple[float, ...]
    output_dir: str


def _require(mapping: dict, key: str, path: str):
    if key not in mapping:
        raise ConfigError(f"{path}: missing required key {key!r}")
    return mapping[key]


def _check_keys(mapping: dict, allowed: set, path: str):
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)!r}")


def _claim_dist(spec: dict, path: str):
    kind = _require(spec, "type", path)
    if kind == "exponential":
        _check_keys(spec, {"type", "zeta"}, path)
        return Exponential(zeta=float(_require(spec, "zeta", path)))
    if kind == "gamma":
        _check_keys(spec, {"type", "alpha", "zeta"}, path)
        return Gamma(alpha=float(_require(spec, "alpha", path)), zeta=float(_require(spec, "zeta", path)))
    if kind == "truncated_normal":
        _check_keys(spec, {"type", "mu", "sigma"}, path)
        return TruncatedNormal(mu=float(_require(spec, "mu", path)), sigma=float(_require(spec, "sigma", path)))
    if kind == "discrete":
        _check_keys(spec, {"type", "atoms"}, path)
        atoms = _require(spec, "atoms", path)
        return Discrete(atoms=tuple((float(z), float(p)) for z, p in atoms))
    raise ConfigError(f"{path}: unknown claim distribution type {kind!r}")


def _contract(spec: dict, path: str) -> Contract:
    kind = _require(spec, "type", path)
    _check_keys(spec, {"type"}, path)
    if kind == "proportional":
        return Proportional()
    if kind == "excess_of_loss":
        return ExcessOfLoss()
    raise ConfigError(f"{path}: unknown contract type {kind!r}")


def load_scenario(path: str) -> ScenarioConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_scenario(raw)


def parse_scenario(raw: dict) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object")
    _check_keys(
        raw,
        {"model", "market", "contract", "premium_principle", "solver", "evaluation",
         "strategy", "sweep", "output_dir"},
        "top level",
    )

    m = _require(raw, "model", "top level")
    _check_keys(m, {"generator", "intensities", "claims", "initial_state", "initial_distribution"}, "model")
    claims = [_claim_dist(c, f"model.claims[{i}]") for i, c in enumerate(_require(m, "claims", "model"))]
    try:
        model = ModelSpec.build(
            generator=_require(m, "generator", "model"),
            intensities=[float(x) for x in _require(m, "intensities", "model")],
            claim_dists=claims,
            initial_state=m.get("initial_state"),
            initial_distribution=m.get("initial_distribution"),
        )
    except (ConfigError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from exc

    mk = _require(raw, "market", "top level")
    _check_keys(mk, {"eta", "rate_r", "horizon_t", "initial_wealth", "theta", "theta_i"}, "market")
    try:
        market = MarketParams(
            eta=float(_require(mk, "eta", "market")),
            rate_r=float(mk.get("rate_r", 0.0)),
            horizon_t=float(_require(mk, "horizon_t", "market")),
            initial_wealth=float(mk.get("initial_wealth", 0.0)),
            theta=float(_require(mk, "theta", "market")),
            theta_i=float(_require(mk, "theta_i", "market")),
        )
    except ValueError as exc:
        raise ConfigError(f"market: {exc}") from exc

    contract = _contract(_require(raw, "contract", "top level"), "contract")

    principle_raw = raw.get("premium_principle", "expected_value")
    try:
        principle = PremiumPrinciple(principle_raw)
    except ValueError as exc:
        raise ConfigError(f"premium_principle: unknown value {principle_raw!r}") from exc

    sv = raw.get("solver", {})
    _check_keys(sv, {"n_time_steps", "simplex_resolution", "root_find_tol", "u_grid_size",
                     "excess_quantile", "quad_nodes"}, "solver")
    try:
        solver = SolverConfig(
            n_time_steps=int(sv.get("n_time_steps", 200)),
            simplex_resolution=int(sv.get("simplex_resolution", 101)),
            root_find_tol=float(sv.get("root_find_tol", 1e-10)),
            u_grid_size=int(sv.get("u_grid_size", 200)),
            excess_quantile=float(sv.get("excess_quantile", 0.999)),
            quad_nodes=int(sv.get("quad_nodes", 160)),
        )
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from exc

    ev = raw.get("evaluation", {})
    _check_keys(ev, {"n_paths", "seed", "n_intervals"}, "evaluation")
    evaluation = EvaluationConfig(
        n_paths=int(ev.get("n_paths", 10000)),
        seed=int(ev.get("seed", 0)),
        n_intervals=int(ev.get("n_intervals", 20)),
    )

    st = raw.get("strategy", {"type": "feedback"})
    _check_keys(st, {"type", "u"}, "strategy")
    kind = st.get("type", "feedback")
    if kind not in {"feedback", "constant", "full_info"}:
        raise ConfigError(f"strategy: unknown type {kind!r}")
    strategy = StrategyConfig(kind=kind, retention=float(st.get("u", 0.5)))

    sw = raw.get("sweep", {})
    _check_keys(sw, {"thetas"}, "sweep")
    thetas = tuple(float(x) for x in sw.get("thetas", (0.05, 0.1, 0.2, 0.4)))

    return ScenarioConfig(
        model=model,
        market=market,
        contract=contract,
        principle=principle,
        solver=solver,
        evaluation=evaluation,
        strategy=strategy,
        sweep_thetas=thetas,
        output_dir=str(raw.get("output_dir", "out")),
    )
