import math

import numpy as np
import pytest

from reinsure import (
    ClosedFormExcessEV,
    ClosedFormPropEV,
    ClosedFormPropVar,
    ConstantStrategy,
    DomainError,
    ExcessOfLoss,
    Exponential,
    FeedbackStrategy,
    FullInfoStrategy,
    MarketParams,
    ModelSpec,
    PremiumPrinciple,
    Proportional,
    SolverConfig,
    evaluate,
    full_info_policy,
    hamiltonian_h,
    jump_map,
    single_state_oracle,
    solve_backward,
    u_star_excess_ev,
    u_star_prop_ev,
    u_star_prop_var,
)

EV = PremiumPrinciple.EXPECTED_VALUE
VAR = PremiumPrinciple.VARIANCE

CFG = SolverConfig(n_time_steps=200, simplex_resolution=81)


@pytest.fixture(scope="module")
def mkt2():
    return MarketParams(eta=1.0, rate_r=0.0, horizon_t=1.0, initial_wealth=1.0,
                        theta=0.2, theta_i=0.1)


@pytest.fixture(scope="module")
def model2():
    return ModelSpec.build([[-0.5, 0.5], [0.8, -0.8]], [1.0, 2.0],
                           [Exponential(5.0)] * 2, initial_distribution=[0.5, 0.5])


@pytest.fixture(scope="module")
def tables(model2, mkt2):
    out = {}
    for key, contract, principle in [
        ("prop_ev", Proportional(), EV),
        ("prop_var", Proportional(), VAR),
        ("xl_ev", ExcessOfLoss(), EV),
    ]:
        out[key] = solve_backward(model2, contract, principle, mkt2, CFG)
    return out


class TestEvaluateInterface:
    def test_constant(self):
        strat = ConstantStrategy(0.4)
        assert evaluate(strat, 0.2, np.array([0.5, 0.5])) == 0.4

    def test_constant_out_of_horizon(self):
        with pytest.raises(DomainError):
            evaluate(ConstantStrategy(0.4), 1.5, np.array([1.0]), horizon=1.0)
        with pytest.raises(DomainError):
            evaluate(ConstantStrategy(0.4), -0.2, np.array([1.0]), horizon=1.0)

    def test_feedback_exact_at_lattice(self, tables, model2):
        value, policy = tables["prop_ev"]
        strat = FeedbackStrategy(policy)
        k, j = 57, 33
        t = float(policy.times[k])
        pi = policy.grid.points[j]
        assert strat.evaluate(t, pi) == pytest.approx(policy.u[k, j], abs=1e-13)

    def test_full_info_at_terminal_time(self, model2):
        mkt = MarketParams(eta=1.0, rate_r=0.07, horizon_t=1.0, initial_wealth=1.0,
                           theta=0.2, theta_i=0.1)
        strat = FullInfoStrategy(full_info_policy(model2, ExcessOfLoss(), EV, mkt))
        assert strat.evaluate(1.0, np.array([0.5, 0.5])) == pytest.approx(math.log(1.2), abs=1e-12)

    def test_evaluate_many_matches_scalar(self, tables, model2, mkt2):
        value, policy = tables["prop_ev"]
        for strat in (
            FeedbackStrategy(policy),
            ClosedFormPropEV(value, model2, mkt2),
            ClosedFormExcessEV(tables["xl_ev"][0], model2, mkt2),
            ClosedFormPropVar(tables["prop_var"][0], model2, mkt2),
        ):
            ts = np.array([0.1, 0.35, 0.8])
            pis = np.array([[0.2, 0.8], [0.5, 0.5], [0.9, 0.1]])
            batch = strat.evaluate_many(ts, pis)
            single = [strat.evaluate(float(t), p) for t, p in zip(ts, pis)]
            assert batch == pytest.approx(single, abs=1e-10)


class TestClosedForms:
    def test_excess_single_state_reduces_to_benchmark(self, mkt2):
        model = ModelSpec.build([[0.0]], [2.0], [Exponential(5.0)], initial_state=0)
        value, _ = solve_backward(model, ExcessOfLoss(), EV, mkt2,
                                  SolverConfig(n_time_steps=100, simplex_resolution=2))
        bench = full_info_policy(model, ExcessOfLoss(), EV, mkt2)
        for t in (0.0, 0.4, 0.9):
            got = u_star_excess_ev(t, np.array([1.0]), value, model, mkt2)
            assert got == pytest.approx(bench.u(t), abs=1e-10)

    def test_excess_clamps_to_full_reinsurance(self, tables, model2):
        # a loading below the value-ratio band makes the stationary point
        # negative; the strategy clamps at full reinsurance
        value, _ = tables["xl_ev"]
        pi = np.array([0.1, 0.9])
        ratio_pt = jump_map(pi, model2)
        v = float(value.value_at(0.5, pi[None])[0])
        vw = float(value.value_at(0.5, ratio_pt[None])[0])
        tiny = MarketParams(eta=1.0, rate_r=0.0, horizon_t=1.0, initial_wealth=1.0,
                            theta=max((vw / v - 1.0) * 0.5, 1e-6), theta_i=max((vw / v - 1.0) * 0.25, 5e-7))
        got = u_star_excess_ev(0.5, pi, value, model2, mkt=tiny)
        assert got == 0.0

    def test_prop_ev_single_state_point_mass(self):
        mkt = MarketParams(eta=1.0, rate_r=0.03, horizon_t=1.0, initial_wealth=1.0,
                           theta=0.3, theta_i=0.1)
        from reinsure import Discrete
        model = ModelSpec.build([[0.0]], [2.0], [Discrete(((1.0, 1.0),))], initial_state=0)
        value, _ = solve_backward(model, Proportional(), EV, mkt,
                                  SolverConfig(n_time_steps=100, simplex_resolution=2))
        for t in (0.0, 0.6):
            expect = min(1.0, math.exp(-0.03 * (1.0 - t)) * math.log(1.3))
            assert u_star_prop_ev(t, np.array([1.0]), value, model, mkt) == pytest.approx(
                expect, abs=1e-9
            )

    @pytest.mark.parametrize("key,builder", [
        ("prop_ev", u_star_prop_ev),
        ("prop_var", u_star_prop_var),
        ("xl_ev", u_star_excess_ev),
    ])
    def test_closed_form_matches_driver_argmax(self, tables, model2, mkt2, key, builder):
        # independent oracle: maximize the driver on a fine retention grid
        value, _ = tables[key]
        contract = ExcessOfLoss() if key == "xl_ev" else Proportional()
        principle = VAR if key == "prop_var" else EV
        t, pi = 0.3, np.array([0.35, 0.65])
        got = builder(t, pi, value, model2, mkt2)
        k = int(np.searchsorted(value.times, t))
        vfn = value.slice_interpolator(k)
        cap = 1.0 if isinstance(contract, Proportional) else 2.0
        us = np.linspace(0.0, cap, 5001)
        hs = [hamiltonian_h(t, pi, float(x), vfn, model2, principle, mkt2, contract) for x in us]
        best = us[int(np.argmax(hs))]
        assert got == pytest.approx(best, abs=3e-3)

    @pytest.mark.parametrize("key", ["prop_ev", "prop_var", "xl_ev"])
    def test_matches_solver_policy(self, tables, model2, mkt2, key):
        value, policy = tables[key]
        strat = {
            "prop_ev": ClosedFormPropEV(value, model2, mkt2),
            "prop_var": ClosedFormPropVar(value, model2, mkt2),
            "xl_ev": ClosedFormExcessEV(value, model2, mkt2),
        }[key]
        worst = 0.0
        for k in range(0, len(policy.times), 40):
            t = float(policy.times[k])
            got = strat.evaluate_many(np.full(policy.grid.size, t), policy.grid.points)
            worst = max(worst, float(np.abs(got - policy.u[k]).max()))
        assert worst <= 2e-2

    def test_prop_var_zero_variance_limit(self, mkt2):
        # claims of fixed size c: the first-order condition collapses to the
        # loaded-mean form with an effective loading 2 theta c (1 - u)
        from reinsure import Discrete
        c = 0.8
        model = ModelSpec.build([[0.0]], [2.0], [Discrete(((c, 1.0),))], initial_state=0)
        value, _ = solve_backward(model, Proportional(), VAR, mkt2,
                                  SolverConfig(n_time_steps=100, simplex_resolution=2))
        t = 0.25
        u = u_star_prop_var(t, np.array([1.0]), value, model, mkt2)
        eta_t = mkt2.compounded_aversion(t)
        assert 1.0 + 2.0 * mkt2.theta * c * (1.0 - u) == pytest.approx(
            math.exp(eta_t * u * c), rel=1e-9
        )

    def test_prop_var_full_reinsurance_branch(self, tables, model2):
        value, _ = tables["prop_var"]
        pi = np.array([0.2, 0.8])
        v = float(value.value_at(0.4, pi[None])[0])
        vw = float(value.value_at(0.4, jump_map(pi, model2)[None])[0])
        dist = model2.claim_dists[0]
        # pick theta small enough that the zero-retention condition binds
        theta = (vw / v - 1.0) * dist.mean() / (2.0 * dist.second_moment()) * 0.9
        got = u_star_prop_var(0.4, pi, value, model2,
                              MarketParams(eta=1.0, rate_r=0.0, horizon_t=1.0,
                                           initial_wealth=1.0, theta=theta, theta_i=theta / 2),
                              theta=theta)
        assert got == 0.0


class TestStructure:
    def test_theta_monotonicity_sampled(self, model2):
        prev = None
        for theta in (0.05, 0.1, 0.2, 0.4):
            mkt = MarketParams(eta=1.0, rate_r=0.0, horizon_t=1.0, initial_wealth=1.0,
                               theta=theta, theta_i=0.04)
            value, policy = solve_backward(model2, Proportional(), EV, mkt,
                                           SolverConfig(n_time_steps=100, simplex_resolution=41))
            if prev is not None:
                assert np.all(policy.u - prev >= -1e-9)
            prev = policy.u

    @pytest.mark.parametrize("key", ["prop_ev", "prop_var", "xl_ev"])
    def test_partial_never_exceeds_full_information(self, tables, model2, mkt2, key):
        value, _ = tables[key]
        contract = ExcessOfLoss() if key == "xl_ev" else Proportional()
        principle = VAR if key == "prop_var" else EV
        strat = {
            "prop_ev": ClosedFormPropEV(value, model2, mkt2),
            "prop_var": ClosedFormPropVar(value, model2, mkt2),
            "xl_ev": ClosedFormExcessEV(value, model2, mkt2),
        }[key]
        bench = full_info_policy(model2, contract, principle, mkt2)
        for k in range(0, len(value.times), 50):
            t = float(value.times[k])
            got = strat.evaluate_many(np.full(value.grid.size, t), value.grid.points)
            assert np.max(got - bench.u(t)) <= 1e-6

    def test_single_state_oracle_policy_equals_closed_form(self, mkt2):
        model = ModelSpec.build([[0.0]], [2.0], [Exponential(5.0)], initial_state=0)
        oracle = single_state_oracle(model, Proportional(), EV, mkt2, dt=0.01)
        value, _ = solve_backward(model, Proportional(), EV, mkt2,
                                  SolverConfig(n_time_steps=100, simplex_resolution=2))
        for k in (0, 50, 100):
            t = float(oracle.times[k])
            got = u_star_prop_ev(t, np.array([1.0]), value, model, mkt2)
            assert got == pytest.approx(oracle.u[k], abs=1e-7)
