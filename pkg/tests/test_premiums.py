import numpy as np
import pytest

from reinsure import (
    Discrete,
    DomainError,
    ExcessOfLoss,
    Exponential,
    ModelSpec,
    PremiumPrinciple,
    Proportional,
    StandardPremiums,
    insurer_premium,
    reinsurance_premium,
    validate_premium_contract,
)

EV = PremiumPrinciple.EXPECTED_VALUE
VAR = PremiumPrinciple.VARIANCE


def unit_mean_model(lam=2.0):
    # point mass at 1: E[Z] = 1, E[Z^2] = 1
    return ModelSpec.build([[0.0]], [lam], [Discrete(((1.0, 1.0),))], initial_state=0)


class TestInsurerPremium:
    def test_expected_value_hand_case(self):
        model = unit_mean_model(lam=2.0)
        assert insurer_premium(np.array([1.0]), model, EV, 0.1) == pytest.approx(2.2)

    def test_variance_hand_case(self):
        # unit-rate exponential claims: E[Z] = 1, E[Z^2] = 2
        model = ModelSpec.build([[0.0]], [1.0], [Exponential(1.0)], initial_state=0)
        assert insurer_premium(np.array([1.0]), model, VAR, 0.1) == pytest.approx(1.2)

    def test_mixture_mean(self):
        model = ModelSpec.build(
            [[-1.0, 1.0], [1.0, -1.0]], [1.0, 3.0],
            [Exponential(1.0)] * 2, initial_distribution=[0.5, 0.5],
        )
        # theta_i = 0 corresponds to a pure expected-loss rate
        assert insurer_premium(np.array([0.5, 0.5]), model, EV, 0.0) == pytest.approx(2.0)

    def test_affine_in_filter(self, two_state):
        rng = np.random.default_rng(5)
        for principle in (EV, VAR):
            p1, p2 = rng.dirichlet(np.ones(2)), rng.dirichlet(np.ones(2))
            mid = insurer_premium((p1 + p2) / 2.0, two_state, principle, 0.1)
            avg = 0.5 * (
                insurer_premium(p1, two_state, principle, 0.1)
                + insurer_premium(p2, two_state, principle, 0.1)
            )
            assert mid == pytest.approx(avg, abs=1e-12)


class TestReinsurancePremium:
    def test_null_reinsurance_is_free(self, two_state):
        pi = np.array([0.3, 0.7])
        assert reinsurance_premium(pi, two_state, EV, 0.2, Proportional(), 1.0) == 0.0
        assert reinsurance_premium(pi, two_state, VAR, 0.2, Proportional(), 1.0) == 0.0

    def test_expected_value_hand_case(self):
        model = unit_mean_model(lam=2.0)
        val = reinsurance_premium(np.array([1.0]), model, EV, 0.2, Proportional(), 0.5)
        assert val == pytest.approx(1.2)

    def test_full_cover_exceeds_insurer_income(self, two_state, mkt):
        # theta > theta_i forbids a risk-free profit from full reinsurance
        rng = np.random.default_rng(9)
        for _ in range(10):
            pi = rng.dirichlet(np.ones(2))
            q0 = reinsurance_premium(pi, two_state, EV, mkt.theta, Proportional(), 0.0)
            c = insurer_premium(pi, two_state, EV, mkt.theta_i)
            assert q0 > c

    @pytest.mark.parametrize("principle", [EV, VAR])
    @pytest.mark.parametrize("contract", [Proportional(), ExcessOfLoss()])
    def test_non_increasing_in_retention(self, two_state, principle, contract):
        rng = np.random.default_rng(31)
        u_hi = 1.0 if isinstance(contract, Proportional) else 3.0
        us = np.linspace(0.0, u_hi, 200)
        for _ in range(50):
            pi = rng.dirichlet(np.ones(2))
            qs = reinsurance_premium(pi, two_state, principle, 0.2, contract, us)
            assert np.all(np.diff(qs) <= 1e-12)

    def test_out_of_bounds_retention(self, two_state):
        with pytest.raises(DomainError):
            reinsurance_premium(np.array([0.5, 0.5]), two_state, EV, 0.2, Proportional(), 1.2)

    def test_affine_in_filter(self, two_state):
        rng = np.random.default_rng(7)
        for principle in (EV, VAR):
            p1, p2 = rng.dirichlet(np.ones(2)), rng.dirichlet(np.ones(2))
            for u in (0.2, 0.7):
                mid = reinsurance_premium((p1 + p2) / 2.0, two_state, principle, 0.2, Proportional(), u)
                avg = 0.5 * (
                    reinsurance_premium(p1, two_state, principle, 0.2, Proportional(), u)
                    + reinsurance_premium(p2, two_state, principle, 0.2, Proportional(), u)
                )
                assert mid == pytest.approx(avg, abs=1e-12)


class TestStandardPremiums:
    @pytest.mark.parametrize("principle", [EV, VAR])
    @pytest.mark.parametrize("contract", [Proportional(), ExcessOfLoss()])
    def test_matches_module_functions(self, two_state, mkt, principle, contract):
        prem = StandardPremiums(two_state, principle, contract, mkt)
        rng = np.random.default_rng(13)
        pis = rng.dirichlet(np.ones(2), size=6)
        us = rng.uniform(0.0, 1.0, 6)
        got_c = prem.c(0.0, pis)
        got_q = prem.q(0.0, pis, us)
        for j in range(6):
            assert got_c[j] == pytest.approx(
                insurer_premium(pis[j], two_state, principle, mkt.theta_i), rel=1e-12
            )
            assert got_q[j] == pytest.approx(
                reinsurance_premium(pis[j], two_state, principle, mkt.theta, contract, us[j]),
                rel=1e-12,
            )

    def test_state_dependent_claims(self, mkt):
        model = ModelSpec.build(
            [[-1.0, 1.0], [1.0, -1.0]], [1.0, 2.0],
            [Exponential(4.0), Exponential(8.0)], initial_distribution=[0.5, 0.5],
        )
        prem = StandardPremiums(model, EV, Proportional(), mkt)
        pi = np.array([0.25, 0.75])
        expect = 1.3 * (0.25 * 1.0 * 0.5 / 4.0 + 0.75 * 2.0 * 0.5 / 8.0)
        assert float(prem.q(0.0, pi, 0.5)) == pytest.approx(expect, rel=1e-12)


class TestValidateContract:
    @pytest.mark.parametrize("principle", [EV, VAR])
    @pytest.mark.parametrize("contract", [Proportional(), ExcessOfLoss()])
    def test_standard_configurations_pass(self, two_state, mkt, principle, contract):
        report = validate_premium_contract(two_state, principle, contract, mkt)
        assert report.passed, report.as_dict()

    def test_swapped_loadings_fail_no_free_profit(self, two_state, mkt):
        class SwappedPremiums:
            contract = Proportional()
            model = two_state

            def c(self, t, pi):
                return insurer_premium(pi, two_state, EV, 0.3)

            def q(self, t, pi, u):
                return reinsurance_premium(pi, two_state, EV, 0.05, Proportional(), u)

        report = validate_premium_contract(
            two_state, EV, Proportional(), mkt, premiums=SwappedPremiums()
        )
        assert not report.no_free_profit_ok
        assert not report.passed

    def test_increasing_rule_fails_monotonicity(self, two_state, mkt):
        class RisingPremiums:
            contract = Proportional()
            model = two_state

            def c(self, t, pi):
                return 0.1

            def q(self, t, pi, u):
                return 1.0 + np.asarray(u, dtype=float)

        report = validate_premium_contract(
            two_state, EV, Proportional(), mkt, premiums=RisingPremiums()
        )
        assert not report.decreasing_ok
