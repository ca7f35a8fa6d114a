import math

import numpy as np
import pytest
from scipy import integrate

from reinsure import (
    ConfigError,
    CustomContract,
    Discrete,
    DomainError,
    ExcessOfLoss,
    Exponential,
    Gamma,
    MarketParams,
    ModelSpec,
    Proportional,
    TruncatedNormal,
    ceded_mean,
    ceded_second_moment,
    check_admissibility,
    claim_mean,
    claim_second_moment,
    exp_moment,
    exp_z_moment,
    mgf,
    retained,
    retained_exp_moment,
    retention_gradient_kernel,
)

ALL_DISTS = [
    Exponential(3.0),
    Gamma(2.0, 4.0),
    TruncatedNormal(1.0, 0.5),
    TruncatedNormal(-0.5, 1.0),
    Discrete(((0.5, 0.25), (1.0, 0.5), (2.5, 0.25))),
]


def quad_mgf(dist, k):
    if dist.is_discrete:
        return sum(p * math.exp(k * z) for z, p in dist.atoms)
    hi = 2.0 * dist.quantile(1.0 - 1e-13)
    val, _ = integrate.quad(lambda z: math.exp(k * z) * dist.density(z), 0.0, hi, limit=300)
    return val


class TestMgf:
    def test_exponential_value(self):
        # oracle: numerical quadrature of e^{kz} zeta e^{-zeta z}
        assert mgf(Exponential(3.0), 1.0) == pytest.approx(1.5, rel=1e-12)
        assert mgf(Exponential(3.0), 1.0) == pytest.approx(quad_mgf(Exponential(3.0), 1.0), rel=1e-10)

    @pytest.mark.parametrize("dist", ALL_DISTS)
    def test_at_zero_is_one(self, dist):
        assert mgf(dist, 0.0) == pytest.approx(1.0, abs=1e-14)

    def test_point_mass(self):
        assert mgf(Discrete(((2.0, 1.0),)), 0.5) == pytest.approx(math.e, rel=1e-14)

    @pytest.mark.parametrize("dist", ALL_DISTS)
    def test_matches_quadrature(self, dist):
        for k in (-1.0, 0.3, 0.8):
            assert mgf(dist, k) == pytest.approx(quad_mgf(dist, k), rel=1e-8)

    def test_domain_error_beyond_abscissa(self):
        with pytest.raises(DomainError):
            mgf(Exponential(3.0), 3.0)
        with pytest.raises(DomainError):
            mgf(Gamma(2.0, 4.0), 4.5)

    @pytest.mark.parametrize("dist", ALL_DISTS)
    def test_strictly_increasing(self, dist):
        hi = min(dist.mgf_bound(), 3.0)
        ks = np.linspace(-2.0, hi - 0.3, 25)
        vals = [mgf(dist, float(k)) for k in ks]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("dist", ALL_DISTS)
    def test_exp_z_moment_is_mgf_derivative(self, dist):
        k, h = 0.4, 1e-6
        fd = (mgf(dist, k + h) - mgf(dist, k - h)) / (2.0 * h)
        assert exp_z_moment(dist, k) == pytest.approx(fd, rel=1e-6)


class TestMoments:
    @pytest.mark.parametrize("dist", ALL_DISTS)
    def test_mean_and_second_moment(self, dist):
        if dist.is_discrete:
            m1 = sum(z * p for z, p in dist.atoms)
            m2 = sum(z * z * p for z, p in dist.atoms)
        else:
            hi = dist.quantile(1.0 - 1e-13)
            m1, _ = integrate.quad(lambda z: z * dist.density(z), 0.0, hi, limit=300)
            m2, _ = integrate.quad(lambda z: z * z * dist.density(z), 0.0, hi, limit=300)
        assert claim_mean(dist) == pytest.approx(m1, rel=1e-9)
        assert claim_second_moment(dist) == pytest.approx(m2, rel=1e-9)

    @pytest.mark.parametrize("dist", ALL_DISTS)
    def test_partial_moments_cover_everything(self, dist):
        hi = 50.0 if dist.is_discrete else dist.quantile(1.0 - 1e-14) * 1.5
        assert dist.partial_mean(hi) == pytest.approx(claim_mean(dist), rel=1e-9)
        assert dist.partial_exp_moment(0.5, hi) == pytest.approx(mgf(dist, 0.5), rel=1e-8)

    @pytest.mark.parametrize("dist", ALL_DISTS)
    def test_cdf_quantile_roundtrip(self, dist):
        for p in (0.1, 0.5, 0.9, 0.999):
            z = dist.quantile(p)
            assert dist.cdf(z) >= p - 1e-9


class TestRetained:
    def test_proportional(self):
        assert retained(Proportional(), 10.0, 0.3) == pytest.approx(3.0)

    def test_excess_of_loss(self):
        assert retained(ExcessOfLoss(), 10.0, 4.0) == pytest.approx(4.0)
        assert retained(ExcessOfLoss(), 2.0, 4.0) == pytest.approx(2.0)

    @pytest.mark.parametrize("contract", [Proportional(), ExcessOfLoss()])
    def test_full_reinsurance_retains_nothing(self, contract):
        assert retained(contract, 7.3, 0.0) == 0.0

    def test_bounds(self):
        with pytest.raises(DomainError):
            retained(Proportional(), 1.0, 1.5)
        with pytest.raises(DomainError):
            retained(Proportional(), 1.0, -0.1)
        with pytest.raises(DomainError):
            retained(Proportional(), -1.0, 0.5)

    def test_monotone_in_z_and_u(self):
        rng = np.random.default_rng(3)
        zs = np.sort(rng.uniform(0.0, 5.0, 40))
        for contract in (Proportional(), ExcessOfLoss()):
            cap = 1.0 if isinstance(contract, Proportional) else 4.0
            for u in rng.uniform(0.0, cap, 8):
                vals = retained(contract, zs, float(u))
                assert np.all(np.diff(vals) >= -1e-12)
                assert np.all(vals <= zs + 1e-12)
            us = np.sort(rng.uniform(0.0, cap, 8))
            for z in zs[::13]:
                vals = [retained(contract, float(z), float(u)) for u in us]
                assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_proportional_full_retention(self):
        assert retained(Proportional(), 3.7, 1.0) == pytest.approx(3.7)


class TestExpMoment:
    def test_point_mass(self):
        val = exp_moment(Discrete(((1.0, 1.0),)), 2.0, Proportional(), 0.5)
        assert val == pytest.approx(math.e, rel=1e-12)

    def test_full_retention_equals_mgf(self):
        assert exp_moment(Exponential(3.0), 1.0, Proportional(), 1.0) == pytest.approx(1.5, rel=1e-9)

    @pytest.mark.parametrize("dist", ALL_DISTS)
    def test_a_zero_is_one(self, dist):
        assert exp_moment(dist, 0.0, Proportional(), 0.7) == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("dist", ALL_DISTS)
    def test_bounded_by_mgf(self, dist):
        rng = np.random.default_rng(11)
        for _ in range(6):
            a = rng.uniform(0.1, min(dist.mgf_bound(), 3.0) * 0.45)
            u = rng.uniform(0.0, 1.0)
            assert exp_moment(dist, a, Proportional(), u) <= mgf(dist, a) + 1e-9

    @pytest.mark.parametrize("dist", [Exponential(3.0), Gamma(2.0, 4.0)])
    def test_quadrature_matches_closed_form(self, dist):
        # the quadrature route must reproduce the analytic kernel
        for a, u in [(0.8, 0.3), (1.1, 0.9), (0.5, 0.62)]:
            assert exp_moment(dist, a, Proportional(), u) == pytest.approx(
                mgf(dist, a * u), rel=1e-8
            )

    @pytest.mark.parametrize("dist", ALL_DISTS)
    def test_quadrature_matches_kernel_excess(self, dist):
        for a, u in [(0.7, 0.2), (0.4, 1.1)]:
            assert exp_moment(dist, a, ExcessOfLoss(), u) == pytest.approx(
                float(retained_exp_moment(dist, a, ExcessOfLoss(), u)), rel=1e-8
            )

    def test_divergent_raises(self):
        with pytest.raises(DomainError):
            exp_moment(Exponential(2.0), 2.5, Proportional(), 1.0)

    def test_custom_contract_quadrature(self):
        half = CustomContract(g=lambda z, u: 0.5 * u * z, cap_value=1.0, dgdu=lambda z, u: 0.5 * z)
        dist = Exponential(3.0)
        assert exp_moment(dist, 1.0, half, 0.8) == pytest.approx(mgf(dist, 0.4), rel=1e-8)


class TestCededMoments:
    @pytest.mark.parametrize("dist", ALL_DISTS)
    @pytest.mark.parametrize("contract,u", [(Proportional(), 0.35), (ExcessOfLoss(), 0.6)])
    def test_against_quadrature(self, dist, contract, u):
        if dist.is_discrete:
            m1 = sum(p * (z - float(contract.retained_fn(z, u))) for z, p in dist.atoms)
            m2 = sum(p * (z - float(contract.retained_fn(z, u))) ** 2 for z, p in dist.atoms)
        else:
            hi = dist.quantile(1.0 - 1e-13)
            m1, _ = integrate.quad(
                lambda z: (z - float(contract.retained_fn(z, u))) * dist.density(z), 0.0, hi,
                points=[u], limit=300,
            )
            m2, _ = integrate.quad(
                lambda z: (z - float(contract.retained_fn(z, u))) ** 2 * dist.density(z), 0.0, hi,
                points=[u], limit=300,
            )
        assert float(ceded_mean(dist, contract, u)) == pytest.approx(m1, rel=1e-8, abs=1e-12)
        assert float(ceded_second_moment(dist, contract, u)) == pytest.approx(m2, rel=1e-8, abs=1e-12)

    @pytest.mark.parametrize("dist", ALL_DISTS)
    def test_gradient_kernel_matches_quadrature(self, dist):
        a, u = 0.6, 0.45
        for contract in (Proportional(), ExcessOfLoss()):
            if dist.is_discrete:
                oracle = sum(
                    p * math.exp(a * float(contract.retained_fn(z, u))) * float(contract.retained_du(z, u))
                    for z, p in dist.atoms
                )
            else:
                hi = dist.quantile(1.0 - 1e-13)
                oracle, _ = integrate.quad(
                    lambda z: math.exp(a * float(contract.retained_fn(z, u)))
                    * float(contract.retained_du(z, u))
                    * dist.density(z),
                    0.0, hi, points=[u], limit=300,
                )
            assert float(retention_gradient_kernel(dist, a, contract, u)) == pytest.approx(
                oracle, rel=1e-7, abs=1e-12
            )


class TestAdmissibility:
    def test_exponential_pass(self, mkt):
        model = ModelSpec.build([[0.0]], [2.0], [Exponential(5.0)], initial_state=0)
        report = check_admissibility(model, mkt)
        assert report.passed and report.threshold == pytest.approx(2.0)

    def test_exponential_fail(self, mkt):
        model = ModelSpec.build([[0.0]], [2.0], [Exponential(1.5)], initial_state=0)
        assert not check_admissibility(model, mkt).passed

    def test_bounded_support_always_passes(self):
        big = MarketParams(eta=50.0, rate_r=0.2, horizon_t=5.0, initial_wealth=0.0,
                           theta=0.3, theta_i=0.1)
        model = ModelSpec.build([[0.0]], [2.0], [Discrete(((3.0, 1.0),))], initial_state=0)
        assert check_admissibility(model, big).passed


class TestTypes:
    def test_market_invariants(self):
        with pytest.raises(DomainError):
            MarketParams(eta=0.0, rate_r=0.0, horizon_t=1.0, initial_wealth=0.0, theta=0.3, theta_i=0.1)
        with pytest.raises(DomainError):
            MarketParams(eta=1.0, rate_r=0.0, horizon_t=1.0, initial_wealth=0.0, theta=0.1, theta_i=0.3)

    def test_generator_rows_must_sum_to_zero(self):
        with pytest.raises(ConfigError):
            ModelSpec.build([[-1.0, 0.5], [1.0, -1.0]], [1.0, 2.0],
                            [Exponential(5.0)] * 2, initial_state=0)

    def test_negative_offdiagonal_rejected(self):
        with pytest.raises(ConfigError):
            ModelSpec.build([[1.0, -1.0], [1.0, -1.0]], [1.0, 2.0],
                            [Exponential(5.0)] * 2, initial_state=0)

    def test_mixed_discrete_continuous_rejected(self):
        with pytest.raises(ConfigError):
            ModelSpec.build(
                [[-1.0, 1.0], [1.0, -1.0]], [1.0, 2.0],
                [Exponential(5.0), Discrete(((1.0, 1.0),))], initial_state=0,
            )

    def test_discrete_probabilities_must_sum(self):
        with pytest.raises(DomainError):
            Discrete(((1.0, 0.5), (2.0, 0.6)))

    def test_shared_claim_dist_detection(self, two_state, single_state):
        assert two_state.shared_claim_dist == Exponential(5.0)
        mixed = ModelSpec.build(
            [[-1.0, 1.0], [1.0, -1.0]], [1.0, 2.0],
            [Exponential(5.0), Exponential(6.0)], initial_state=0,
        )
        assert mixed.shared_claim_dist is None
        assert mixed.lambda_sorted()
