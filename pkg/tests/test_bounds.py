import math

import numpy as np
import pytest

from fnequiv.bounds import (
    BoundConfig,
    EntropyComparison,
    deep_covering_bound,
    dudley_rademacher_bound,
    entropy_comparison,
    pdim_uniform_covering_bound,
    permutation_discount,
    shallow_covering_bound,
    stirling_bracket,
    volume_covering_bound,
)
from fnequiv.errors import ConfigError, DomainError, IntegrationFailureError
from fnequiv.nncore import Architecture, RELU, SIGMOID, TANH

from oracles import mp_deep_log, mp_shallow_log, mp_stirling_bracket, trapezoid_integral


def relu_arch(d0, hidden):
    return Architecture(d0, hidden, (RELU,) * len(hidden))


def cfg_of(d0=1, hidden=(2,), B=1.0, B_x=1.0, epsilon=1.0, rho=None, acts=None):
    acts = acts or (RELU,) * len(hidden)
    return BoundConfig(Architecture(d0, hidden, acts), B, B_x, epsilon, rho)


class TestBoundConfig:
    def test_default_rho_from_activations(self):
        cfg = cfg_of(hidden=(2, 3), acts=(RELU, SIGMOID))
        assert cfg.rho == (1.0, 0.25)
        cfg2 = cfg_of(hidden=(2,), acts=(TANH,))
        assert cfg2.rho == (1.0,)

    def test_spectral_proxies(self):
        cfg = cfg_of(d0=4, hidden=(9,), B=2.0)
        assert cfg.spectral_proxies == (2.0 * 6.0,)  # B*sqrt(9*4)

    def test_B_below_one_rejected(self):
        with pytest.raises(ConfigError):
            cfg_of(B=0.5)

    def test_bad_epsilon(self):
        with pytest.raises(DomainError):
            cfg_of(epsilon=0.0)


class TestShallowBound:
    def test_frozen_example(self):
        # d0=1, d1=2, B=Bx=rho=eps=1: (64)^7 / 2! = 2**41
        cfg = cfg_of()
        assert shallow_covering_bound(cfg) == pytest.approx(math.log(2**41), rel=1e-14)

    def test_matches_high_precision_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(12):
            d0 = int(rng.integers(1, 6))
            d1 = int(rng.integers(1, 9))
            B = float(rng.uniform(1.0, 3.0))
            Bx = float(rng.uniform(0.3, 2.0))
            rho = float(rng.uniform(0.2, 2.0))
            eps = float(rng.uniform(0.01, 1.5))
            cfg = cfg_of(d0=d0, hidden=(d1,), B=B, B_x=Bx, epsilon=eps, rho=(rho,))
            want = mp_shallow_log(d0, d1, B, Bx, rho, eps)
            assert shallow_covering_bound(cfg) == pytest.approx(want, rel=1e-10)

    def test_halving_epsilon_adds_S_log2(self):
        cfg = cfg_of(d0=2, hidden=(3,), epsilon=0.8)
        half = cfg_of(d0=2, hidden=(3,), epsilon=0.4)
        S = cfg.arch.param_count
        assert shallow_covering_bound(half) - shallow_covering_bound(cfg) == pytest.approx(
            S * math.log(2.0), rel=1e-9
        )

    def test_rho_one_drops_lipschitz_term(self):
        with_rho = shallow_covering_bound(cfg_of(rho=(1.0,)))
        default = shallow_covering_bound(cfg_of())
        assert with_rho == default
        # and a rho != 1 shifts by exactly S_h * log(rho)
        rho = 0.5
        shifted = shallow_covering_bound(cfg_of(rho=(rho,)))
        S_h = 1 * 2 + 2
        assert shifted - default == pytest.approx(S_h * math.log(rho), rel=1e-12)

    def test_deep_arch_rejected(self):
        with pytest.raises(ConfigError):
            shallow_covering_bound(cfg_of(hidden=(2, 2)))


class TestDeepBound:
    def test_frozen_example(self):
        cfg = cfg_of(d0=1, hidden=(1,))
        assert deep_covering_bound(cfg) == pytest.approx(4 * math.log(128), rel=1e-14)

    def test_matches_high_precision_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(12):
            L = int(rng.integers(1, 4))
            hidden = tuple(int(w) for w in rng.integers(1, 9, L))
            d0 = int(rng.integers(1, 5))
            B = float(rng.uniform(1.0, 2.5))
            Bx = float(rng.uniform(0.3, 2.0))
            rhos = tuple(float(r) for r in rng.uniform(0.2, 1.5, L))
            eps = float(rng.uniform(0.05, 1.0))
            cfg = cfg_of(d0=d0, hidden=hidden, B=B, B_x=Bx, epsilon=eps, rho=rhos)
            want = mp_deep_log(d0, hidden, B, Bx, rhos, eps)
            assert deep_covering_bound(cfg) == pytest.approx(want, rel=1e-10)

    def test_factorial_discount_exact(self):
        cfg = cfg_of(d0=2, hidden=(3, 4), epsilon=0.3)
        with_discount = deep_covering_bound(cfg)
        without = deep_covering_bound(cfg, discount=False)
        disc = permutation_discount(cfg.arch)
        assert with_discount == without + disc  # bit-exact by construction
        assert disc == -(math.lgamma(4) + math.lgamma(5))

    def test_width_increment_bookkeeping(self):
        # growing one hidden width by 1 changes the discount by exactly
        # -log(d_l + 1)
        a1 = relu_arch(2, (3, 5))
        a2 = relu_arch(2, (3, 6))
        assert permutation_discount(a2) - permutation_discount(a1) == pytest.approx(
            -math.log(6.0), rel=1e-12
        )
        assert a2.param_count > a1.param_count

    @pytest.mark.parametrize("d", [2, 3, 4])
    @pytest.mark.parametrize("L", [2, 3])
    def test_equal_width_regrouping(self, d, L):
        # with equal widths the bound regroups as
        #   S*log(C/eps) + L*S*log(d) - L*log(d!)
        # where C collects every width-independent factor
        cfg = cfg_of(d0=1, hidden=(d,) * L, B=1.5, B_x=0.8, epsilon=0.25)
        S = cfg.arch.param_count
        C = 4 * (L + 1) * (cfg.B_x + 1) * (2 * cfg.B) ** (L + 2) * cfg.rho_bar * cfg.arch.input_dim
        regrouped = (
            S * (math.log(C) - math.log(cfg.epsilon))
            + L * S * math.log(d)
            - L * math.lgamma(d + 1)
        )
        assert deep_covering_bound(cfg) == pytest.approx(regrouped, rel=1e-10)

    def test_monotone_in_epsilon_and_B(self):
        base = cfg_of(d0=2, hidden=(3, 2), epsilon=0.5)
        assert deep_covering_bound(cfg_of(d0=2, hidden=(3, 2), epsilon=0.25)) > deep_covering_bound(base)
        assert deep_covering_bound(cfg_of(d0=2, hidden=(3, 2), B=2.0, epsilon=0.5)) > deep_covering_bound(base)

    def test_randomized_monotonicity_sweep(self):
        # nonincreasing in epsilon, nondecreasing in B and B_x, for both
        # bound families
        rng = np.random.default_rng(3)
        for _ in range(20):
            d0 = int(rng.integers(1, 5))
            hidden = (int(rng.integers(1, 7)),)
            B = float(rng.uniform(1.0, 2.0))
            Bx = float(rng.uniform(0.3, 2.0))
            eps = float(rng.uniform(0.05, 1.0))
            base = cfg_of(d0=d0, hidden=hidden, B=B, B_x=Bx, epsilon=eps)
            for fn in (shallow_covering_bound, deep_covering_bound):
                v = fn(base)
                assert fn(cfg_of(d0=d0, hidden=hidden, B=B, B_x=Bx, epsilon=eps * 0.5)) >= v
                assert fn(cfg_of(d0=d0, hidden=hidden, B=B * 1.5, B_x=Bx, epsilon=eps)) >= v
                assert fn(cfg_of(d0=d0, hidden=hidden, B=B, B_x=Bx * 1.5, epsilon=eps)) >= v


class TestStirling:
    def test_d1_bracket(self):
        br = stirling_bracket(1)
        assert br.factorial == 1
        assert br.lower == pytest.approx(0.99590, abs=1e-4)
        assert br.upper == pytest.approx(1.00227, abs=1e-4)
        assert br.lower < 1 < br.upper

    def test_d5_strictly_inside(self):
        br = stirling_bracket(5)
        assert br.lower < 120 < br.upper

    def test_d20_relative_width(self):
        br = stirling_bracket(20)
        assert (br.upper - br.lower) / br.factorial < 1e-3

    def test_strict_bracketing_up_to_170(self):
        for d in range(1, 171):
            br = stirling_bracket(d)
            assert br.lower < br.factorial < br.upper, d

    def test_matches_high_precision_oracle(self):
        for d in (1, 7, 40, 170):
            lo, hi = mp_stirling_bracket(d)
            br = stirling_bracket(d)
            assert br.lower == pytest.approx(lo, rel=1e-12)
            assert br.upper == pytest.approx(hi, rel=1e-12)

    def test_zero_rejected(self):
        with pytest.raises(DomainError):
            stirling_bracket(0)


class TestEntropyComparison:
    def test_L1_specialization(self):
        cfg = cfg_of(d0=2, hidden=(3,), B=1.5, B_x=2.0, epsilon=0.5)
        comp = entropy_comparison(cfg)
        S = cfg.arch.param_count
        rs = cfg.rho_bar * math.exp(cfg.log_s_bar)
        want = S * math.log(rs * cfg.B_x / (math.factorial(3) * cfg.epsilon))
        assert comp.raw["permutation_aware"] == pytest.approx(want, rel=1e-12)

    def test_doubling_epsilon_quarters_spectral(self):
        c1 = entropy_comparison(cfg_of(d0=2, hidden=(4,), B_x=2.0, epsilon=0.25))
        c2 = entropy_comparison(cfg_of(d0=2, hidden=(4,), B_x=2.0, epsilon=0.5))
        assert c1.spectral_2017 == pytest.approx(4.0 * c2.spectral_2017, rel=1e-12)

    def test_factorial_gain_grows_with_width(self):
        # the permutation-aware row falls away from the pseudo-dimension row
        # as width grows
        diffs = []
        for d in (4, 8, 16, 32):
            cfg = cfg_of(d0=1, hidden=(d, d), B=1.0, B_x=1.0, epsilon=0.1)
            comp = entropy_comparison(cfg)
            diffs.append(comp.permutation_aware - comp.pdim_2019)
        assert all(a > b for a, b in zip(diffs, diffs[1:]))

    def test_flooring_flags(self):
        # B_x < eps makes the pseudo-dimension row negative; factorials make
        # the permutation-aware row negative
        cfg = cfg_of(d0=1, hidden=(8,), B_x=0.5, epsilon=1.0)
        comp = entropy_comparison(cfg)
        assert "pdim_2019" in comp.floored
        assert comp.pdim_2019 == 0.0
        assert comp.raw["pdim_2019"] < 0.0
        assert all(getattr(comp, n) >= 0.0 for n in EntropyComparison.ROW_NAMES)

    def test_width_one_spectral_zero(self):
        comp = entropy_comparison(cfg_of(d0=1, hidden=(1,)))
        assert comp.spectral_2017 == 0.0
        assert "spectral_2017" not in comp.floored


class TestDudley:
    def test_zero_entropy(self):
        assert dudley_rademacher_bound(lambda e: 0.0, 4, 1.0) == 0.0

    def test_constant_entropy_closed_form(self):
        c = 2.25
        fn = lambda e: c if e <= 1.0 else 0.0
        got = dudley_rademacher_bound(fn, 1, 2.0)
        assert got == pytest.approx(12.0 * math.sqrt(c), rel=1e-6)

    def test_log_shape_matches_trapezoid_oracle(self):
        S, K, n = 7.0, 2.0, 16
        fn = lambda e: S * math.log(K / e) if e < K else 0.0
        got = dudley_rademacher_bound(fn, n, K)
        oracle = 12.0 * trapezoid_integral(
            lambda e: math.sqrt(fn(e) / n), 1e-9, K, 400_001
        )
        assert got == pytest.approx(oracle, rel=1e-4)
        # independent closed form: K*sqrt(S/n)*sqrt(pi)/2 times 12
        closed = 12.0 * K * math.sqrt(S / n) * math.sqrt(math.pi) / 2.0
        assert got == pytest.approx(closed, rel=1e-6)

    def test_inverse_sqrt_n_scaling(self):
        fn = lambda e: 3.0 * max(0.0, 1.0 - e)
        r1 = dudley_rademacher_bound(fn, 5, 1.0)
        r4 = dudley_rademacher_bound(fn, 20, 1.0)
        assert r4 == pytest.approx(r1 / 2.0, rel=1e-9)

    def test_divergent_entropy_reports_partial(self):
        fn = lambda e: e**-2.0
        with pytest.raises(IntegrationFailureError) as exc:
            dudley_rademacher_bound(fn, 1, 1.0)
        assert exc.value.partial_value is not None
        assert exc.value.partial_value > 0.0

    def test_bad_inputs(self):
        with pytest.raises(DomainError):
            dudley_rademacher_bound(lambda e: 1.0, 0, 1.0)
        with pytest.raises(DomainError):
            dudley_rademacher_bound(lambda e: -1.0, 1, 1.0)


class TestVolumeCoveringBound:
    def test_unit_interval(self):
        assert volume_covering_bound(1, 1.0, 2.0) == 1.0

    def test_square(self):
        assert volume_covering_bound(2, 4.0, 0.5) == 64.0

    def test_composition_with_effective_volume(self):
        from fnequiv.canonical import effective_volume

        vol = effective_volume(relu_arch(1, (2,)), 1.0)
        got = volume_covering_bound(7, vol.effective, 0.5)
        assert got == pytest.approx(64.0 * 4**7, rel=1e-9)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            volume_covering_bound(0, 1.0, 1.0)
        with pytest.raises(DomainError):
            volume_covering_bound(1, -1.0, 1.0)
        with pytest.raises(DomainError):
            volume_covering_bound(1, 1.0, 0.0)


class TestPdimCoveringBound:
    def test_single_term(self):
        out = pdim_uniform_covering_bound(1, 1, 2.0, 2.0)
        assert out.value == 1.0 and out.method == "exact_sum"

    def test_small_sum(self):
        out = pdim_uniform_covering_bound(2, 3, 2.0, 1.0)
        assert out.value == 18.0

    def test_dominated_by_closed_form(self):
        out = pdim_uniform_covering_bound(5, 5, 1.0, 1.0)
        assert out.value == 31.0  # 2^5 - 1
        assert out.value <= math.e**5

    def test_large_inputs_fall_back(self):
        out = pdim_uniform_covering_bound(400, 10**7, 1.0, 0.5)
        assert out.method == "closed_form"
        assert out.value > 0

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            pdim_uniform_covering_bound(0, 1, 1.0, 1.0)
        with pytest.raises(DomainError):
            pdim_uniform_covering_bound(1, 1, 1.0, -1.0)
