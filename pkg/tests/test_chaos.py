import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lentparticle.chaos import (
    ChaosError,
    MarkFunction,
    ProductKernel,
    ResamplingSemigroup,
    chaos_gamma_alternating,
    chaos_gamma_closed,
    elementary_symmetric,
    equal_kernel,
    exp_series_check,
    factorial_measure,
    mehler_apply,
    mehler_exponential_check,
    multiple_integral,
    multiple_integral_equal,
    multiple_integral_functional,
    orthogonality_mc,
    product_formula_check,
    pt_apply,
    pt_symmetry_check,
    second_quantization_check,
)
from lentparticle.configuration import Configuration, sample_configuration
from lentparticle.functionals import make_doleans, stack_functionals
from lentparticle.intensities import uniform_model
from lentparticle.lent_particle import carre_du_champ, diag_squares_gamma
from lentparticle.rng import substream

U_ID = MarkFunction(lambda xs: xs[:, 0], sup_bound=1.0, grad=lambda xs: np.ones((len(xs), 1)), label="x")
V_SQ = MarkFunction(lambda xs: xs[:, 0] ** 2, sup_bound=1.0, grad=lambda xs: 2.0 * xs[:, 0:1], label="x^2")

# nu(x) = 0.1 on this model
MODEL01 = uniform_model(1.0, rate=1.0, low=0.0, high=0.2, label="nu01")
SYM = uniform_model(1.0, rate=4.0, low=-1.0, high=1.0, label="sym4")
EX1 = Configuration(1.0, 1, [0.2, 0.6], [[0.5], [-0.2]], "manual")
EMPTY = Configuration(1.0, 1, [], [], "manual")
SPEC = diag_squares_gamma(1)


class TestFactorialMeasure:
    def test_order_one(self):
        assert factorial_measure(EX1, U_ID, 1) == pytest.approx(0.3)

    def test_order_two_ordered_pairs(self):
        assert factorial_measure(EX1, U_ID, 2) == pytest.approx(-0.2)

    def test_order_exceeds_atoms(self):
        assert factorial_measure(EX1, U_ID, 3) == 0.0

    def test_order_zero(self):
        assert factorial_measure(EX1, U_ID, 0) == 1.0

    @given(st.lists(st.floats(-2.0, 2.0), min_size=0, max_size=7), st.integers(0, 5))
    @settings(max_examples=60, deadline=None)
    def test_recurrence_matches_brute_force(self, vals, k):
        from itertools import combinations

        e = elementary_symmetric(np.array(vals), max(k, 1))
        brute = sum(math.prod(c) for c in combinations(vals, k)) if k <= len(vals) else 0.0
        got = e[k] if k < e.size else 0.0
        assert got == pytest.approx(brute, rel=1e-10, abs=1e-10)


class TestMultipleIntegral:
    def test_first_chaos_is_compensated(self):
        assert multiple_integral_equal(EX1, MODEL01, U_ID, 1) == pytest.approx(0.2)

    def test_first_chaos_zero_mean_model(self):
        sym = uniform_model(1.0, rate=2.0, low=-0.9, high=0.9)
        assert multiple_integral_equal(EX1, sym, U_ID, 1) == pytest.approx(0.3, abs=1e-12)

    def test_second_chaos_fixture(self):
        assert multiple_integral_equal(EX1, MODEL01, U_ID, 2) == pytest.approx(-0.25)

    def test_pathwise_identity_degree_two(self):
        # I_2 = (N(u) - nu(u))^2 - N(u^2)
        for seed in range(10):
            cfg = sample_configuration(SYM, seed)
            nu_u = SYM.nu_integrate(U_ID)
            vals = U_ID(cfg.marks) if cfg.n_atoms else np.zeros(0)
            ref = (vals.sum() - nu_u) ** 2 - (vals**2).sum()
            assert multiple_integral_equal(cfg, SYM, U_ID, 2) == pytest.approx(ref, rel=1e-12)

    def test_empty_configuration(self):
        nu_u = MODEL01.nu_integrate(U_ID)
        for n in (1, 2, 3, 4):
            expect = (-nu_u) ** n
            assert multiple_integral_equal(EMPTY, MODEL01, U_ID, n) == pytest.approx(expect)

    def test_degree_cap(self):
        with pytest.raises(ChaosError):
            multiple_integral_equal(EX1, MODEL01, U_ID, 9)
        with pytest.raises(ChaosError):
            ProductKernel(factors=(U_ID,) * 9)

    def test_factor_symmetry(self):
        w = MarkFunction(lambda xs: np.cos(xs[:, 0]), sup_bound=1.0, label="cos")
        cfg = sample_configuration(SYM, 3)
        k1 = ProductKernel(factors=(U_ID, V_SQ, w))
        k2 = ProductKernel(factors=(w, U_ID, V_SQ))
        a = multiple_integral(cfg, SYM, k1)
        b = multiple_integral(cfg, SYM, k2)
        assert a == pytest.approx(b, rel=1e-12)

    def test_distinct_factors_brute_force(self):
        cfg = sample_configuration(SYM, 5)
        nu_u = SYM.nu_integrate(U_ID)
        nu_v = SYM.nu_integrate(V_SQ)
        uu = U_ID(cfg.marks)
        vv = V_SQ(cfg.marks)
        n = cfg.n_atoms
        n2 = sum(uu[i] * vv[j] for i in range(n) for j in range(n) if i != j)
        brute = n2 - nu_u * vv.sum() - nu_v * uu.sum() + nu_u * nu_v
        got = multiple_integral(cfg, SYM, ProductKernel(factors=(U_ID, V_SQ)))
        assert got == pytest.approx(brute, rel=1e-12)

    def test_equal_kernel_consistency(self):
        cfg = sample_configuration(SYM, 6)
        a = multiple_integral(cfg, SYM, equal_kernel(U_ID, 3))
        b = multiple_integral_equal(cfg, SYM, U_ID, 3)
        assert a == pytest.approx(b, rel=1e-12)


class TestExpSeries:
    def test_zero_kernel(self):
        zero = MarkFunction(lambda xs: np.zeros(len(xs)), sup_bound=0.0)
        res = exp_series_check(EX1, SYM, zero, t=0.3, n_max=6)
        assert res.residual == 0.0

    def test_empty_configuration_scalar_taylor(self):
        u = MarkFunction(lambda xs: 0.5 * np.ones(len(xs)), sup_bound=0.5)
        res = exp_series_check(EMPTY, SYM, u, t=0.4, n_max=10)
        nu_u = SYM.nu_integrate(u)
        tail = abs(math.exp(-0.4 * nu_u) - sum((-0.4 * nu_u) ** n / math.factorial(n) for n in range(11)))
        assert res.residual == pytest.approx(tail, abs=1e-15)

    def test_random_configurations_within_tail(self):
        u = MarkFunction(lambda xs: 0.3 * xs[:, 0], sup_bound=0.3)
        model = uniform_model(1.0, rate=10.0, low=-1.0, high=1.0)
        for seed in range(30):
            cfg = sample_configuration(model, seed)
            res = exp_series_check(cfg, model, u, t=0.2, n_max=12)
            assert res.residual <= 1e-8

    def test_radius_guard(self):
        with pytest.raises(ChaosError):
            exp_series_check(EX1, SYM, U_ID, t=0.6, n_max=4)


class TestProductFormula:
    def test_zero_kernel_side(self):
        zero = MarkFunction(lambda xs: np.zeros(len(xs)), sup_bound=0.0)
        assert product_formula_check(EX1, SYM, zero, V_SQ, 0.2, 0.2) <= 1e-15

    def test_zero_times(self):
        assert product_formula_check(EX1, SYM, U_ID, V_SQ, 0.0, 0.0) <= 1e-15

    def test_random_configurations(self):
        model = uniform_model(1.0, rate=10.0, low=-1.0, high=1.0)
        for seed in range(30):
            cfg = sample_configuration(model, seed)
            assert product_formula_check(cfg, model, U_ID, V_SQ, 0.2, 0.2) <= 1e-10


class TestChaosGamma:
    def test_first_order_is_configuration_integral(self):
        got = chaos_gamma_closed(EX1, MODEL01, U_ID, U_ID, 1, 1, SPEC)
        assert got == pytest.approx(0.29, abs=1e-14)

    def test_empty(self):
        assert chaos_gamma_closed(EMPTY, MODEL01, U_ID, V_SQ, 2, 2, SPEC) == 0.0

    def test_alternating_form_telescopes(self):
        cfg = sample_configuration(SYM, 8)
        for i in (1, 2, 3):
            for j in (1, 2, 3):
                a = chaos_gamma_closed(cfg, SYM, U_ID, V_SQ, i, j, SPEC)
                b = chaos_gamma_alternating(cfg, SYM, U_ID, V_SQ, i, j, SPEC)
                assert a == pytest.approx(b, rel=1e-10, abs=1e-12)

    def test_against_fd_lent_particle(self):
        rng = substream(17)
        fu = {i: multiple_integral_functional(SYM, U_ID, i) for i in (1, 2, 3)}
        fv = {j: multiple_integral_functional(SYM, V_SQ, j) for j in (1, 2, 3)}
        for _ in range(6):
            cfg = sample_configuration(SYM, int(rng.integers(1 << 30)))
            for i in (1, 2, 3):
                for j in (1, 2, 3):
                    closed = chaos_gamma_closed(cfg, SYM, U_ID, V_SQ, i, j, SPEC)
                    pair = stack_functionals([fu[i], fv[j]])
                    fd = carre_du_champ(pair, cfg, SPEC, mode="fd").matrix[0, 1]
                    assert abs(closed - fd) <= 1e-6 * (1.0 + abs(closed))

    def test_gradient_required(self):
        plain = MarkFunction(lambda xs: xs[:, 0], sup_bound=1.0)
        with pytest.raises(ChaosError):
            chaos_gamma_closed(EX1, MODEL01, plain, plain, 1, 1, SPEC)


class TestOrthogonality:
    def test_diagonal_and_off_diagonal(self):
        u = MarkFunction(lambda xs: 0.4 * xs[:, 0] + 0.3 * xs[:, 0] ** 2, sup_bound=0.7)
        v = MarkFunction(lambda xs: 0.6 * xs[:, 0] ** 2, sup_bound=0.6)
        model = uniform_model(1.0, rate=5.0, low=-1.0, high=1.0)
        r11 = orthogonality_mc(model, u, v, 1, 1, 200_000, seed=2)
        assert r11.passed and abs(r11.reference) > 0.05
        r12 = orthogonality_mc(model, u, v, 1, 2, 200_000, seed=3)
        assert r12.passed and r12.reference == 0.0
        r22 = orthogonality_mc(model, u, v, 2, 2, 200_000, seed=4)
        assert r22.passed and r22.reference == pytest.approx(2.0 * (0.18) ** 2, rel=1e-9)


class TestSemigroup:
    SG = ResamplingSemigroup(SYM)

    def test_t_zero_identity(self):
        xs = np.linspace(-1, 1, 7).reshape(-1, 1)
        ptu = pt_apply(self.SG, U_ID, 0.0)
        np.testing.assert_allclose(ptu(xs), U_ID(xs))

    def test_large_t_goes_constant(self):
        xs = np.linspace(-1, 1, 7).reshape(-1, 1)
        ptu = pt_apply(self.SG, V_SQ, 50.0)
        mean_v = self.SG.model.sigma_integrate(V_SQ) / self.SG.model.rate
        np.testing.assert_allclose(ptu(xs), mean_v, rtol=1e-12)

    def test_centered_kernel_halves_at_log2(self):
        xs = np.linspace(-1, 1, 7).reshape(-1, 1)
        ptu = pt_apply(self.SG, U_ID, math.log(2.0))  # sigma(x) = 0 on the symmetric model
        np.testing.assert_allclose(ptu(xs), 0.5 * U_ID(xs), atol=1e-14)

    def test_contraction_and_semigroup_property(self):
        xs = np.linspace(-1, 1, 11).reshape(-1, 1)
        ptu = pt_apply(self.SG, V_SQ, 0.8)
        assert np.abs(ptu(xs)).max() <= V_SQ.sup_bound + 1e-12
        lhs = pt_apply(self.SG, pt_apply(self.SG, V_SQ, 0.3), 0.5)(xs)
        rhs = pt_apply(self.SG, V_SQ, 0.8)(xs)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_symmetry_mc(self):
        rep = pt_symmetry_check(self.SG, U_ID, V_SQ, 0.6, 100_000, seed=5)
        assert rep.passed

    def test_mehler_t_zero_exact(self):
        F = make_doleans(SYM, 1.0)
        cfg = sample_configuration(SYM, 12)
        val, se = mehler_apply(self.SG, F, cfg, 0.0, 16, seed=0)
        assert val == float(F.value(cfg)[0]) and se == 0.0

    def test_mehler_linear_functional_identity(self):
        # conditional mean of N(g) after motion is N(p_t g)
        from lentparticle.functionals import with_fd_derivative

        g = MarkFunction(lambda xs: np.cos(xs[:, 0]), sup_bound=1.0)
        F = with_fd_derivative("N(g)", 1, 1, lambda c: np.array([float(np.sum(g(c.marks)))]))
        cfg = sample_configuration(SYM, 21)
        t = 0.4
        n_inner = 20_000
        val, se = mehler_apply(self.SG, F, cfg, t, n_inner, seed=3)
        ref = float(np.sum(pt_apply(self.SG, g, t)(cfg.marks)))
        assert abs(val - ref) <= 4.0 * se

    def test_mehler_exponential_identity(self):
        g = MarkFunction(lambda xs: -0.4 / (1.0 + xs[:, 0] ** 2), sup_bound=0.4)
        rep = mehler_exponential_check(self.SG, g, 0.5, 20_000, 32, seed=6)
        assert rep.passed

    def test_second_quantization_t_zero(self):
        rep = second_quantization_check(self.SG, U_ID, 2, 0.0, 2_000, 4, seed=7)
        assert abs(rep.estimate) <= 1e-12

    def test_second_quantization_small(self):
        for deg in (1, 2):
            rep = second_quantization_check(self.SG, U_ID, deg, 0.5, 30_000, 32, seed=8 + deg)
            assert rep.passed, rep

    def test_negative_time_rejected(self):
        with pytest.raises(ChaosError):
            self.SG.keep_prob(-0.1)


def test_sharp_sampling_of_chaos_functional_matches_closed_gamma():
    # three layers at once: finite-difference derivatives of I_2 feed the
    # gradient sampler, whose second moment is the closed chaos matrix entry
    from lentparticle.lent_particle import sharp_sample_many

    cfg = sample_configuration(SYM, 23)
    F = multiple_integral_functional(SYM, U_ID, 2)
    gamma = chaos_gamma_closed(cfg, SYM, U_ID, U_ID, 2, 2, SPEC)
    n = 50_000
    sq = sharp_sample_many(F, cfg, SPEC, n, seed=31, mode="fd")[:, 0] ** 2
    assert abs(sq.mean() - gamma) <= 4.0 * sq.std(ddof=1) / math.sqrt(n)


def test_kernel_bounds_check():
    k = ProductKernel(factors=(MarkFunction(lambda xs: 2.0 * xs[:, 0], sup_bound=0.5),))
    with pytest.raises(ChaosError):
        k.check_bounds(np.array([[0.9]]))
