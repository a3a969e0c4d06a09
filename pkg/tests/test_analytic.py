import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from src.core.analytic import (
    RecursionParams,
    batched_pole_split_integrals,
    boole_measure,
    efc_gf_bound_check,
    fractional_energy_integral,
    layer_cake_integral,
    level_set_measure_on_interval,
    one_for_all_check,
    perturbed_recursion,
    pole_split_integral,
    quad_recursion_simulate,
    recursion_mu,
    resolve_integrator,
    scale_for_distance,
    scale_sequence,
)
from src.core.errors import HypothesisViolation
from src.core.greens import EigenSystem, RationalFunction
from src.core.lattice import Site
from src.utils.config import Config


def random_positive(rng, n):
    poles = np.sort(rng.uniform(-3.0, 3.0, n))
    return RationalFunction(poles, rng.uniform(0.05, 1.0, n))


def grid_measure(f, t, lo, hi, step=1e-5):
    """Midpoint-grid count of {|f| > t} on [lo, hi]."""
    mids = np.arange(lo + step / 2, hi, step)
    hits = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        for chunk in np.array_split(mids, max(1, mids.size // 100_000)):
            hits += int(np.count_nonzero(np.abs(f(chunk)) > t))
    return hits * step


def single_pole_integral(pole, c, s, lo, hi):
    """int_lo^hi |c / (pole - E)|^s dE for lo <= pole <= hi."""
    return abs(c) ** s * ((pole - lo) ** (1 - s) + (hi - pole) ** (1 - s)) / (1 - s)


class TestLevelSets:
    def test_boole_examples(self):
        assert boole_measure(RationalFunction([0.0], [1.0]), 1.0) == pytest.approx(2.0, rel=1e-12)
        assert boole_measure(RationalFunction([0.0, 1.0], [1.0, 1.0]), 4.0) == pytest.approx(1.0, rel=1e-9)

    def test_boole_identity_random(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            f = random_positive(rng, int(rng.integers(1, 9)))
            t = float(10 ** rng.uniform(-1, 1))
            assert boole_measure(f, t) * t / (2 * f.coeffs.sum()) == pytest.approx(1.0, abs=1e-9)

    def test_boole_matches_grid(self):
        f = random_positive(np.random.default_rng(5), 5)
        # outside [-3 - 2 sum c / t, 3 + 2 sum c / t] nothing exceeds t
        reach = 3.0 + 2 * f.coeffs.sum() / 1.5 + 0.1
        assert boole_measure(f, 1.5) == pytest.approx(grid_measure(f, 1.5, -reach, reach), abs=2e-4)

    def test_boole_rejects_signed(self):
        with pytest.raises(HypothesisViolation):
            boole_measure(RationalFunction([0.0, 1.0], [1.0, -1.0]), 1.0)
        with pytest.raises(HypothesisViolation):
            boole_measure(RationalFunction([0.0], [1.0]), 0.0)

    def test_no_poles_and_small_function(self):
        f = RationalFunction([0.0], [1.0])
        assert level_set_measure_on_interval(f, 1.0, (2.0, 3.0)) == 0.0

    def test_unbounded_equals_boole(self):
        f = RationalFunction([-1.0, 0.5, 2.0], [0.3, 0.2, 0.5])
        assert level_set_measure_on_interval(f, 0.7) == pytest.approx(boole_measure(f, 0.7), rel=1e-12)

    def test_signed_matches_grid(self):
        rng = np.random.default_rng(3)
        f = RationalFunction(np.sort(rng.uniform(-1.5, 1.5, 5)), rng.normal(size=5))
        exact = level_set_measure_on_interval(f, 0.8, (-2.0, 2.0))
        assert exact == pytest.approx(grid_measure(f, 0.8, -2.0, 2.0), abs=2e-4)

    def test_zero_level_is_the_whole_interval(self):
        f = RationalFunction([-1.0, 0.5], [0.4, -0.2])
        assert level_set_measure_on_interval(f, 0.0, (-2.0, 3.0)) == 5.0
        assert level_set_measure_on_interval(RationalFunction([0.0], [0.0]), 0.0, (-2.0, 3.0)) == 0.0
        with pytest.raises(HypothesisViolation):
            level_set_measure_on_interval(f, -0.1, (-2.0, 3.0))

    def test_split_is_an_upper_bound(self):
        f = RationalFunction([-1.0, 0.0, 1.2], [0.4, -0.3, 0.6])
        direct = level_set_measure_on_interval(f, 0.5, (-2.0, 2.0))
        split = level_set_measure_on_interval(f, 0.5, (-2.0, 2.0), split=True)
        assert split >= direct - 1e-9


class TestFractionalIntegrals:
    def test_layer_cake_closed_form(self):
        f = RationalFunction([0.0], [1.0])
        assert layer_cake_integral(f, 0.5, (-1.0, 1.0)) == pytest.approx(4.0, rel=1e-6)

    @pytest.mark.parametrize("s", [0.1, 0.35, 0.6, 0.9])
    @pytest.mark.parametrize("pole", [-0.45, 0.0, 0.8])
    def test_layer_cake_single_pole(self, s, pole):
        f = RationalFunction([pole], [-0.7])
        expected = single_pole_integral(pole, -0.7, s, -1.0, 1.0)
        assert layer_cake_integral(f, s, (-1.0, 1.0)) == pytest.approx(expected, rel=1e-7)

    @pytest.mark.parametrize("integrator", ["layer_cake", "adaptive", "gauss"])
    def test_off_center_pole(self, integrator):
        f = RationalFunction([0.3], [0.5])
        expected = single_pole_integral(0.3, 0.5, 0.4, -1.0, 1.0)
        assert fractional_energy_integral(f, 0.4, (-1.0, 1.0), integrator) == pytest.approx(expected, rel=1e-7)

    def test_zero_coefficients(self):
        f = RationalFunction([0.0, 1.0], [0.0, 0.0])
        assert layer_cake_integral(f, 0.3, (-1.0, 2.0)) == 0.0
        assert pole_split_integral(f, 0.3, (-1.0, 2.0)) == 0.0

    def test_layer_cake_matches_pole_splitting(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            n = int(rng.integers(2, 6))
            f = RationalFunction(np.sort(rng.uniform(-2.0, 2.0, n)), rng.normal(size=n) * 0.3)
            s = float(rng.uniform(0.2, 0.7))
            reference = pole_split_integral(f, s, (-2.5, 2.5), method="adaptive")
            assert layer_cake_integral(f, s, (-2.5, 2.5)) == pytest.approx(reference, rel=1e-6)

    def test_batched_rows_match_single_calls(self):
        poles = np.array([-1.0, 0.2, 1.5])
        coeffs = np.array([[0.3, 0.5, 0.2], [0.1, -0.4, 0.3]])
        batched = batched_pole_split_integrals(poles, coeffs, 0.3, (-2.0, 2.0))
        for row, value in zip(coeffs, batched):
            single = pole_split_integral(RationalFunction(poles, row), 0.3, (-2.0, 2.0), method="gauss")
            assert value == pytest.approx(single, rel=1e-12)
            adaptive = pole_split_integral(RationalFunction(poles, row), 0.3, (-2.0, 2.0))
            assert value == pytest.approx(adaptive, rel=1e-2)

    def test_rejects_bad_arguments(self):
        f = RationalFunction([0.0], [1.0])
        with pytest.raises(HypothesisViolation):
            layer_cake_integral(f, 1.0, (-1.0, 1.0))
        with pytest.raises(HypothesisViolation):
            layer_cake_integral(f, 0.5, (-np.inf, 1.0))
        with pytest.raises(ValueError):
            pole_split_integral(f, 0.5, (-1.0, 1.0), method="simpson")

    def test_resolve_integrator(self, monkeypatch):
        monkeypatch.setattr(Config, "ENERGY_INTEGRATOR", "auto")
        monkeypatch.setattr(Config, "LAYER_CAKE_MAX_DIM", 16)
        assert resolve_integrator(None, 16) == "layer_cake"
        assert resolve_integrator(None, 17) == "gauss"
        assert resolve_integrator("adaptive", 100) == "adaptive"
        with pytest.raises(ValueError):
            resolve_integrator("trapezoid", 4)


class TestEfcBound:
    def test_single_eigenvalue(self):
        es = EigenSystem.from_matrix(np.array([[0.0]]), [Site((0,))])
        result = efc_gf_bound_check(es, Site((0,)), Site((0,)), (-1.0, 1.0), 0.5)
        assert result.integral == pytest.approx(4.0, rel=1e-6)
        assert result.bound == pytest.approx(2 * math.sqrt(2) / 0.5)
        assert result.integral <= result.bound

    def test_zero_correlator(self):
        labels = [Site((0,)), Site((1,))]
        es = EigenSystem.from_matrix(np.diag([0.0, 1.0]), labels)
        result = efc_gf_bound_check(es, labels[0], labels[1], (-1.0, 2.0), 0.3)
        assert result.correlator <= 1e-12
        assert result.integral <= result.bound * (1 + 1e-9) + 1e-12

    def test_auto_integrator_on_a_small_system(self):
        rng = np.random.default_rng(8)
        A = rng.normal(size=(6, 6))
        labels = [Site((i,)) for i in range(6)]
        es = EigenSystem.from_matrix(0.5 * (A + A.T), labels)
        interval = (float(es.eigenvalues[0]) - 0.5, float(es.eigenvalues[-1]) + 0.5)
        assert resolve_integrator("auto", len(labels)) == "layer_cake"
        auto = efc_gf_bound_check(es, labels[1], labels[4], interval, 0.4, integrator="auto")
        oracle = efc_gf_bound_check(es, labels[1], labels[4], interval, 0.4, integrator="adaptive")
        assert auto.integral == pytest.approx(oracle.integral, rel=1e-6)
        assert auto.integral <= auto.bound

    def test_random_instances(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            n = int(rng.integers(2, 7))
            A = rng.normal(size=(n, n))
            labels = [Site((i,)) for i in range(n)]
            es = EigenSystem.from_matrix(0.5 * (A + A.T), labels)
            x, y = labels[0], labels[int(rng.integers(0, n))]
            lo = float(rng.uniform(-3.0, 0.0))
            result = efc_gf_bound_check(es, x, y, (lo, lo + float(rng.uniform(0.5, 4.0))), 0.3)
            assert result.integral <= result.bound * (1 + 1e-9)


class TestScales:
    def test_sequence(self):
        seq = scale_sequence(2, 3)
        assert seq.values == (2, 6, 14, 30)
        for L0 in range(1, 11):
            assert scale_sequence(L0, 20).is_consistent()

    def test_scale_for_distance(self):
        assert [scale_for_distance(2, R) for R in (3, 6, 7, 14, 15)] == [0, 0, 1, 1, 2]
        with pytest.raises(HypothesisViolation):
            scale_for_distance(2, 2)

    def test_invalid(self):
        with pytest.raises(HypothesisViolation):
            scale_sequence(0, 3)


class TestRecursion:
    def test_example(self):
        result = quad_recursion_simulate(RecursionParams(0.5, 0.3, 4, 6))
        assert result.mu == pytest.approx((0.5 + math.log(10 / 3)) / 3)
        assert result.mu == pytest.approx(0.56799, abs=1e-5)
        assert result.bound_ok
        assert result.violations == []

    def test_boundary_start_stays_under_rate(self):
        nu, L0 = 0.5, 4
        result = quad_recursion_simulate(RecursionParams(nu, math.exp(-nu * L0), L0, 5))
        for k in range(1, 6):
            assert result.betas[k] <= math.exp(-nu * result.scales[k]) * (1 + 1e-12)

    def test_equality_iteration_can_exceed_the_pure_rate(self):
        # beta0 just below e^{-nu} with L0 > 2 puts mu below nu
        nu, beta0, L0 = 0.5, 0.6, 4
        result = quad_recursion_simulate(RecursionParams(nu, beta0, L0, 3))
        assert result.mu < nu
        assert result.betas[1] == pytest.approx(0.5 * math.exp(-1.0) * (0.36 + math.exp(-4.0)))
        assert result.betas[1] > math.exp(-result.mu * result.scales[1])
        assert not result.literal_bound_ok
        assert result.bound_ok
        assert result.envelope[1] == pytest.approx((math.exp(-nu) * beta0) ** 2)

    def test_zero_steps(self):
        result = quad_recursion_simulate(RecursionParams(0.3, 0.5, 2, 0))
        assert result.bound_ok
        assert result.betas.tolist() == [0.5]

    def test_hypothesis_violation(self):
        with pytest.raises(HypothesisViolation):
            quad_recursion_simulate(RecursionParams(0.5, math.exp(-0.5), 2, 3))

    @given(st.floats(0.05, 2.0), st.integers(1, 12), st.floats(0.01, 0.99))
    def test_envelope_holds(self, nu, L0, fraction):
        beta0 = fraction * math.exp(-nu)
        result = quad_recursion_simulate(RecursionParams(nu, beta0, L0, 8))
        assert result.bound_ok
        assert result.mu == pytest.approx(recursion_mu(nu, beta0, L0))

    def test_perturbed(self):
        run = perturbed_recursion(0.01, 2.0, 1.0, 1.0, 2.0, 2, 3)
        assert run.nu == pytest.approx(0.2)
        assert run.scales.values == (2, 6, 14, 30)
        assert run.upsilon_hat[1] == pytest.approx(0.5 * 2.0 * 0.01 ** 2 + 0.5 * 36 * math.exp(-1.0))
        np.testing.assert_allclose(run.betas, math.exp(0.4) * 2.0 * run.upsilon_hat)
        assert run.A_second == pytest.approx(2.0 * math.exp(0.4))
        assert len(run.normalized_ok) == 3
        assert run.hypothesis_ok
        assert run.envelope is not None and run.envelope.shape == (4,)

    def test_perturbed_nu_range(self):
        with pytest.raises(HypothesisViolation):
            perturbed_recursion(0.01, 2.0, 1.0, 1.0, 2.0, 2, 3, nu=0.3)


class TestOneForAll:
    def test_constant_equality(self):
        lhs, rhs = one_for_all_check([2.0] * 10, 0.8, 0.2, 0.5)
        assert lhs == pytest.approx(math.sqrt(2), rel=1e-12)
        assert rhs == pytest.approx(lhs, rel=1e-12)

    def test_zero_samples(self):
        assert one_for_all_check([0.0, 0.0], 0.8, 0.2, 0.5) == (0.0, 0.0)

    def test_ordering(self):
        with pytest.raises(HypothesisViolation):
            one_for_all_check([1.0], 0.2, 0.8, 0.5)

    @given(
        st.lists(st.floats(0.0, 1e6), min_size=1, max_size=30),
        st.lists(st.floats(0.01, 0.99), min_size=3, max_size=3, unique=True),
    )
    def test_inequality(self, samples, exponents):
        s2, tau, s1 = sorted(exponents)
        assume(s1 - s2 > 1e-6)
        lhs, rhs = one_for_all_check(samples, s1, s2, tau)
        assert lhs <= rhs * (1 + 1e-9) + 1e-300
