import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.core.errors import GeometryError, NearSpectrum
from src.core.greens import (
    FULL_LINE,
    EigenSystem,
    RationalFunction,
    efc,
    efc_noninteracting,
    fgri_check,
    green_column,
    green_rational,
    green_solve,
    gre_check,
    resolvent_perturbation_check,
    subadditivity_check,
)
from src.core.hamiltonian import Hamiltonian, InteractionSpec, ModelParams, assemble, assemble_one_particle, sample_disorder
from src.core.lattice import Box, Config2, Site, config_space, site_box


def off_spectrum_energy(H, fraction=0.5):
    """A point inside the first spectral gap."""
    ev = H.eigenvalues
    gaps = np.diff(ev)
    k = int(np.argmax(gaps))
    return float(ev[k] + fraction * gaps[k])


class TestRationalFunction:
    def test_merges_close_poles(self):
        f = RationalFunction([1.0, 1.0 + 1e-14, 2.0], [0.5, 0.25, 1.0])
        assert len(f) == 2
        np.testing.assert_allclose(f.coeffs, [0.75, 1.0])
        assert np.all(np.diff(f.poles) > 0)

    def test_evaluation_and_derivative(self):
        f = RationalFunction([0.0, 2.0], [1.0, -0.5])
        assert float(f(1.0)) == pytest.approx(1.0 / -1.0 - 0.5 / 1.0)
        h = 1e-6
        numeric = (float(f(0.7 + h)) - float(f(0.7 - h))) / (2 * h)
        assert float(f.derivative(0.7)) == pytest.approx(numeric, rel=1e-6)

    def test_near_pole_matches_direct_evaluation(self):
        f = RationalFunction([-1.0, 0.5, 3.0], [0.2, 0.3, 0.5])
        np.testing.assert_allclose(f.near_pole(1, 0.1), f(0.6), rtol=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            RationalFunction([np.inf], [1.0])

    def test_round_trip(self):
        f = RationalFunction([0.0, 1.0], [0.3, 0.7])
        g = RationalFunction.from_dict(f.to_dict())
        np.testing.assert_array_equal(g.poles, f.poles)
        np.testing.assert_array_equal(g.coeffs, f.coeffs)


class TestGreenFunctions:
    def test_scalar_resolvent(self):
        H = Hamiltonian(np.array([[2.0]]), (Site((0,)),), ModelParams())
        assert green_solve(H, Site((0,)), Site((0,)), 0.5) == pytest.approx(1.0 / 1.5)

    def test_near_spectrum_raises(self):
        H = Hamiltonian(np.array([[2.0]]), (Site((0,)),), ModelParams())
        with pytest.raises(NearSpectrum) as info:
            green_solve(H, Site((0,)), Site((0,)), 2.0)
        assert info.value.gap == 0.0

    def test_solve_matches_rational(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(50, 50))
        labels = tuple(Site((i,)) for i in range(50))
        H = Hamiltonian(0.5 * (A + A.T), labels, ModelParams())
        es = EigenSystem.from_hamiltonian(H)
        E = off_spectrum_energy(H)
        for i, j in [(0, 0), (3, 17), (49, 2)]:
            direct = green_solve(H, labels[i], labels[j], E)
            expansion = float(green_rational(es, labels[i], labels[j])(E))
            assert direct == pytest.approx(expansion, rel=1e-10, abs=1e-12)

    def test_diagonal_positive_below_spectrum(self, small_hamiltonian):
        x = small_hamiltonian.labels[4]
        E = small_hamiltonian.eigenvalues[0] - 1.0
        assert green_solve(small_hamiltonian, x, x, E) > 0

    def test_hermitian_symmetry(self, small_hamiltonian):
        E = off_spectrum_energy(small_hamiltonian)
        x, y = small_hamiltonian.labels[0], small_hamiltonian.labels[7]
        assert green_solve(small_hamiltonian, x, y, E) == pytest.approx(
            green_solve(small_hamiltonian, y, x, E), rel=1e-12, abs=1e-14
        )

    def test_eigensystem_quality(self, small_hamiltonian):
        es = EigenSystem.from_hamiltonian(small_hamiltonian)
        assert es.residual(small_hamiltonian.matrix) <= 1e-8 * small_hamiltonian.norm
        assert es.orthonormality_error() <= 1e-10
        assert np.all(np.diff(es.eigenvalues) >= 0)

    def test_completeness_and_bessel(self, small_hamiltonian):
        es = EigenSystem.from_hamiltonian(small_hamiltonian)
        x, y = small_hamiltonian.labels[2], small_hamiltonian.labels[6]
        diagonal = green_rational(es, x, x)
        assert np.all(diagonal.coeffs >= 0)
        assert diagonal.coeffs.sum() == pytest.approx(1.0)
        assert green_rational(es, x, y).mass <= 1.0 + 1e-12

    def test_unknown_label(self, small_hamiltonian):
        with pytest.raises(GeometryError):
            green_column(small_hamiltonian, Config2.of(9, 9), 0.123)


class TestCorrelators:
    def test_normalization_and_empty_interval(self, small_hamiltonian):
        es = EigenSystem.from_hamiltonian(small_hamiltonian)
        x = small_hamiltonian.labels[3]
        assert efc(es, x, x) == pytest.approx(1.0)
        assert efc(es, x, x, (1e6, 1e6 + 1)) == 0.0

    def test_monotone_in_interval(self, small_hamiltonian):
        es = EigenSystem.from_hamiltonian(small_hamiltonian)
        x, y = small_hamiltonian.labels[0], small_hamiltonian.labels[8]
        lo, hi = es.eigenvalues[0], es.eigenvalues[-1]
        mid = 0.5 * (lo + hi)
        small = efc(es, x, y, (lo, mid))
        large = efc(es, x, y, (lo, hi))
        assert small <= large <= 1.0 + 1e-12

    def test_noninteracting_factorization(self):
        sites = site_box(0, 2)
        params = ModelParams(d=1, g=1.3)
        disorder = sample_disorder(params.disorder, sites, 17)
        es = EigenSystem.from_hamiltonian(assemble_one_particle(sites, disorder, params))
        x, y = Config2.of(-2, 0), Config2.of(1, 2)
        for interval in (FULL_LINE, (-1.0, 2.0), (0.0, 0.5)):
            qni = efc_noninteracting(es, es, x, y, interval)
            assert qni <= efc(es, x.p1, y.p1) * efc(es, x.p2, y.p2) * (1 + 1e-12) + 1e-15
        full = efc_noninteracting(es, es, x, y)
        assert full == pytest.approx(efc(es, x.p1, y.p1) * efc(es, x.p2, y.p2))


class TestResolventIdentities:
    @pytest.fixture
    def setup(self):
        sites = site_box(0, 2)
        params = ModelParams(d=1, g=2.0, s=0.3, interaction=InteractionSpec.finite_range(1, 1.0))
        H = assemble(sites, sample_disorder(params.disorder, sites, 5), params)
        x, y = Config2.of(0, 0), Config2.of(2, -2)
        inner = [z for z in config_space(sites) if z in Box(x, 1)]
        return H, inner, x, y

    def test_gre_exact(self, setup):
        H, inner, x, y = setup
        H_in = H.restrict(inner)
        merged = np.sort(np.concatenate([H.eigenvalues, H_in.eigenvalues]))
        k = int(np.argmax(np.diff(merged)))
        E = float(0.5 * (merged[k] + merged[k + 1]))
        lhs, rhs = gre_check(H, inner, x, y, E)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)
        for s in (0.1, 0.3, 0.5):
            frac_lhs, frac_rhs = fgri_check(H, inner, x, y, E, s)
            assert frac_lhs <= frac_rhs * (1 + 1e-9)

    def test_gre_geometry(self, setup):
        H, inner, x, y = setup
        with pytest.raises(GeometryError):
            gre_check(H, inner, x, x, 0.123)
        with pytest.raises(GeometryError):
            gre_check(H, inner, y, y, 0.123)

    def test_second_resolvent_identity(self, setup):
        H, _, x, y = setup
        E = float(min(H.eigenvalues[0], H.without_interaction().eigenvalues[0]) - 0.75)
        check = resolvent_perturbation_check(H, x, y, E, 0.3)
        assert check.lhs == pytest.approx(check.rhs, rel=1e-9, abs=1e-12)
        assert check.fractional_lhs <= check.fractional_rhs * (1 + 1e-12)

    def test_subadditivity_examples(self):
        assert subadditivity_check([3.0], 0.4) == pytest.approx((3.0 ** 0.4, 3.0 ** 0.4))
        lhs, rhs = subadditivity_check([1.0, 1.0], 0.5)
        assert lhs == pytest.approx(np.sqrt(2.0))
        assert rhs == pytest.approx(2.0)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20), st.floats(0.01, 0.99))
    def test_subadditivity_property(self, values, s):
        lhs, rhs = subadditivity_check(values, s)
        assert lhs <= rhs * (1 + 1e-12) + 1e-300
