import math

import numpy as np
import pytest
from scipy import stats

from src.core.errors import GeometryError, ValidationError
from src.core.hamiltonian import (
    DisorderSample,
    DisorderSpec,
    InteractionSpec,
    ModelParams,
    assemble,
    assemble_one_particle,
    derive_seed,
    interaction_energy,
    sample_disorder,
    spectrum_bounds,
)
from src.core.lattice import Config2, Site, site_box


class TestInteraction:
    def test_examples(self):
        assert interaction_energy(Config2.of(0, 5), InteractionSpec.finite_range(1, 1.0)) == 0.0
        assert interaction_energy(Config2.of(0, 1), InteractionSpec.finite_range(1, 1.0)) == 1.0
        assert interaction_energy(Config2.of(0, 0), InteractionSpec.exponential(1.0, 1.0)) == 1.0
        value = interaction_energy(Config2.of(0, 3), InteractionSpec.exponential(0.5, 2.0))
        assert value == pytest.approx(2 * math.exp(-1.5))
        assert value == pytest.approx(0.44626, abs=1e-5)

    def test_subexponential(self):
        spec = InteractionSpec.subexponential(1.0, 0.5, 1.0)
        assert interaction_energy(Config2.of(0, 4), spec) == pytest.approx(math.exp(-2.0))

    def test_problems(self):
        assert InteractionSpec("exponential", 1.0, mass=0.0).problems()
        assert InteractionSpec("finite_range", -1.0).problems()
        assert InteractionSpec("yukawa", 1.0).problems()

    def test_round_trip(self):
        spec = InteractionSpec.subexponential(2.0, 0.7, 0.5)
        assert InteractionSpec.from_dict(spec.to_dict()) == spec


class TestDisorder:
    def test_deterministic(self):
        sites = site_box(0, 3)
        a = sample_disorder(DisorderSpec.uniform(), sites, 42)
        b = sample_disorder(DisorderSpec.uniform(), sites, 42)
        assert dict(a.values) == dict(b.values)

    def test_values_depend_only_on_seed_and_site(self):
        small = sample_disorder(DisorderSpec.uniform(), site_box(0, 1), 5)
        large = sample_disorder(DisorderSpec.uniform(), site_box(0, 4), 5)
        for u in small.values:
            assert small[u] == large[u]

    def test_uniform_statistics(self):
        sites = [Site((i,)) for i in range(20000)]
        values = np.array(list(sample_disorder(DisorderSpec.uniform(), sites, 2024).values.values()))
        assert values.min() >= 0.0 and values.max() <= 1.0
        assert abs(values.mean() - 0.5) < 0.0065
        assert stats.kstest(values, "uniform").statistic < 0.013

    def test_bounded_density_sampling(self):
        grid = np.linspace(0.0, 1.0, 11)
        spec = DisorderSpec.bounded_density(grid, 2.0 * grid)  # density 2v
        sites = [Site((i,)) for i in range(5000)]
        values = np.array(list(sample_disorder(spec, sites, 3).values.values()))
        assert values.min() >= 0.0 and values.max() <= 1.0
        # E[V] = 2/3 for density 2v
        assert abs(values.mean() - 2.0 / 3.0) < 0.02
        assert spec.sup_density == pytest.approx(2.0)

    def test_inverse_cdf_of_linear_density_is_exact(self):
        grid = np.linspace(0.0, 1.0, 5)
        spec = DisorderSpec.bounded_density(grid, 2.0 * grid)
        u = np.array([0.0, 0.04, 0.25, 0.81, 1.0])
        np.testing.assert_allclose(spec.inverse_cdf(u), np.sqrt(u), atol=1e-12)

    def test_malformed_density_rejected(self):
        with pytest.raises(ValidationError) as info:
            DisorderSpec.bounded_density([0.0, 0.5, 1.0], [1.0, 1.0, 3.0])
        assert any("integrate to 1" in p for p in info.value.problems)
        with pytest.raises(ValidationError):
            DisorderSpec.bounded_density([0.0, 1.0], [-1.0, 3.0])

    def test_missing_site(self):
        sample = sample_disorder(DisorderSpec.uniform(), site_box(0, 1), 1)
        with pytest.raises(GeometryError):
            sample[Site((7,))]

    def test_round_trip(self):
        sample = sample_disorder(DisorderSpec.uniform(), site_box(0, 2), 9)
        assert DisorderSample.from_dict(sample.to_dict()).values == sample.values

    def test_derive_seed(self):
        assert derive_seed(1, "omega", 3) == derive_seed(1, "omega", 3)
        assert derive_seed(1, "omega", 3) != derive_seed(1, "omega", 4)
        assert derive_seed(1, "omega", 3) != derive_seed(2, "omega", 3)
        assert derive_seed(1, "probes", 3) != derive_seed(1, "omega", 3)


class TestModelParams:
    def test_problems_name_the_violation(self):
        problems = ModelParams(s=1.5).problems()
        assert any("0 < s < 1" in p for p in problems)
        with pytest.raises(ValidationError):
            ModelParams(s=0.0).check()
        assert ModelParams(energy_interval=(1.0, 0.0)).problems()

    def test_round_trip(self):
        params = ModelParams(d=2, g=3.5, s=0.25, interaction=InteractionSpec.exponential(2.0),
                             laplacian_diagonal=True, energy_interval=(-1.0, 4.0))
        assert ModelParams.from_dict(params.to_dict()) == params


class TestAssembly:
    def test_single_site(self):
        params = ModelParams(d=1, g=3.0, interaction=InteractionSpec.finite_range(0, 0.7))
        sites = [Site((0,))]
        disorder = sample_disorder(params.disorder, sites, 4)
        H = assemble(sites, disorder, params)
        assert H.matrix.shape == (1, 1)
        assert H.matrix[0, 0] == pytest.approx(2 * 3.0 * disorder[Site((0,))] + 0.7)

    def test_symmetric_hopping_one(self, small_hamiltonian):
        M = small_hamiltonian.matrix
        assert np.array_equal(M, M.T)
        off = M - np.diag(np.diag(M))
        assert set(np.unique(off)) <= {0.0, 1.0}
        assert off.sum(axis=1).max() <= 4

    def test_dimension_and_order(self, small_hamiltonian, line3):
        assert small_hamiltonian.dim == len(line3) ** 2
        assert small_hamiltonian.labels[0] == Config2.of(-1, -1)
        assert small_hamiltonian.labels[1] == Config2.of(-1, 0)

    def test_laplacian_diagonal_shift(self, line3):
        params = ModelParams(d=1, g=1.0)
        disorder = sample_disorder(params.disorder, line3, 8)
        plain = assemble(line3, disorder, params)
        shifted = assemble(line3, disorder, params.with_(laplacian_diagonal=True))
        np.testing.assert_allclose(shifted.matrix - plain.matrix, 4.0 * np.eye(plain.dim))

    def test_kronecker_sum_without_interaction(self):
        sites = site_box(0, 2)
        params = ModelParams(d=1, g=1.7)
        disorder = sample_disorder(params.disorder, sites, 21)
        H = assemble(sites, disorder, params)
        h1 = assemble_one_particle(sites, disorder, params).matrix
        eye = np.eye(len(sites))
        np.testing.assert_allclose(H.matrix, np.kron(h1, eye) + np.kron(eye, h1), atol=1e-14)
        one = np.linalg.eigvalsh(h1)
        sums = np.sort((one[:, None] + one[None, :]).ravel())
        np.testing.assert_allclose(H.eigenvalues, sums, atol=1e-10)

    def test_spectral_shift(self, line3):
        params = ModelParams(d=1, g=2.5, interaction=InteractionSpec.finite_range(1, 1.0))
        disorder = sample_disorder(params.disorder, line3, 6)
        H = assemble(line3, disorder, params)
        shifted = assemble(line3, disorder.shifted(0.3), params)
        np.testing.assert_allclose(shifted.eigenvalues, H.eigenvalues + 2 * 2.5 * 0.3, atol=1e-10)

    def test_uncovered_site(self, small_params):
        disorder = sample_disorder(small_params.disorder, site_box(0, 1), 1)
        with pytest.raises(GeometryError):
            assemble(site_box(0, 2), disorder, small_params)

    def test_restrict_and_without_interaction(self, small_hamiltonian):
        keep = small_hamiltonian.labels[:4]
        sub = small_hamiltonian.restrict(keep)
        assert sub.labels == tuple(sorted(keep))
        free = small_hamiltonian.without_interaction()
        diff = small_hamiltonian.matrix - free.matrix
        np.testing.assert_allclose(np.diag(diff), small_hamiltonian.interaction_diagonal())


class TestSpectrumBounds:
    def test_example(self):
        assert spectrum_bounds(ModelParams(d=1, g=10.0)) == (-4.0, 24.0)

    def test_free_case_contains_kinetic_range(self):
        lo, hi = spectrum_bounds(ModelParams(d=2, g=0.0))
        assert lo <= -8 and hi >= 8

    def test_negative_coupling(self):
        lo, hi = spectrum_bounds(ModelParams(d=1, g=-3.0))
        assert lo == -10.0 and hi == 4.0

    def test_contains_sampled_spectra(self):
        params = ModelParams(d=1, g=4.0, interaction=InteractionSpec.exponential(0.5, 2.0))
        sites = site_box(0, 2)
        lo, hi = spectrum_bounds(params, sites)
        for seed in range(100):
            ev = assemble(sites, sample_disorder(params.disorder, sites, seed), params).eigenvalues
            assert lo <= ev[0] and ev[-1] <= hi
