import math

import numpy as np
import pytest
from scipy import integrate

from src.core.errors import GeometryError, HypothesisViolation, ValidationError
from src.core.greens import FULL_LINE, EigenSystem, efc
from src.core.hamiltonian import InteractionSpec, ModelParams, assemble_one_particle, sample_disorder
from src.core.lattice import Config2, Site, diam, site_box, sym_distance
from src.core.moments import (
    _joint_constants,
    MomentAccumulator,
    MomentEstimate,
    apriori_bound_check,
    decay_probes,
    decay_profile,
    decoupling_check,
    energy_averaged_moments,
    estimate_moment,
    fit_decay,
    noninteracting_factorization,
    realization_seed,
    recursion_audit,
    split_config_moment,
    split_probe,
    upsilon,
    upsilon_pairs,
    upsilon_series,
)
from src.utils.benchmark import get_benchmark_tracker
from src.utils.config import Config


def estimates(pairs):
    return [(R, MomentEstimate(mean, stderr, 100, 0.2, 0)) for R, mean, stderr in pairs]


class TestAccumulator:
    def test_merge_matches_direct_statistics(self):
        rng = np.random.default_rng(0)
        data = rng.random((40, 3))
        left, right = MomentAccumulator.zeros(3), MomentAccumulator.zeros(3)
        for row in data[:15]:
            left.add(row)
        for row in data[15:]:
            right.add(row)
        merged = left.merge(right)
        assert merged.count == 40
        np.testing.assert_allclose(merged.means, data.mean(axis=0), rtol=1e-12)
        np.testing.assert_allclose(merged.stderrs, data.std(axis=0, ddof=1) / math.sqrt(40), rtol=1e-9)

    def test_single_sample_has_zero_stderr(self):
        acc = MomentAccumulator.zeros(1)
        acc.add(np.array([0.5]))
        assert acc.stderrs.tolist() == [0.0]


class TestEstimateMoment:
    def test_single_site_matches_closed_form(self):
        params = ModelParams(d=1, g=3.0, s=0.4, interaction=InteractionSpec.finite_range(0, 0.5))
        box = [Site((0,))]
        lo, hi = params.interval(box)
        assert (lo, hi) == (-4.0, 10.5)
        seed, n = 9, 30
        est = estimate_moment(params, box, Config2.of(0, 0), Config2.of(0, 0), n, seed, integrator="layer_cake")

        def exact(v):
            a = 2 * params.g * v + 0.5
            return ((a - lo) ** 0.6 + (hi - a) ** 0.6) / (0.6 * (hi - lo))

        per_sample = [
            exact(sample_disorder(params.disorder, box, realization_seed(seed, i))[Site((0,))]) for i in range(n)
        ]
        assert est.mean == pytest.approx(np.mean(per_sample), rel=1e-8)
        assert est.n_samples == n
        expected, _ = integrate.quad(exact, 0.0, 1.0)
        assert abs(est.mean - expected) <= 4 * est.stderr + 1e-12

    def test_auto_uses_the_exact_integrator_on_small_boxes(self, small_params, line3, caplog):
        x, y = Config2.of(-1, 0), Config2.of(1, 1)
        with caplog.at_level("INFO", logger="src.core.moments"):
            auto = estimate_moment(small_params, line3, x, y, 3, 4, integrator="auto")
        exact = estimate_moment(small_params, line3, x, y, 3, 4, integrator="layer_cake")
        assert auto == exact
        assert "Energy integrator layer_cake for 9 poles" in caplog.text

    def test_reproducible_and_independent_of_jobs(self, monkeypatch, small_params, line3):
        monkeypatch.setattr(Config, "CHUNK_SIZE", 3)
        x, y = Config2.of(-1, 0), Config2.of(1, 1)
        serial = estimate_moment(small_params, line3, x, y, 8, 5, jobs=1, integrator="gauss")
        again = estimate_moment(small_params, line3, x, y, 8, 5, jobs=1, integrator="gauss")
        parallel = estimate_moment(small_params, line3, x, y, 8, 5, jobs=2, integrator="gauss")
        assert serial == again
        assert serial.mean == parallel.mean
        assert serial.stderr == parallel.stderr

    def test_chunking_changes_only_rounding(self, monkeypatch, small_params, line3):
        x, y = Config2.of(-1, 0), Config2.of(1, 1)
        monkeypatch.setattr(Config, "CHUNK_SIZE", 2)
        a = estimate_moment(small_params, line3, x, y, 7, 5, integrator="gauss")
        monkeypatch.setattr(Config, "CHUNK_SIZE", 5)
        b = estimate_moment(small_params, line3, x, y, 7, 5, integrator="gauss")
        assert a.mean == pytest.approx(b.mean, rel=1e-12)

    def test_outside_box(self, small_params, line3):
        with pytest.raises(GeometryError):
            estimate_moment(small_params, line3, Config2.of(0, 0), Config2.of(0, 4), 2, 1)

    def test_invalid_params(self, line3):
        with pytest.raises(ValidationError):
            estimate_moment(ModelParams(s=1.5), line3, Config2.of(0, 0), Config2.of(0, 1), 2, 1)

    def test_records_benchmark_stage(self, small_params, line3):
        estimate_moment(small_params, line3, Config2.of(0, 0), Config2.of(0, 1), 2, 1, integrator="gauss")
        assert "moments::estimate_moment" in get_benchmark_tracker().get_summary()


class TestEnergyAverages:
    def test_integrators_agree(self, small_hamiltonian):
        labels = small_hamiltonian.labels
        pairs = [(labels[0], labels[0]), (labels[1], labels[7])]
        interval = small_hamiltonian.params.interval(site_box(0, 1))
        exact = energy_averaged_moments(small_hamiltonian, pairs, 0.3, interval, "layer_cake")
        adaptive = energy_averaged_moments(small_hamiltonian, pairs, 0.3, interval, "adaptive")
        gauss = energy_averaged_moments(small_hamiltonian, pairs, 0.3, interval, "gauss")
        np.testing.assert_allclose(adaptive, exact, rtol=1e-6)
        np.testing.assert_allclose(gauss, exact, rtol=1e-2)
        assert np.all(exact > 0)


class TestDecay:
    def test_probes(self):
        box = site_box(0, 4)
        anchor = Config2.of(0, 0)
        probes = decay_probes(box, anchor, 3, 4, seed=1)
        assert 1 <= len(probes) <= 4
        assert all(sym_distance(anchor, y) == 3 and diam(y) <= 1 for y in probes)
        assert probes == decay_probes(box, anchor, 3, 4, seed=1)

    def test_first_probe_is_the_first_axis_translate(self):
        box = site_box(0, 6)
        clustered = decay_probes(box, Config2.of(0, 0), 3, 4, seed=1)
        assert clustered[0] == Config2.of(3, 3)
        split_anchor = Config2.of(0, 2)
        probes = decay_probes(box, split_anchor, 3, 3, seed=1)
        assert probes[0] == Config2.of(3, 5)
        assert len(probes) == 3 and len(set(probes)) == 3
        assert all(sym_distance(split_anchor, y) == 3 and diam(y) <= 2 for y in probes)
        assert decay_probes(box, split_anchor, 3, 1, seed=9) == [Config2.of(3, 5)]

    def test_probe_outside_box(self):
        with pytest.raises(GeometryError):
            decay_probes(site_box(0, 2), Config2.of(0, 0), 5, 4, seed=1)

    def test_profile(self):
        params = ModelParams(d=1, g=5.0, s=0.3, interaction=InteractionSpec.finite_range(1, 1.0))
        box = site_box(0, 3)
        profile = decay_profile(params, box, Config2.of(0, 0), [1, 2, 3], 10, seed=2,
                                probes_per_distance=2, integrator="gauss")
        assert [R for R, _ in profile] == [1, 2, 3]
        means = [est.mean for _, est in profile]
        assert all(m > 0 for m in means)
        assert means[0] > means[2]
        assert fit_decay(profile).m > 0

    def test_anchor_outside_box(self, small_params, line3):
        with pytest.raises(GeometryError):
            decay_profile(small_params, line3, Config2.of(5, 5), [1, 2, 3], 2, 1)


class TestFitDecay:
    def test_exact_exponential(self):
        profile = estimates([(R, math.exp(-2 * R), 0.05 * math.exp(-2 * R)) for R in (1, 2, 3, 4)])
        fit = fit_decay(profile)
        assert fit.m == pytest.approx(2.0)
        assert fit.r2 == pytest.approx(1.0)
        assert fit.weighted

    def test_prefactor_is_absorbed(self):
        profile = estimates([(R, 7.5 * math.exp(-0.8 * R), 0.0) for R in (2, 4, 6)])
        fit = fit_decay(profile)
        assert fit.m == pytest.approx(0.8)
        assert fit.intercept == pytest.approx(math.log(7.5))
        assert not fit.weighted

    def test_noisy_recovery(self):
        rng = np.random.default_rng(12)
        R = np.arange(1, 11)
        means = np.exp(-1.5 * R) * (1 + 0.05 * rng.standard_normal(R.size))
        fit = fit_decay(estimates([(int(r), float(m), 0.05 * float(m)) for r, m in zip(R, means)]))
        assert 1.35 <= fit.m <= 1.65
        assert fit.m_stderr > 0

    def test_errors(self):
        with pytest.raises(ValidationError):
            fit_decay(estimates([(1, 0.5, 0.1), (2, 0.2, 0.1)]))
        with pytest.raises(HypothesisViolation):
            fit_decay(estimates([(1, 0.5, 0.1), (2, 0.0, 0.1), (3, 0.1, 0.1)]))


class TestSplitConfigurations:
    def test_probe_geometry(self):
        for R in (1, 3, 5):
            x, y = split_probe(1, R)
            assert sym_distance(x, y) == R
            assert diam(x) == diam(y) == R
        x, y = split_probe(2, 2)
        assert x.d == 2 and sym_distance(x, y) == 2

    def test_moment_and_errors(self):
        params = ModelParams(d=1, g=5.0, s=0.3, interaction=InteractionSpec.finite_range(1, 1.0))
        box = site_box(0, 2)
        est = split_config_moment(params, box, 2, 4, seed=3, integrator="gauss")
        assert est.mean > 0 and est.n_samples == 4
        with pytest.raises(GeometryError):
            split_config_moment(params, box, 3, 4, seed=3)
        with pytest.raises(GeometryError):
            split_config_moment(params, box, 0, 4, seed=3)


    def test_noninteracting_split_below_one_particle_product(self):
        params = ModelParams(d=1, g=3.0, s=0.3, interaction=InteractionSpec.none())
        box = site_box(0, 2)
        seed, n = 8, 6
        est = split_config_moment(params, box, 2, n, seed=seed)
        x, y = split_probe(1, 2)
        sites = sorted(box)
        lo, hi = params.interval(sites)
        bounds = []
        for i in range(n):
            disorder = sample_disorder(params.disorder, sites, realization_seed(seed, i))
            es = EigenSystem.from_hamiltonian(assemble_one_particle(sites, disorder, params))
            product = efc(es, x.p1, y.p1, FULL_LINE) * efc(es, x.p2, y.p2, FULL_LINE)
            bounds.append(2.0 * (hi - lo) ** -params.s * product ** params.s / (1.0 - params.s))
        assert 0 < est.mean <= np.mean(bounds)


class TestFactorizationAndDecoupling:
    def test_noninteracting_factorization(self):
        params = ModelParams(d=1, g=1.5, s=0.3, interaction=InteractionSpec.finite_range(1, 1.0))
        report = noninteracting_factorization(params, site_box(0, 2), Config2.of(-1, 0), Config2.of(1, 2), 20, seed=4)
        assert report.violations == 0
        assert report.max_ratio <= 1 + 1e-9
        assert report.moment_ok
        assert report.n_samples == 20

    def test_decoupling(self):
        params = ModelParams(d=1, g=2.0, s=0.3, interaction=InteractionSpec.finite_range(1, 1.0))
        report = decoupling_check(params, site_box(0, 2), Config2.of(0, 0), Config2.of(2, -2), 1, 5, 3, seed=6)
        assert report.fgri_violations == 0
        assert report.holds
        assert report.n_samples == 15
        assert report.n_edges == 12

    def test_decoupling_geometry(self):
        params = ModelParams(d=1, g=2.0, s=0.3)
        with pytest.raises(GeometryError):
            decoupling_check(params, site_box(0, 2), Config2.of(0, 0), Config2.of(1, 1), 1, 1, 1, seed=6)


class TestApriori:
    def test_scaling_direction(self):
        params = ModelParams(d=1, g=10.0, s=0.3)
        report = apriori_bound_check(params, site_box(0, 1), Site((-1,)), Site((1,)),
                                     Config2.of(-1, 0), Config2.of(0, 1), 3, 5, seed=8, integrator="gauss")
        assert report.couplings == (5.0, 10.0, 20.0, 40.0)
        assert report.conditional.shape == (3, 4)
        assert all(m > 0 for m in report.max_conditional)
        assert report.scale_exponent < 0

    def test_coinciding_sites(self):
        params = ModelParams(d=1, g=10.0, s=0.3)
        report = apriori_bound_check(params, site_box(0, 1), Site((0,)), Site((0,)),
                                     Config2.of(0, -1), Config2.of(0, 1), 2, 3, seed=8,
                                     couplings=(5.0, 20.0), integrator="gauss")
        assert all(math.isfinite(m) and m > 0 for m in report.max_conditional)

    def test_hypothesis_geometry(self):
        params = ModelParams(d=1, g=10.0, s=0.3)
        with pytest.raises(GeometryError):
            apriori_bound_check(params, site_box(0, 1), Site((1,)), Site((1,)),
                                Config2.of(-1, 0), Config2.of(0, 1), 1, 1, seed=8)


class TestUpsilon:
    def test_pairs(self):
        pairs = upsilon_pairs(1, 2, 1, 1)
        assert len(pairs) == 9 * 6
        assert all(max(abs(v) for v in w.as_vector()) == 2 and diam(w) <= 1 for _, w in pairs)

    def test_equals_sum_of_pair_moments(self):
        params = ModelParams(d=1, g=4.0, s=0.3, interaction=InteractionSpec.finite_range(1, 1.0))
        ambient = site_box(0, 2)
        value, err = upsilon(params, 2, ambient, 3, seed=1, integrator="gauss")
        brute = sum(
            estimate_moment(params, ambient, x, w, 3, 1, integrator="gauss").mean
            for x, w in upsilon_pairs(1, 2, 1, 1)
        )
        assert value == pytest.approx(brute, rel=1e-10)
        assert err >= 0

    def test_ambient_too_small(self):
        with pytest.raises(GeometryError):
            upsilon(ModelParams(), 3, site_box(0, 2), 1, seed=1)

    def test_series_and_audit(self):
        params = ModelParams(d=1, g=30.0, s=0.2, interaction=InteractionSpec.finite_range(1, 1.0))
        ambient = site_box(0, 4)
        series = upsilon_series(params, 1, 1, ambient, 3, seed=2, integrator="gauss")
        assert series.scales.values == (1, 4)
        assert series.upsilon.shape == (2,) and series.upsilon_tilde.shape == (1,)
        assert series.upsilon_tilde[0] <= series.upsilon[1] * (1 + 1e-12)
        assert series.tilde_consistent()

        audit = recursion_audit(params, 1, 1, ambient, 3, seed=2, integrator="gauss")
        assert audit.fitted
        assert audit.q == 2.0
        assert len(audit.steps) == 1
        assert audit.all_hold
        np.testing.assert_array_equal(audit.series.upsilon, series.upsilon)
        assert (audit.envelope is None) == (not audit.hypothesis_ok)

    def test_joint_constants_beat_separate_fits(self):
        targets = np.array([1.0, 1.0])
        quad_part = np.array([1.0, 0.5])
        poly = np.array([0.5, 1.0])
        a, A = _joint_constants(targets, quad_part, poly)
        assert a == pytest.approx(2 / 3)
        assert A == pytest.approx(2 / 3)
        assert np.all(a * quad_part + A * poly >= targets * (1 - 1e-12))
        # each constant alone would need 2
        assert a / 2 + A / 2 < 1

    def test_joint_constants_degenerate(self):
        a, A = _joint_constants(np.array([0.3]), np.array([0.0]), np.array([0.1]))
        assert a == 0.0 and A == pytest.approx(3.0)

    def test_audit_needs_a_step(self):
        with pytest.raises(ValidationError):
            recursion_audit(ModelParams(), 1, 0, site_box(0, 4), 1, seed=2)


@pytest.mark.slow
class TestLargeScaleTrends:
    def test_decay_rate_grows_with_coupling(self):
        interaction = InteractionSpec.finite_range(1, 1.0)
        box = site_box(0, 12)
        fits = {}
        for g in (10.0, 20.0, 40.0):
            params = ModelParams(d=1, g=g, s=0.2, interaction=interaction)
            profile = decay_profile(params, box, Config2.of(0, 0), [2, 4, 6, 8], 400, seed=20240611)
            fits[g] = fit_decay(profile)
        assert fits[20.0].m > 0 and fits[20.0].r2 >= 0.9
        spread = math.hypot(fits[40.0].m_stderr, fits[10.0].m_stderr)
        assert fits[40.0].m - fits[10.0].m > spread

    def test_apriori_slope(self):
        params = ModelParams(d=1, g=10.0, s=0.3)
        report = apriori_bound_check(params, site_box(0, 4), Site((-2,)), Site((2,)),
                                     Config2.of(-2, -1), Config2.of(1, 2), 20, 500, seed=7)
        assert -0.45 <= report.scale_exponent <= -0.15

    def test_split_configurations_decay(self):
        box = site_box(0, 12)
        distances = (2, 4, 6, 8)
        interactions = {
            "finite": InteractionSpec.finite_range(1, 1.0),
            "exponential": InteractionSpec.exponential(1.0, 1.0),
            "short": InteractionSpec.exponential(3.0, 1.0),
        }
        results = {}
        for name, interaction in interactions.items():
            params = ModelParams(d=1, g=20.0, s=0.2, interaction=interaction)
            results[name] = [split_config_moment(params, box, R, 400, seed=20240611) for R in distances]
        for name in ("finite", "exponential"):
            logs = [math.log(est.mean) for est in results[name]]
            assert all(b < a for a, b in zip(logs, logs[1:]))
        for finite, short in zip(results["finite"], results["short"]):
            assert abs(finite.mean - short.mean) <= 2 * math.hypot(finite.stderr, short.stderr)
