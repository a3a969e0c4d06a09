"""Shared fixtures: small models, disorder samples and an isolated output root."""

import pytest

from src.core.hamiltonian import InteractionSpec, ModelParams, assemble, sample_disorder
from src.core.lattice import Site, site_box
from src.utils.benchmark import reset_benchmark_tracker
from src.utils.config import Config


@pytest.fixture(autouse=True)
def fresh_tracker():
    reset_benchmark_tracker()
    yield
    reset_benchmark_tracker()


@pytest.fixture
def out_root(tmp_path, monkeypatch):
    root = tmp_path / "runs"
    monkeypatch.setattr(Config, "OUTPUT_ROOT", root)
    return root


@pytest.fixture
def small_params():
    return ModelParams(d=1, g=2.0, s=0.3, interaction=InteractionSpec.finite_range(1, 1.0))


@pytest.fixture
def line3():
    """Sites -1, 0, 1 of Z."""
    return site_box(Site.origin(1), 1)


@pytest.fixture
def small_hamiltonian(small_params, line3):
    disorder = sample_disorder(small_params.disorder, line3, seed=11)
    return assemble(line3, disorder, small_params)
