import math

import numpy as np
import pytest

from wobkit import geometry as geo
from wobkit.estimators import estimate_field, estimate_volume_potential
from wobkit.problem import (
    BCType, EstimatorConfig, Formulation, ProblemSpec, Quantity, SpecError,
)

from conftest import assert_within_3sigma


@pytest.fixture(scope="module")
def poisson_dirichlet(circle512_module):
    spec = ProblemSpec.uniform(circle512_module, 2, "interior",
                               BCType.DIRICHLET, "parabola-quarter",
                               pde="poisson", source_const=1.0)
    spec.validate(circle512_module)
    return spec


@pytest.fixture(scope="module")
def circle512_module():
    return geo.circle_boundary(512)


def test_zero_source_zero_potential(circle512_module):
    spec = ProblemSpec.uniform(circle512_module, 2, "interior",
                               BCType.DIRICHLET, 0.0,
                               pde="poisson", source_const=0.0)
    spec.ensure_volume(circle512_module)
    rng = np.random.default_rng(0)
    cfg = EstimatorConfig(volume_samples=16)
    assert estimate_volume_potential(circle512_module, spec, cfg,
                                     [0.1, 0.2], rng) == 0.0


def test_disk_center_quarter(circle512_module, poisson_dirichlet):
    # unit-source disk: the radial integral gives exactly 1/4 at the center
    rng = np.random.default_rng(3)
    cfg = EstimatorConfig(volume_samples=16)
    n = 400
    vals = np.array([estimate_volume_potential(circle512_module,
                                               poisson_dirichlet, cfg,
                                               [0.0, 0.0], rng)
                     for _ in range(n)])
    se = vals.std(ddof=1) / math.sqrt(n)
    assert abs(vals.mean() - 0.25) < 3 * se + 5e-4


def test_requires_volume_source(circle512_module, rng):
    spec = ProblemSpec.uniform(circle512_module, 2, "interior",
                               BCType.DIRICHLET, 1.0)
    cfg = EstimatorConfig()
    with pytest.raises(SpecError, match="volume"):
        estimate_volume_potential(circle512_module, spec, cfg, [0, 0], rng)


def test_poisson_pipeline_center(circle512_module, poisson_dirichlet):
    # manufactured field (x^2 + y^2)/4 vanishes at the center
    cfg = EstimatorConfig(M=4, N=30_000, seed=5, volume_samples=16)
    r = estimate_field(circle512_module, poisson_dirichlet, cfg,
                       [[0.0, 0.0], [0.5, 0.0]])
    assert_within_3sigma(r.mean, [0.0, 0.0625], r.var, cfg.N, "volume pipeline")


def test_exterior_volume_source_rejected(circle512_module):
    spec = ProblemSpec.uniform(circle512_module, 2, "exterior",
                               BCType.DIRICHLET, 0.0,
                               pde="poisson", source_const=1.0)
    with pytest.raises(SpecError, match="bounded interior"):
        spec.validate(circle512_module)
