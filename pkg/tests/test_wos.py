import math

import numpy as np
import pytest

from wobkit import geometry as geo
from wobkit.problem import BCType, ProblemSpec, SpecError
from wobkit.wos import WosConfig, wos_dirichlet, wos_field


def spec_x(boundary):
    return ProblemSpec.uniform(boundary, 2, "interior", BCType.DIRICHLET, "x")


def test_constant_data_exact(circle512, rng):
    spec = ProblemSpec.uniform(circle512, 2, "interior", BCType.DIRICHLET, 0.3)
    cfg = WosConfig(epsilon=1e-3)
    for _ in range(20):
        s = wos_dirichlet(circle512, spec, cfg, [0.4, -0.2], rng)
        assert s.value == 0.3


def test_harmonic_extension(circle512):
    spec = spec_x(circle512)
    cfg = WosConfig(epsilon=1e-4, seed=3)
    n = 60_000
    r = wos_field(circle512, spec, cfg, [[0.5, 0.0]], n, seed=3)
    se = math.sqrt(r.var[0] / n)
    assert abs(r.mean[0] - 0.5) < 3 * se


def test_step_count_grows_slowly(circle512):
    # classic sphere-walk behavior: mean steps grow like log(1/eps)
    spec = spec_x(circle512)
    counts = []
    eps_list = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
    for eps in eps_list:
        cfg = WosConfig(epsilon=eps, seed=4)
        r = wos_field(circle512, spec, cfg, [[0.2, 0.1]], 2_000, seed=4)
        counts.append(r.mean_path_length)
    counts = np.array(counts)
    assert np.all(np.diff(counts) > 0)
    # far sub-linear in 1/eps: 10^4 times smaller eps, far less than 100x steps
    assert counts[-1] / counts[0] < 20.0
    # positive slope against log(1/eps)
    slope = np.polyfit(np.log10(1.0 / np.array(eps_list)), counts, 1)[0]
    assert slope > 0


def test_truncation_flag(circle512, rng):
    spec = spec_x(circle512)
    cfg = WosConfig(epsilon=1e-12, max_steps=3)
    s = wos_dirichlet(circle512, spec, cfg, [0.0, 0.0], rng)
    assert s.flagged
    assert np.isfinite(s.value)


def test_interior_only(circle512, rng):
    spec = ProblemSpec.uniform(circle512, 2, "exterior", BCType.DIRICHLET, "x")
    with pytest.raises(SpecError, match="interior"):
        wos_dirichlet(circle512, spec, WosConfig(), [2.0, 0.0], rng)


def test_dirichlet_only(circle512, rng):
    spec = ProblemSpec.uniform(circle512, 2, "interior", BCType.NEUMANN, "saddle")
    with pytest.raises(SpecError, match="Dirichlet"):
        wos_dirichlet(circle512, spec, WosConfig(), [0.0, 0.0], rng)


def test_epsilon_validation():
    with pytest.raises(SpecError):
        WosConfig(epsilon=0.0)
