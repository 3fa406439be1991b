import numpy as np
import pytest

import mewls


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def tiny_outlier_instance(seed, m=10, outlier_shift=2.0, noise=0.05):
    """Scattered bilinear instance with one injected outlier (s = 1)."""
    gen = np.random.default_rng(seed)
    spec = mewls.SurfaceSpec(mewls.clamped_knots(2, 1), mewls.clamped_knots(2, 1), s=1)
    u = gen.random(m)
    v = gen.random(m)
    z = 0.3 + 0.5 * u - 0.2 * v + noise * gen.standard_normal(m)
    z[3] += outlier_shift
    return spec, mewls.scattered_data(u, v, z)
