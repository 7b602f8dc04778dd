import numpy as np
import pytest


def rel_err(analytic, numeric, floor_frac=1e-4):
    """Per-component relative error with a magnitude floor.

    The floor (floor_frac times the largest gradient entry) keeps
    finite-difference rounding noise on near-zero components from
    dominating the comparison.
    """
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.abs(a), np.abs(b))
    floor = floor_frac * max(float(scale.max()) if scale.size else 0.0, 1e-12)
    return np.abs(a - b) / np.maximum(scale, floor)


def central_diff(f, x, h=1e-6):
    """Central finite differences of scalar f over a flat array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
