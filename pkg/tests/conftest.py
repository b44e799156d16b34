import numpy as np
import pytest

from rimle.model import ComponentParams, MixtureParams


def random_spd(rng, p, cond=None):
    """Random SPD matrix; with ``cond`` its condition number is exactly ``cond``."""
    q, _ = np.linalg.qr(rng.normal(size=(p, p)))
    if cond is None:
        evals = rng.uniform(0.2, 3.0, size=p)
    else:
        evals = np.geomspace(1.0, cond, p) * rng.uniform(0.5, 2.0)
    cov = (q * evals) @ q.T
    return 0.5 * (cov + cov.T)


def random_theta(rng, G, p, noise_weight=None, spread=3.0):
    if noise_weight is None:
        noise_weight = rng.uniform(0.0, 0.4)
    w = rng.dirichlet(np.ones(G)) * (1.0 - noise_weight)
    comps = [ComponentParams.from_covariance(rng.normal(scale=spread, size=p), random_spd(rng, p))
             for _ in range(G)]
    return MixtureParams(noise_weight, w, comps)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_clusters():
    """Two unit-variance clusters 20 apart along the first axis, 100 points each."""
    gen = np.random.default_rng(0)
    return np.vstack([gen.normal([0.0, 0.0], 1.0, (100, 2)),
                      gen.normal([20.0, 0.0], 1.0, (100, 2))])
