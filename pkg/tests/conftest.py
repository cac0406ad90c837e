import numpy as np
import pytest

from robustpanel.panel import PanelDataset


def make_panel(n, t, k=1, seed=0, beta=None, sigma_alpha=1.0, sigma_eps=1.0):
    """Random panel with a genuine per-individual effect.

    y = x'beta + alpha_i + eps_it, alpha constant over time within individuals.
    """
    rng = np.random.default_rng(seed)
    beta = np.asarray(beta if beta is not None else np.arange(1, k + 1), dtype=float)
    x = rng.standard_normal((n * t, k))
    alpha = np.repeat(rng.normal(0.0, sigma_alpha, n), t)
    eps = rng.normal(0.0, sigma_eps, n * t)
    y = x @ beta + alpha + eps
    return PanelDataset(y=y, x=x, ids=np.arange(n), times=np.arange(t))


def noiseless_panel(n, t, k=2, seed=3, beta=(2.0, -1.0), intercept=0.0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n * t, k))
    y = intercept + x @ np.asarray(beta, dtype=float)
    return PanelDataset(y=y, x=x, ids=np.arange(n), times=np.arange(t))


@pytest.fixture
def small_panel():
    return make_panel(6, 4, k=2, seed=11)
