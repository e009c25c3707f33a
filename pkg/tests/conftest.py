import numpy as np
import pytest

from lsbp.model import Dataset, MixtureParams, ModelConfig, sample_prior_params


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


def random_dataset(n, P, R, rng, spread=1.0):
    """Well-scaled dataset with intercepted designs, no standardization."""
    x = rng.uniform(-1.0, 1.0, size=n)
    Lambda = np.column_stack([np.ones(n), x])[:, :P]
    if P > 2:
        Lambda = np.column_stack([Lambda, rng.normal(size=(n, P - 2))])
    Psi = np.column_stack([np.ones(n), rng.normal(size=(n, R - 1))])[:, :R]
    y = rng.normal(scale=spread, size=n)
    return Dataset(y=y, Lambda=Lambda, Psi=Psi)


def random_instance(n, H, P, R, seed, a_sigma=2.0, b_sigma=2.0):
    """Config plus data actually generated from a prior draw of the model."""
    rng = np.random.default_rng(seed)
    config = ModelConfig.standard(H=H, P=P, R=R, a_sigma=a_sigma, b_sigma=b_sigma)
    data = random_dataset(n, P, R, rng)
    params = sample_prior_params(config, rng)
    from lsbp.model import sample_observations

    y, _ = sample_observations(params, data.Lambda, data.Psi, rng)
    data.y = y
    return config, data


def random_params(config, rng, sigma_lo=0.3, sigma_hi=2.0):
    """Well-scaled parameter point (bounded variances, moderate coefficients)."""
    H, P, R = config.H, config.P, config.R
    return MixtureParams(
        alpha=rng.normal(scale=0.8, size=(H - 1, R)),
        beta=rng.normal(scale=0.8, size=(H, P)),
        sigma2=rng.uniform(sigma_lo, sigma_hi, size=H),
    )
