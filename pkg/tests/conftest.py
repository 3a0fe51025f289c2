import math

import numpy as np
import pytest

from rsma_rrm.mcs import default_table
from rsma_rrm.model import AT_MOST_K, EXACT_K, PowerModel, SystemInstance


def two_user_instance(phi, snr_db=20.0, delta_sic=0.0, weights=(1.0, 1.0),
                      j=15, r_min=0.0, n_tx=4, admission=AT_MOST_K,
                      power_model=None):
    """Deterministic two-user setup: flat channel vs phase-ramp channel."""
    k = np.arange(n_tx)
    h = np.stack([np.ones(n_tx, dtype=complex), np.exp(1j * phi * k)])
    table = default_table() if j == 15 else default_table().truncated(j)
    pm = power_model or PowerModel(p_tx_max=10.0 ** (snr_db / 10.0))
    return SystemInstance(
        channels=h, sigma2=1.0, power=pm, k_admit=2,
        weights=np.asarray(weights, dtype=float), delta_sic=delta_sic,
        r_min=r_min, mcs=table, admission_mode=admission,
    )


def seeded_instance(seed, n_users=2, n_tx=4, k_admit=None, j=3, snr_db=13.0,
                    delta_sic=0.0, r_min=0.0, admission=EXACT_K,
                    power_model=None):
    """Random complex Gaussian channels, reproducible per seed."""
    rng = np.random.default_rng(seed)
    ch = (rng.standard_normal((n_users, n_tx))
          + 1j * rng.standard_normal((n_users, n_tx))) / math.sqrt(2.0)
    pm = power_model or PowerModel(p_tx_max=10.0 ** (snr_db / 10.0))
    return SystemInstance(
        channels=ch, sigma2=1.0, power=pm,
        k_admit=k_admit if k_admit is not None else n_users,
        delta_sic=delta_sic, r_min=r_min,
        mcs=default_table().truncated(j), admission_mode=admission,
    )


@pytest.fixture
def table():
    return default_table()
