"""Shared scenario builders for the test suite."""

import numpy as np
import pytest

from hwmimo.model import HardwareProfile, LoMode, Scenario
from hwmimo.pilots import PlacementKind, dft_book, place, temporal_book


def random_scenario(
    rng: np.random.Generator,
    L: int = 2,
    K: int = 2,
    N: int = 4,
    T: int = 12,
    subarrays: int | None = None,
    factorized: bool = False,
    sigma2: float = 1.0,
) -> Scenario:
    """Random well-conditioned scenario with O(1) gains and powers."""
    A = subarrays if subarrays is not None else (N if not factorized else 2)
    dim = A if factorized else N
    cov = rng.uniform(0.2, 2.0, size=(L, L, K, dim))
    powers = rng.uniform(0.5, 2.0, size=(L, K))
    return Scenario(L=L, K=K, N=N, T=T, cov=cov, powers=powers, sigma2=sigma2, subarrays=A)


def make_book(scenario: Scenario, kind: str = "dft", placement: str = "beginning", B: int | None = None):
    B = B if B is not None else scenario.K
    pl = place(PlacementKind(placement), scenario.T, B)
    if kind == "temporal":
        return temporal_book(scenario.powers, pl)
    return dft_book(scenario.powers, pl)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def impaired_profile(lo=LoMode.SLO, delta=1e-3, kappa2=0.01, xi=1.3, sigma2=1.0):
    return HardwareProfile(delta=delta, kappa2=kappa2, xi=xi * sigma2, lo_mode=lo)
