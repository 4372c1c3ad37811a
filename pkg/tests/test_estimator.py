import numpy as np
import pytest

from hwmimo.channel import draw_block, stack_pilot_observation
from hwmimo.estimator import (
    build_cache,
    damped_pilot_grams,
    error_covariance,
    lmmse_estimate,
    lmmse_estimate_colocated,
)
from hwmimo.model import HardwareProfile, LoMode, Scenario, conventional_profile, expand_covariance
from hwmimo.pilots import place, temporal_book

from conftest import impaired_profile, make_book, random_scenario


# -- independent oracles ------------------------------------------------------


def brute_force_estimate(scen, hw, book, psi_vec, j, l, k, t):
    """Direct dense evaluation of the estimator and its error covariance."""
    B, N = book.B, scen.N
    lam = scen.full_cov()[j]
    grams = damped_pilot_grams(book, hw.delta)
    Psi = hw.xi * np.eye(B * N, dtype=complex)
    for ll in range(scen.L):
        for mm in range(scen.K):
            energy = np.abs(book.sequences[ll, :, mm]) ** 2
            X = grams[ll, mm] + hw.kappa2 * np.diag(energy)
            Psi += np.kron(X, np.diag(lam[ll, mm]))
    tau = np.asarray(book.tau, dtype=float)
    dm = np.exp(-0.5 * hw.delta * np.abs(t - tau))
    left = np.kron((book.sequences[l, :, k].conj() * dm)[None, :], np.diag(lam[l, k]))
    gain = left @ np.linalg.inv(Psi)
    hhat = gain @ psi_vec
    C = np.diag(lam[l, k]) - gain @ left.conj().T
    return hhat, np.real(np.diag(C))


def conventional_mmse_estimate(scen, book, psi_vec, j, l, k, sigma2):
    """Classical multi-cell MMSE estimator for the impairment-free model,
    coded independently of the production path."""
    B, N = book.B, scen.N
    lam = scen.full_cov()[j]
    Psi = sigma2 * np.eye(B * N, dtype=complex)
    for ll in range(scen.L):
        for mm in range(scen.K):
            x = book.sequences[ll, :, mm]
            Psi += np.kron(np.outer(x, x.conj()), np.diag(lam[ll, mm]))
    left = np.kron(book.sequences[l, :, k].conj()[None, :], np.diag(lam[l, k]))
    return left @ np.linalg.solve(Psi, psi_vec)


# -- hand-computed scalar case ------------------------------------------------


def scalar_setup(xi=1.0, p=1.0, lam=1.0, delta=0.0, kappa2=0.0):
    scen = Scenario(
        L=1, K=1, N=1, T=3,
        cov=np.full((1, 1, 1, 1), lam),
        powers=np.full((1, 1), p),
        sigma2=1.0,
    )
    book = temporal_book(scen.powers, place("beginning", scen.T, 1))
    hw = HardwareProfile(delta=delta, kappa2=kappa2, xi=xi)
    return scen, hw, book


def test_scalar_gain_is_half():
    # lam=p=1, xi=1: estimate is psi/2, error covariance 1/2
    scen, hw, book = scalar_setup()
    cache = build_cache(scen, hw, book)
    psi = np.array([0.8 - 0.4j])
    res = lmmse_estimate(cache, psi, 0, 0, 0, t=2)
    np.testing.assert_allclose(res.hhat, psi / 2)
    np.testing.assert_allclose(res.error_diag, [0.5])
    assert res.mse == pytest.approx(0.5)
    # classical single-link MMSE gain lam*sqrt(p)/(p*lam + sigma2)
    assert np.real(res.hhat[0] / psi[0]) == pytest.approx(1.0 * 1.0 / (1.0 + 1.0))


def test_scalar_colocated_path_same_gain():
    scen, hw, book = scalar_setup()
    cache = build_cache(scen, hw, book)
    psi = np.array([1.0 + 0.0j])
    a = lmmse_estimate(cache, psi, 0, 0, 0, t=2)
    b = lmmse_estimate_colocated(cache, psi, 0, 0, 0, t=2)
    np.testing.assert_allclose(a.hhat, b.hhat, rtol=1e-12)
    np.testing.assert_allclose(a.error_diag, b.error_diag, rtol=1e-12)


def test_cache_scalar_pilot_covariance():
    # single UE, one pilot: reduced covariance is p*lam + xi
    scen, hw, book = scalar_setup(xi=1.7, p=2.0, lam=0.5)
    cache = build_cache(scen, hw, book)
    inv = cache.psi_inverse(0)
    assert inv.shape == (1, 1)
    assert inv[0, 0] == pytest.approx(1.0 / (2.0 * 0.5 + 1.7))


# -- structure of the cached matrices ----------------------------------------


def test_damped_grams_hermitian_and_diagonal(rng):
    scen = random_scenario(rng, L=2, K=3, N=2, T=16)
    book = make_book(scen, "dft", "uniform", B=4)
    grams = damped_pilot_grams(book, delta=0.02)
    for l in range(2):
        for k in range(3):
            G = grams[l, k]
            np.testing.assert_allclose(G, G.conj().T, atol=1e-14)
            np.testing.assert_allclose(
                np.diag(G).real, np.abs(book.sequences[l, :, k]) ** 2, atol=1e-14
            )


def test_damped_grams_delta_limits(rng):
    scen = random_scenario(rng, T=40)
    book = make_book(scen, "dft", "uniform", B=4)
    x = book.sequences
    g0 = damped_pilot_grams(book, delta=0.0)
    np.testing.assert_allclose(g0, np.einsum("lbk,lck->lkbc", x, x.conj()), atol=1e-14)
    ginf = damped_pilot_grams(book, delta=1e9)
    off = ginf - np.einsum("lkbc,bc->lkbc", ginf, np.eye(4))
    assert np.max(np.abs(off)) < 1e-300


def test_cache_delta_zero_damping_is_identity(rng):
    scen = random_scenario(rng)
    cache = build_cache(scen, conventional_profile(1.0), make_book(scen))
    np.testing.assert_array_equal(cache.d_delta([5.0])[0], np.ones(cache.B))


# -- estimator correctness ----------------------------------------------------


@pytest.mark.parametrize("factorized", [False, True])
@pytest.mark.parametrize("book_kind", ["temporal", "dft"])
def test_estimator_matches_dense_oracle(rng, factorized, book_kind):
    scen = random_scenario(rng, L=2, K=2, N=4, T=14, factorized=factorized, subarrays=2)
    hw = impaired_profile(lo=LoMode.SLO, delta=4e-3, kappa2=0.05, xi=1.4)
    book = make_book(scen, book_kind, "uniform")
    cache = build_cache(scen, hw, book)
    block = draw_block(scen, hw, book, rng_seed=17, cell=1)
    psi = stack_pilot_observation(block, book.tau)
    for (l, k, t) in [(0, 0, 3), (1, 1, 9), (0, 1, 14)]:
        got = lmmse_estimate(cache, psi, 1, l, k, t)
        want_h, want_c = brute_force_estimate(scen, hw, book, psi, 1, l, k, t)
        np.testing.assert_allclose(got.hhat, want_h, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(got.error_diag, want_c, rtol=1e-10, atol=1e-12)


def test_degenerates_to_conventional_mmse(rng):
    scen = random_scenario(rng, L=2, K=2, N=3, T=10)
    hw = conventional_profile(scen.sigma2)
    book = make_book(scen, "dft")
    cache = build_cache(scen, hw, book)
    block = draw_block(scen, hw, book, rng_seed=3)
    psi = stack_pilot_observation(block, book.tau)
    for (l, k) in [(0, 0), (1, 1)]:
        got = lmmse_estimate(cache, psi, 0, l, k, t=7)
        want = conventional_mmse_estimate(scen, book, psi, 0, l, k, scen.sigma2)
        np.testing.assert_allclose(got.hhat, want, rtol=1e-10, atol=1e-13)


def test_colocated_matches_general_path(rng):
    scen = random_scenario(rng, L=2, K=2, N=6, T=12, factorized=True, subarrays=1)
    hw = impaired_profile(lo=LoMode.CLO, delta=2e-3, kappa2=0.02)
    book = make_book(scen, "dft")
    cache = build_cache(scen, hw, book)
    block = draw_block(scen, hw, book, rng_seed=8)
    psi = stack_pilot_observation(block, book.tau)
    for (l, k, t) in [(0, 0, 4), (1, 0, 11)]:
        a = lmmse_estimate(cache, psi, 0, l, k, t)
        b = lmmse_estimate_colocated(cache, psi, 0, l, k, t)
        np.testing.assert_allclose(b.hhat, a.hhat, rtol=1e-10)
        np.testing.assert_allclose(b.error_diag, a.error_diag, rtol=1e-10)
        # scaled-identity error covariance: constant diagonal
        assert np.ptp(b.error_diag) == 0.0


def test_colocated_rejects_general_covariance(rng):
    scen = random_scenario(rng, N=4)
    cache = build_cache(scen, impaired_profile(), make_book(scen))
    with pytest.raises(ValueError):
        lmmse_estimate_colocated(cache, np.zeros(cache.B * 4, complex), 0, 0, 0, 2)


def test_kronecker_reduction_equals_full_solve(rng):
    # same physical scenario described factorized and expanded
    scen_f = random_scenario(rng, L=2, K=2, N=8, T=12, factorized=True, subarrays=2)
    full = expand_covariance(scen_f.cov, scen_f.N, 2)
    scen_d = Scenario(
        L=2, K=2, N=8, T=12, cov=full, powers=scen_f.powers, sigma2=1.0, subarrays=2
    )
    hw = impaired_profile(lo=LoMode.SLO, delta=3e-3, kappa2=0.04)
    book = make_book(scen_f, "dft", "uniform")
    cache_f = build_cache(scen_f, hw, book)
    cache_d = build_cache(scen_d, hw, book)
    block = draw_block(scen_d, hw, book, rng_seed=21)
    psi = stack_pilot_observation(block, book.tau)
    for (l, k, t) in [(0, 1, 2), (1, 0, 12)]:
        a = lmmse_estimate(cache_f, psi, 0, l, k, t)
        b = lmmse_estimate(cache_d, psi, 0, l, k, t)
        np.testing.assert_allclose(a.hhat, b.hhat, rtol=1e-10)
        np.testing.assert_allclose(a.error_diag, b.error_diag, rtol=1e-10)
        assert a.mse == pytest.approx(b.mse, rel=1e-10)


def test_estimate_vanishes_far_from_pilots(rng):
    scen = random_scenario(rng, T=2000)
    hw = impaired_profile(delta=0.5)  # heavy drift
    book = make_book(scen, "dft", "beginning")
    cache = build_cache(scen, hw, book)
    block = draw_block(scen, hw, book, rng_seed=6)
    psi = stack_pilot_observation(block, book.tau)
    res = lmmse_estimate(cache, psi, 0, 0, 0, t=1900)
    assert np.max(np.abs(res.hhat)) < 1e-12
    lam = scen.full_cov()[0, 0, 0]
    np.testing.assert_allclose(res.error_diag, lam, rtol=1e-10)


def test_error_covariance_bounded_by_prior(rng):
    scen = random_scenario(rng, L=2, K=2, N=4, T=20)
    hw = impaired_profile(delta=1e-2, kappa2=0.1)
    cache = build_cache(scen, hw, make_book(scen, "dft", "uniform"))
    lam = scen.full_cov()
    for t in [1, 7, 20]:
        for (l, k) in [(0, 0), (1, 1)]:
            diag, mse = error_covariance(cache, 0, l, k, t)
            assert np.all(diag >= -1e-12)
            assert np.all(diag <= lam[0, l, k] + 1e-12)
            assert mse == pytest.approx(diag.sum())


def test_mse_grows_with_distance_past_last_pilot(rng):
    scen = random_scenario(rng, T=60)
    hw = impaired_profile(delta=5e-2)
    cache = build_cache(scen, hw, make_book(scen, "dft", "beginning"))
    mses = [error_covariance(cache, 0, 0, 0, t)[1] for t in range(3, 61)]
    assert np.all(np.diff(mses) >= -1e-12)


def test_estimation_statistics_monte_carlo(rng):
    # light-weight check of the defining LMMSE properties; the full-accuracy
    # version runs in the acceptance suite
    scen = random_scenario(rng, L=2, K=2, N=2, T=8)
    hw = impaired_profile(lo=LoMode.SLO, delta=5e-3, kappa2=0.05)
    book = make_book(scen, "dft")
    cache = build_cache(scen, hw, book)
    t, l, k = 6, 0, 1
    M = 4000
    err_sq = 0.0
    cross = np.zeros((scen.N, book.B * scen.N), dtype=complex)
    for r in range(M):
        block = draw_block(scen, hw, book, rng_seed=55, realization=r)
        psi = stack_pilot_observation(block, book.tau)
        est = lmmse_estimate(cache, psi, 0, l, k, t)
        err = block.effective_channel(l, k, t) - est.hhat
        err_sq += np.sum(np.abs(err) ** 2)
        cross += np.outer(err, psi.conj())
    _, mse = error_covariance(cache, 0, l, k, t)
    assert err_sq / M == pytest.approx(mse, rel=0.08)
    assert np.max(np.abs(cross / M)) < 10 / np.sqrt(M)


def test_estimation_mse_matches_for_common_oscillator(rng):
    # the estimator (and its closed-form MSE) is oscillator-topology
    # independent; verify empirically under a common LO as well
    scen = random_scenario(rng, L=2, K=2, N=2, T=8)
    hw = impaired_profile(lo=LoMode.CLO, delta=5e-3, kappa2=0.05)
    book = make_book(scen, "dft")
    cache = build_cache(scen, hw, book)
    t, l, k = 6, 1, 0
    M = 4000
    err_sq = 0.0
    for r in range(M):
        block = draw_block(scen, hw, book, rng_seed=66, realization=r)
        psi = stack_pilot_observation(block, book.tau)
        est = lmmse_estimate(cache, psi, 0, l, k, t)
        err_sq += np.sum(np.abs(block.effective_channel(l, k, t) - est.hhat) ** 2)
    _, mse = error_covariance(cache, 0, l, k, t)
    assert err_sq / M == pytest.approx(mse, rel=0.08)
