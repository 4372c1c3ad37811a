"""Monte Carlo evaluation of the uplink SINR expectations for arbitrary
receive filters.

Each trial draws channels, phase-drift trajectories and noises, forms the
stacked pilot observation, estimates channels, builds the receive filter and
accumulates the four quantities entering the SINR: filter energy, desired
inner product, per-link interference power and the distortion cross moment.
The distortion moment is computed through its conditional variance given the
channel draw (no distortion samples needed), which removes an entire noise
source from the estimate without changing its expectation.

Trials are split into fixed-size chunks, each driven by its own counter-based
substream and reduced in chunk order, so results are bit-identical for any
thread count.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import rng as _rng
from .estimator import EstimatorCache, build_cache, error_covariance
from .model import HardwareProfile, LoMode, Scenario
from .pilots import PilotBook
from .rates import NumericalInvariantError, RateReport

_CHUNK_TARGET_BYTES = 64 * 2**20


class FilterKind(str, Enum):
    MRC = "mrc"
    MMSE = "mmse"


@dataclass(frozen=True)
class McConfig:
    """Trial count, master seed and filter choice for one simulation."""

    trials: int
    seed: int = 0
    filter_kind: FilterKind = FilterKind.MRC
    report_confidence: bool = True
    batches: int = 100
    threads: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass(frozen=True, eq=False)
class McMoments:
    """Sample means of the four SINR expectations with batch-means standard
    errors.  ``first`` keeps its imaginary part so tests can verify it is
    statistically zero."""

    trials: int
    norm2: float
    norm2_se: float
    first: complex
    first_se: float
    second: np.ndarray  # (L, K)
    second_se: np.ndarray
    distortion: float
    distortion_se: float


def _batch_se(values: np.ndarray, batches: int, enabled: bool = True) -> np.ndarray:
    """Standard error along the first axis via batch means."""
    if not enabled:
        return np.zeros(values.shape[1:])
    n = values.shape[0]
    nb = min(batches, n)
    means = np.stack([chunk.mean(axis=0) for chunk in np.array_split(values, nb)])
    if nb < 2:
        return np.zeros_like(np.abs(means[0]))
    return np.abs(means).std(axis=0, ddof=1) / math.sqrt(nb)


def mmse_filter(
    estimates: np.ndarray,
    error_covs: np.ndarray,
    scenario: Scenario,
    hw: HardwareProfile,
    j: int,
    k: int,
) -> np.ndarray:
    """Approximate MMSE receive filter for UE k of cell j.

    estimates: (L, K, N) estimated effective channels at the time of
    interest; error_covs: (L, K, N) diagonals of the estimation error
    covariances.  A leading trial axis is allowed on ``estimates``.  The
    regularizing xi*I keeps the system solvable for any estimate quality.
    """
    single = estimates.ndim == 3
    est = estimates[None] if single else estimates
    p = scenario.powers
    outer = np.einsum("lk,clkn,clkm->cnm", p, est, est.conj())
    diag = np.einsum("lk,lkn->n", p, error_covs)
    diag = diag + hw.kappa2 * (
        np.einsum("lk,clkn->cn", p, np.abs(est) ** 2) + diag[None, :]
    )
    M = outer
    idx = np.arange(scenario.N)
    M[:, idx, idx] += diag + hw.xi
    v = np.linalg.solve(M, est[:, j, k, :][..., None])[..., 0]
    return v[0] if single else v


def _chunk_sizes(trials: int, per_trial_bytes: int) -> list:
    size = max(1, min(trials, _CHUNK_TARGET_BYTES // max(per_trial_bytes, 1)))
    n_full, rem = divmod(trials, size)
    return [size] * n_full + ([rem] if rem else [])


@dataclass(frozen=True, eq=False)
class _TrialValues:
    """Per-trial samples of the SINR ingredients at each evaluated time."""

    norm2: np.ndarray  # (C, nt)
    first: np.ndarray  # (C, nt) complex
    second: np.ndarray  # (C, nt, L, K)
    distortion: np.ndarray  # (C, nt)


def _draw_world(
    cache: EstimatorCache, j: int, ts: np.ndarray, chunk_index: int, size: int, seed: int
):
    """One chunk of trials: channels, phase rotations at the evaluation times
    and the stacked pilot observation of cell j."""
    scen, hw, book = cache.scenario, cache.hw, cache.book
    L, K, N, B = scen.L, scen.K, scen.N, book.B
    lam = scen.full_cov()[j]  # (L, K, N)
    tau = np.asarray(book.tau, dtype=int)

    h = _rng.complex_normal(
        _rng.substream(seed, chunk_index, j, _rng.CHANNEL), lam, (size, L, K, N)
    )

    times = np.unique(np.concatenate([tau.astype(float), ts]))
    n_osc = N if hw.lo_mode is LoMode.SLO else 1
    phi = _draw_chunk_phases(hw.delta, times, n_osc, seed, chunk_index, j, size)
    rot = np.exp(1j * phi)  # (size, n_times, n_osc)
    where = {t: i for i, t in enumerate(times)}
    rot_tau = rot[:, [where[float(t)] for t in tau], :]  # (size, B, n_osc)
    rot_ts = rot[:, [where[float(t)] for t in ts], :]  # (size, nt, n_osc)

    clean = np.einsum("lbk,slkn->sbn", book.sequences, h)
    energy = np.abs(book.sequences.transpose(0, 2, 1)) ** 2  # (L, K, B)
    ups_var = hw.kappa2 * np.einsum("lkb,slkn->sbn", energy, np.abs(h) ** 2)
    upsilon = _rng.complex_normal(
        _rng.substream(seed, chunk_index, j, _rng.DISTORTION), ups_var, (size, B, N)
    )
    eta = _rng.complex_normal(
        _rng.substream(seed, chunk_index, j, _rng.RECEIVER_NOISE), hw.xi, (size, B, N)
    )
    psi = (rot_tau * clean + upsilon + eta).reshape(size, B * N)
    return h, rot_ts, psi


def _simulate_chunk(
    cache: EstimatorCache,
    j: int,
    k: int,
    ts: np.ndarray,
    chunk_index: int,
    size: int,
    seed: int,
    filter_kind: FilterKind,
) -> _TrialValues:
    scen, hw = cache.scenario, cache.hw
    L, K, N = scen.L, scen.K, scen.N
    h, rot_ts, psi = _draw_world(cache, j, ts, chunk_index, size, seed)
    dist_weight = hw.kappa2 * np.einsum("lk,slkn->sn", scen.powers, np.abs(h) ** 2)

    nt = ts.size
    norm2 = np.empty((size, nt))
    first = np.empty((size, nt), dtype=complex)
    second = np.empty((size, nt, L, K))
    distortion = np.empty((size, nt))
    for it, t in enumerate(ts):
        if filter_kind is FilterKind.MRC:
            gain = cache.reduced_gain(j, j, k, t)
            v = cache.apply_reduced_gain(gain, psi)
        else:
            est = np.empty((size, L, K, N), dtype=complex)
            ecov = np.empty((L, K, N))
            for l in range(L):
                for m in range(K):
                    est[:, l, m, :] = cache.apply_reduced_gain(
                        cache.reduced_gain(j, l, m, t), psi
                    )
                    ecov[l, m] = error_covariance(cache, j, l, m, t)[0]
            v = mmse_filter(est, ecov, scen, hw, j, k)
        h_t = rot_ts[:, it, None, None, :] * h  # (size, L, K, N)
        inner = np.einsum("sn,slkn->slk", v.conj(), h_t)
        norm2[:, it] = np.einsum("sn,sn->s", v.conj(), v).real
        first[:, it] = inner[:, j, k]
        second[:, it] = np.abs(inner) ** 2
        distortion[:, it] = np.einsum("sn,sn->s", np.abs(v) ** 2, dist_weight)
    return _TrialValues(norm2=norm2, first=first, second=second, distortion=distortion)


def _draw_chunk_phases(delta, times, n_osc, seed, chunk_index, cell, size):
    from .channel import draw_phases

    gen = _rng.substream(seed, chunk_index, cell, _rng.PHASE)
    return draw_phases(delta, times, n_osc, gen, trials=size)


def _collect_values(
    cache: EstimatorCache, j: int, k: int, ts, mc: McConfig
) -> _TrialValues:
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    scen = cache.scenario
    L, K, N, B = scen.L, scen.K, scen.N, cache.B
    n_times = len(set(cache.book.tau) | set(ts.tolist()))
    per_trial = 16 * (
        2 * L * K * N
        + n_times * (N if cache.hw.lo_mode is LoMode.SLO else 1)
        + 3 * B * N
        + ts.size * (L * K + 4)
    )
    if mc.filter_kind is FilterKind.MMSE:
        per_trial += 16 * (L * K * N + N * N)
    sizes = _chunk_sizes(mc.trials, per_trial)

    def run(args):
        idx, size = args
        return _simulate_chunk(cache, j, k, ts, idx, size, mc.seed, mc.filter_kind)

    jobs = list(enumerate(sizes))
    if mc.threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=mc.threads) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(job) for job in jobs]
    return _TrialValues(
        norm2=np.concatenate([p.norm2 for p in parts]),
        first=np.concatenate([p.first for p in parts]),
        second=np.concatenate([p.second for p in parts]),
        distortion=np.concatenate([p.distortion for p in parts]),
    )


def estimate_moments(
    scenario: Scenario,
    hw: HardwareProfile,
    pilots: PilotBook,
    filter_kind: FilterKind,
    j: int,
    k: int,
    t,
    mc: McConfig,
    cache: EstimatorCache | None = None,
) -> McMoments:
    """Sample means of the four SINR expectations for UE k of cell j at
    channel use t."""
    cache = cache or build_cache(scenario, hw, pilots)
    cfg = McConfig(
        trials=mc.trials, seed=mc.seed, filter_kind=filter_kind,
        report_confidence=mc.report_confidence, batches=mc.batches, threads=mc.threads,
    )
    vals = _collect_values(cache, j, k, [t], cfg)
    conf = mc.report_confidence
    return McMoments(
        trials=mc.trials,
        norm2=float(vals.norm2[:, 0].mean()),
        norm2_se=float(_batch_se(vals.norm2[:, 0], mc.batches, conf)),
        first=complex(vals.first[:, 0].mean()),
        first_se=float(_batch_se(vals.first[:, 0], mc.batches, conf)),
        second=vals.second[:, 0].mean(axis=0),
        second_se=_batch_se(vals.second[:, 0], mc.batches, conf),
        distortion=float(vals.distortion[:, 0].mean()),
        distortion_se=float(_batch_se(vals.distortion[:, 0], mc.batches, conf)),
    )


def _assemble_sinr(
    scenario: Scenario, hw: HardwareProfile, j: int, k: int, vals: _TrialValues
) -> np.ndarray:
    """Per-time SINR from the sample means of the expectations."""
    p = scenario.powers
    norm2 = vals.norm2.mean(axis=0)
    first = vals.first.mean(axis=0)
    second = vals.second.mean(axis=0)  # (nt, L, K)
    dist = vals.distortion.mean(axis=0)
    signal = p[j, k] * np.abs(first) ** 2
    inter = np.einsum("lk,tlk->t", p, second)
    den = inter - signal + dist + hw.xi * norm2
    # statistical tolerance: the subtraction can dip slightly negative
    floor = -3.0 * (np.abs(inter) + np.abs(signal)) / math.sqrt(vals.norm2.shape[0])
    if np.any(den < floor):
        raise NumericalInvariantError("MC SINR denominator negative beyond tolerance")
    return signal / np.maximum(den, np.finfo(float).tiny)


def mc_rate(
    scenario: Scenario,
    hw: HardwareProfile,
    pilots: PilotBook,
    filter_kind: FilterKind,
    mc: McConfig,
    j: int,
    k: int,
    cache: EstimatorCache | None = None,
    ts=None,
) -> RateReport:
    """Simulated ergodic rate of UE k in cell j: SINR assembled from the MC
    expectations at every data channel use, then averaged with the pilot
    overhead pre-log.  ``ts`` restricts evaluation to a subset of data times
    (the rate then averages over that subset, scaled by the data share)."""
    cache = cache or build_cache(scenario, hw, pilots)
    data = np.asarray(pilots.data_times(), dtype=float)
    eval_ts = data if ts is None else np.atleast_1d(np.asarray(ts, dtype=float))
    cfg = McConfig(
        trials=mc.trials, seed=mc.seed, filter_kind=filter_kind,
        report_confidence=mc.report_confidence, batches=mc.batches, threads=mc.threads,
    )
    vals = _collect_values(cache, j, k, eval_ts, cfg)
    sinr_t = _assemble_sinr(scenario, hw, j, k, vals)
    share = len(data) / scenario.T
    rate = float(np.log2(1.0 + sinr_t).mean() * share)
    return RateReport(rate=rate, ts=eval_ts, sinr=sinr_t)


def empirical_mse(
    cache: EstimatorCache, j: int, l: int, k: int, ts, mc: McConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Sample-mean squared estimation error ||h(t) - hhat(t)||^2 at each
    requested channel use, with batch-means standard errors; the Monte Carlo
    counterpart of the closed-form error covariance trace."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    scen = cache.scenario
    per_trial = 16 * (2 * scen.L * scen.K * scen.N + 3 * cache.B * scen.N + ts.size * 2)
    sizes = _chunk_sizes(mc.trials, per_trial)

    def run(args):
        idx, size = args
        h, rot_ts, psi = _draw_world(cache, j, ts, idx, size, mc.seed)
        out = np.empty((size, ts.size))
        for it, t in enumerate(ts):
            est = cache.apply_reduced_gain(cache.reduced_gain(j, l, k, t), psi)
            h_t = rot_ts[:, it, :] * h[:, l, k, :]
            out[:, it] = np.sum(np.abs(h_t - est) ** 2, axis=-1)
        return out

    jobs = list(enumerate(sizes))
    if mc.threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=mc.threads) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(job) for job in jobs]
    errs = np.concatenate(parts)
    return errs.mean(axis=0), _batch_se(errs, mc.batches)
