"""Phase-drift-aware LMMSE channel estimation.

The estimator works on the stacked pilot observation psi_j (length B*N) and
produces, for every link (l, k) and any channel use t, the linear MMSE
estimate of the *effective* channel (block-fading channel rotated by the
receiver phase-drift at time t).  Two structural facts keep this cheap:

* Phase-drifts damp pilot correlations by exp(-delta/2 |t1 - t2|), which
  enters through a per-pilot damping vector d(t) and a damped Gram matrix
  Xbar of the pilot sequences.
* With diagonal covariances the BN x BN pilot covariance matrix is a sum of
  Kronecker products; when covariance diagonals are constant on subarrays it
  collapses exactly to an (A*B) x (A*B) matrix, so all solves are done in
  the reduced dimension no matter how large N is.

The estimator formula is identical for common and separate oscillators.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .model import HardwareProfile, Scenario
from .pilots import PilotBook


def damping_vector(delta: float, tau, ts) -> np.ndarray:
    """Per-pilot damping exp(-delta/2 |t - tau_b|); shape (len(ts), B)."""
    tau = np.asarray(tau, dtype=float)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    return np.exp(-0.5 * delta * np.abs(ts[:, None] - tau[None, :]))


def damped_pilot_grams(book: PilotBook, delta: float) -> np.ndarray:
    """Damped outer products of all pilot sequences, shape (L, K, B, B).

    Entry (b1, b2) is x(tau_b1) x*(tau_b2) exp(-delta/2 |tau_b1 - tau_b2|);
    the diagonal is the per-symbol pilot energy.
    """
    tau = np.asarray(book.tau, dtype=float)
    kern = np.exp(-0.5 * delta * np.abs(tau[:, None] - tau[None, :]))
    outer = np.einsum("lbk,lck->lkbc", book.sequences, book.sequences.conj())
    return outer * kern


@dataclass(eq=False)
class EstimatorCache:
    """Everything that is reusable across estimation calls for a fixed
    (scenario, hardware, pilot book): damped pilot Grams, the reduced pilot
    covariance per receiving cell together with its inverse, and the
    per-subarray diagonal blocks of that inverse which drive all moment and
    error-covariance formulas."""

    scenario: Scenario
    hw: HardwareProfile
    book: PilotBook
    lam: np.ndarray  # (L, L, K, Ae) reduced covariance diagonals
    mult: int  # antennas per stored covariance entry
    Xbar: np.ndarray  # (L, K, B, B) damped pilot Grams
    X: np.ndarray  # Xbar + kappa2 * diag(|pilot|^2)
    _psi_inv: dict = field(default_factory=dict)
    _pblocks: dict = field(default_factory=dict)
    _gains: dict = field(default_factory=dict)

    _GAIN_MEMO_LIMIT = 16384  # estimation is linear in psi; keep hot gains

    @property
    def B(self) -> int:
        return self.book.B

    @property
    def Ae(self) -> int:
        return self.lam.shape[-1]

    def d_delta(self, ts) -> np.ndarray:
        return damping_vector(self.hw.delta, self.book.tau, ts)

    # -- reduced pilot covariance ------------------------------------------

    def _build_cell(self, j: int) -> None:
        B, Ae = self.B, self.Ae
        lam_j = self.lam[j]  # (L, K, Ae)
        tmp = np.einsum("lkbc,lka->bca", self.X, lam_j)
        psi = np.einsum("bca,ae->bace", tmp, np.eye(Ae)).reshape(B * Ae, B * Ae)
        psi[np.diag_indices_from(psi)] += self.hw.xi
        cho = scipy.linalg.cho_factor(psi)
        inv = scipy.linalg.cho_solve(cho, np.eye(B * Ae, dtype=complex))
        self._psi_inv[j] = inv
        inv4 = inv.reshape(B, Ae, B, Ae)
        ar = np.arange(Ae)
        self._pblocks[j] = np.transpose(inv4, (1, 3, 0, 2))[ar, ar]  # (Ae, B, B)

    def psi_inverse(self, j: int) -> np.ndarray:
        """Inverse of the reduced pilot covariance of cell j, (B*Ae, B*Ae)."""
        if j not in self._psi_inv:
            self._build_cell(j)
        return self._psi_inv[j]

    def pblocks(self, j: int) -> np.ndarray:
        """Per-subarray diagonal B x B blocks of the inverse, (Ae, B, B)."""
        if j not in self._pblocks:
            self._build_cell(j)
        return self._pblocks[j]

    # -- estimation gains ---------------------------------------------------

    def reduced_gain(self, j: int, l: int, k: int, t) -> np.ndarray:
        """Reduced estimation gain, (Ae, B*Ae): the full N x BN gain is this
        matrix expanded blockwise over the N/Ae antennas of each subarray.
        Memoized per (j, l, k, t) so Monte Carlo loops pay one product per
        application."""
        key = (j, l, k, float(t))
        hit = self._gains.get(key)
        if hit is not None:
            return hit
        dm = self.d_delta(t)[0]
        dxc = self.book.sequences[l, :, k].conj() * dm  # (B,)
        inv3 = self.psi_inverse(j).reshape(self.B, self.Ae, self.B * self.Ae)
        gain = self.lam[j, l, k][:, None] * np.einsum("b,baq->aq", dxc, inv3)
        if len(self._gains) < self._GAIN_MEMO_LIMIT:
            self._gains[key] = gain
        return gain

    def apply_reduced_gain(self, gain: np.ndarray, psi: np.ndarray) -> np.ndarray:
        """Apply a reduced gain to stacked observations psi (..., B*N)."""
        lead = psi.shape[:-1]
        psi_r = psi.reshape(lead + (self.B * self.Ae, self.mult))
        out = np.einsum("aq,...qr->...ar", gain, psi_r)
        return out.reshape(lead + (self.Ae * self.mult,))


def build_cache(scenario: Scenario, hw: HardwareProfile, book: PilotBook) -> EstimatorCache:
    """Precompute the t-independent part of the estimator for all cells.

    Per-cell factorizations are built lazily on first use, so asking for a
    single receiving cell never pays for the other L - 1.
    """
    if book.L != scenario.L or book.K != scenario.K:
        raise ValueError("pilot book dimensions do not match the scenario")
    if book.T != scenario.T:
        raise ValueError(f"pilot book block length {book.T} != scenario T {scenario.T}")
    Xbar = damped_pilot_grams(book, hw.delta)
    energy = np.abs(book.sequences.transpose(0, 2, 1)) ** 2  # (L, K, B)
    X = Xbar + hw.kappa2 * np.einsum("lkb,bc->lkbc", energy, np.eye(book.B))
    return EstimatorCache(
        scenario=scenario,
        hw=hw,
        book=book,
        lam=scenario.cov,
        mult=scenario.multiplicity,
        Xbar=Xbar,
        X=X,
    )


@dataclass(frozen=True, eq=False)
class EstimateResult:
    """LMMSE estimate of one effective channel plus its error statistics.

    ``error_diag`` is the diagonal of the estimation error covariance (the
    full matrix is diagonal here because covariances are diagonal and the
    pilot covariance has Kronecker structure); ``mse`` is its trace.
    """

    hhat: np.ndarray
    error_diag: np.ndarray
    mse: float


def lmmse_estimate(cache: EstimatorCache, psi: np.ndarray, j: int, l: int, k: int, t) -> EstimateResult:
    """Estimate the effective channel of UE k in cell l as seen by cell j at
    channel use t, from cell j's stacked pilot observation psi."""
    psi = np.asarray(psi)
    expected = cache.B * cache.scenario.N
    if psi.shape != (expected,):
        raise ValueError(f"psi must have shape ({expected},), got {psi.shape}")
    gain = cache.reduced_gain(j, l, k, t)
    hhat = cache.apply_reduced_gain(gain, psi)
    diag, mse = error_covariance(cache, j, l, k, t)
    return EstimateResult(hhat=hhat, error_diag=diag, mse=mse)


def error_covariance(cache: EstimatorCache, j: int, l: int, k: int, t) -> tuple[np.ndarray, float]:
    """Diagonal of the estimation error covariance at time t and its trace.

    Entries never exceed the prior covariance diagonal, and they return to
    it when the damping to every pilot goes to zero.
    """
    dm = cache.d_delta(t)[0]
    dx = dm * cache.book.sequences[l, :, k]
    quad = np.einsum("b,abc,c->a", dx.conj(), cache.pblocks(j), dx).real
    lam = cache.lam[j, l, k]
    reduced = lam - lam**2 * quad
    diag = np.repeat(reduced, cache.mult)
    return diag, float(cache.mult * reduced.sum())


def lmmse_estimate_colocated(
    cache: EstimatorCache, psi: np.ndarray, j: int, l: int, k: int, t
) -> EstimateResult:
    """Co-located shortcut: when every link covariance is a scaled identity,
    the estimate is a B-dimensional combination applied identically to all
    antennas.  Computed through the B x B system only; numerically identical
    to :func:`lmmse_estimate`."""
    if cache.Ae != 1:
        raise ValueError("co-located path requires scaled-identity covariances (A = 1)")
    N, B = cache.scenario.N, cache.B
    psi = np.asarray(psi)
    if psi.shape != (B * N,):
        raise ValueError(f"psi must have shape ({B * N},), got {psi.shape}")
    lam_j = cache.lam[j, :, :, 0]  # (L, K)
    omega = np.einsum("lk,lkbc->bc", lam_j, cache.X) + cache.hw.xi * np.eye(B)
    dm = cache.d_delta(t)[0]
    dx = dm * cache.book.sequences[l, :, k]
    sol = scipy.linalg.solve(omega, dx, assume_a="pos")  # Omega^{-1} D x
    lam = lam_j[l, k]
    hhat = lam * (sol.conj() @ psi.reshape(B, N))
    c = lam * (1.0 - lam * float(np.real(dx.conj() @ sol)))
    return EstimateResult(hhat=hhat, error_diag=np.full(N, c), mse=float(N * c))
