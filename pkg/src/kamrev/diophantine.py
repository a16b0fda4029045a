"""Spectrum classification and small-divisor arithmetic for pairs (omega, Q).

The central inequality couples torus frequencies with the imaginary parts
of the normal spectrum:

    |<k, omega> + <K, beta>| >= gamma * |k|^(-tau)

for all integer k != 0 up to a horizon and all integer K with |K| <= 2.
Only a finite horizon is ever checked; downstream solvers need divisors
only up to twice the Fourier truncation order.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import UnpairedSpectrum
from .revmat import RevMatrix

# Fixed chunk schedule so the Monte-Carlo fraction is reproducible for a
# given seed regardless of how many workers execute the chunks.
MEASURE_CHUNKS = 64


@dataclass
class SpectrumClassification:
    """Eigenvalue census of a matrix anti-commuting with an involution.

    ell: nonzero purely-imaginary pairs; kappa: quadruplets off both axes;
    beta: positive imaginary parts (pairs first, then quadruplets);
    alpha: positive real parts of the quadruplets.
    """
    ell: int
    kappa: int
    beta: np.ndarray
    alpha: np.ndarray
    real_pairs: int
    zero_count: int
    dim: int

    def check_counts(self):
        total = 2 * self.ell + 4 * self.kappa + 2 * self.real_pairs + self.zero_count
        if total != self.dim:
            raise UnpairedSpectrum(f"counts 2*{self.ell}+4*{self.kappa}+2*{self.real_pairs}"
                                   f"+{self.zero_count} != {self.dim}")


def classify_spectrum(Q: RevMatrix, tol: float = 1e-9) -> SpectrumClassification:
    lam = np.linalg.eigvals(Q.Q)
    N = len(lam)
    scale = float(np.max(np.abs(lam))) if N else 0.0
    if scale == 0.0:
        return SpectrumClassification(0, 0, np.zeros(0), np.zeros(0), 0, N, N)
    thresh = tol * scale

    # Every nonzero eigenvalue must be matched with its negative.
    nonzero = [z for z in lam if abs(z) > thresh]
    pool = list(nonzero)
    while pool:
        z = pool.pop()
        if not pool:
            raise UnpairedSpectrum(f"eigenvalue {z} has no partner -z")
        dists = [abs(z + u) for u in pool]
        j = int(np.argmin(dists))
        if dists[j] > 10 * thresh:
            raise UnpairedSpectrum(f"eigenvalue {z} has no partner -z (closest miss {dists[j]:.3e})")
        pool.pop(j)

    zero_count = N - len(nonzero)
    imag_pos = [z.imag for z in nonzero if abs(z.real) <= thresh and z.imag > thresh]
    real_pos = [z.real for z in nonzero if abs(z.imag) <= thresh and z.real > thresh]
    quad = [(z.real, z.imag) for z in nonzero
            if z.real > thresh and z.imag > thresh]
    ell = len(imag_pos)
    kappa = len(quad)
    quad.sort(key=lambda ab: (-ab[1], -ab[0]))
    beta = np.array(sorted(imag_pos, reverse=True) + [b for _, b in quad])
    alpha = np.array([a for a, _ in quad])
    out = SpectrumClassification(ell, kappa, beta, alpha, len(real_pos), zero_count, N)
    out.check_counts()
    return out


@dataclass
class DiophantineParams:
    tau: float
    gamma: float
    kmax: int

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.kmax < 1:
            raise ValueError("kmax must be at least 1")

    def validate_for(self, n: int):
        if self.tau <= n - 1:
            raise ValueError(f"tau must exceed n-1 = {n - 1}")


def enumerate_modes(n: int, kmax: int) -> np.ndarray:
    """All k with 0 < |k|_1 <= kmax and positive first nonzero entry.

    One representative per +-k pair; sufficient for divisor scans because
    the normal-shift set K is symmetric.
    """
    out = []

    def rec(prefix, budget, started):
        if len(prefix) == n:
            if started:
                out.append(tuple(prefix))
            return
        lo = 0 if not started else -budget
        for c in range(lo, budget + 1):
            rec(prefix + [c], budget - abs(c), started or c != 0)

    rec([], kmax, False)
    return np.array(out, dtype=np.int64).reshape(len(out), n)


def normal_shifts(n_beta: int, top: int = 2) -> np.ndarray:
    """All integer K of length n_beta with |K|_1 <= top (K = 0 included)."""
    out = []

    def rec(prefix, budget):
        if len(prefix) == n_beta:
            out.append(tuple(prefix))
            return
        for c in range(-budget, budget + 1):
            rec(prefix + [c], budget - abs(c))

    rec([], top)
    return np.array(out, dtype=np.int64).reshape(len(out), n_beta)


@dataclass
class DiophantineReport:
    holds: bool
    worst_k: tuple
    worst_K: tuple
    margin: float
    horizon: int

    def to_json(self):
        return {
            "holds": bool(self.holds),
            "worst_k": [int(c) for c in self.worst_k],
            "worst_K": [int(c) for c in self.worst_K],
            "margin": float(self.margin),
            "horizon": int(self.horizon),
        }


def scan_divisors(omega, beta, tau: float, kmax: int):
    """Minimum of |<k,omega> + <K,beta>| * |k|^tau over the horizon.

    Returns (minimum, worst_k, worst_K).
    """
    omega = np.asarray(omega, dtype=float)
    beta = np.asarray(beta, dtype=float)
    modes = enumerate_modes(len(omega), kmax)
    weights = np.abs(modes).sum(axis=1).astype(float) ** tau
    dots = modes @ omega
    best = np.inf
    worst_k, worst_K = None, None
    for K in normal_shifts(len(beta)):
        shift = float(K @ beta) if len(beta) else 0.0
        vals = np.abs(dots + shift) * weights
        i = int(np.argmin(vals))
        if vals[i] < best:
            best = float(vals[i])
            worst_k, worst_K = tuple(int(c) for c in modes[i]), tuple(int(c) for c in K)
    return best, worst_k, worst_K


def is_diophantine_pair(omega, Q: RevMatrix | None, params: DiophantineParams,
                        spectrum: SpectrumClassification | None = None) -> DiophantineReport:
    """Check the pair condition up to the horizon; Q = None means beta empty
    (the classical vector condition)."""
    omega = np.asarray(omega, dtype=float)
    params.validate_for(len(omega))
    if spectrum is None and Q is not None:
        spectrum = classify_spectrum(Q)
    beta = spectrum.beta if spectrum is not None else np.zeros(0)
    best, worst_k, worst_K = scan_divisors(omega, beta, params.tau, params.kmax)
    # margin is signed headroom of the normalized divisor over gamma
    return DiophantineReport(best >= params.gamma, worst_k, worst_K,
                             best - params.gamma, params.kmax)


def complement_measure_estimate(box_omega, box_beta, tau: float, gamma: float,
                                sample_count: int, kmax: int,
                                seed: int = 0, workers: int = 1) -> float:
    """Monte-Carlo fraction of the box where the pair condition fails.

    The sample schedule is split into MEASURE_CHUNKS independently seeded
    chunks; the result is identical for any worker count.
    """
    box_omega = [tuple(map(float, iv)) for iv in box_omega]
    box_beta = [tuple(map(float, iv)) for iv in box_beta]
    n = len(box_omega)
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    modes = enumerate_modes(n, kmax)
    weights = np.abs(modes).sum(axis=1).astype(float) ** tau
    shifts = normal_shifts(len(box_beta))
    sizes = [sample_count // MEASURE_CHUNKS] * MEASURE_CHUNKS
    for i in range(sample_count % MEASURE_CHUNKS):
        sizes[i] += 1
    children = np.random.SeedSequence(seed).spawn(MEASURE_CHUNKS)

    def run_chunk(args):
        size, child = args
        if size == 0:
            return 0
        rng = np.random.default_rng(child)
        W = np.column_stack([rng.uniform(lo, hi, size) for lo, hi in box_omega])
        if box_beta:
            B = np.column_stack([rng.uniform(lo, hi, size) for lo, hi in box_beta])
        else:
            B = np.zeros((size, 0))
        dots = modes @ W.T                      # (M, size)
        minima = np.full(size, np.inf)
        for K in shifts:
            shift = B @ K if B.shape[1] else np.zeros(size)
            vals = np.abs(dots + shift[None, :]) * weights[:, None]
            minima = np.minimum(minima, vals.min(axis=0))
        return int(np.sum(minima < gamma))

    jobs = list(zip(sizes, children))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            violated = sum(pool.map(run_chunk, jobs))
    else:
        violated = sum(map(run_chunk, jobs))
    return violated / float(sample_count)
