"""Band-partition spectral engine.

Builds the uniform band grid on [-M', M'], the per-band statistics
g_hat[j] = mean of y * x_perp over the band, the matrix
M_hat = sum_j g_hat[j] g_hat[j]^T / Pr[z in band j], and runs the
random-sign descent loop that collects candidate directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtr, ndtri

from . import _kernels as kernels
from .core import Dataset, RegularityParams
from .util import child_rng, unit_check


class BandCountError(ValueError):
    pass


class PowerIterationError(RuntimeError):
    pass


DEFAULT_BAND_CAP = 10**6


@dataclass(frozen=True)
class BandPartition:
    """Uniform grid of half-open bands [a_j, a_{j+1}) covering [-M', M')."""

    edges: np.ndarray
    delta: float
    m_prime: float
    band_probs: np.ndarray

    @property
    def n_bands(self) -> int:
        return self.band_probs.size

    def band_index(self, z: np.ndarray) -> np.ndarray:
        """Band of each projection, -1 for |z| outside the grid."""
        j = np.floor((z + self.m_prime) / self.delta).astype(np.int64)
        bad = (z < -self.m_prime) | (z >= self.m_prime) | (j < 0) | (j >= self.n_bands)
        return np.where(bad, np.int64(-1), j)


def build_band_partition(
    params: RegularityParams, cap: int = DEFAULT_BAND_CAP
) -> BandPartition:
    """Grid with width delta = eps^2/(B L)^2 out to the matching Gaussian tail.

    M' is the smallest multiple of delta with Pr[|z| >= M'] <= eps^2/(B L)^2.
    """
    delta = params.eps**2 / (params.B**2 * params.L**2)
    tail = delta
    if tail >= 1.0:
        k = 1
    else:
        m0 = float(ndtri(1.0 - tail / 2.0))
        k = max(1, int(math.ceil(m0 / delta - 1e-12)))
    n_bands = 2 * k
    if n_bands > cap:
        raise BandCountError(
            f"{n_bands} bands exceed the cap {cap}; use a larger eps at desk scale"
        )
    edges = (np.arange(n_bands + 1, dtype=float) - k) * delta
    probs = ndtr(edges[1:]) - ndtr(edges[:-1])
    return BandPartition(edges=edges, delta=delta, m_prime=k * delta, band_probs=probs)


@dataclass
class BandStatistics:
    """Empirical per-band means of y * x_perp, orthogonal to w by construction."""

    g_hat: np.ndarray  # (n_bands, d)
    counts: np.ndarray  # (n_bands,)
    w: np.ndarray


def compute_band_statistics(
    data: Dataset, w: np.ndarray, partition: BandPartition
) -> BandStatistics:
    w = unit_check(w, "w")
    if data.dim != w.size:
        raise ValueError(f"data dim {data.dim} != direction dim {w.size}")
    z = data.X @ w
    jdx = partition.band_index(z)
    A, bw, counts = kernels.band_accumulate(data.X, data.y, z, jdx, partition.n_bands)
    g_hat = (A - np.outer(bw, w)) / data.n
    return BandStatistics(g_hat=g_hat, counts=counts, w=w)


@dataclass
class SpectralMatrix:
    m: np.ndarray
    top_eigvec: np.ndarray
    top_eigval: float
    second_eigval: float
    degenerate: bool = False


@dataclass(frozen=True)
class EigenPair:
    vector: np.ndarray
    value: float
    second_value: float
    degenerate: bool = False


def top_eigenpair(
    m: np.ndarray,
    w: np.ndarray,
    seed: int = 0,
    tol: float = 1e-10,
    max_iters: int = 10_000,
) -> EigenPair:
    """Power iteration on the subspace orthogonal to w.

    Convergence: successive Rayleigh quotients within ``tol`` relative.  The
    second eigenvalue comes from one deflation pass (needed by the
    eigenvector-stability probes).
    """
    w = unit_check(w, "w")
    d = w.size
    scale = float(np.max(np.abs(m))) if m.size else 0.0

    def start_vector(tag, *ortho):
        rng = child_rng(seed, "power", tag)
        v = rng.standard_normal(d)
        for o in ortho:
            v -= (o @ v) * o
        nrm = np.linalg.norm(v)
        while nrm < 1e-12:  # pragma: no cover - astronomically unlikely
            v = rng.standard_normal(d)
            for o in ortho:
                v -= (o @ v) * o
            nrm = np.linalg.norm(v)
        return v / nrm

    if scale == 0.0:
        v = start_vector(0, w)
        return EigenPair(vector=v, value=0.0, second_value=0.0, degenerate=True)

    m = np.ascontiguousarray(m)

    def iterate(tag, *ortho):
        v = start_vector(tag, *ortho)
        basis = np.ascontiguousarray(np.vstack(ortho))
        rayleigh, n_iters, status = kernels.power_iterate(
            m, v, basis, tol, scale, max_iters
        )
        if status == 1:
            gap_hint = rayleigh - float(v @ (m @ v))
            raise PowerIterationError(
                f"no convergence in {max_iters} iterations; last Rayleigh "
                f"{rayleigh:.6e}, last change {abs(gap_hint):.3e}, matrix scale {scale:.3e}"
            )
        if status == 2:
            return v, 0.0
        return v, float(rayleigh)

    v1, rho1 = iterate(0, w)
    if d <= 2:
        return EigenPair(vector=v1, value=rho1, second_value=0.0)
    v2, rho2 = iterate(1, w, v1)
    return EigenPair(vector=v1, value=rho1, second_value=rho2)


def build_spectral_matrix(
    stats: BandStatistics, partition: BandPartition, seed: int = 0
) -> SpectralMatrix:
    occ = np.flatnonzero(stats.counts)
    m = kernels.assemble_matrix(stats.g_hat[occ], partition.band_probs[occ])
    m = 0.5 * (m + m.T)
    pair = top_eigenpair(m, stats.w, seed=seed)
    return SpectralMatrix(
        m=m,
        top_eigvec=pair.vector,
        top_eigval=pair.value,
        second_eigval=pair.second_value,
        degenerate=pair.degenerate,
    )


def spectral_step(w: np.ndarray, direction: np.ndarray, eta: float) -> np.ndarray:
    """Unit-normalized w - eta * direction; for direction orthogonal to w the
    norm before projection is >= 1, so this equals projecting onto the ball
    and renormalizing."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    out = w - eta * direction
    return out / np.linalg.norm(out)


# ---------------------------------------------------------------------------
# optimization loop


@dataclass(frozen=True)
class ScheduleConfig:
    """Angle schedule phi_t = theta_bar * (1 - decay)^t, step eta_t = sin(phi_t) * step_fraction.

    T and K default to ceil(8 ln(max(L,2)/eps)) and min(ceil(2^T ln 100), 4096).
    """

    decay: float = 1.0 / 128.0
    step_fraction: float = 1.0 / 8.0
    T: int | None = None
    K: int | None = None

    def resolve(self, params: RegularityParams) -> tuple[int, int]:
        T = self.T
        if T is None:
            T = max(1, math.ceil(8.0 * math.log(max(params.L, 2.0) / params.eps)))
        K = self.K
        if K is None:
            K = 4096 if T >= 13 else min(math.ceil(2.0**T * math.log(100.0)), 4096)
        return T, K


class SpectralTrace:
    """Append-only per-iteration records, serializable as JSON lines."""

    def __init__(self):
        self.records: list[dict] = []

    def append(self, **record) -> None:
        self.records.append(record)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def write_jsonl(self, fh) -> None:
        import json

        for rec in self.records:
            fh.write(json.dumps(rec) + "\n")


@dataclass
class SpectralResult:
    vectors: np.ndarray  # (n_iterates, d)
    trace: SpectralTrace


class _StatsLoop:
    """Reusable band-statistics buffers for the inner loop (numba path)."""

    def __init__(self, data: Dataset, partition: BandPartition):
        self.X = data.X
        self.y = data.y
        self.n = data.n
        self.partition = partition
        n_bands, d = partition.n_bands, data.dim
        self.use_fused = kernels.BACKEND == "numba"
        if self.use_fused:
            self.A = np.zeros((n_bands, d))
            self.bw = np.zeros(n_bands)
            self.counts = np.zeros(n_bands, dtype=np.int64)
            self.touched = np.empty(n_bands, dtype=np.int64)
            self.n_prev = 0
            self.out = np.empty((d, d))

    def matrix_for(self, w: np.ndarray) -> np.ndarray:
        z = self.X @ w
        if self.use_fused:
            self.n_prev = kernels.spectral_matrix_pass(
                self.X,
                self.y,
                z,
                self.partition.m_prime,
                self.partition.delta,
                self.A,
                self.bw,
                self.counts,
                self.touched,
                self.n_prev,
                w,
                self.partition.band_probs,
                self.out,
            )
            m = self.out
        else:
            jdx = self.partition.band_index(z)
            A, bw, counts = kernels.band_accumulate(
                self.X, self.y, z, jdx, self.partition.n_bands
            )
            occ = np.flatnonzero(counts)
            G = (A[occ] - np.outer(bw[occ], w)) / self.n
            m = kernels.assemble_matrix(G, self.partition.band_probs[occ])
        return 0.5 * (m + m.T)


def spectral_optimization(
    data: Dataset,
    theta_bar: float,
    w0: np.ndarray,
    params: RegularityParams,
    schedule: ScheduleConfig | None = None,
    seed: int = 0,
    partition: BandPartition | None = None,
    sign_oracle: Callable[[int, np.ndarray, np.ndarray], int] | None = None,
) -> SpectralResult:
    """Random-sign eigenvector descent; every iterate of every restart is kept
    (only some iterate is guaranteed good, so the caller tests them all).

    ``sign_oracle(t, w, u) -> +-1`` is a test-only hook replacing the random
    sign choice, used by the contraction probes.
    """
    if not 0.0 < theta_bar <= math.pi / 2 + 1e-12:
        raise ValueError(f"theta_bar must lie in (0, pi/2], got {theta_bar}")
    w0 = unit_check(w0, "w0")
    if schedule is None:
        schedule = ScheduleConfig()
    T, K = schedule.resolve(params)
    if partition is None:
        partition = build_band_partition(params)
    loop = _StatsLoop(data, partition)
    trace = SpectralTrace()
    out = np.empty((K * (T + 1), w0.size))
    pos = 0
    for k in range(K):
        rng = child_rng(seed, "restart", k)
        w = w0
        for t in range(T + 1):
            phi = theta_bar * (1.0 - schedule.decay) ** t
            eta = math.sin(phi) * schedule.step_fraction
            m = loop.matrix_for(w)
            pair = top_eigenpair(m, w, seed=child_seed_int(seed, k, t))
            if pair.degenerate:
                sign = 0
                # zero matrix carries no direction: freeze w for this step
            elif sign_oracle is not None:
                sign = int(sign_oracle(t, w, pair.vector))
                if sign not in (-1, 1):
                    raise ValueError("sign_oracle must return +1 or -1")
            else:
                sign = 1 if rng.integers(2) == 1 else -1
            if sign != 0:
                w = spectral_step(w, sign * pair.vector, eta)
            out[pos] = w
            pos += 1
            trace.append(
                restart=k,
                t=t,
                phi=phi,
                eta=eta,
                sign=sign,
                top_eigval=pair.value,
                eigengap=pair.value - pair.second_value,
                degenerate=pair.degenerate,
                w=w.tolist(),
            )
    return SpectralResult(vectors=out, trace=trace)


def child_seed_int(seed: int, k: int, t: int) -> int:
    return (seed * 1_000_003 + k * 1009 + t) % (2**63)
