"""Backward simulation of correlated Poisson paths and its forward continuation.

Randomness is organised in fixed-size blocks of replications. Block ``b`` of
interval ``k`` draws from its own Philox stream keyed by ``(seed, k, b)``, so
the output does not depend on how blocks are scheduled across threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .calibration import MixtureMeasure
from .errors import DomainError, UndefinedCorrelationError

BLOCK_SIZE = 16_384
HORIZON_TOL = 1e-12


def block_rng(seed: int, interval: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(int(interval), int(block)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class EventPaths:
    """Arrival times of ``n_paths`` replications of a J-variate counting process.

    Events are stored flat, grouped by segment ``path * J + component`` and
    sorted by time inside each segment; ``offsets[s]:offsets[s + 1]`` slices
    segment ``s``.
    """

    J: int
    horizon: float
    times: np.ndarray
    offsets: np.ndarray
    seed: tuple[int, ...]

    @property
    def n_paths(self) -> int:
        return (len(self.offsets) - 1) // self.J

    def arrivals(self, path: int, component: int) -> np.ndarray:
        s = path * self.J + component
        return self.times[self.offsets[s]:self.offsets[s + 1]]

    def segment_ids(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.offsets) - 1, dtype=np.int64), np.diff(self.offsets))

    def terminal_counts(self) -> np.ndarray:
        return np.diff(self.offsets).reshape(self.n_paths, self.J)

    def counts_at(self, t: float) -> np.ndarray:
        """``(n_paths, J)`` array of ``N_t``: events with arrival time ``<= t``."""
        if t >= self.horizon:
            return self.terminal_counts()
        seg = self.segment_ids()
        hit = self.times <= t
        c = np.bincount(seg[hit], minlength=len(self.offsets) - 1)
        return c.reshape(self.n_paths, self.J)

    def component_times(self, component: int) -> np.ndarray:
        seg = self.segment_ids()
        return self.times[seg % self.J == component]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventPaths):
            return NotImplemented
        return (
            self.J == other.J
            and self.horizon == other.horizon
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.times, other.times)
        )

    def write_csv(self, path) -> None:
        """``path_id,component,arrival_time`` rows, times with 9 decimals."""
        seg = self.segment_ids()
        with open(path, "w", newline="\n") as fh:
            fh.write("path_id,component,arrival_time\n")
            chunk = 1 << 20
            for start in range(0, len(self.times), chunk):
                s = seg[start:start + chunk]
                t = self.times[start:start + chunk]
                fh.writelines(
                    f"{p},{c},{x:.9f}\n" for p, c, x in zip((s // self.J).tolist(), (s % self.J).tolist(), t.tolist())
                )


def _check_poisson_mixture(mixture: MixtureMeasure, T: float) -> None:
    if not T > 0:
        raise DomainError("horizon must be positive")
    for j, m in enumerate(mixture.marginals):
        src = m.source
        if src is None or not src.is_poisson:
            raise DomainError(f"marginal {j} is not Poisson; backward simulation needs Poisson terminal laws")
        if abs(src.horizon - T) > HORIZON_TOL * max(1.0, T):
            raise DomainError(f"marginal {j} was built for horizon {src.horizon}, not {T}")


class _TerminalSampler:
    """Inverse-CDF sampling of terminal count vectors from a mixture."""

    def __init__(self, mixture: MixtureMeasure):
        w = np.asarray(mixture.weights, dtype=float)
        self.weight_cum = np.cumsum(w)
        self.weight_cum[-1] = 1.0
        self.cums = [c.cumulative() for c in mixture.components]
        self.supports = [c.support for c in mixture.components]
        self.J = mixture.J

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u_struct = rng.random(n)
        u_point = rng.random(n)
        idx = np.minimum(np.searchsorted(self.weight_cum, u_struct, side="right"), len(self.cums) - 1)
        counts = np.empty((n, self.J), dtype=np.int64)
        for s, (cum, sup) in enumerate(zip(self.cums, self.supports)):
            mask = idx == s
            if not mask.any():
                continue
            k = np.minimum(np.searchsorted(cum, u_point[mask], side="right"), len(cum) - 1)
            counts[mask] = sup[k]
        return counts


def _simulate_block(sampler: _TerminalSampler, T: float, offset: float, n: int,
                    rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    counts = sampler.sample(rng, n).ravel()
    total = int(counts.sum())
    times = offset + T * rng.random(total)
    seg = np.repeat(np.arange(len(counts), dtype=np.int64), counts)
    order = np.lexsort((times, seg))
    return counts, times[order]


def _blocks(n_paths: int) -> Iterator[tuple[int, int]]:
    for b, start in enumerate(range(0, n_paths, BLOCK_SIZE)):
        yield b, min(BLOCK_SIZE, n_paths - start)


def _run_interval(sampler, T, interval, n_paths, seed, workers):
    def job(args):
        b, n = args
        return _simulate_block(sampler, T, interval * T, n, block_rng(seed, interval, b))

    blocks = list(_blocks(n_paths))
    if workers <= 1:
        parts = [job(a) for a in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, blocks))
    counts = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0, np.int64)
    times = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0)
    return counts, times


def backward_simulate(mixture: MixtureMeasure, T: float, n_paths: int, seed: int,
                      workers: int = 1) -> EventPaths:
    """Sample terminal counts from ``mixture`` and scatter arrivals uniformly on ``[0, T]``."""
    _check_poisson_mixture(mixture, T)
    if n_paths < 1:
        raise DomainError("need at least one path")
    sampler = _TerminalSampler(mixture)
    counts, times = _run_interval(sampler, T, 0, n_paths, seed, workers)
    offsets = np.concatenate(([0], np.cumsum(counts)))
    return EventPaths(mixture.J, float(T), times, offsets, (int(seed),))


def forward_continue(paths: EventPaths, mixture: MixtureMeasure, T: float, m: int, seed: int,
                     workers: int = 1) -> EventPaths:
    """Extend paths from ``[0, T]`` to ``[0, mT]`` with independent increments.

    Each later interval ``[kT, (k+1)T)`` receives a fresh, independent
    backward-simulated block shifted by ``kT``, so increments are independent
    of the past and jointly distributed like the process on ``[0, T]``.
    """
    if m < 1:
        raise DomainError("interval count must be at least 1")
    if abs(paths.horizon - T) > HORIZON_TOL * max(1.0, T):
        raise DomainError("paths must cover exactly [0, T] before continuation")
    if m == 1:
        return paths
    _check_poisson_mixture(mixture, T)
    sampler = _TerminalSampler(mixture)
    n_seg = len(paths.offsets) - 1
    all_counts = [np.diff(paths.offsets)]
    all_times = [paths.times]
    for k in range(1, m):
        c, t = _run_interval(sampler, T, k, paths.n_paths, seed, workers)
        all_counts.append(c)
        all_times.append(t)
    seg = np.concatenate([np.repeat(np.arange(n_seg, dtype=np.int64), c) for c in all_counts])
    # Stable sort by segment keeps interval order, hence time order, within each segment.
    order = np.argsort(seg, kind="stable")
    times = np.concatenate(all_times)[order]
    offsets = np.concatenate(([0], np.cumsum(np.sum(all_counts, axis=0))))
    return EventPaths(paths.J, float(m * T), times, offsets, (*paths.seed, int(seed)))


def theoretical_corr(rho_T: float, t: float, T: float) -> float:
    """Correlation of ``N_t`` components under backward simulation with forward continuation."""
    if t < 0 or T <= 0:
        raise DomainError("need t >= 0 and T > 0")
    if t <= T:
        return rho_T * t / T
    n = math.floor(t / T)
    tau = t - n * T
    return rho_T * (n + (tau / T) ** 2) / (n + tau / T)


def _corr_from_counts(counts: np.ndarray) -> np.ndarray:
    x = counts.astype(float)
    sd = x.std(axis=0)
    if np.any(sd == 0):
        raise UndefinedCorrelationError("a component has zero sample variance")
    C = np.corrcoef(x, rowvar=False)
    np.fill_diagonal(C, 1.0)
    return np.atleast_2d(C)


def empirical_correlation(paths: EventPaths, t: float) -> np.ndarray:
    """Sample Pearson correlation matrix of ``N_t`` across replications."""
    if not 0 <= t <= paths.horizon:
        raise DomainError(f"t={t} outside [0, {paths.horizon}]")
    if paths.n_paths < 2:
        raise DomainError("need at least two replications")
    return _corr_from_counts(paths.counts_at(t))


def batch_correlations(paths: EventPaths, t: float, n_batches: int = 100) -> np.ndarray:
    """Correlation matrix of each contiguous batch of replications, shape ``(n_batches, J, J)``."""
    counts = paths.counts_at(t)
    return np.stack([_corr_from_counts(b) for b in np.array_split(counts, n_batches)])


def batch_standard_error(paths: EventPaths, t: float, n_batches: int = 100) -> np.ndarray:
    """Batch-means standard error of the empirical correlation matrix at ``t``."""
    per = batch_correlations(paths, t, n_batches)
    return per.std(axis=0, ddof=1) / math.sqrt(n_batches)


@dataclass(frozen=True)
class CorrelationCurve:
    times: np.ndarray
    pairs: tuple[tuple[int, int], ...]
    empirical: np.ndarray  # (len(times), len(pairs))
    theoretical: np.ndarray

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("t,pair_i,pair_j,empirical,theoretical\n")
            for a, t in enumerate(self.times):
                for b, (i, j) in enumerate(self.pairs):
                    fh.write(f"{t:.9f},{i},{j},{self.empirical[a, b]:.9f},{self.theoretical[a, b]:.9f}\n")


def correlation_curve(paths: EventPaths, grid: Sequence[float], rho_T: np.ndarray, T: float) -> CorrelationCurve:
    """Empirical and theoretical pairwise correlations on a time grid.

    Events are bucketed into the grid once, then per-grid counts follow from a
    cumulative sum, so the cost is linear in events plus grid size per path.
    Sums are accumulated block by block in a fixed order.
    """
    grid = np.asarray(grid, dtype=float)
    J = paths.J
    pairs = tuple((i, j) for i in range(J) for j in range(i + 1, J))
    G = len(grid)
    s1 = np.zeros((G, J))
    s2 = np.zeros((G, J))
    sx = np.zeros((G, len(pairs)))
    n = paths.n_paths
    seg_all = paths.segment_ids()
    block = max(1, 4_000_000 // (J * (G + 1)))
    for start in range(0, n, block):
        stop = min(n, start + block)
        lo, hi = paths.offsets[start * J], paths.offsets[stop * J]
        seg = seg_all[lo:hi] - start * J
        g = np.searchsorted(grid, paths.times[lo:hi], side="left")
        keep = g < G
        rows = (stop - start) * J
        hist = np.bincount(seg[keep] * (G + 1) + g[keep], minlength=rows * (G + 1))
        counts = np.cumsum(hist.reshape(rows, G + 1)[:, :G], axis=1).reshape(stop - start, J, G)
        counts = counts.astype(float)
        s1 += counts.sum(axis=0).T
        s2 += (counts ** 2).sum(axis=0).T
        for p, (i, j) in enumerate(pairs):
            sx[:, p] += (counts[:, i, :] * counts[:, j, :]).sum(axis=0)
    mean = s1 / n
    var = s2 / n - mean ** 2
    emp = np.full((G, len(pairs)), np.nan)
    theo = np.empty((G, len(pairs)))
    for p, (i, j) in enumerate(pairs):
        cov = sx[:, p] / n - mean[:, i] * mean[:, j]
        denom = np.sqrt(var[:, i] * var[:, j])
        ok = denom > 0
        emp[ok, p] = cov[ok] / denom[ok]
        theo[:, p] = [theoretical_corr(float(rho_T[i, j]), float(t), T) for t in grid]
    return CorrelationCurve(grid, pairs, emp, theo)
