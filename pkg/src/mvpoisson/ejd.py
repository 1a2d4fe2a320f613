"""Extreme joint distributions with prescribed discrete marginals.

An extreme measure couples J marginals so that every pair is either
comonotone or antimonotone. The pattern is fixed by a binary monotonicity
vector ``e`` with ``e[0] == 0``: coordinate ``j`` moves with the first
coordinate when ``e[j] == 0`` and against it when ``e[j] == 1``.

Every such measure is the law of ``(G_1(U), ..., G_J(U))`` for a single
uniform ``U``, where ``G_j`` is the quantile function of marginal ``j``
(evaluated at ``1 - U`` for antimonotone coordinates). The support is
therefore a staircase, and :func:`compute_extreme_measure` walks it by
sweeping the level ``z`` from 0 to 1.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError
from .marginals import TruncatedMarginal, cdf

# Level comparisons in the staircase sweep.
LEVEL_TOL = 1e-12
# Steps with less mass than this are not emitted.
MASS_TOL = 1e-14


@dataclass(frozen=True)
class MonotonicityVector:
    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if len(bits) < 2:
            raise DomainError("monotonicity vector needs length >= 2")
        if any(b not in (0, 1) for b in bits):
            raise DomainError(f"monotonicity vector must be binary, got {bits}")
        if bits[0] != 0:
            raise DomainError(f"monotonicity vector must start with 0, got {bits}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def canonical(cls, bits: Iterable[int]) -> "MonotonicityVector":
        """Flip all bits if needed so the first one is 0 (reversing every arrow)."""
        bits = tuple(int(b) for b in bits)
        if bits and bits[0] == 1:
            bits = tuple(1 - b for b in bits)
        return cls(bits)

    def __len__(self) -> int:
        return len(self.bits)

    def __iter__(self):
        return iter(self.bits)

    def __getitem__(self, j: int) -> int:
        return self.bits[j]

    def label(self) -> str:
        return "".join(str(b) for b in self.bits)

    @property
    def comonotone(self) -> tuple[int, ...]:
        return tuple(j for j, b in enumerate(self.bits) if b == 0)

    @property
    def antimonotone(self) -> tuple[int, ...]:
        return tuple(j for j, b in enumerate(self.bits) if b == 1)


def _bits(e) -> tuple[int, ...]:
    # The closed form is valid for any binary vector, canonical or not.
    bits = tuple(int(b) for b in e)
    if any(b not in (0, 1) for b in bits):
        raise DomainError(f"monotonicity vector must be binary, got {bits}")
    return bits


def enumerate_structures(J: int) -> list[MonotonicityVector]:
    """All ``2**(J-1)`` canonical monotonicity vectors, lexicographic in ``e[1:]``."""
    if J < 2:
        raise DomainError(f"need at least two coordinates, got J={J}")
    return [MonotonicityVector((0, *rest)) for rest in itertools.product((0, 1), repeat=J - 1)]


def signed_cdf(marginal: TruncatedMarginal, i: int, e_j: int) -> float:
    """``F(i)`` for a comonotone coordinate, ``1 - F(i)`` for an antimonotone one."""
    f = cdf(marginal, i)
    return f if e_j == 0 else 1.0 - f


def _upper_level(marginal: TruncatedMarginal, x: int, e_j: int) -> float:
    # Right end of the U-interval on which coordinate j equals x.
    return signed_cdf(marginal, x - e_j, e_j)


def _lower_level(marginal: TruncatedMarginal, x: int, e_j: int) -> float:
    return signed_cdf(marginal, x + e_j - 1, e_j)


def closed_form_density(marginals: Sequence[TruncatedMarginal], e, point: Sequence[int]) -> float:
    """Probability of ``point`` under the extreme measure, from the min/max CDF formula."""
    e = _bits(e)
    if len(point) != len(marginals) or len(e) != len(marginals):
        raise DomainError("point, marginals and monotonicity vector must share length J")
    hi = min(_upper_level(m, int(x), b) for m, x, b in zip(marginals, point, e))
    lo = max(_lower_level(m, int(x), b) for m, x, b in zip(marginals, point, e))
    return max(hi - lo, 0.0)


def closed_form_grid(marginals: Sequence[TruncatedMarginal], e) -> np.ndarray:
    """Closed-form density on the whole box ``prod_j [0, I*_j]`` as a J-dimensional array."""
    e = _bits(e)
    J = len(marginals)
    hi = None
    lo = None
    for j, (m, b) in enumerate(zip(marginals, e)):
        x = np.arange(m.support_max + 1)
        padded = np.concatenate(([0.0], m.cdf))  # padded[k + 1] = F(k), F(-1) = 0
        padded[-1] = 1.0
        if b == 0:
            up, low = padded[x + 1], padded[x]
        else:
            up, low = 1.0 - padded[x], 1.0 - padded[x + 1]
        shape = [1] * J
        shape[j] = -1
        up = up.reshape(shape)
        low = low.reshape(shape)
        hi = up if hi is None else np.minimum(hi, up)
        lo = low if lo is None else np.maximum(lo, low)
    return np.clip(hi - lo, 0.0, None)


@dataclass(frozen=True, eq=False)
class ExtremeMeasure:
    """Sparse joint law stored as its staircase of support points, in sweep order."""

    e: MonotonicityVector
    marginals: tuple[TruncatedMarginal, ...]
    support: np.ndarray  # (K, J) int
    probs: np.ndarray  # (K,)

    def __post_init__(self):
        self.support.setflags(write=False)
        self.probs.setflags(write=False)

    @property
    def J(self) -> int:
        return len(self.marginals)

    @property
    def epsilon(self) -> float:
        return self.marginals[0].epsilon

    def __len__(self) -> int:
        return len(self.probs)

    def prob(self, point: Sequence[int]) -> float:
        """Mass at ``point``; zero off the support."""
        hits = np.all(self.support == np.asarray(point), axis=1)
        return float(self.probs[hits].sum())

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return {tuple(int(v) for v in s): float(p) for s, p in zip(self.support, self.probs)}

    def mean(self, k: int) -> float:
        return math.fsum(self.support[:, k] * self.probs)

    def cross_moment(self, k: int, l: int) -> float:
        """``E[X_k X_l]``."""
        return math.fsum(self.support[:, k].astype(float) * self.support[:, l] * self.probs)

    def marginal_pmf(self, k: int) -> np.ndarray:
        return np.bincount(
            self.support[:, k], weights=self.probs, minlength=self.marginals[k].support_max + 1
        )

    def cumulative(self) -> np.ndarray:
        c = np.cumsum(self.probs)
        c[-1] = 1.0
        return c

    def to_json(self) -> dict:
        return {
            "e": list(self.e.bits),
            "support": self.support.tolist(),
            "probs": [float(p) for p in self.probs],
            "epsilon": self.epsilon,
            "marginals": [m.to_json() for m in self.marginals],
        }

    @classmethod
    def from_json(cls, data: dict) -> "ExtremeMeasure":
        return cls(
            MonotonicityVector(tuple(data["e"])),
            tuple(TruncatedMarginal.from_json(m) for m in data["marginals"]),
            np.asarray(data["support"], dtype=np.int64).reshape(-1, len(data["e"])),
            np.asarray(data["probs"], dtype=float),
        )


def _check_marginals(marginals: Sequence[TruncatedMarginal]) -> tuple[TruncatedMarginal, ...]:
    marginals = tuple(marginals)
    if len(marginals) < 2:
        raise DomainError("need at least two marginals")
    eps = {m.epsilon for m in marginals}
    if len(eps) != 1:
        raise ConfigurationError(f"marginals truncated with different epsilons: {sorted(eps)}")
    return marginals


def compute_extreme_measure(marginals: Sequence[TruncatedMarginal], e) -> ExtremeMeasure:
    """Staircase sweep producing the extreme measure with monotonicity vector ``e``.

    Coordinates start at 0 (comonotone) or at their top support point
    (antimonotone). At every step the level ``z`` is the smallest upper level
    among the coordinates; the current point receives mass ``z - z_prev`` and
    each coordinate whose upper level equals ``z`` moves one step in its
    direction. The sweep ends when ``z`` reaches 1.
    """
    marginals = _check_marginals(marginals)
    if not isinstance(e, MonotonicityVector):
        e = MonotonicityVector(tuple(e))
    if len(e) != len(marginals):
        raise DomainError(f"monotonicity vector has length {len(e)}, expected {len(marginals)}")

    J = len(marginals)
    step = [1 if b == 0 else -1 for b in e]
    x = [0 if b == 0 else m.support_max for m, b in zip(marginals, e)]
    levels = [_upper_level(m, xj, b) for m, xj, b in zip(marginals, x, e)]

    points: list[tuple[int, ...]] = []
    masses: list[float] = []
    z_prev = 0.0
    max_steps = sum(m.support_max + 1 for m in marginals) + 1
    for _ in range(max_steps):
        z = min(levels)
        if z - z_prev > MASS_TOL:
            points.append(tuple(x))
            masses.append(z - z_prev)
        z_prev = max(z, z_prev)
        if abs(z - 1.0) <= LEVEL_TOL:
            break
        for j in range(J):
            if levels[j] <= z + LEVEL_TOL:
                # Skip CDF plateaus (zero-mass values) so the new level exceeds z.
                while True:
                    x[j] += step[j]
                    levels[j] = _upper_level(marginals[j], x[j], e[j])
                    if levels[j] > z + LEVEL_TOL:
                        break
    else:
        raise RuntimeError("staircase sweep did not terminate")  # unreachable: all CDFs end at 1

    probs = np.asarray(masses, dtype=float)
    probs /= math.fsum(probs)
    return ExtremeMeasure(e, marginals, np.asarray(points, dtype=np.int64).reshape(-1, J), probs)


def frechet_2d(marginals: Sequence[TruncatedMarginal], direction: str) -> ExtremeMeasure:
    """Two-dimensional Fréchet coupling from the lattice density formulas.

    ``direction="max"`` gives the comonotone (upper) coupling,
    ``direction="min"`` the antimonotone (lower) one. This scans the full box
    rather than sweeping, so it serves as a cross-check of
    :func:`compute_extreme_measure`.
    """
    m1, m2 = _check_marginals(marginals)
    if direction not in ("max", "min"):
        raise DomainError(f"direction must be 'max' or 'min', got {direction!r}")

    def F1(i):
        return cdf(m1, i)

    def F2(j):
        return cdf(m2, j)

    cells = []
    for i in range(m1.support_max + 1):
        for j in range(m2.support_max + 1):
            if direction == "max":
                p = min(F1(i), F2(j)) - max(F1(i - 1), F2(j - 1))
            else:
                p = min(F1(i), 1.0 - F2(j - 1)) - max(F1(i - 1), 1.0 - F2(j))
            if p > MASS_TOL:
                cells.append((i, j, p))
    if direction == "max":
        cells.sort(key=lambda c: (c[0], c[1]))
        e = MonotonicityVector((0, 0))
    else:
        cells.sort(key=lambda c: (c[0], -c[1]))
        e = MonotonicityVector((0, 1))
    support = np.array([(i, j) for i, j, _ in cells], dtype=np.int64).reshape(-1, 2)
    probs = np.array([p for *_, p in cells], dtype=float)
    probs /= math.fsum(probs)
    return ExtremeMeasure(e, (m1, m2), support, probs)


def all_extreme_measures(marginals: Sequence[TruncatedMarginal]) -> list[ExtremeMeasure]:
    marginals = _check_marginals(marginals)
    return [compute_extreme_measure(marginals, e) for e in enumerate_structures(len(marginals))]
