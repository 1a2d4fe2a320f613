"""Discrete marginal laws and their finite-support truncations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError

# Safety net for the Poisson tail scan; a rate of 1e4 needs roughly 1.1e4 terms.
_MAX_SUPPORT = 10_000_000


def poisson_pmf(lambda_T: float, k: int) -> float:
    """Poisson mass ``P(N = k)`` for ``N ~ Pois(lambda_T)``, evaluated in log space."""
    if not lambda_T > 0:
        raise DomainError(f"Poisson parameter must be positive, got {lambda_T!r}")
    if k < 0:
        return 0.0
    return math.exp(-lambda_T + k * math.log(lambda_T) - math.lgamma(k + 1))


def _compensated_cumsum(values: Sequence[float]) -> np.ndarray:
    # Neumaier summation keeps CDF error near one ulp even for long supports.
    out = np.empty(len(values))
    total = 0.0
    comp = 0.0
    for i, v in enumerate(values):
        t = total + v
        if abs(total) >= abs(v):
            comp += (total - t) + v
        else:
            comp += (v - t) + total
        total = t
        out[i] = total + comp
    return out


@dataclass(frozen=True)
class DiscreteMarginal:
    """A law on {0, 1, 2, ...}: either Poisson(rate * horizon) or an explicit pmf list."""

    kind: str
    rate: float | None = None
    horizon: float = 1.0
    pmf: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind == "poisson":
            if self.rate is None or not self.rate * self.horizon > 0:
                raise DomainError("Poisson marginal requires rate * horizon > 0")
        elif self.kind == "explicit":
            if not self.pmf:
                raise DomainError("explicit marginal requires a non-empty pmf")
            p = np.asarray(self.pmf, dtype=float)
            if np.any(p < 0) or not np.all(np.isfinite(p)):
                raise DomainError("pmf entries must be finite and nonnegative")
            if abs(math.fsum(p) - 1.0) > 1e-12:
                raise DomainError(f"pmf must sum to 1 (got {math.fsum(p)!r})")
            object.__setattr__(self, "pmf", tuple(float(x) for x in p))
        else:
            raise DomainError(f"unknown marginal kind {self.kind!r}")

    @classmethod
    def poisson(cls, rate: float, horizon: float = 1.0) -> "DiscreteMarginal":
        return cls("poisson", rate=float(rate), horizon=float(horizon))

    @classmethod
    def explicit(cls, pmf: Sequence[float]) -> "DiscreteMarginal":
        return cls("explicit", pmf=tuple(pmf))

    @property
    def is_poisson(self) -> bool:
        return self.kind == "poisson"

    @property
    def lambda_T(self) -> float:
        if not self.is_poisson:
            raise DomainError("explicit marginal has no Poisson parameter")
        return self.rate * self.horizon

    def to_json(self) -> dict:
        if self.is_poisson:
            return {"kind": "poisson", "lambda": self.rate, "horizon": self.horizon}
        return {"kind": "explicit", "pmf": list(self.pmf)}

    @classmethod
    def from_json(cls, data: dict) -> "DiscreteMarginal":
        kind = data.get("kind")
        if kind == "poisson":
            return cls.poisson(data["lambda"], data.get("horizon", 1.0))
        if kind == "explicit":
            return cls.explicit(data["pmf"])
        raise DomainError(f"unknown marginal kind {kind!r}")


@dataclass(frozen=True, eq=False)
class TruncatedMarginal:
    """Finite-support approximation on {0..support_max} whose CDF ends at exactly 1.

    The tail mass beyond ``support_max`` is lumped into the last support point.
    """

    support_max: int
    pmf: np.ndarray
    cdf: np.ndarray
    epsilon: float
    source: DiscreteMarginal | None = field(default=None, compare=False)

    def __post_init__(self):
        self.pmf.setflags(write=False)
        self.cdf.setflags(write=False)

    def cdf_at(self, k: int) -> float:
        return cdf(self, k)

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.support_max + 1)

    @property
    def mean(self) -> float:
        return math.fsum(self.support * self.pmf)

    @property
    def variance(self) -> float:
        m = self.mean
        return math.fsum((self.support - m) ** 2 * self.pmf)

    def same_law(self, other: "TruncatedMarginal") -> bool:
        return (
            self.support_max == other.support_max
            and self.epsilon == other.epsilon
            and np.array_equal(self.pmf, other.pmf)
        )

    def to_json(self) -> dict:
        out = {"support_max": self.support_max, "epsilon": self.epsilon, "pmf": self.pmf.tolist()}
        if self.source is not None:
            out["source"] = self.source.to_json()
        return out

    @classmethod
    def from_json(cls, data: dict) -> "TruncatedMarginal":
        pmf = np.asarray(data["pmf"], dtype=float)
        c = _compensated_cumsum(pmf)
        c[-1] = 1.0
        src = DiscreteMarginal.from_json(data["source"]) if "source" in data else None
        return cls(len(pmf) - 1, pmf, c, float(data["epsilon"]), src)


def _poisson_masses(lambda_T: float, epsilon: float) -> list[float]:
    # p(k+1) = p(k) * lambda_T / (k+1), carried as logs so e^{-lambda_T} never underflows.
    log_lam = math.log(lambda_T)
    log_p = -lambda_T
    masses: list[float] = []
    total = 0.0
    comp = 0.0
    k = 0
    while True:
        p = math.exp(log_p)
        masses.append(p)
        t = total + p
        comp += (total - t) + p if abs(total) >= abs(p) else (p - t) + total
        total = t
        # Stop once past the mode and the remaining tail is below epsilon.
        if k >= lambda_T and 1.0 - (total + comp) <= epsilon:
            return masses
        k += 1
        if k > _MAX_SUPPORT:
            raise DomainError("Poisson truncation did not converge")
        log_p += log_lam - math.log(k)


def truncate(marginal: DiscreteMarginal, epsilon: float) -> TruncatedMarginal:
    """Cut ``marginal`` at the smallest ``I*`` with ``1 - F(I*) <= epsilon``."""
    if not 0.0 < epsilon < 1.0:
        raise DomainError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    if marginal.is_poisson:
        masses = _poisson_masses(marginal.lambda_T, epsilon)
    else:
        masses = list(marginal.pmf)
    full_cdf = _compensated_cumsum(masses)
    tail = 1.0 - full_cdf
    i_star = int(np.argmax(tail <= epsilon)) if np.any(tail <= epsilon) else len(masses) - 1
    pmf = np.array(masses[: i_star + 1], dtype=float)
    pmf[i_star] += max(0.0, 1.0 - full_cdf[i_star])
    cdf_arr = full_cdf[: i_star + 1].copy()
    cdf_arr[i_star] = 1.0
    return TruncatedMarginal(i_star, pmf, cdf_arr, float(epsilon), marginal)


def truncated_poisson(rate: float, epsilon: float, horizon: float = 1.0) -> TruncatedMarginal:
    return truncate(DiscreteMarginal.poisson(rate, horizon), epsilon)


def cdf(marginal: TruncatedMarginal, k: int) -> float:
    """``F(k)`` with the conventions ``F(k) = 0`` for ``k < 0`` and ``F(k) = 1`` past ``I*``."""
    if k < 0:
        return 0.0
    if k >= marginal.support_max:
        return 1.0
    return float(marginal.cdf[k])
