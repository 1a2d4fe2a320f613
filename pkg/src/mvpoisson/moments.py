"""Moments and correlation matrices of extreme and mixture measures."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import DomainError, UndefinedCorrelationError

PSD_TOL = 1e-8
# Agreement required between measure-side and marginal-side first moments.
CONSISTENCY_TOL = 1e-10


def _marginal_moments(measure, k: int) -> tuple[float, float]:
    m = measure.marginals[k]
    var = m.variance
    if var <= 0.0:
        raise UndefinedCorrelationError(f"coordinate {k} has zero variance")
    return m.mean, var


def _check_consistency(measure, k: int, mean_k: float) -> None:
    got = measure.mean(k)
    if abs(got - mean_k) > CONSISTENCY_TOL * max(1.0, abs(mean_k)):
        raise AssertionError(
            f"measure mean of coordinate {k} ({got!r}) disagrees with its marginal ({mean_k!r})"
        )


def pairwise_correlation(measure, k: int, l: int) -> float:
    """Pearson correlation of coordinates ``k`` and ``l`` under ``measure``."""
    if k == l:
        raise DomainError("pairwise correlation needs two distinct coordinates")
    mk, vk = _marginal_moments(measure, k)
    ml, vl = _marginal_moments(measure, l)
    _check_consistency(measure, k, mk)
    _check_consistency(measure, l, ml)
    cov = measure.cross_moment(k, l) - mk * ml
    return float(np.clip(cov / math.sqrt(vk * vl), -1.0, 1.0))


def correlation_matrix(measure) -> np.ndarray:
    J = len(measure.marginals)
    C = np.eye(J)
    for k in range(J):
        for l in range(k + 1, J):
            C[k, l] = C[l, k] = pairwise_correlation(measure, k, l)
    return C


def mixture_correlation(weights: Sequence[float], matrices: Sequence[np.ndarray]) -> np.ndarray:
    """Convex combination of correlation matrices."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or len(w) != len(matrices):
        raise DomainError("need one weight per matrix")
    if np.any(w < 0) or abs(math.fsum(w) - 1.0) > 1e-10:
        raise DomainError("weights must be nonnegative and sum to 1")
    mats = np.asarray(matrices, dtype=float)
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
        raise DomainError("matrices must be square and share one dimension")
    return np.einsum("n,nij->ij", w, mats)


def csm_correlation(lambda1: float, lambda2: float, lambda3: float) -> float:
    """Correlation of ``nu1 + nu2`` and ``nu3 + nu2`` for independent Poisson ``nu``."""
    a = lambda1 + lambda2
    b = lambda2 + lambda3
    if min(lambda1, lambda2, lambda3) < 0:
        raise DomainError("rates must be nonnegative")
    if a <= 0 or b <= 0:
        raise DomainError("both superposed processes need a positive rate")
    return lambda2 / math.sqrt(a * b)


def min_eigenvalue(C: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(np.asarray(C, dtype=float)).min())


def is_psd(C: np.ndarray, tol: float = PSD_TOL) -> bool:
    return min_eigenvalue(C) >= -tol


def upper_triangle(C: np.ndarray) -> np.ndarray:
    """Strict upper triangle in row-major order: (0,1), (0,2), ..., (J-2,J-1)."""
    C = np.asarray(C)
    return C[np.triu_indices(C.shape[0], 1)]


def from_upper_triangle(values: Sequence[float], J: int) -> np.ndarray:
    C = np.eye(J)
    iu = np.triu_indices(J, 1)
    C[iu] = values
    C[(iu[1], iu[0])] = values
    return C
