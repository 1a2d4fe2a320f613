"""Admissible correlation targets and mixture weights over extreme measures."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .ejd import ExtremeMeasure, MonotonicityVector, all_extreme_measures, compute_extreme_measure
from .errors import ConfigurationError, DomainError, InadmissibleTargetError, InfeasibleTargetError
from .marginals import TruncatedMarginal
from .moments import PSD_TOL, correlation_matrix, min_eigenvalue, pairwise_correlation, upper_triangle

log = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-8
BOUND_TOL = 1e-8
DIAGONAL_TOL = 1e-12
MAX_J = 16


@dataclass(frozen=True, eq=False)
class MixtureMeasure:
    """Convex combination of extreme measures that share their marginals.

    Kept lazy: moments are weighted sums over components, never a flattened density.
    """

    weights: np.ndarray
    components: tuple[ExtremeMeasure, ...]

    @property
    def marginals(self) -> tuple[TruncatedMarginal, ...]:
        return self.components[0].marginals

    @property
    def J(self) -> int:
        return len(self.marginals)

    @property
    def structures(self) -> list[MonotonicityVector]:
        return [c.e for c in self.components]

    def mean(self, k: int) -> float:
        return math.fsum(w * c.mean(k) for w, c in zip(self.weights, self.components))

    def cross_moment(self, k: int, l: int) -> float:
        return math.fsum(w * c.cross_moment(k, l) for w, c in zip(self.weights, self.components))

    def prob(self, point: Sequence[int]) -> float:
        return math.fsum(w * c.prob(point) for w, c in zip(self.weights, self.components))


def build_mixture(weights: Sequence[float], extreme_measures: Sequence[ExtremeMeasure]) -> MixtureMeasure:
    w = np.asarray(weights, dtype=float)
    comps = tuple(extreme_measures)
    if len(w) != len(comps) or not comps:
        raise ConfigurationError("need one weight per extreme measure")
    if np.any(w < 0) or abs(math.fsum(w) - 1.0) > 1e-10:
        raise DomainError("mixture weights must be nonnegative and sum to 1")
    ref = comps[0].marginals
    for c in comps[1:]:
        if len(c.marginals) != len(ref) or not all(a.same_law(b) for a, b in zip(c.marginals, ref)):
            raise ConfigurationError("mixture components must share their marginals")
    w = w.copy()
    w.setflags(write=False)
    return MixtureMeasure(w, comps)


def admissible_bounds(marginals: Sequence[TruncatedMarginal]) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise extreme correlations ``(lower, upper)`` from the 2-D Fréchet couplings."""
    marginals = tuple(marginals)
    J = len(marginals)
    if J < 2:
        raise DomainError("need at least two marginals")
    lower = np.eye(J)
    upper = np.eye(J)
    for i in range(J):
        for j in range(i + 1, J):
            pair = (marginals[i], marginals[j])
            hi = pairwise_correlation(compute_extreme_measure(pair, (0, 0)), 0, 1)
            lo = pairwise_correlation(compute_extreme_measure(pair, (0, 1)), 0, 1)
            lower[i, j] = lower[j, i] = lo
            upper[i, j] = upper[j, i] = hi
    return lower, upper


@dataclass(frozen=True)
class AdmissibilityReport:
    admissible: bool
    reason: str | None = None
    location: tuple[int, int] | None = None
    min_eigenvalue: float | None = None

    def __bool__(self) -> bool:
        return self.admissible


def check_admissible(C, bounds: tuple[np.ndarray, np.ndarray]) -> AdmissibilityReport:
    C = np.asarray(C, dtype=float)
    lower, upper = (np.asarray(b, dtype=float) for b in bounds)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape != lower.shape:
        raise DomainError(f"matrix shape {C.shape} does not match bounds {lower.shape}")
    J = C.shape[0]
    if not np.array_equal(C, C.T):
        i, j = np.argwhere(C != C.T)[0]
        return AdmissibilityReport(False, "not symmetric", (int(i), int(j)))
    diag = np.abs(np.diag(C) - 1.0)
    if np.any(diag > DIAGONAL_TOL):
        i = int(np.argmax(diag > DIAGONAL_TOL))
        return AdmissibilityReport(False, "diagonal entry is not 1", (i, i))
    for i in range(J):
        for j in range(i + 1, J):
            if not lower[i, j] - BOUND_TOL <= C[i, j] <= upper[i, j] + BOUND_TOL:
                return AdmissibilityReport(
                    False,
                    f"entry {C[i, j]:.6g} outside extreme range "
                    f"[{lower[i, j]:.6g}, {upper[i, j]:.6g}]",
                    (i, j),
                )
    lam = min_eigenvalue(C)
    if lam < -PSD_TOL:
        return AdmissibilityReport(False, f"not positive semi-definite (min eigenvalue {lam:.3e})",
                                   None, lam)
    return AdmissibilityReport(True, None, None, lam)


@dataclass(frozen=True)
class CalibrationProblem:
    """``A w = target`` over the simplex; column n of ``A`` is the upper triangle of C^(e_n)."""

    A: np.ndarray
    target: np.ndarray
    structures: tuple[MonotonicityVector, ...]

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        target = np.asarray(self.target, dtype=float)
        if A.ndim != 2 or target.shape != (A.shape[0],):
            raise DomainError("A must be M x N and target an M-vector")
        if len(self.structures) != A.shape[1]:
            raise DomainError("need one structure per column of A")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "target", target)

    @property
    def M(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return self.A.shape[1]

    @classmethod
    def from_measures(cls, measures: Sequence[ExtremeMeasure], target) -> "CalibrationProblem":
        target = np.asarray(target, dtype=float)
        if target.ndim == 2:
            target = upper_triangle(target)
        cols = [upper_triangle(correlation_matrix(m)) for m in measures]
        return cls(np.column_stack(cols), target, tuple(m.e for m in measures))


@dataclass(frozen=True)
class CalibrationResult:
    weights: np.ndarray
    residual: float
    active_structures: tuple[int, ...]

    def to_json(self, structures: Sequence[MonotonicityVector] | None = None) -> dict:
        out = {
            "weights": [float(w) for w in self.weights],
            "residual": float(self.residual),
            "active": list(self.active_structures),
        }
        if structures is not None:
            out["structures"] = [list(s.bits) for s in structures]
        return out

    @classmethod
    def from_json(cls, data: dict) -> "CalibrationResult":
        return cls(np.asarray(data["weights"], dtype=float), float(data["residual"]),
                   tuple(data["active"]))


def _minimax_weights(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    # min t  s.t.  |A w - b| <= t componentwise,  1'w = 1,  w >= 0
    M, N = A.shape
    c = np.r_[np.zeros(N), 1.0]
    ones = np.ones((M, 1))
    A_ub = np.block([[A, -ones], [-A, -ones]])
    b_ub = np.r_[b, -b]
    A_eq = np.r_[np.ones(N), 0.0][None, :]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * (N + 1), method="highs")
    if res.status != 0:
        raise RuntimeError(f"linear program failed: {res.message}")
    w = np.clip(res.x[:N], 0.0, None)
    return w / w.sum()


def _polish(E: np.ndarray, f: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Least-norm correction of ``w`` on its support so that ``E w = f`` to rounding."""
    S = w > 0
    for _ in range(3):
        r = f - E @ w
        dw = np.linalg.lstsq(E[:, S], r, rcond=None)[0]
        w = w.copy()
        w[S] += dw
        w = np.clip(w, 0.0, None)
        S = w > 0
    return w


def _min_norm_weights(E: np.ndarray, f: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    """Minimum-norm point of ``{w >= 0 : E w = f}``.

    Semismooth Newton on the dual ``min_y 0.5 |(E'y)_+|^2 - f'y``; the primal
    solution is ``w = (E'y)_+``.
    """
    y = np.linalg.lstsq(E @ E.T, f, rcond=None)[0]

    def phi(y):
        w = np.clip(E.T @ y, 0.0, None)
        return 0.5 * w @ w - f @ y, w

    val, w = phi(y)
    for _ in range(200):
        g = E @ w - f
        if np.max(np.abs(g)) <= 1e-14:
            break
        S = w > 0
        H = E[:, S] @ E[:, S].T
        mu = min(1e-3, float(np.linalg.norm(g)))
        d = np.linalg.solve(H + (mu + 1e-14) * np.eye(len(f)), -g)
        t = 1.0
        while True:
            new_val, new_w = phi(y + t * d)
            if new_val <= val + 1e-4 * t * (g @ d) or t < 1e-12:
                break
            t *= 0.5
        y, val, w = y + t * d, new_val, new_w
    else:
        log.warning("minimum-norm refinement did not converge; keeping the LP vertex")
        return fallback
    if np.max(np.abs(E @ w - f)) > 1e-9:
        return fallback
    return w


def reduce_support(E: np.ndarray, w: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Drop weights along null directions of ``E`` until the active columns are independent.

    ``E w`` is unchanged in exact arithmetic; since the last row of ``E`` is
    all ones the simplex constraint is preserved too.
    """
    w = np.where(w > tol, w, 0.0)
    while True:
        S = np.flatnonzero(w)
        ES = E[:, S]
        _, sv, Vt = np.linalg.svd(ES, full_matrices=True)
        rank = int(np.sum(sv > max(ES.shape) * np.finfo(float).eps * max(sv[0], 1.0)))
        if len(S) <= rank:
            return w
        v = Vt[-1]
        if not np.any(v > 0):
            v = -v
        pos = v > 0
        ratios = np.full(len(S), np.inf)
        ratios[pos] = w[S][pos] / v[pos]
        hit = int(np.argmin(ratios))
        w = w.copy()
        w[S] -= ratios[hit] * v
        w[S[hit]] = 0.0
        w = np.where(w > tol, w, 0.0)


def calibrate(problem: CalibrationProblem, tol: float = FEASIBILITY_TOL) -> CalibrationResult:
    """Simplex weights with ``A w = target``; minimum-norm, then support-reduced."""
    A, b = problem.A, problem.target
    w_lp = _minimax_weights(A, b)
    residual = float(np.max(np.abs(A @ w_lp - b))) if problem.M else 0.0
    if residual > tol:
        raise InfeasibleTargetError(residual, tol)

    E = np.vstack([A, np.ones(problem.N)])
    f = np.r_[b, 1.0]
    w = _min_norm_weights(E, f, w_lp)
    w = reduce_support(E, w)
    w = _polish(E, f, w)
    w /= w.sum()
    residual = float(np.max(np.abs(A @ w - b))) if problem.M else 0.0
    if residual > tol:
        raise InfeasibleTargetError(residual, tol)
    active = tuple(int(i) for i in np.flatnonzero(w > 0))
    return CalibrationResult(w, residual, active)


def calibrate_to_target(
    marginals: Sequence[TruncatedMarginal],
    target,
    tol: float = FEASIBILITY_TOL,
) -> tuple[CalibrationResult, list[ExtremeMeasure]]:
    """Full pipeline: admissibility gate, extreme measures, weights.

    Raises :class:`InadmissibleTargetError` before any solving when the
    target violates the pairwise bounds, symmetry, unit diagonal or PSD.
    """
    marginals = tuple(marginals)
    if not 2 <= len(marginals) <= MAX_J:
        raise DomainError(f"supported dimensions are 2..{MAX_J}")
    target = np.asarray(target, dtype=float)
    report = check_admissible(target, admissible_bounds(marginals))
    if not report:
        raise InadmissibleTargetError(f"target is not admissible: {report.reason}", report)
    measures = all_extreme_measures(marginals)
    result = calibrate(CalibrationProblem.from_measures(measures, target), tol)
    return result, measures
