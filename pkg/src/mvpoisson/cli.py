"""Command-line driver: ``mvpoisson {ejd,calibrate,simulate,reproduce-paper}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import worked_example as ref
from .calibration import (
    FEASIBILITY_TOL,
    MAX_J,
    CalibrationResult,
    admissible_bounds,
    build_mixture,
    calibrate_to_target,
)
from .ejd import MonotonicityVector, all_extreme_measures, compute_extreme_measure, enumerate_structures
from .errors import DomainError, InadmissibleTargetError, InfeasibleTargetError
from .marginals import truncated_poisson
from .moments import correlation_matrix
from .simulation import backward_simulate, correlation_curve, forward_continue

log = logging.getLogger("mvpoisson")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INADMISSIBLE = 3
EXIT_INFEASIBLE = 4


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    intensities: list[float] = field(default_factory=list)
    horizon: float = 1.0
    epsilon: float = 0.01
    target: list[list[float]] | None = None
    n_paths: int = 10_000
    m_intervals: int = 1
    seed: int = 0
    out: str = "."
    threads: int = 1
    tol: float = FEASIBILITY_TOL
    calibration: str | None = None
    structure: list[int] | None = None

    def validate(self) -> None:
        J = len(self.intensities)
        if not 2 <= J <= MAX_J:
            raise UsageError(f"need between 2 and {MAX_J} intensities, got {J}")
        if any(not lam > 0 for lam in self.intensities):
            raise UsageError("intensities must be positive")
        if not self.horizon > 0:
            raise UsageError("horizon must be positive")
        if not 0 < self.epsilon < 1:
            raise UsageError("epsilon must lie in (0, 1)")
        if self.n_paths < 1:
            raise UsageError("paths must be at least 1")
        if self.m_intervals < 1:
            raise UsageError("intervals must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise UsageError("seed must be a 64-bit unsigned integer")
        if self.target is not None and np.shape(self.target) != (J, J):
            raise UsageError(f"target must be a {J}x{J} matrix")

    def marginals(self):
        return [truncated_poisson(lam, self.epsilon, self.horizon) for lam in self.intensities]


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _load_target(path: str) -> list[list[float]]:
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = data["target"]
    return data


def build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        data = json.loads(Path(args.config).read_text())
        known = {f.name for f in fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        for k, v in data.items():
            setattr(cfg, k, v)
        if isinstance(cfg.target, str):
            cfg.target = _load_target(cfg.target)
    overrides = {
        "intensities": args.intensities,
        "horizon": args.horizon,
        "epsilon": args.epsilon,
        "n_paths": args.paths,
        "m_intervals": args.intervals,
        "seed": args.seed,
        "out": args.out,
        "threads": args.threads,
        "tol": args.tol,
        "calibration": args.calibration,
        "structure": args.structure,
    }
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    if args.target is not None:
        cfg.target = _load_target(args.target)
    cfg.validate()
    return cfg


def _dump(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _fmt_matrix(C: np.ndarray) -> str:
    return "\n".join("  " + "  ".join(f"{v:>10.6g}" for v in row) for row in C)


def cmd_ejd(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    measures = all_extreme_measures(cfg.marginals())
    summary = {"intensities": cfg.intensities, "horizon": cfg.horizon, "epsilon": cfg.epsilon,
               "structures": [], "correlation_matrices": []}
    for m in measures:
        _dump(out / f"measure_{m.e.label()}.json", m.to_json())
        C = correlation_matrix(m)
        summary["structures"].append(list(m.e.bits))
        summary["correlation_matrices"].append(C.tolist())
        print(f"e = {m.e.bits}  ({len(m)} support points)")
        print(_fmt_matrix(C))
    lower, upper = admissible_bounds(measures[0].marginals)
    summary["bounds"] = {"lower": lower.tolist(), "upper": upper.tolist()}
    _dump(out / "summary.json", summary)
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig) -> int:
    if cfg.target is None:
        raise UsageError("calibrate needs --target")
    try:
        result, measures = calibrate_to_target(cfg.marginals(), cfg.target, cfg.tol)
    except InadmissibleTargetError as exc:
        print(f"inadmissible: {exc}", file=sys.stderr)
        return EXIT_INADMISSIBLE
    except InfeasibleTargetError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    payload = result.to_json([m.e for m in measures])
    _dump(Path(cfg.out) / "calibration.json", payload)
    for n in result.active_structures:
        print(f"w[{measures[n].e.label()}] = {result.weights[n]:.7g}")
    print(f"residual = {result.residual:.3e}")
    return EXIT_OK


def _mixture_for(cfg: RunConfig):
    marginals = cfg.marginals()
    if cfg.structure is not None:
        e = MonotonicityVector.canonical(cfg.structure)
        if len(e) != len(marginals):
            raise UsageError("structure length must equal the number of intensities")
        return build_mixture([1.0], [compute_extreme_measure(marginals, e)])
    if cfg.calibration is None:
        raise UsageError("simulate needs --calibration FILE or --structure BITS")
    data = json.loads(Path(cfg.calibration).read_text())
    result = CalibrationResult.from_json(data)
    J = len(marginals)
    structures = [MonotonicityVector(tuple(s)) for s in data.get("structures", [])]
    if not structures:
        structures = enumerate_structures(J)
    if len(structures) != len(result.weights) or any(len(s) != J for s in structures):
        raise UsageError("calibration file does not match the configured dimension")
    keep = [i for i, w in enumerate(result.weights) if w > 0]
    comps = [compute_extreme_measure(marginals, structures[i]) for i in keep]
    w = result.weights[keep]
    return build_mixture(w / w.sum(), comps)


def cmd_simulate(cfg: RunConfig) -> int:
    mixture = _mixture_for(cfg)
    T = cfg.horizon
    paths = backward_simulate(mixture, T, cfg.n_paths, cfg.seed, workers=cfg.threads)
    # Continuation draws from interval keys >= 1 of the same master seed.
    paths = forward_continue(paths, mixture, T, cfg.m_intervals, cfg.seed, workers=cfg.threads)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    paths.write_csv(out / "paths.csv")
    grid = T * np.arange(1, 100 * cfg.m_intervals + 1) / 100.0
    curve = correlation_curve(paths, grid, correlation_matrix(mixture), T)
    curve.write_csv(out / "curve.csv")
    print(f"wrote {paths.n_paths} paths over [0, {paths.horizon:g}] to {out}")
    return EXIT_OK


def cmd_reproduce(cfg: RunConfig) -> int:
    """Recompute the worked example and diff it against the embedded reference values."""
    ok = True
    eps = ref.TABLE_EPSILON
    for e, rows in ref.TABLES.items():
        marg = [truncated_poisson(lam, eps) for lam in ref.TABLE_INTENSITIES[e]]
        m = compute_extreme_measure(marg, e)
        worst = max(abs(m.prob(pt) - p) for pt, p in rows)
        passed = worst <= ref.TABLE_ROUNDING
        ok &= passed
        print(f"[{'PASS' if passed else 'FAIL'}] table e={e}: max |dp| = {worst:.2e}")

    marg = [truncated_poisson(lam, eps) for lam in ref.MATRIX_INTENSITIES]
    for e, expected in ref.CORRELATION_MATRICES.items():
        C = correlation_matrix(compute_extreme_measure(marg, e))
        worst = float(np.max(np.abs(C - expected)))
        passed = worst <= ref.MATRIX_TOL
        ok &= passed
        print(f"[{'PASS' if passed else 'FAIL'}] correlation matrix e={e}: max |dC| = {worst:.2e}")

    marg = [truncated_poisson(lam, eps) for lam in ref.CALIBRATION_INTENSITIES]
    try:
        result, measures = calibrate_to_target(marg, ref.TARGET)
        got = {m.e.bits: w for m, w in zip(measures, result.weights)}
        worst = max(abs(got[e] - w) for e, w in ref.WEIGHTS.items())
        passed = worst <= ref.WEIGHT_TOL
        print(f"[{'PASS' if passed else 'FAIL'}] calibration weights: max |dw| = {worst:.2e}, "
              f"residual {result.residual:.1e}")
    except (InadmissibleTargetError, InfeasibleTargetError) as exc:
        passed = False
        print(f"[FAIL] calibration: {exc}")
    ok &= passed
    return EXIT_OK if ok else 1


COMMANDS = {
    "ejd": cmd_ejd,
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "reproduce-paper": cmd_reproduce,
}


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    common.add_argument("--intensities", type=_floats, help="comma-separated rates, e.g. 3,5,7")
    common.add_argument("--horizon", type=float)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--target", help="JSON file holding the target correlation matrix")
    common.add_argument("--paths", type=int)
    common.add_argument("--intervals", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out")
    common.add_argument("--threads", type=int)
    common.add_argument("--tol", type=float, help="max-norm residual accepted by calibrate")
    common.add_argument("--calibration", help="calibration.json produced by `calibrate`")
    common.add_argument("--structure", type=_ints, help="single monotonicity vector, e.g. 0,1")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mvpoisson", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        if args.command == "reproduce-paper":
            return cmd_reproduce(RunConfig(intensities=list(ref.NOMINAL_INTENSITIES)))
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except (UsageError, DomainError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"mvpoisson: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
