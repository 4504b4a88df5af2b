"""Logical-error-rate curves, threshold extraction and policy comparison.

A sweep runs the full pipeline per grid point: generate the memory
circuit, sample syndromes, optionally estimate a detector error model
from them, decode, count logical errors.  Points get independent seeds
derived from (master seed, distance, grid index), so the execution
order cannot change any result.  Thresholds come from pairwise log-log
crossings of adjacent-distance curves; files (CSV per curve, one
summary JSON) are the plotting interface.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .codes import (
    NoiseModel,
    gen_repetition_memory,
    gen_rotated_surface_memory,
    reference_dem,
)
from .decode import decode_batch
from .dem import build_decoding_graph
from .errors import CapabilityError, DegenerateStatisticsError
from .estimate import EstimateOptions, estimate_dem
from .sampler import run_coherent_shots, run_pauli_frame_shots

CODES = ("repetition", "surface")
POLICIES = ("uniform", "estimated")

CURVE_HEADER = ("p", "P_L", "ci_lo", "ci_hi", "N", "d")

_LOG_FLOOR = 1e-12  # CI bounds can touch 0; log interpolation needs > 0


@dataclass(frozen=True)
class LerPoint:
    p: float  # physical error rate, sin^2(theta)
    p_logical: float
    ci_low: float
    ci_high: float
    n_shots: int
    n_errors: int


@dataclass
class LerCurve:
    code: str
    level: str
    mode: str
    policy: str
    d: int
    points: list[LerPoint] = field(default_factory=list)
    failures: list[tuple[float, str]] = field(default_factory=list)

    def __post_init__(self):
        self.points = sorted(self.points, key=lambda pt: pt.p)

    def p_values(self) -> tuple[float, ...]:
        return tuple(pt.p for pt in self.points)

    def point_at(self, p: float) -> LerPoint:
        for pt in self.points:
            if pt.p == p:
                return pt
        raise KeyError(f"no point at p={p}")


def _point_seed(master_seed: int, d: int, index: int) -> int:
    ss = np.random.SeedSequence((master_seed, d, index))
    return int(ss.generate_state(1, np.uint64)[0])


def _run_point(
    code: str,
    level: str,
    mode: str,
    d: int,
    p: float,
    n_shots: int,
    policy: str,
    rounds: int,
    equal_angles: bool,
    theta_gate: float,
    q_flip: float,
    q_tracks_grid: bool,
    readout_resample: int,
    seed: int,
    estimate_options: EstimateOptions | None,
) -> LerPoint:
    theta = math.asin(math.sqrt(p))
    circuit_level = level == "circuit"
    noise = NoiseModel(
        theta_data=theta,
        theta_anc=theta if circuit_level else 0.0,
        theta_gate=(theta if equal_angles else theta_gate)
        if circuit_level
        else 0.0,
        q_flip=p if q_tracks_grid else q_flip,
        mode=mode,
    )
    gen = gen_repetition_memory if code == "repetition" else gen_rotated_surface_memory
    circuit = gen(d, rounds, noise, level)

    if mode == "twirled":
        batch = run_pauli_frame_shots(circuit, n_shots, seed)
    else:
        m = readout_resample
        n_traj = -(-n_shots // m)
        batch = run_coherent_shots(circuit, n_traj, seed, readout_resample=m)

    reference = reference_dem(circuit)
    if policy == "estimated":
        est = estimate_dem(batch, reference, estimate_options)
        graph = build_decoding_graph(est.to_dem(), "estimated")
    else:
        graph = build_decoding_graph(reference, "uniform")
    res = decode_batch(graph, batch)
    return LerPoint(
        p=p,
        p_logical=res.p_logical,
        ci_low=res.ci_low,
        ci_high=res.ci_high,
        n_shots=res.n_shots,
        n_errors=res.n_errors,
    )


def sweep(
    code: str,
    level: str,
    mode: str,
    distances,
    p_grid,
    n_shots: int,
    policy: str = "uniform",
    *,
    rounds: int | None = None,
    equal_angles: bool = False,
    theta_gate: float = 0.0,
    q_flip: float = 0.0,
    q_tracks_grid: bool = False,
    readout_resample: int = 1,
    master_seed: int = 0,
    estimate_options: EstimateOptions | None = None,
) -> list[LerCurve]:
    """One LerCurve per distance over a shared physical-error-rate grid.

    The grid value p fixes the data rotation angle through p =
    sin^2(theta).  At circuit level the ancilla angle tracks the same
    grid (that is the noise model the repetition-code thresholds refer
    to); theta_gate stays fixed unless equal_angles pins it to the grid
    angle too.  q_tracks_grid ties the readout flip probability to p
    for phenomenological sweeps.

    A point that the backend cannot run (statevector cap, missing
    gadget, degenerate statistics) lands in curve.failures with the
    reason; the rest of the sweep proceeds.  Everything else a point
    can raise is a usage error and propagates.
    """
    if code not in CODES:
        raise ValueError(f"code must be one of {CODES}, got {code!r}")
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}, got {policy!r}")
    if equal_angles and theta_gate != 0.0:
        raise ValueError("equal_angles fixes theta_gate to the grid angle")
    if level != "circuit" and (equal_angles or theta_gate != 0.0):
        raise ValueError("gate angles only make sense at circuit level")
    if q_tracks_grid and q_flip != 0.0:
        raise ValueError("q_tracks_grid and a fixed q_flip conflict")
    if q_tracks_grid and level == "code-capacity":
        raise ValueError("code-capacity level has perfect measurements")
    grid = sorted(set(float(p) for p in p_grid))
    if not grid:
        raise ValueError("empty p grid")
    for p in grid:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"physical error rate {p} outside [0, 1]")
    dists = list(distances)
    if not dists:
        raise ValueError("need at least one distance")
    if n_shots < 1:
        raise ValueError("n_shots must be positive")

    curves = []
    for d in dists:
        r = rounds if rounds is not None else (1 if level == "code-capacity" else d)
        points: list[LerPoint] = []
        failures: list[tuple[float, str]] = []
        for ip, p in enumerate(grid):
            try:
                points.append(
                    _run_point(
                        code, level, mode, d, p, n_shots, policy, r,
                        equal_angles, theta_gate, q_flip, q_tracks_grid,
                        readout_resample,
                        _point_seed(master_seed, d, ip), estimate_options,
                    )
                )
            except (CapabilityError, DegenerateStatisticsError) as exc:
                failures.append((p, f"{type(exc).__name__}: {exc}"))
        curves.append(
            LerCurve(code, level, mode, policy, int(d), points, failures)
        )
    return curves


# -- threshold extraction -----------------------------------------------------


@dataclass
class ThresholdEstimate:
    p_th: float | None
    uncertainty: float | None
    pair_crossings: dict
    pair_sigmas: dict
    excluded: tuple[int, ...] = ()
    message: str = "ok"

    @property
    def found(self) -> bool:
        return self.p_th is not None


def _log_halfwidth(pt: LerPoint) -> float:
    hw = (pt.ci_high - pt.ci_low) / 2.0
    return hw / max(pt.p_logical, _LOG_FLOOR)


def _pair_crossing(low: LerCurve, high: LerCurve):
    """Crossing of two curves (smaller d first) in log-log coordinates.

    Returns (p_cross, sigma) or None.  Scans ascending p for the first
    sign change of P_L(high) - P_L(low).  The crossing solves the chord
    intersection x = x1 + dx * a/(a+b) where a and b are the log-rate
    gaps at the bracket ends; sigma propagates each point's CI
    halfwidth through that formula to first order, capped at the width
    of the shared grid.
    """
    shared = sorted(set(low.p_values()) & set(high.p_values()))
    if len(shared) < 2:
        return None
    lo_pts = [low.point_at(p) for p in shared]
    hi_pts = [high.point_at(p) for p in shared]
    for k in range(len(shared) - 1):
        d1 = hi_pts[k].p_logical - lo_pts[k].p_logical
        d2 = hi_pts[k + 1].p_logical - lo_pts[k + 1].p_logical
        if not (d1 < 0.0 and d2 >= 0.0):
            continue
        x1, x2 = math.log(shared[k]), math.log(shared[k + 1])
        logs = [
            math.log(max(pt.p_logical, _LOG_FLOOR))
            for pt in (lo_pts[k], lo_pts[k + 1], hi_pts[k], hi_pts[k + 1])
        ]
        a = logs[0] - logs[2]  # > 0: low-d curve sits above at the left end
        b = logs[3] - logs[1]  # >= 0 by the sign-change test
        t = a / (a + b) if a + b > 0.0 else 0.5
        p_c = math.exp(x1 + (x2 - x1) * t)
        ha = math.hypot(_log_halfwidth(lo_pts[k]), _log_halfwidth(hi_pts[k]))
        hb = math.hypot(
            _log_halfwidth(lo_pts[k + 1]), _log_halfwidth(hi_pts[k + 1])
        )
        if a + b > 0.0:
            hx = (x2 - x1) * math.hypot(b * ha, a * hb) / (a + b) ** 2
        else:
            hx = x2 - x1
        sigma = min(p_c * hx, shared[-1] - shared[0])
        return p_c, sigma
    return None


def threshold_crossing(curves, exclude_distances=()) -> ThresholdEstimate:
    """Mean of pairwise adjacent-distance crossings, with spread.

    Uncertainty is the larger of the spread across pairs and the
    CI-propagated sigma of any single pair.  No sign change anywhere
    gives a "no crossing in range" result rather than an exception.
    """
    excluded = tuple(sorted(exclude_distances))
    usable = sorted(
        (c for c in curves if c.d not in excluded), key=lambda c: c.d
    )
    if len(usable) < 2:
        raise ValueError("need curves for at least two distances")
    meta = {(c.code, c.level, c.mode, c.policy) for c in usable}
    if len(meta) > 1:
        raise ValueError(f"curves mix experiments: {sorted(meta)}")
    if len({c.d for c in usable}) != len(usable):
        raise ValueError("duplicate distance in curve set")

    crossings: dict = {}
    sigmas: dict = {}
    for low, high in zip(usable, usable[1:]):
        got = _pair_crossing(low, high)
        if got is not None:
            crossings[(low.d, high.d)] = got[0]
            sigmas[(low.d, high.d)] = got[1]
    if not crossings:
        return ThresholdEstimate(
            None, None, {}, {}, excluded, "no crossing in range"
        )
    vals = list(crossings.values())
    p_th = sum(vals) / len(vals)
    spread = (max(vals) - min(vals)) / 2.0
    propagated = max(sigmas.values())
    return ThresholdEstimate(
        p_th, max(spread, propagated), crossings, sigmas, excluded
    )


# -- policy comparison --------------------------------------------------------


@dataclass(frozen=True)
class ComparisonPoint:
    p: float
    p_uniform: float
    p_estimated: float
    difference: float  # estimated - uniform
    difference_halfwidth: float
    ratio: float
    ratio_low: float
    ratio_high: float
    estimated_worse: bool


@dataclass
class PolicyComparison:
    code: str
    level: str
    mode: str
    d: int
    points: list[ComparisonPoint]

    @property
    def worse_points(self) -> list[ComparisonPoint]:
        return [pt for pt in self.points if pt.estimated_worse]


def _ratio_bounds(pe, hw_e, pu, hw_u):
    if pu == 0.0 and pe == 0.0:
        return 1.0, 1.0, 1.0
    if pu == 0.0:
        return math.inf, 0.0, math.inf
    ratio = pe / pu
    lo_num = max(pe - hw_e, 0.0)
    hi_den = pu - hw_u
    lo = lo_num / (pu + hw_u)
    hi = math.inf if hi_den <= 0.0 else (pe + hw_e) / hi_den
    return ratio, lo, hi


def compare_policies(uniform: LerCurve, estimated: LerCurve) -> PolicyComparison:
    """Pointwise estimated-vs-uniform report over a shared grid.

    A point is flagged as statistically worse when the estimated rate
    exceeds the uniform one by more than the combined CI halfwidth.
    """
    for label, a, b in (
        ("code", uniform.code, estimated.code),
        ("level", uniform.level, estimated.level),
        ("mode", uniform.mode, estimated.mode),
    ):
        if a and b and a != b:
            raise ValueError(f"{label} differs between curves: {a!r} vs {b!r}")
    if uniform.d != estimated.d:
        raise ValueError(
            f"distance differs between curves: {uniform.d} vs {estimated.d}"
        )
    if uniform.p_values() != estimated.p_values():
        raise ValueError("p grids differ between curves")

    points = []
    for pu_pt, pe_pt in zip(uniform.points, estimated.points):
        hw_u = (pu_pt.ci_high - pu_pt.ci_low) / 2.0
        hw_e = (pe_pt.ci_high - pe_pt.ci_low) / 2.0
        diff = pe_pt.p_logical - pu_pt.p_logical
        hw_d = math.hypot(hw_u, hw_e)
        ratio, lo, hi = _ratio_bounds(
            pe_pt.p_logical, hw_e, pu_pt.p_logical, hw_u
        )
        points.append(
            ComparisonPoint(
                p=pu_pt.p,
                p_uniform=pu_pt.p_logical,
                p_estimated=pe_pt.p_logical,
                difference=diff,
                difference_halfwidth=hw_d,
                ratio=ratio,
                ratio_low=lo,
                ratio_high=hi,
                estimated_worse=diff > hw_d,
            )
        )
    return PolicyComparison(
        uniform.code, uniform.level, uniform.mode, uniform.d, points
    )


# -- file interface -----------------------------------------------------------


def write_curve_csv(curve: LerCurve, path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_HEADER)
        for pt in curve.points:
            w.writerow(
                [
                    repr(float(pt.p)),
                    repr(float(pt.p_logical)),
                    repr(float(pt.ci_low)),
                    repr(float(pt.ci_high)),
                    int(pt.n_shots),
                    int(curve.d),
                ]
            )


def read_curve_csv(
    path: str, code: str = "", level: str = "", mode: str = "", policy: str = ""
) -> LerCurve:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CURVE_HEADER:
        raise ValueError(
            f"expected header {','.join(CURVE_HEADER)} in {path}"
        )
    points = []
    dists = set()
    for row in rows[1:]:
        if not row:
            continue
        if len(row) != len(CURVE_HEADER):
            raise ValueError(f"bad row in {path}: {row}")
        p, pl, lo, hi = (float(v) for v in row[:4])
        n, d = int(row[4]), int(row[5])
        dists.add(d)
        points.append(LerPoint(p, pl, lo, hi, n, round(pl * n)))
    if len(dists) > 1:
        raise ValueError(f"curve file {path} mixes distances {sorted(dists)}")
    d = dists.pop() if dists else 0
    return LerCurve(code, level, mode, policy, d, points)


def curve_to_dict(curve: LerCurve) -> dict:
    return {
        "code": curve.code,
        "level": curve.level,
        "mode": curve.mode,
        "policy": curve.policy,
        "d": curve.d,
        "points": [
            {
                "p": pt.p,
                "P_L": pt.p_logical,
                "ci_lo": pt.ci_low,
                "ci_hi": pt.ci_high,
                "N": pt.n_shots,
                "n_errors": pt.n_errors,
            }
            for pt in curve.points
        ],
        "failures": [
            {"p": p, "reason": reason} for p, reason in curve.failures
        ],
    }


def threshold_to_dict(est: ThresholdEstimate) -> dict:
    return {
        "p_th": est.p_th,
        "uncertainty": est.uncertainty,
        "pairs": {
            f"{d1}-{d2}": {
                "crossing": est.pair_crossings[(d1, d2)],
                "sigma": est.pair_sigmas[(d1, d2)],
            }
            for d1, d2 in sorted(est.pair_crossings)
        },
        "excluded_distances": list(est.excluded),
        "message": est.message,
    }


def write_summary_json(path: str, curves, thresholds=None) -> None:
    """Summary of a sweep: curves plus any threshold estimates.

    Content is a pure function of the inputs (sorted keys, no clocks),
    so reruns of the same experiment produce identical bytes.
    """
    payload = {
        "curves": [curve_to_dict(c) for c in curves],
        "thresholds": {
            label: threshold_to_dict(t)
            for label, t in (thresholds or {}).items()
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
