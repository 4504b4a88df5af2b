"""Command-line driver for the full pipeline.

Subcommands map 1:1 onto module operations: generate, sample,
estimate, decode, sweep, compare, selftest.  Every run that writes an
artifact also writes its resolved configuration (a small JSON with the
artifact version) next to it, so outputs are reproducible from the
sidecar alone.  Exit codes: 0 success, 2 usage, 3 capability limit,
1 anything else.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .codes import (
    LEVELS,
    MODES,
    NoiseModel,
    gen_repetition_memory,
    gen_rotated_surface_memory,
    parse_circuit,
    reference_dem,
    serialize_circuit,
)
from .decode import brute_force_match, decode_batch, defect_distances, mwpm
from .dem import (
    Dem,
    Mechanism,
    build_decoding_graph,
    parse_dem,
    read_shots,
    serialize_dem,
    write_shots,
)
from .errors import CapabilityError
from .estimate import EstimateOptions, bulk_edge_prob, estimate_dem
from .analysis import (
    POLICIES,
    compare_policies,
    read_curve_csv,
    sweep,
    threshold_crossing,
    threshold_to_dict,
    write_curve_csv,
    write_summary_json,
)
from .sampler import run_coherent_shots, run_pauli_frame_shots, sample_dem_shots

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_CAPABILITY = 3

CODES_CHOICES = ("repetition", "surface")


# -- config sidecars -----------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved parameters of one run; fully determines its outputs."""

    command: str
    parameters: dict
    version: str = __version__

    def to_text(self) -> str:
        payload = {
            "command": self.command,
            "parameters": self.parameters,
            "version": self.version,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        payload = json.loads(text)
        return cls(
            command=payload["command"],
            parameters=payload["parameters"],
            version=payload["version"],
        )

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_text(fh.read())


def _emit_config(out_path: str, command: str, parameters: dict) -> None:
    ExperimentConfig(command, parameters).save(out_path + ".config.json")


# -- argument parsing ----------------------------------------------------------


def parse_angle(text: str) -> float:
    """Angle in radians, or in units of pi with a 'pi' suffix."""
    s = text.strip().lower()
    try:
        if s.endswith("pi"):
            return float(s[:-2] or "1") * math.pi
        return float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad angle {text!r}") from None


def parse_angle_list(text: str):
    vals = tuple(parse_angle(part) for part in text.split(","))
    return vals[0] if len(vals) == 1 else vals


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"{text} is not positive")
    return v


def _angles_json(val):
    return list(val) if isinstance(val, tuple) else val


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("DEMKIT_WORKERS", "1")))
    except ValueError:
        return 1


# -- subcommands ---------------------------------------------------------------


def _cmd_generate(args) -> int:
    noise = NoiseModel(
        theta_data=args.theta,
        theta_anc=args.theta_anc,
        theta_gate=args.theta_g,
        q_flip=args.q,
        mode=args.mode,
    )
    gen = (
        gen_repetition_memory
        if args.code == "repetition"
        else gen_rotated_surface_memory
    )
    circuit = gen(args.d, args.r, noise, args.level)
    with open(args.out, "w") as fh:
        fh.write(serialize_circuit(circuit))
    _emit_config(
        args.out,
        "generate",
        {
            "code": args.code,
            "d": args.d,
            "r": args.r,
            "level": args.level,
            "mode": args.mode,
            "theta": _angles_json(args.theta),
            "theta_anc": _angles_json(args.theta_anc),
            "theta_g": args.theta_g,
            "q": args.q,
            "out": args.out,
        },
    )
    print(
        f"wrote {args.out}: {args.code} d={args.d} r={args.r} "
        f"{args.level}/{args.mode}, {len(circuit.detectors)} detectors"
    )
    return EXIT_OK


def _cmd_sample(args) -> int:
    with open(args.circuit) as fh:
        circuit = parse_circuit(fh.read())
    if circuit.mode == "twirled":
        if args.resample != 1:
            raise ValueError(
                "readout resampling only pays off for statevector "
                "trajectories; the frame sampler draws fresh shots instead"
            )
        batch = run_pauli_frame_shots(circuit, args.shots, args.seed)
    else:
        n_traj = -(-args.shots // args.resample)
        batch = run_coherent_shots(
            circuit, n_traj, args.seed, readout_resample=args.resample
        )
    write_shots(batch, args.out, args.fmt)
    _emit_config(
        args.out,
        "sample",
        {
            "circuit": args.circuit,
            "shots": args.shots,
            "rows_written": batch.n_shots,
            "resample": args.resample,
            "seed": args.seed,
            "fmt": args.fmt,
            "workers": args.workers,
            "out": args.out,
        },
    )
    print(f"wrote {args.out}: {batch.n_shots} shots ({args.fmt})")
    return EXIT_OK


def _diag_key(key) -> str:
    return "-".join(str(v) for v in key) if isinstance(key, tuple) else str(key)


def _cmd_estimate(args) -> int:
    with open(args.circuit) as fh:
        circuit = parse_circuit(fh.read())
    reference = reference_dem(circuit)
    batch = read_shots(args.shots)
    options = EstimateOptions(
        hyperedges=args.hyperedges, all_pairs=args.all_pairs
    )
    est = estimate_dem(batch, reference, options)
    with open(args.out, "w") as fh:
        fh.write(serialize_dem(est.to_dem()))
    diagnostics = {
        "n_shots": est.n_shots,
        "angles": {_diag_key(k): v for k, v in est.angles.items()},
        "edges": {_diag_key(k): v for k, v in est.edges.items()},
        "boundaries": {_diag_key(k): v for k, v in est.boundaries.items()},
        "hyperedges": {_diag_key(k): v for k, v in est.hyperedges.items()},
    }
    for name, table in est.diagnostics.items():
        if isinstance(table, dict):
            diagnostics[name] = {_diag_key(k): v for k, v in table.items()}
        else:
            diagnostics[name] = table
    with open(args.out + ".diagnostics.json", "w") as fh:
        json.dump(diagnostics, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    _emit_config(
        args.out,
        "estimate",
        {
            "circuit": args.circuit,
            "shots": args.shots,
            "hyperedges": args.hyperedges,
            "all_pairs": args.all_pairs,
            "out": args.out,
        },
    )
    print(
        f"wrote {args.out}: {len(est.edges)} edges, "
        f"{len(est.boundaries)} boundaries, {len(est.hyperedges)} hyperedges "
        f"from {est.n_shots} shots"
    )
    return EXIT_OK


def _cmd_decode(args) -> int:
    if args.policy == "estimated" and not args.dem:
        raise ValueError("--policy estimated needs --dem with estimated rates")
    if args.dem:
        with open(args.dem) as fh:
            model = parse_dem(fh.read())
    elif args.circuit:
        with open(args.circuit) as fh:
            model = reference_dem(parse_circuit(fh.read()))
    else:
        raise ValueError("need --dem or --circuit to build the decoding graph")
    batch = read_shots(args.shots)
    graph = build_decoding_graph(model, args.policy)
    res = decode_batch(graph, batch)
    result = {
        "version": __version__,
        "policy": args.policy,
        "n_shots": res.n_shots,
        "n_errors": res.n_errors,
        "p_logical": res.p_logical,
        "ci_low": res.ci_low,
        "ci_high": res.ci_high,
    }
    with open(args.out, "w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _emit_config(
        args.out,
        "decode",
        {
            "circuit": args.circuit,
            "dem": args.dem,
            "shots": args.shots,
            "policy": args.policy,
            "workers": args.workers,
            "out": args.out,
        },
    )
    if res.p_logical is None:
        print(f"wrote {args.out}: {res.n_shots} shots, no observable records")
    else:
        print(
            f"wrote {args.out}: P_L = {res.p_logical:.6f} "
            f"[{res.ci_low:.6f}, {res.ci_high:.6f}] over {res.n_shots} shots"
        )
    return EXIT_OK


def _cmd_sweep(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    options = EstimateOptions(hyperedges=args.hyperedges)
    curves = sweep(
        args.code,
        args.level,
        args.mode,
        args.d,
        args.p_grid,
        args.shots,
        args.policy,
        rounds=args.rounds,
        equal_angles=args.equal_angles,
        theta_gate=args.theta_g,
        q_flip=args.q,
        q_tracks_grid=args.q_tracks_grid,
        readout_resample=args.resample,
        master_seed=args.seed,
        estimate_options=options,
    )
    for curve in curves:
        write_curve_csv(curve, os.path.join(args.out, f"curve_d{curve.d}.csv"))
    thresholds = {}
    label = f"{args.code}-{args.level}-{args.mode}-{args.policy}"
    if len(curves) >= 2:
        est = threshold_crossing(curves, exclude_distances=args.exclude_d)
        thresholds[label] = est
        if est.found:
            print(f"threshold {label}: {est.p_th:.4f} +/- {est.uncertainty:.4f}")
        else:
            print(f"threshold {label}: no crossing in range")
    write_summary_json(
        os.path.join(args.out, "summary.json"), curves, thresholds
    )
    ExperimentConfig(
        "sweep",
        {
            "code": args.code,
            "level": args.level,
            "mode": args.mode,
            "d": list(args.d),
            "p_grid": [float(p) for p in args.p_grid],
            "shots": args.shots,
            "policy": args.policy,
            "rounds": args.rounds,
            "equal_angles": args.equal_angles,
            "theta_g": args.theta_g,
            "q": args.q,
            "q_tracks_grid": args.q_tracks_grid,
            "resample": args.resample,
            "seed": args.seed,
            "exclude_d": list(args.exclude_d),
            "hyperedges": args.hyperedges,
            "workers": args.workers,
            "out": args.out,
        },
    ).save(os.path.join(args.out, "config.json"))
    n_pts = sum(len(c.points) for c in curves)
    n_fail = sum(len(c.failures) for c in curves)
    print(f"wrote {args.out}: {len(curves)} curves, {n_pts} points"
          + (f", {n_fail} failed points" if n_fail else ""))
    return EXIT_OK


def _cmd_compare(args) -> int:
    uniform = read_curve_csv(args.uniform, policy="uniform")
    estimated = read_curve_csv(args.estimated, policy="estimated")
    rep = compare_policies(uniform, estimated)
    payload = {
        "version": __version__,
        "d": rep.d,
        "points": [
            {
                "p": pt.p,
                "P_L_uniform": pt.p_uniform,
                "P_L_estimated": pt.p_estimated,
                "difference": pt.difference,
                "difference_halfwidth": pt.difference_halfwidth,
                "ratio": pt.ratio,
                "ratio_low": pt.ratio_low,
                "ratio_high": pt.ratio_high,
                "estimated_worse": pt.estimated_worse,
            }
            for pt in rep.points
        ],
        "n_worse": len(rep.worse_points),
    }
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    _emit_config(
        args.out,
        "compare",
        {"uniform": args.uniform, "estimated": args.estimated, "out": args.out},
    )
    print(
        f"wrote {args.out}: {len(rep.points)} points, "
        f"{len(rep.worse_points)} where estimated is statistically worse"
    )
    return EXIT_OK


# -- selftest ------------------------------------------------------------------


def _selftest_matching(rng) -> str:
    for trial in range(200):
        k = int(rng.integers(2, 11))
        dist = rng.uniform(0.5, 10.0, size=(k + 1, k + 1))
        dist = (dist + dist.T) / 2
        np.fill_diagonal(dist, 0.0)
        parity = rng.integers(0, 2, size=(k + 1, k + 1)).astype(np.uint8)
        ours = mwpm(dist, parity)
        ref = brute_force_match(dist, parity)
        if abs(ours.total_weight - ref.total_weight) > 1e-9:
            raise AssertionError(
                f"trial {trial}: matching weight {ours.total_weight} "
                f"!= brute force {ref.total_weight}"
            )
    return "matching equals brute force on 200 random instances"


def _selftest_closed_forms() -> str:
    from .estimate import MomentTable

    # one mechanism firing both detectors with p = 0.1 and nothing else:
    # marginals and the pair moment all sit at exactly 0.1
    n = 10**6
    table = MomentTable(
        n_shots=n,
        n_detectors=2,
        single_counts=np.array([100000, 100000], np.int64),
        pair_keys=((0, 1),),
        pair_counts=np.array([100000], np.int64),
        window_keys=(),
        window_odd_counts=np.zeros(0, np.int64),
    )
    got = bulk_edge_prob(table, 0, 1)
    if abs(got - 0.1) > 1e-12:
        raise AssertionError(f"plug-in inversion gave {got}, wanted 0.1")
    return "closed-form inversion exact on analytic moments"


def _selftest_bernoulli() -> str:
    edges = [0.02, 0.05, 0.08, 0.03]
    b0, b4 = 0.04, 0.06
    mechs = [Mechanism((0,), b0, True), Mechanism((4,), b4)]
    for i, p in enumerate(edges):
        mechs.append(Mechanism((i, i + 1), p))
    truth = Dem(5, mechs, detector_coords=[(i, 0) for i in range(5)])
    reference = Dem(
        5,
        [Mechanism(m.detectors, 0.0, m.logical_flip) for m in mechs],
        detector_coords=truth.detector_coords,
    )
    batch = sample_dem_shots(truth, 300000, master_seed=12)
    est = estimate_dem(batch, reference)
    for i, p in enumerate(edges):
        sigma = est.diagnostics["stderr"][(i, i + 1)]
        if abs(est.edges[(i, i + 1)] - p) > 4 * sigma:
            raise AssertionError(f"edge ({i},{i + 1}) off: {est.edges[(i, i + 1)]} vs {p}")
    for i, p in ((0, b0), (4, b4)):
        sigma = est.diagnostics["stderr"][(i,)]
        if abs(est.boundaries[i] - p) > 4 * sigma:
            raise AssertionError(f"boundary {i} off: {est.boundaries[i]} vs {p}")
    return "estimator recovers a known Bernoulli model within 4 sigma"


def _selftest_noiseless() -> str:
    quiet = NoiseModel(mode="twirled")
    for code, gen in (
        ("repetition", gen_repetition_memory),
        ("surface", gen_rotated_surface_memory),
    ):
        level = "circuit" if code == "repetition" else "phenomenological"
        circuit = gen(3, 3, quiet, level)
        batch = run_pauli_frame_shots(circuit, 2000, master_seed=3)
        if batch.detector_array().any():
            raise AssertionError(f"noiseless {code} circuit fired a detector")
        res = decode_batch(
            build_decoding_graph(reference_dem(circuit), "uniform"), batch
        )
        if res.p_logical != 0.0:
            raise AssertionError(f"noiseless {code} P_L = {res.p_logical}")
    return "noiseless circuits are silent and error-free"


def _cmd_selftest(args) -> int:
    rng = np.random.default_rng(2026)
    suites = (
        ("matching", lambda: _selftest_matching(rng)),
        ("closed-forms", _selftest_closed_forms),
        ("bernoulli-recovery", _selftest_bernoulli),
        ("noiseless", _selftest_noiseless),
    )
    failed = 0
    for name, fn in suites:
        try:
            detail = fn()
        except AssertionError as exc:
            print(f"FAIL {name}: {exc}")
            failed += 1
            continue
        print(f"ok {name}: {detail}")
    print(f"selftest {'failed' if failed else 'passed'} (version {__version__})")
    return EXIT_ERROR if failed else EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demkit",
        description="Memory-experiment workbench: simulate, estimate "
        "detector error models from syndromes, decode, sweep thresholds.",
    )
    parser.add_argument(
        "--version", action="version", version=f"demkit {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a memory-experiment circuit")
    g.add_argument("--code", required=True, choices=CODES_CHOICES)
    g.add_argument("--d", required=True, type=_positive_int)
    g.add_argument("--r", required=True, type=_positive_int)
    g.add_argument("--level", required=True, choices=LEVELS)
    g.add_argument("--mode", default="coherent", choices=MODES)
    g.add_argument("--theta", default=0.0, type=parse_angle_list,
                   help="data angle(s), e.g. 0.05pi or comma list")
    g.add_argument("--theta-anc", default=0.0, type=parse_angle_list)
    g.add_argument("--theta-g", default=0.0, type=parse_angle)
    g.add_argument("--q", default=0.0, type=float,
                   help="classical readout flip probability")
    g.add_argument("-o", "--out", required=True)
    g.set_defaults(func=_cmd_generate)

    s = sub.add_parser("sample", help="sample syndrome shots from a circuit")
    s.add_argument("-c", "--circuit", required=True)
    s.add_argument("-N", "--shots", required=True, type=_positive_int)
    s.add_argument("--seed", default=0, type=int)
    s.add_argument("-m", "--resample", default=1, type=_positive_int,
                   help="readout resamples per statevector trajectory")
    s.add_argument("--fmt", default="b8", choices=("b8", "01"))
    s.add_argument("--workers", default=_default_workers(), type=_positive_int)
    s.add_argument("-o", "--out", required=True)
    s.set_defaults(func=_cmd_sample)

    e = sub.add_parser("estimate", help="estimate a DEM from syndrome shots")
    e.add_argument("-c", "--circuit", required=True)
    e.add_argument("-s", "--shots", required=True)
    e.add_argument("--hyperedges", action="store_true",
                   help="estimate 3-/4-detector events and correct edges")
    e.add_argument("--all-pairs", action="store_true",
                   help="scan every detector pair, not just candidates")
    e.add_argument("-o", "--out", required=True)
    e.set_defaults(func=_cmd_estimate)

    d = sub.add_parser("decode", help="decode shots against a model")
    d.add_argument("-c", "--circuit", help="circuit for the reference model")
    d.add_argument("-e", "--dem", help="explicit model file")
    d.add_argument("-s", "--shots", required=True)
    d.add_argument("--policy", default="uniform", choices=POLICIES)
    d.add_argument("--workers", default=_default_workers(), type=_positive_int)
    d.add_argument("-o", "--out", required=True)
    d.set_defaults(func=_cmd_decode)

    w = sub.add_parser("sweep", help="logical error rate over a p grid")
    w.add_argument("--code", required=True, choices=CODES_CHOICES)
    w.add_argument("--level", required=True, choices=LEVELS)
    w.add_argument("--mode", required=True, choices=MODES)
    w.add_argument("--d", required=True, type=_int_list,
                   help="comma-separated distances")
    w.add_argument("--p-grid", required=True, type=_float_list,
                   help="comma-separated physical error rates")
    w.add_argument("-N", "--shots", required=True, type=_positive_int)
    w.add_argument("--policy", default="uniform", choices=POLICIES)
    w.add_argument("--rounds", default=None, type=_positive_int)
    w.add_argument("--equal-angles", action="store_true",
                   help="tie the gate angle to the grid angle")
    w.add_argument("--theta-g", default=0.0, type=parse_angle)
    w.add_argument("--q", default=0.0, type=float)
    w.add_argument("--q-tracks-grid", action="store_true",
                   help="set the readout flip probability to p per point")
    w.add_argument("-m", "--resample", default=1, type=_positive_int)
    w.add_argument("--seed", default=0, type=int)
    w.add_argument("--exclude-d", default=[], type=_int_list,
                   help="distances left out of the threshold average")
    w.add_argument("--hyperedges", action="store_true")
    w.add_argument("--workers", default=_default_workers(), type=_positive_int)
    w.add_argument("-o", "--out", required=True, help="output directory")
    w.set_defaults(func=_cmd_sweep)

    c = sub.add_parser("compare", help="compare uniform vs estimated curves")
    c.add_argument("--uniform", required=True, help="curve CSV")
    c.add_argument("--estimated", required=True, help="curve CSV")
    c.add_argument("-o", "--out", required=True)
    c.set_defaults(func=_cmd_compare)

    t = sub.add_parser("selftest", help="run the built-in oracle suites")
    t.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CapabilityError as exc:
        print(f"capability limit: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
