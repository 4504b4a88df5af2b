"""Code layouts, noise models and memory-experiment circuit generators.

Circuits are flat instruction lists over a small mnemonic set.  A memory
experiment for distance d and r rounds always has the same shape:

  prep        H on all data qubits, plus deterministic Z-check projections
              for the surface code so the state starts as an encoded
              logical |+> rather than a product state
  per round   a layer of RZ(2*theta) data noise, then syndrome
              extraction (direct X-check projections, or ancilla gadgets
              at circuit level), with classical measurement flips on all
              rounds except the last
  readout     transversal H + MEASURE on every data qubit

Detectors compare consecutive syndrome values; the extra final layer
compares the last syndrome round against check parities computed from
the transversal readout, giving (#checks) * (rounds + 1) detectors.

The observable is the final X-basis readout of the logical X support
(qubit 0 for the repetition code, the top row for the surface code).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

from .dem import Dem, Mechanism
from .errors import CapabilityError

LEVELS = ("code-capacity", "phenomenological", "circuit")
MODES = ("coherent", "twirled")

# Instructions that create one measurement record each.
RECORD_OPS = ("MEASURE", "MPP_X")
# Instructions that are stochastic (or coherent) noise insertions.
NOISE_OPS = ("RZ", "RZZ", "FLIP_Z", "FLIP_MEAS")


class Instr(NamedTuple):
    name: str
    qubits: tuple[int, ...]
    param: float | None = None


@dataclass(frozen=True)
class CodeLayout:
    kind: str
    distance: int
    n_data: int
    checks: tuple[tuple[int, ...], ...]  # X-check data supports
    z_checks: tuple[tuple[int, ...], ...]
    observable_support: tuple[int, ...]  # logical X support

    def __post_init__(self):
        for sup in self.checks + self.z_checks:
            if len(set(sup)) != len(sup) or any(
                not 0 <= q < self.n_data for q in sup
            ):
                raise ValueError(f"bad check support {sup}")
        # Every X check must overlap every Z check evenly, and the
        # logical must commute with the Z checks too.
        for xs in self.checks + (self.observable_support,):
            for zs in self.z_checks:
                if len(set(xs) & set(zs)) % 2:
                    raise ValueError(
                        f"X support {xs} anticommutes with Z check {zs}"
                    )


def repetition_layout(d: int) -> CodeLayout:
    if d < 2:
        raise ValueError(f"repetition code needs d >= 2, got {d}")
    checks = tuple((j, j + 1) for j in range(d - 1))
    return CodeLayout(
        kind="repetition",
        distance=d,
        n_data=d,
        checks=checks,
        z_checks=(),
        observable_support=(0,),
    )


def rotated_surface_layout(d: int) -> CodeLayout:
    """Rotated surface code on a d x d grid, qubit (i, j) -> i*d + j.

    Plaquette anchors live on the (d+1) x (d+1) dual grid; anchor (a, b)
    covers the up-to-four data qubits {(a-1, b-1), (a-1, b), (a, b-1),
    (a, b)} that fall inside the grid.  X checks sit on odd-parity
    anchors: all interior ones plus the left/right column stubs.  Z
    checks take the even-parity interiors plus top/bottom row stubs.
    """
    if d < 3 or d % 2 == 0:
        raise ValueError(f"rotated surface code needs odd d >= 3, got {d}")

    def cover(a: int, b: int) -> tuple[int, ...]:
        qubits = []
        for i in (a - 1, a):
            for j in (b - 1, b):
                if 0 <= i < d and 0 <= j < d:
                    qubits.append(i * d + j)
        return tuple(sorted(qubits))

    x_checks = []
    z_checks = []
    for a in range(d + 1):
        for b in range(d + 1):
            interior_a = 1 <= a <= d - 1
            interior_b = 1 <= b <= d - 1
            if (a + b) % 2 == 1:
                if interior_a and (interior_b or b in (0, d)):
                    x_checks.append((a, b))
            else:
                if interior_b and (interior_a or a in (0, d)):
                    z_checks.append((a, b))
    x_checks.sort()
    z_checks.sort()
    return CodeLayout(
        kind="rotated-surface",
        distance=d,
        n_data=d * d,
        checks=tuple(cover(a, b) for a, b in x_checks),
        z_checks=tuple(cover(a, b) for a, b in z_checks),
        observable_support=tuple(range(d)),  # top row
    )


@dataclass(frozen=True)
class NoiseModel:
    """Z-noise strengths for a memory experiment.

    Angles are in radians; a coherent fault applies e^{-i theta Z} per
    qubit (and e^{-i theta_gate ZZ} after each CNOT), and the twirled
    counterpart flips Z with probability sin^2(theta).  `q_flip` is the
    classical measurement-record flip probability.  Scalars broadcast;
    sequences give per-data-qubit / per-check values.
    """

    theta_data: float | tuple[float, ...] = 0.0
    theta_anc: float | tuple[float, ...] = 0.0
    theta_gate: float = 0.0
    q_flip: float = 0.0
    mode: str = "coherent"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        for label, val in (
            ("theta_data", self.theta_data),
            ("theta_anc", self.theta_anc),
            ("theta_gate", self.theta_gate),
        ):
            vals = val if isinstance(val, tuple) else (val,)
            for v in vals:
                if not 0.0 <= v <= math.pi / 2:
                    raise ValueError(
                        f"{label} angle {v} outside [0, pi/2] radians"
                    )
        if not 0.0 <= self.q_flip <= 0.5:
            raise ValueError(f"q_flip {self.q_flip} outside [0, 0.5]")

    def data_angles(self, n_data: int) -> tuple[float, ...]:
        return _broadcast(self.theta_data, n_data, "theta_data")

    def anc_angles(self, n_checks: int) -> tuple[float, ...]:
        return _broadcast(self.theta_anc, n_checks, "theta_anc")


def _broadcast(val, n: int, label: str) -> tuple[float, ...]:
    if isinstance(val, tuple):
        if len(val) != n:
            raise ValueError(f"{label} has {len(val)} entries, need {n}")
        return val
    return (float(val),) * n


@dataclass
class CircuitProgram:
    n_qubits: int
    instructions: list[Instr]
    n_records: int
    detectors: list[tuple[int, ...]]
    detector_coords: list[tuple[int, int]]  # (check, round) per detector
    observables: list[tuple[int, ...]]
    metadata: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.n_qubits < 1:
            raise ValueError("circuit needs at least one qubit")
        count = 0
        for ins in self.instructions:
            if ins.name not in ("DETECTOR", "OBSERVABLE"):
                for q in ins.qubits:
                    if not 0 <= q < self.n_qubits:
                        raise ValueError(
                            f"{ins.name} targets qubit {q} of {self.n_qubits}"
                        )
            if ins.name in RECORD_OPS:
                count += 1
            elif ins.name == "FLIP_MEAS" and count == 0:
                raise ValueError("FLIP_MEAS before any measurement")
        if count != self.n_records:
            raise ValueError(
                f"instruction stream produces {count} records, "
                f"header says {self.n_records}"
            )
        for group in list(self.detectors) + list(self.observables):
            for rec in group:
                if not 0 <= rec < self.n_records:
                    raise ValueError(f"record reference {rec} out of range")
        if len(self.detector_coords) != len(self.detectors):
            raise ValueError("detector_coords length != number of detectors")

    def noise_sites(self) -> list[int]:
        return [
            k for k, ins in enumerate(self.instructions)
            if ins.name in NOISE_OPS
        ]

    @property
    def mode(self) -> str:
        return self.metadata.get("mode", "coherent")


# -- generators --------------------------------------------------------------


def gen_repetition_memory(
    d: int, r: int, noise: NoiseModel, level: str
) -> CircuitProgram:
    _check_level(level)
    if r < 1:
        raise ValueError(f"need at least one round, got {r}")
    layout = repetition_layout(d)
    _check_noise_for_level(noise, level)

    if level == "circuit":
        return _gen_repetition_circuit_level(layout, r, noise)
    return _gen_projection_memory(layout, r, noise, level)


def gen_rotated_surface_memory(
    d: int, r: int, noise: NoiseModel, level: str
) -> CircuitProgram:
    _check_level(level)
    if r < 1:
        raise ValueError(f"need at least one round, got {r}")
    if level == "circuit":
        raise CapabilityError(
            "circuit-level surface-code gadgets are not implemented; "
            "use code-capacity or phenomenological"
        )
    layout = rotated_surface_layout(d)
    if d > 5:
        raise CapabilityError(
            f"surface-code statevector memory capped at d <= 5, got d={d}"
        )
    _check_noise_for_level(noise, level)
    return _gen_projection_memory(layout, r, noise, level)


def _check_level(level: str) -> None:
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}, got {level!r}")


def _check_noise_for_level(noise: NoiseModel, level: str) -> None:
    if level == "code-capacity" and noise.q_flip != 0.0:
        raise ValueError("code-capacity level has perfect measurements; q_flip must be 0")
    if level != "circuit":
        anc = noise.theta_anc if isinstance(noise.theta_anc, tuple) else (noise.theta_anc,)
        if any(v != 0.0 for v in anc) or noise.theta_gate != 0.0:
            raise ValueError(
                "ancilla and gate angles only make sense at circuit level"
            )


def _gen_projection_memory(
    layout: CodeLayout, r: int, noise: NoiseModel, level: str
) -> CircuitProgram:
    """Memory circuit where syndromes are direct X-string projections."""
    d = layout.distance
    n = layout.n_data
    angles = noise.data_angles(n)
    q_flip = noise.q_flip if level == "phenomenological" else 0.0
    ins: list[Instr] = []

    for j in range(n):
        ins.append(Instr("H", (j,)))
    for zs in layout.z_checks:
        ins.append(Instr("PROJECT_ZPLUS", zs))

    rec = 0
    syndrome: list[list[int]] = []  # record ids per round, per check
    for t in range(1, r + 1):
        for j in range(n):
            ins.append(Instr("RZ", (j,), 2.0 * angles[j]))
        row = []
        for sup in layout.checks:
            ins.append(Instr("MPP_X", sup))
            row.append(rec)
            rec += 1
            if q_flip > 0.0 and t < r:
                ins.append(Instr("FLIP_MEAS", (), q_flip))
        syndrome.append(row)

    final_block_start = len(ins)
    data_rec = {}
    for j in range(n):
        ins.append(Instr("H", (j,)))
    for j in range(n):
        ins.append(Instr("MEASURE", (j,)))
        data_rec[j] = rec
        rec += 1

    detectors: list[tuple[int, ...]] = []
    coords: list[tuple[int, int]] = []
    for c in range(len(layout.checks)):
        detectors.append((syndrome[0][c],))
        coords.append((c, 0))
        for t in range(1, r):
            detectors.append((syndrome[t - 1][c], syndrome[t][c]))
            coords.append((c, t))
        final = tuple(
            sorted([syndrome[r - 1][c]] + [data_rec[j] for j in layout.checks[c]])
        )
        detectors.append(final)
        coords.append((c, r))
    order = sorted(range(len(coords)), key=lambda k: (coords[k][1], coords[k][0]))
    detectors = [detectors[k] for k in order]
    coords = [coords[k] for k in order]

    observable = tuple(data_rec[j] for j in layout.observable_support)
    for det in detectors:
        ins.append(Instr("DETECTOR", det))
    ins.append(Instr("OBSERVABLE", observable))

    prog = CircuitProgram(
        n_qubits=n,
        instructions=ins,
        n_records=rec,
        detectors=detectors,
        detector_coords=coords,
        observables=[observable],
        metadata={
            "code": layout.kind,
            "distance": d,
            "rounds": r,
            "level": level,
            "mode": noise.mode,
            "data_qubits": tuple(range(n)),
            "observable_support": layout.observable_support,
            "final_block_start": final_block_start,
            "fidelity_reference": "logical_plus",
        },
    )
    prog.validate()
    return prog


def _gen_repetition_circuit_level(
    layout: CodeLayout, r: int, noise: NoiseModel
) -> CircuitProgram:
    """Ancilla-gadget repetition memory.

    Data qubits 0..d-1, ancilla for check c at index d+c.  Checks run
    sequentially within a round; each gadget is RESET, H, ancilla
    dephasing, CNOT onto the left data qubit, CNOT onto the right one
    (each followed by an RZZ coupling when theta_gate > 0), H, MEASURE.
    """
    d = layout.distance
    n_checks = len(layout.checks)
    n = d + n_checks
    data_angles = noise.data_angles(d)
    anc_angles = noise.anc_angles(n_checks)
    th_g = noise.theta_gate
    q_flip = noise.q_flip
    ins: list[Instr] = []

    for j in range(d):
        ins.append(Instr("H", (j,)))

    rec = 0
    syndrome: list[list[int]] = []
    for t in range(1, r + 1):
        for j in range(d):
            ins.append(Instr("RZ", (j,), 2.0 * data_angles[j]))
        row = []
        for c, sup in enumerate(layout.checks):
            anc = d + c
            ins.append(Instr("RESET", (anc,)))
            ins.append(Instr("H", (anc,)))
            ins.append(Instr("RZ", (anc,), 2.0 * anc_angles[c]))
            for j in sup:
                ins.append(Instr("CNOT", (anc, j)))
                if th_g > 0.0:
                    # The coupling carries the SAME sign as the qubit
                    # dephasing.  That relative sign is physical (it decides
                    # whether gate and qubit rotations interfere
                    # constructively) and this orientation is the one whose
                    # thresholds drop monotonically as theta_gate grows;
                    # the opposite sign partially cancels the qubit errors
                    # instead.  Twirled paths only ever see sin^2.
                    ins.append(Instr("RZZ", (anc, j), 2.0 * th_g))
            ins.append(Instr("H", (anc,)))
            ins.append(Instr("MEASURE", (anc,)))
            row.append(rec)
            rec += 1
            if q_flip > 0.0 and t < r:
                ins.append(Instr("FLIP_MEAS", (), q_flip))
        syndrome.append(row)

    final_block_start = len(ins)
    data_rec = {}
    for j in range(d):
        ins.append(Instr("H", (j,)))
    for j in range(d):
        ins.append(Instr("MEASURE", (j,)))
        data_rec[j] = rec
        rec += 1

    detectors: list[tuple[int, ...]] = []
    coords: list[tuple[int, int]] = []
    for c in range(n_checks):
        detectors.append((syndrome[0][c],))
        coords.append((c, 0))
        for t in range(1, r):
            detectors.append((syndrome[t - 1][c], syndrome[t][c]))
            coords.append((c, t))
        final = tuple(
            sorted([syndrome[r - 1][c]] + [data_rec[j] for j in layout.checks[c]])
        )
        detectors.append(final)
        coords.append((c, r))
    order = sorted(range(len(coords)), key=lambda k: (coords[k][1], coords[k][0]))
    detectors = [detectors[k] for k in order]
    coords = [coords[k] for k in order]

    observable = tuple(data_rec[j] for j in layout.observable_support)
    for det in detectors:
        ins.append(Instr("DETECTOR", det))
    ins.append(Instr("OBSERVABLE", observable))

    prog = CircuitProgram(
        n_qubits=n,
        instructions=ins,
        n_records=rec,
        detectors=detectors,
        detector_coords=coords,
        observables=[observable],
        metadata={
            "code": layout.kind,
            "distance": d,
            "rounds": r,
            "level": "circuit",
            "mode": noise.mode,
            "data_qubits": tuple(range(d)),
            "observable_support": layout.observable_support,
            "final_block_start": final_block_start,
            "fidelity_reference": None,
        },
    )
    prog.validate()
    return prog


def truncate_final_readout(circuit: CircuitProgram) -> CircuitProgram:
    """Drop the transversal readout block and everything derived from it.

    The result still carries observable_support metadata, so fault
    replay and fidelity evaluation know which X string is the logical.
    Detectors in the final comparison layer disappear along with the
    readout; the per-round detectors are unchanged.
    """
    start = circuit.metadata.get("final_block_start")
    if start is None:
        raise ValueError("circuit has no final readout block to truncate")
    body = circuit.instructions[:start]
    rec = sum(1 for ins in body if ins.name in RECORD_OPS)
    keep = [
        k for k, det in enumerate(circuit.detectors)
        if all(ref < rec for ref in det)
    ]
    detectors = [circuit.detectors[k] for k in keep]
    coords = [circuit.detector_coords[k] for k in keep]
    for det in detectors:
        body.append(Instr("DETECTOR", det))
    meta = dict(circuit.metadata)
    meta["final_block_start"] = None
    meta["rounds_truncated"] = True
    prog = CircuitProgram(
        n_qubits=circuit.n_qubits,
        instructions=body,
        n_records=rec,
        detectors=detectors,
        detector_coords=coords,
        observables=[],
        metadata=meta,
    )
    prog.validate()
    return prog


# -- Pauli-frame fault replay and the reference model ------------------------


def propagate_single_fault(
    circuit: CircuitProgram, site: int
) -> tuple[tuple[int, ...], int]:
    """Detectors flipped (sorted) and the logical flip for one fault site.

    Replays the circuit with zero noise except a single deterministic
    fault at instruction index `site`: a Z (or ZZ) frame for rotation
    sites, a record flip for FLIP_MEAS sites.  Everything downstream is
    Clifford, so frames propagate linearly.
    """
    ins_list = circuit.instructions
    if not 0 <= site < len(ins_list) or ins_list[site].name not in NOISE_OPS:
        raise ValueError(f"instruction {site} is not a noise site")
    n = circuit.n_qubits
    fx = bytearray(n)
    fz = bytearray(n)
    rec_flips: list[int] = []
    for k, ins in enumerate(ins_list):
        name = ins.name
        if name == "H":
            q = ins.qubits[0]
            fx[q], fz[q] = fz[q], fx[q]
        elif name == "CNOT":
            c, t = ins.qubits
            fx[t] ^= fx[c]
            fz[c] ^= fz[t]
        elif name == "RESET":
            q = ins.qubits[0]
            fx[q] = 0
            fz[q] = 0
        elif name == "MEASURE":
            rec_flips.append(fx[ins.qubits[0]])
        elif name == "MPP_X":
            par = 0
            for q in ins.qubits:
                par ^= fz[q]
            rec_flips.append(par)
        elif name == "PROJECT_ZPLUS":
            if any(fx[q] for q in ins.qubits):
                raise NotImplementedError(
                    "fault replay does not support X frames crossing a "
                    "Z-projection; put noise after state prep"
                )
        elif name == "RZ" or name == "FLIP_Z":
            if k == site:
                fz[ins.qubits[0]] ^= 1
        elif name == "RZZ":
            if k == site:
                a, b = ins.qubits
                fz[a] ^= 1
                fz[b] ^= 1
        elif name == "FLIP_MEAS":
            if k == site:
                rec_flips[-1] ^= 1
        # X, Z, DETECTOR, OBSERVABLE: no frame effect during replay

    fired = []
    for i, det in enumerate(circuit.detectors):
        par = 0
        for ref in det:
            par ^= rec_flips[ref]
        if par:
            fired.append(i)
    if circuit.observables:
        logical = 0
        for ref in circuit.observables[0]:
            logical ^= rec_flips[ref]
    else:
        # Truncated circuit: the logical X support is still tracked by
        # the surviving Z frames.
        logical = 0
        for q in circuit.metadata.get("observable_support", ()):
            logical ^= fz[q]
    return tuple(fired), logical


def reference_dem(circuit: CircuitProgram) -> Dem:
    """Structural detector error model from exhaustive single-fault replay.

    Every noise site is triggered once; sites with identical detector
    signatures merge.  Probabilities are placeholders (0.0): the point
    of this model is topology, for uniform decoding and for telling the
    estimator which detector pairs are worth looking at.
    """
    circuit.validate()
    if not circuit.detectors:
        raise ValueError("circuit defines no detectors")
    by_signature: dict[tuple[int, ...], int] = {}
    for site in circuit.noise_sites():
        dets, logical = propagate_single_fault(circuit, site)
        if not dets:
            if logical:
                raise ValueError(
                    f"fault at instruction {site} flips the logical "
                    "without firing any detector; circuit is undecodable"
                )
            continue
        if dets in by_signature:
            if by_signature[dets] != logical:
                raise ValueError(
                    f"faults with identical detector signature {dets} "
                    "disagree on the logical flip"
                )
        else:
            by_signature[dets] = logical
    mechanisms = [
        Mechanism(dets, 0.0, bool(flip))
        for dets, flip in sorted(by_signature.items())
    ]
    return Dem(
        n_detectors=len(circuit.detectors),
        mechanisms=mechanisms,
        detector_coords=list(circuit.detector_coords),
    )


# -- text format --------------------------------------------------------------

_META_ORDER = (
    "code", "distance", "rounds", "level", "mode", "data_qubits",
    "observable_support", "final_block_start", "fidelity_reference",
    "rounds_truncated",
)
_META_INT = {"distance", "rounds", "final_block_start"}
_META_TUPLE = {"data_qubits", "observable_support"}
_META_BOOL = {"rounds_truncated"}


def serialize_circuit(circuit: CircuitProgram) -> str:
    circuit.validate()
    lines = ["# demkit circuit v1"]
    for key in _META_ORDER:
        if key not in circuit.metadata:
            continue
        val = circuit.metadata[key]
        if val is None:
            text = "-"
        elif key in _META_TUPLE:
            text = ",".join(str(v) for v in val)
        elif key in _META_BOOL:
            text = "1" if val else "0"
        else:
            text = str(val)
        lines.append(f"# meta {key}={text}")
    lines.append(f"NQUBITS {circuit.n_qubits}")
    for ins in circuit.instructions:
        parts = [ins.name] + [str(q) for q in ins.qubits]
        if ins.param is not None:
            parts.append(repr(float(ins.param)))
        lines.append(" ".join(parts))
    for i, (check, rnd) in enumerate(circuit.detector_coords):
        lines.append(f"detector {i} {check} {rnd}")
    return "\n".join(lines) + "\n"


_PARAM_OPS = {"RZ": 1, "RZZ": 2, "FLIP_Z": 1, "FLIP_MEAS": 0}
_PLAIN_OPS = {"H": 1, "X": 1, "Z": 1, "MEASURE": 1, "RESET": 1, "CNOT": 2}
_VARIADIC_OPS = ("MPP_X", "PROJECT_ZPLUS", "DETECTOR", "OBSERVABLE")


def parse_circuit(text: str) -> CircuitProgram:
    n_qubits: int | None = None
    metadata: dict = {}
    instructions: list[Instr] = []
    detectors: list[tuple[int, ...]] = []
    observables: list[tuple[int, ...]] = []
    sidecar: list[tuple[int, int, int]] = []
    n_records = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip() if not raw.lstrip().startswith("#") else raw.strip()
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("meta "):
                key, _, val = body[len("meta ") :].partition("=")
                key = key.strip()
                val = val.strip()
                if val == "-":
                    metadata[key] = None
                elif key in _META_INT:
                    metadata[key] = int(val)
                elif key in _META_TUPLE:
                    metadata[key] = tuple(
                        int(v) for v in val.split(",") if v != ""
                    )
                elif key in _META_BOOL:
                    metadata[key] = val == "1"
                else:
                    metadata[key] = val
            continue
        if not line:
            continue
        parts = line.split()
        op = parts[0]
        if op == "NQUBITS":
            n_qubits = int(parts[1])
        elif op == "detector":
            sidecar.append((int(parts[1]), int(parts[2]), int(parts[3])))
        elif op in _PLAIN_OPS:
            if len(parts) != 1 + _PLAIN_OPS[op]:
                raise ValueError(f"line {lineno}: bad arity for {op}")
            instructions.append(Instr(op, tuple(int(p) for p in parts[1:])))
            if op == "MEASURE":
                n_records += 1
        elif op in _PARAM_OPS:
            n_q = _PARAM_OPS[op]
            if len(parts) != 2 + n_q:
                raise ValueError(f"line {lineno}: bad arity for {op}")
            instructions.append(
                Instr(op, tuple(int(p) for p in parts[1:-1]), float(parts[-1]))
            )
        elif op in _VARIADIC_OPS:
            ids = tuple(int(p) for p in parts[1:])
            if not ids:
                raise ValueError(f"line {lineno}: {op} needs targets")
            if op == "DETECTOR":
                detectors.append(ids)
                instructions.append(Instr(op, ids))
            elif op == "OBSERVABLE":
                observables.append(ids)
                instructions.append(Instr(op, ids))
            else:
                instructions.append(Instr(op, ids))
                if op == "MPP_X":
                    n_records += 1
        else:
            raise ValueError(f"line {lineno}: unknown instruction {op!r}")
    if n_qubits is None:
        raise ValueError("missing NQUBITS header line")
    coords = [(-1, -1)] * len(detectors)
    for idx, check, rnd in sidecar:
        if not 0 <= idx < len(detectors):
            raise ValueError(f"detector sidecar index {idx} out of range")
        coords[idx] = (check, rnd)
    prog = CircuitProgram(
        n_qubits=n_qubits,
        instructions=instructions,
        n_records=n_records,
        detectors=detectors,
        detector_coords=coords,
        observables=observables,
        metadata=metadata,
    )
    prog.validate()
    return prog
