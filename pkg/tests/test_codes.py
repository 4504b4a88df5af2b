"""Layout, generator, fault-replay and circuit-format tests.

The reference-model structure for small instances is frozen from hand
fault propagation (data faults hit the detector layer below them, gate
couplings produce anti-diagonal or same-layer pairs, classical flips
give time pairs).  A second, independent route re-runs every single
fault through the dense statevector engine and checks that the fired
detectors agree with the Pauli-frame replay.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from demkit.codes import (
    CircuitProgram,
    Instr,
    NoiseModel,
    gen_repetition_memory,
    gen_rotated_surface_memory,
    parse_circuit,
    propagate_single_fault,
    reference_dem,
    repetition_layout,
    rotated_surface_layout,
    serialize_circuit,
    truncate_final_readout,
)
from demkit.errors import CapabilityError
from demkit.statevec import StateVector


# -- layouts -----------------------------------------------------------------


def test_repetition_layout():
    lay = repetition_layout(5)
    assert lay.checks == ((0, 1), (1, 2), (2, 3), (3, 4))
    assert lay.observable_support == (0,)
    assert lay.z_checks == ()


def test_surface_layout_d3_matches_known_plaquettes():
    lay = rotated_surface_layout(3)
    assert lay.checks == ((0, 3), (1, 2, 4, 5), (3, 4, 6, 7), (5, 8))
    assert lay.z_checks == ((1, 2), (0, 1, 3, 4), (4, 5, 7, 8), (6, 7))
    assert lay.observable_support == (0, 1, 2)


def test_surface_layout_d5_counts_and_weights():
    lay = rotated_surface_layout(5)
    assert len(lay.checks) == 12 and len(lay.z_checks) == 12
    weights = sorted(len(s) for s in lay.checks)
    assert weights == [2, 2, 2, 2, 4, 4, 4, 4, 4, 4, 4, 4]
    # Each data qubit is in 1 or 2 X checks; some boundary pairs share a
    # single check and hence merge in any detector error model.
    membership = {}
    for c, sup in enumerate(lay.checks):
        for q in sup:
            membership.setdefault(q, []).append(c)
    counts = sorted(len(v) for v in membership.values())
    assert set(counts) <= {1, 2}
    single = [q for q, v in membership.items() if len(v) == 1]
    by_check = {}
    for q in single:
        by_check.setdefault(membership[q][0], []).append(q)
    assert any(len(qs) == 2 for qs in by_check.values())


def test_surface_layout_rejects_even_or_tiny_d():
    with pytest.raises(ValueError):
        rotated_surface_layout(4)
    with pytest.raises(ValueError):
        rotated_surface_layout(1)


# -- noise model validation ----------------------------------------------------


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(theta_data=-0.1)
    with pytest.raises(ValueError):
        NoiseModel(theta_data=2.0)
    with pytest.raises(ValueError):
        NoiseModel(q_flip=0.7)
    with pytest.raises(ValueError):
        NoiseModel(mode="mixed")
    nm = NoiseModel(theta_data=(0.1, 0.2, 0.3))
    assert nm.data_angles(3) == (0.1, 0.2, 0.3)
    with pytest.raises(ValueError):
        nm.data_angles(4)


def test_level_and_noise_compatibility():
    with pytest.raises(ValueError):
        gen_repetition_memory(3, 2, NoiseModel(q_flip=0.1), "code-capacity")
    with pytest.raises(ValueError):
        gen_repetition_memory(
            3, 2, NoiseModel(theta_anc=0.1), "phenomenological"
        )
    with pytest.raises(ValueError):
        gen_repetition_memory(3, 2, NoiseModel(), "codecapacity")
    with pytest.raises(ValueError):
        gen_repetition_memory(3, 0, NoiseModel(), "code-capacity")


def test_surface_capability_limits():
    with pytest.raises(CapabilityError):
        gen_rotated_surface_memory(7, 2, NoiseModel(), "phenomenological")
    with pytest.raises(CapabilityError):
        gen_rotated_surface_memory(3, 2, NoiseModel(), "circuit")


# -- generator invariants -------------------------------------------------------


@pytest.mark.parametrize(
    "gen,d,r,level,kwargs",
    [
        (gen_repetition_memory, 3, 1, "code-capacity", {}),
        (gen_repetition_memory, 5, 4, "phenomenological", {"q_flip": 0.02}),
        (gen_repetition_memory, 3, 3, "circuit",
         {"theta_anc": 0.05, "theta_gate": 0.02, "q_flip": 0.01}),
        (gen_rotated_surface_memory, 3, 3, "phenomenological", {"q_flip": 0.05}),
        (gen_rotated_surface_memory, 5, 2, "code-capacity", {}),
    ],
)
def test_generator_invariants(gen, d, r, level, kwargs):
    noise = NoiseModel(theta_data=0.1, **kwargs)
    circ = gen(d, r, noise, level)
    n_checks = len(circ.detectors) // (r + 1)
    assert len(circ.detectors) == n_checks * (r + 1)
    assert circ.metadata["rounds"] == r
    assert circ.metadata["level"] == level
    # one detector per (check, round) coordinate, rounds 0..r
    assert sorted(circ.detector_coords) == sorted(
        (c, t) for t in range(r + 1) for c in range(n_checks)
    )
    n_flip = sum(1 for i in circ.instructions if i.name == "FLIP_MEAS")
    expect_flip = n_checks * (r - 1) if kwargs.get("q_flip") else 0
    assert n_flip == expect_flip
    assert len(circ.observables) == 1


def test_flip_free_final_round():
    noise = NoiseModel(theta_data=0.1, q_flip=0.3)
    circ = gen_repetition_memory(3, 4, noise, "phenomenological")
    # Walk rounds by counting syndrome records; flips must stop one
    # round before the end.
    rec, last_flip_rec = 0, -1
    for ins in circ.instructions:
        if ins.name in ("MEASURE", "MPP_X"):
            rec += 1
        elif ins.name == "FLIP_MEAS":
            last_flip_rec = rec
    n_syndrome = 2 * 4  # checks * rounds
    assert last_flip_rec <= n_syndrome - 2  # none in the final round


# -- frozen reference-model structure -----------------------------------------


def test_reference_dem_surface_d3_r3_structure():
    noise = NoiseModel(theta_data=0.05, q_flip=0.02)
    circ = gen_rotated_surface_memory(3, 3, noise, "phenomenological")
    dem = reference_dem(circ)
    assert dem.n_detectors == 16
    coords = dem.detector_coords
    singles = [m for m in dem.mechanisms if len(m.detectors) == 1]
    pairs = [m for m in dem.mechanisms if len(m.detectors) == 2]
    assert len(dem.mechanisms) == 29
    assert len(singles) == 12 and len(pairs) == 17
    time_pairs = [
        m for m in pairs
        if coords[m.detectors[0]][0] == coords[m.detectors[1]][0]
    ]
    space_pairs = [
        m for m in pairs
        if coords[m.detectors[0]][1] == coords[m.detectors[1]][1]
    ]
    assert len(time_pairs) == 8 and len(space_pairs) == 9
    # Logical flips come only from top-row data faults, i.e. boundary
    # mechanisms on checks 0 and 1, one per noisy layer.
    logical = sorted(
        coords[m.detectors[0]] for m in dem.mechanisms if m.logical_flip
    )
    assert logical == [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]
    assert all(len(m.detectors) == 1 for m in dem.mechanisms if m.logical_flip)


def test_reference_dem_repetition_circuit_d3_r2_frozen():
    noise = NoiseModel(
        theta_data=0.04, theta_anc=0.03, theta_gate=0.02, q_flip=0.01,
        mode="twirled",
    )
    circ = gen_repetition_memory(3, 2, noise, "circuit")
    dem = reference_dem(circ)
    # Detector ids layer-major: 0,1 = layer 0; 2,3 = layer 1; 4,5 = layer 2.
    got = {m.detectors: m.logical_flip for m in dem.mechanisms}
    want = {
        (0,): True,      # data fault on the logical support qubit
        (1,): False,
        (2,): True,
        (3,): False,
        (0, 1): False,   # interior data fault, space pair
        (2, 3): False,
        (0, 2): False,   # measurement/ancilla faults, time pairs
        (2, 4): False,
        (1, 3): False,
        (3, 5): False,
        (1, 2): False,   # gate coupling, anti-diagonal pairs
        (3, 4): False,
    }
    assert got == want


def test_reference_dem_repetition_phenomenological_counts():
    noise = NoiseModel(theta_data=0.1, q_flip=0.05)
    circ = gen_repetition_memory(3, 3, noise, "phenomenological")
    dem = reference_dem(circ)
    # 3 data signatures per noisy layer x 3 layers + 2 checks x 2 flip rounds.
    assert len(dem.mechanisms) == 13
    assert dem.n_detectors == 8


def test_reference_dem_rejects_empty_circuit():
    circ = CircuitProgram(
        n_qubits=1,
        instructions=[Instr("H", (0,))],
        n_records=0,
        detectors=[],
        detector_coords=[],
        observables=[],
    )
    with pytest.raises(ValueError):
        reference_dem(circ)


# -- statevector dual route -----------------------------------------------------


def _run_deterministic(circuit: CircuitProgram, fault_site: int):
    """Execute the circuit with all noise off except one deterministic
    fault, via the dense statevector engine.  Returns detector bits.

    Rotation faults become angle-pi rotations (an exact Z or ZZ up to
    global phase); classical flips become certainties.  All measurement
    outcomes are then deterministic, so the rng is never consulted on a
    genuinely random branch.
    """
    rng = np.random.default_rng(0)
    state = StateVector(circuit.n_qubits)
    records: list[int] = []
    for k, ins in enumerate(circuit.instructions):
        name = ins.name
        if name == "H":
            state.apply_h(ins.qubits[0])
        elif name == "CNOT":
            state.apply_cnot(*ins.qubits)
        elif name == "RESET":
            state.reset_qubit(ins.qubits[0], rng)
        elif name == "MEASURE":
            records.append(state.measure_qubit(ins.qubits[0], rng))
        elif name == "MPP_X":
            records.append(state.project_x_string(ins.qubits, rng))
        elif name == "PROJECT_ZPLUS":
            state.project_z_plus(ins.qubits)
        elif name == "RZ":
            if k == fault_site:
                state.apply_rz(ins.qubits[0], math.pi)
        elif name == "RZZ":
            if k == fault_site:
                state.apply_rzz(ins.qubits[0], ins.qubits[1], math.pi)
        elif name == "FLIP_Z":
            if k == fault_site:
                state.apply_z(ins.qubits[0])
        elif name == "FLIP_MEAS":
            if k == fault_site:
                records[-1] ^= 1
    dets = []
    for i, group in enumerate(circuit.detectors):
        par = 0
        for ref in group:
            par ^= records[ref]
        if par:
            dets.append(i)
    obs = 0
    for ref in circuit.observables[0]:
        obs ^= records[ref]
    return tuple(dets), obs


@pytest.mark.parametrize(
    "make",
    [
        lambda: gen_repetition_memory(
            3, 2,
            NoiseModel(theta_data=0.1, theta_anc=0.1, theta_gate=0.1,
                       q_flip=0.02),
            "circuit",
        ),
        lambda: gen_rotated_surface_memory(
            3, 2, NoiseModel(theta_data=0.1, q_flip=0.02), "phenomenological"
        ),
    ],
    ids=["repetition-circuit", "surface-phenomenological"],
)
def test_fault_replay_agrees_with_statevector(make):
    circ = make()
    for site in circ.noise_sites():
        frame_dets, frame_log = propagate_single_fault(circ, site)
        sv_dets, sv_log = _run_deterministic(circ, site)
        assert frame_dets == sv_dets, f"site {site}"
        assert frame_log == sv_log, f"site {site}"


# -- text format ----------------------------------------------------------------


@pytest.mark.parametrize(
    "circ",
    [
        gen_repetition_memory(
            3, 2, NoiseModel(theta_data=0.123456789), "code-capacity"
        ),
        gen_repetition_memory(
            5, 3, NoiseModel(theta_data=0.07, q_flip=0.03), "phenomenological"
        ),
        gen_repetition_memory(
            3, 2,
            NoiseModel(theta_data=0.04, theta_anc=0.05, theta_gate=0.01,
                       q_flip=0.02, mode="twirled"),
            "circuit",
        ),
        gen_rotated_surface_memory(
            3, 3, NoiseModel(theta_data=math.pi * 0.05, q_flip=0.02),
            "phenomenological",
        ),
    ],
    ids=["rep-cc", "rep-ph", "rep-circ", "surf-ph"],
)
def test_circuit_text_round_trip(circ):
    text = serialize_circuit(circ)
    back = parse_circuit(text)
    assert back.n_qubits == circ.n_qubits
    assert back.instructions == circ.instructions
    assert back.detectors == circ.detectors
    assert back.detector_coords == circ.detector_coords
    assert back.observables == circ.observables
    assert back.metadata == circ.metadata
    # Byte-stable: serializing again reproduces the same text.
    assert serialize_circuit(back) == text


def test_parse_rejects_garbage():
    with pytest.raises(ValueError):
        parse_circuit("H 0\n")  # missing NQUBITS
    with pytest.raises(ValueError):
        parse_circuit("NQUBITS 2\nWOBBLE 0\n")
    with pytest.raises(ValueError):
        parse_circuit("NQUBITS 2\nCNOT 0\n")


def test_truncate_final_readout():
    noise = NoiseModel(theta_data=0.1, q_flip=0.02)
    circ = gen_rotated_surface_memory(3, 3, noise, "phenomenological")
    cut = truncate_final_readout(circ)
    assert len(cut.detectors) == 12  # layers 0..2 only
    assert cut.n_records == 12
    assert cut.observables == []
    assert cut.metadata["rounds_truncated"] is True
    with pytest.raises(ValueError):
        truncate_final_readout(cut)
