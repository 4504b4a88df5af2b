"""Shot generation: statevector trajectories and Pauli-frame sampling.

Seeding: every shot gets its own Philox stream from
SeedSequence((master_seed, domain, shot_index)), so results do not
depend on chunking or on how many shots run in one call.  Domain 1 is
trajectory randomness (measurement branching or twirled flips), domain
2 is the classical readout-flip stream.

Readout resampling: with readout_resample = m > 1, each trajectory is
reused m times with fresh classical measurement flips.  The batch then
holds n_shots * m rows, shot-major.  Only circuits that actually
contain FLIP_MEAS sites can be resampled; anything else would emit m
identical copies and silently bias error bars.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codes import CircuitProgram, truncate_final_readout
from .dem import build_decoding_graph

_DOMAIN_TRAJECTORY = 1
_DOMAIN_READOUT = 2


def _shot_rng(master_seed: int, domain: int, shot: int) -> np.random.Generator:
    seq = np.random.SeedSequence((master_seed, domain, shot))
    return np.random.Generator(np.random.Philox(seq))


@dataclass
class ShotBatch:
    """Bit-packed detector/observable rows.

    Each row is detectors then observables, packed little-endian eight
    bits per byte and padded to whole bytes.  `fidelity` optionally
    holds a per-row logical-X expectation value collected just before
    the (possibly truncated) transversal readout.
    """

    n_shots: int
    n_detectors: int
    n_observables: int
    rows: np.ndarray
    master_seed: int | None = None
    fidelity: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        want = (self.n_shots, self.row_bytes)
        if self.rows.shape != want or self.rows.dtype != np.uint8:
            raise ValueError(
                f"rows must be uint8 of shape {want}, got "
                f"{self.rows.dtype} {self.rows.shape}"
            )
        if self.fidelity is not None and len(self.fidelity) != self.n_shots:
            raise ValueError("fidelity length != n_shots")

    @property
    def row_bytes(self) -> int:
        return (self.n_detectors + self.n_observables + 7) // 8

    @classmethod
    def from_bits(
        cls,
        det_bits: np.ndarray,
        obs_bits: np.ndarray | None,
        master_seed: int | None = None,
        fidelity: np.ndarray | None = None,
    ) -> "ShotBatch":
        det_bits = np.asarray(det_bits, dtype=np.uint8)
        if obs_bits is None:
            obs_bits = np.zeros((det_bits.shape[0], 0), dtype=np.uint8)
        obs_bits = np.asarray(obs_bits, dtype=np.uint8)
        full = np.concatenate([det_bits, obs_bits], axis=1)
        rows = np.packbits(full, axis=1, bitorder="little")
        n_bits = full.shape[1]
        row_bytes = (n_bits + 7) // 8
        if rows.shape[1] < row_bytes:
            rows = np.pad(rows, ((0, 0), (0, row_bytes - rows.shape[1])))
        return cls(
            n_shots=det_bits.shape[0],
            n_detectors=det_bits.shape[1],
            n_observables=obs_bits.shape[1],
            rows=np.ascontiguousarray(rows),
            master_seed=master_seed,
            fidelity=fidelity,
        )

    def unpacked(self) -> np.ndarray:
        width = self.n_detectors + self.n_observables
        return np.unpackbits(
            self.rows, axis=1, count=width, bitorder="little"
        )

    def detector_array(self) -> np.ndarray:
        return self.unpacked()[:, : self.n_detectors]

    def observable_array(self) -> np.ndarray:
        return self.unpacked()[:, self.n_detectors :]


# -- compilation helpers -------------------------------------------------------


def _flip_site_tables(circuit: CircuitProgram):
    """FLIP_MEAS sites: probabilities and record targets, plus parity
    matrices mapping site flips onto detectors and observables."""
    probs: list[float] = []
    targets: list[int] = []
    rec = 0
    for ins in circuit.instructions:
        if ins.name in ("MEASURE", "MPP_X"):
            rec += 1
        elif ins.name == "FLIP_MEAS":
            probs.append(float(ins.param))
            targets.append(rec - 1)
    n_sites = len(probs)
    det_mat = np.zeros((n_sites, len(circuit.detectors)), dtype=np.uint8)
    obs_mat = np.zeros((n_sites, len(circuit.observables)), dtype=np.uint8)
    rec_to_site: dict[int, list[int]] = {}
    for s, t in enumerate(targets):
        rec_to_site.setdefault(t, []).append(s)
    for d, refs in enumerate(circuit.detectors):
        for ref in refs:
            for s in rec_to_site.get(ref, ()):
                det_mat[s, d] ^= 1
    for o, refs in enumerate(circuit.observables):
        for ref in refs:
            for s in rec_to_site.get(ref, ()):
                obs_mat[s, o] ^= 1
    return np.array(probs), det_mat, obs_mat


def _records_to_bits(circuit: CircuitProgram, records: np.ndarray):
    """XOR measurement records into detector and observable bits.

    records: (n, n_records) uint8.  Returns (det, obs) bit arrays.
    """
    n = records.shape[0]
    det = np.zeros((n, len(circuit.detectors)), dtype=np.uint8)
    for d, refs in enumerate(circuit.detectors):
        col = records[:, refs[0]].copy()
        for ref in refs[1:]:
            col ^= records[:, ref]
        det[:, d] = col
    obs = np.zeros((n, len(circuit.observables)), dtype=np.uint8)
    for o, refs in enumerate(circuit.observables):
        col = records[:, refs[0]].copy()
        for ref in refs[1:]:
            col ^= records[:, ref]
        obs[:, o] = col
    return det, obs


# -- coherent sampler ----------------------------------------------------------


def run_coherent_shots(
    circuit: CircuitProgram,
    n_shots: int,
    master_seed: int,
    readout_resample: int = 1,
    collect_fidelity: bool = False,
) -> ShotBatch:
    """Sample full statevector trajectories.

    In coherent mode RZ/RZZ apply unitaries; in twirled mode they
    become stochastic Z flips with probability sin^2(theta), which
    unravels the same channel as the Pauli-frame sampler (slowly, but
    through completely different code, which makes it a useful
    cross-check).  Classical FLIP_MEAS errors are applied after the
    trajectory from the per-shot readout stream so that one trajectory
    can be reused readout_resample times.
    """
    from .statevec import StateVector

    circuit.validate()
    if n_shots < 1:
        raise ValueError("n_shots must be positive")
    m = int(readout_resample)
    if m < 1:
        raise ValueError("readout_resample must be >= 1")
    probs, det_mat, obs_mat = _flip_site_tables(circuit)
    n_sites = len(probs)
    if m > 1 and n_sites == 0:
        raise ValueError(
            "readout_resample > 1 needs FLIP_MEAS sites; this circuit "
            "has none, so resamples would be identical copies"
        )
    twirled = circuit.mode == "twirled"
    final_start = circuit.metadata.get("final_block_start")
    obs_support = tuple(circuit.metadata.get("observable_support", ()))
    if collect_fidelity and not obs_support:
        raise ValueError("circuit metadata lacks observable_support")

    n_det = len(circuit.detectors)
    n_obs = len(circuit.observables)
    total = n_shots * m
    det_rows = np.zeros((total, n_det), dtype=np.uint8)
    obs_rows = np.zeros((total, n_obs), dtype=np.uint8)
    fid = np.zeros(total) if collect_fidelity else None

    instructions = circuit.instructions
    for shot in range(n_shots):
        rng = _shot_rng(master_seed, _DOMAIN_TRAJECTORY, shot)
        state = StateVector(circuit.n_qubits)
        records = np.zeros(circuit.n_records, dtype=np.uint8)
        rec = 0
        shot_fid = None
        for k, ins in enumerate(instructions):
            if collect_fidelity and k == final_start:
                shot_fid = state.expectation_x_string(obs_support)
            name = ins.name
            if name == "RZ":
                if twirled:
                    if rng.random() < np.sin(0.5 * ins.param) ** 2:
                        state.apply_z(ins.qubits[0])
                else:
                    state.apply_rz(ins.qubits[0], ins.param)
            elif name == "MPP_X":
                records[rec] = state.project_x_string(ins.qubits, rng)
                rec += 1
            elif name == "H":
                state.apply_h(ins.qubits[0])
            elif name == "CNOT":
                state.apply_cnot(*ins.qubits)
            elif name == "MEASURE":
                records[rec] = state.measure_qubit(ins.qubits[0], rng)
                rec += 1
            elif name == "RESET":
                state.reset_qubit(ins.qubits[0], rng)
            elif name == "RZZ":
                if twirled:
                    if rng.random() < np.sin(0.5 * ins.param) ** 2:
                        state.apply_z(ins.qubits[0])
                        state.apply_z(ins.qubits[1])
                else:
                    state.apply_rzz(ins.qubits[0], ins.qubits[1], ins.param)
            elif name == "FLIP_Z":
                if rng.random() < ins.param:
                    state.apply_z(ins.qubits[0])
            elif name == "PROJECT_ZPLUS":
                state.project_z_plus(ins.qubits)
            # FLIP_MEAS handled by the readout stream; DETECTOR/OBSERVABLE
            # carry no runtime action.
        if collect_fidelity and shot_fid is None:
            shot_fid = state.expectation_x_string(obs_support)

        base_det, base_obs = _records_to_bits(circuit, records[None, :])
        lo = shot * m
        if n_sites:
            u = _shot_rng(master_seed, _DOMAIN_READOUT, shot).random(
                (m, n_sites)
            )
            flips = (u < probs[None, :]).astype(np.uint8)
            det_rows[lo : lo + m] = base_det ^ (flips @ det_mat & 1)
            obs_rows[lo : lo + m] = base_obs ^ (flips @ obs_mat & 1)
        else:
            det_rows[lo : lo + m] = base_det
            obs_rows[lo : lo + m] = base_obs
        if collect_fidelity:
            fid[lo : lo + m] = shot_fid

    return ShotBatch.from_bits(
        det_rows, obs_rows if n_obs else None,
        master_seed=master_seed, fidelity=fid,
    )


# -- Pauli-frame sampler ---------------------------------------------------------


def run_pauli_frame_shots(
    circuit: CircuitProgram,
    n_shots: int,
    master_seed: int,
    chunk_size: int = 32768,
) -> ShotBatch:
    """Vectorized stochastic Pauli-frame sampling for twirled noise.

    Tracks X/Z frame bits per qubit across a chunk of shots at once.
    Rejects coherent-mode circuits: a Pauli frame cannot represent
    coherent rotations, and silently twirling would defeat the whole
    point of keeping the two noise semantics apart.
    """
    circuit.validate()
    if circuit.mode != "twirled":
        raise ValueError(
            "Pauli-frame sampling needs a twirled-mode circuit; "
            f"this one is {circuit.mode!r}"
        )
    if n_shots < 1:
        raise ValueError("n_shots must be positive")

    # Per-site flip probabilities, in instruction order.
    site_probs: list[float] = []
    for ins in circuit.instructions:
        if ins.name in ("RZ", "RZZ"):
            site_probs.append(float(np.sin(0.5 * ins.param) ** 2))
        elif ins.name in ("FLIP_Z", "FLIP_MEAS"):
            site_probs.append(float(ins.param))
    probs = np.array(site_probs)
    n_sites = len(site_probs)

    n_det = len(circuit.detectors)
    n_obs = len(circuit.observables)
    row_bits = n_det + n_obs
    row_bytes = (row_bits + 7) // 8
    out = np.zeros((n_shots, row_bytes), dtype=np.uint8)

    for lo in range(0, n_shots, chunk_size):
        hi = min(lo + chunk_size, n_shots)
        b = hi - lo
        if n_sites:
            u = np.empty((b, n_sites))
            for i in range(b):
                u[i] = _shot_rng(
                    master_seed, _DOMAIN_TRAJECTORY, lo + i
                ).random(n_sites)
            flips = u < probs[None, :]
        else:
            flips = np.zeros((b, 0), dtype=bool)
        fx = np.zeros((b, circuit.n_qubits), dtype=np.uint8)
        fz = np.zeros((b, circuit.n_qubits), dtype=np.uint8)
        records = np.zeros((b, circuit.n_records), dtype=np.uint8)
        site = 0
        rec = 0
        for ins in circuit.instructions:
            name = ins.name
            if name == "RZ" or name == "FLIP_Z":
                fz[:, ins.qubits[0]] ^= flips[:, site]
                site += 1
            elif name == "RZZ":
                f = flips[:, site]
                fz[:, ins.qubits[0]] ^= f
                fz[:, ins.qubits[1]] ^= f
                site += 1
            elif name == "FLIP_MEAS":
                records[:, rec - 1] ^= flips[:, site]
                site += 1
            elif name == "H":
                q = ins.qubits[0]
                tmp = fx[:, q].copy()
                fx[:, q] = fz[:, q]
                fz[:, q] = tmp
            elif name == "CNOT":
                c, t = ins.qubits
                fx[:, t] ^= fx[:, c]
                fz[:, c] ^= fz[:, t]
            elif name == "RESET":
                q = ins.qubits[0]
                fx[:, q] = 0
                fz[:, q] = 0
            elif name == "MEASURE":
                records[:, rec] = fx[:, ins.qubits[0]]
                rec += 1
            elif name == "MPP_X":
                col = fz[:, ins.qubits[0]].copy()
                for q in ins.qubits[1:]:
                    col ^= fz[:, q]
                records[:, rec] = col
                rec += 1
            # PROJECT_ZPLUS commutes with Z frames at prep time;
            # DETECTOR/OBSERVABLE are bookkeeping.
        det, obs = _records_to_bits(circuit, records)
        full = np.concatenate([det, obs], axis=1) if n_obs else det
        packed = np.packbits(full, axis=1, bitorder="little")
        out[lo:hi, : packed.shape[1]] = packed

    return ShotBatch(
        n_shots=n_shots,
        n_detectors=n_det,
        n_observables=n_obs,
        rows=out,
        master_seed=master_seed,
    )


# -- direct model sampling --------------------------------------------------------

_DOMAIN_DEM = 3


def sample_dem_shots(dem, n_shots: int, master_seed: int) -> ShotBatch:
    """Sample a detector error model directly: each mechanism fires
    independently with its probability, XORing its detectors and,
    if flagged, the logical observable.  This is the model the
    estimator assumes, so it doubles as the estimator's oracle."""
    dem.validate()
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence((master_seed, _DOMAIN_DEM)))
    )
    n_det = dem.n_detectors
    det = np.zeros((n_shots, n_det), np.uint8)
    obs = np.zeros((n_shots, 1), np.uint8)
    for mech in dem.mechanisms:
        fired = (rng.random(n_shots) < mech.probability).astype(np.uint8)
        for d in mech.detectors:
            det[:, d] ^= fired
        if mech.logical_flip:
            obs[:, 0] ^= fired
    return ShotBatch.from_bits(det, obs, master_seed=master_seed)


# -- small-distance logical infidelity -------------------------------------------


@dataclass(frozen=True)
class InfidelityResult:
    p_logical: float
    stderr: float
    n_rows: int
    mean_fidelity: float  # mean corrected logical-X expectation


def logical_infidelity_small_d(
    circuit: CircuitProgram,
    decoder_handle=None,
    n_shots: int = 1000,
    master_seed: int = 0,
    readout_resample: int = 1,
) -> InfidelityResult:
    """Continuous logical infidelity from pre-readout X_L expectations.

    Runs coherent trajectories of the circuit truncated before its
    transversal readout, records <X_L> per trajectory, decodes the
    per-round detectors, and folds the decoder's correction into the
    sign of the expectation: P_L = (1 - (-1)^pred <X_L>)/2, averaged.

    `decoder_handle` is a DecodingGraph over the truncated detectors;
    by default a uniform-weight graph from the structural reference
    model.  Circuit-level circuits are rejected: their ancilla
    measurements collapse exactly the coherences this quantity is
    supposed to expose.
    """
    from . import decode as _decode
    from .codes import reference_dem

    if circuit.metadata.get("level") == "circuit":
        raise ValueError(
            "logical infidelity needs a code-capacity or phenomenological "
            "circuit; circuit-level readout collapses the logical coherence"
        )
    if circuit.metadata.get("final_block_start") is not None:
        circuit = truncate_final_readout(circuit)
    if decoder_handle is None:
        decoder_handle = build_decoding_graph(
            reference_dem(circuit), policy="uniform"
        )
    if decoder_handle.n_detectors != len(circuit.detectors):
        raise ValueError(
            f"decoder expects {decoder_handle.n_detectors} detectors, "
            f"circuit defines {len(circuit.detectors)}"
        )
    batch = run_coherent_shots(
        circuit, n_shots, master_seed,
        readout_resample=readout_resample, collect_fidelity=True,
    )
    preds = _decode.decode_batch(decoder_handle, batch).predictions
    signed = np.where(preds == 1, -batch.fidelity, batch.fidelity)
    p_rows = 0.5 * (1.0 - signed)
    # float dust can push a noiseless run a hair below zero
    p_logical = min(max(float(np.mean(p_rows)), 0.0), 1.0)
    stderr = float(np.std(p_rows, ddof=1) / np.sqrt(len(p_rows)))
    return InfidelityResult(
        p_logical=p_logical,
        stderr=stderr,
        n_rows=len(p_rows),
        mean_fidelity=float(np.mean(signed)),
    )
