"""Detector error models, decoding graphs and shot-file IO.

A Dem is a flat list of error mechanisms.  Each mechanism carries the set
of detectors it flips, a probability, and whether it flips the logical
observable.  Mechanisms on one or two detectors map onto a matchable
graph (single-detector mechanisms connect to the boundary node);
anything larger is a hyperedge, kept in the model for reporting but left
out of the matching graph.

File formats are deliberately dumb text / packed bytes so other tools
can read them.  Serialization is byte-stable: same input, same bytes.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

_P_CLAMP_LO = 1e-6
_P_CLAMP_HI = 0.5 - 1e-6


@dataclass(frozen=True)
class Mechanism:
    detectors: tuple[int, ...]
    probability: float
    logical_flip: bool = False

    def __post_init__(self):
        if tuple(sorted(set(self.detectors))) != self.detectors:
            raise ValueError(
                f"mechanism detectors must be sorted and unique: {self.detectors}"
            )
        if not self.detectors:
            raise ValueError("mechanism must touch at least one detector")
        # numpy scalars sneak in from estimators; repr() of those would
        # corrupt the serialized form
        object.__setattr__(self, "probability", float(self.probability))
        if not 0.0 <= self.probability < 1.0:
            raise ValueError(f"probability {self.probability} outside [0, 1)")


@dataclass
class Dem:
    n_detectors: int
    mechanisms: list[Mechanism] = field(default_factory=list)
    detector_coords: list[tuple[int, int]] | None = None  # (check, round)

    def validate(self) -> None:
        if self.n_detectors < 1:
            raise ValueError("model needs at least one detector")
        seen: set[tuple[int, ...]] = set()
        for mech in self.mechanisms:
            if mech.detectors[-1] >= self.n_detectors or mech.detectors[0] < 0:
                raise ValueError(
                    f"mechanism {mech.detectors} references a detector "
                    f"outside [0, {self.n_detectors})"
                )
            if mech.detectors in seen:
                raise ValueError(
                    f"duplicate mechanism on detectors {mech.detectors}"
                )
            seen.add(mech.detectors)
        if self.detector_coords is not None:
            if len(self.detector_coords) != self.n_detectors:
                raise ValueError("detector_coords length != n_detectors")

    def mechanism_index(self) -> dict[tuple[int, ...], Mechanism]:
        return {m.detectors: m for m in self.mechanisms}


def serialize_dem(dem: Dem) -> str:
    dem.validate()
    lines = ["# demkit dem v1", f"# detectors {dem.n_detectors}"]
    if dem.detector_coords is not None:
        for i, (check, rnd) in enumerate(dem.detector_coords):
            lines.append(f"detector D{i} {check} {rnd}")
    for mech in dem.mechanisms:
        dets = " ".join(f"D{i}" for i in mech.detectors)
        tail = " L0" if mech.logical_flip else ""
        lines.append(f"error({mech.probability!r}) {dets}{tail}")
    return "\n".join(lines) + "\n"


def parse_dem(text: str) -> Dem:
    n_detectors: int | None = None
    coords: list[tuple[int, int, int]] = []
    mechanisms: list[Mechanism] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("detectors "):
                n_detectors = int(body.split()[1])
            continue
        parts = line.split()
        if parts[0] == "detector":
            if len(parts) != 4 or not parts[1].startswith("D"):
                raise ValueError(f"line {lineno}: bad detector line {raw!r}")
            coords.append((int(parts[1][1:]), int(parts[2]), int(parts[3])))
        elif parts[0].startswith("error(") and parts[0].endswith(")"):
            prob = float(parts[0][len("error(") : -1])
            dets: list[int] = []
            logical = False
            for tok in parts[1:]:
                if tok.startswith("D"):
                    dets.append(int(tok[1:]))
                elif tok == "L0":
                    logical = True
                else:
                    raise ValueError(f"line {lineno}: bad token {tok!r}")
            mechanisms.append(
                Mechanism(tuple(sorted(set(dets))), prob, logical)
            )
        else:
            raise ValueError(f"line {lineno}: unrecognized line {raw!r}")
    if n_detectors is None:
        if not coords and not mechanisms:
            raise ValueError("empty detector error model")
        top = max(
            [i for i, _, _ in coords]
            + [m.detectors[-1] for m in mechanisms],
        )
        n_detectors = top + 1
    detector_coords = None
    if coords:
        detector_coords = [(-1, -1)] * n_detectors
        for i, check, rnd in coords:
            detector_coords[i] = (check, rnd)
    dem = Dem(n_detectors, mechanisms, detector_coords)
    dem.validate()
    return dem


# -- decoding graph --------------------------------------------------------


@dataclass(frozen=True)
class GraphEdge:
    u: int
    v: int  # may equal the boundary node index
    weight: float
    logical_flip: bool
    probability: float


class DecodingGraph:
    """Matchable part of a Dem plus cached all-pairs shortest paths.

    Node indices 0..n_detectors-1 are detectors; node n_detectors is the
    shared boundary.  Paths carry a logical parity: the XOR of the
    logical_flip flags of traversed edges.
    """

    def __init__(self, n_detectors: int, edges: list[GraphEdge], policy: str):
        self.n_detectors = n_detectors
        self.boundary = n_detectors
        self.edges = edges
        self.policy = policy
        self._adj: list[list[tuple[int, float, int]]] = [
            [] for _ in range(n_detectors + 1)
        ]
        for e in edges:
            self._adj[e.u].append((e.v, e.weight, int(e.logical_flip)))
            self._adj[e.v].append((e.u, e.weight, int(e.logical_flip)))
        self._dist: np.ndarray | None = None
        self._parity: np.ndarray | None = None

    def all_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """(dist, parity) over all nodes including the boundary node.

        Unreachable pairs get +inf distance.  Ties between equal-length
        paths resolve to the first node settled by the heap (stable:
        entries are (distance, node) tuples, so lower index wins).
        """
        if self._dist is None:
            nn = self.n_detectors + 1
            dist = np.full((nn, nn), np.inf)
            parity = np.zeros((nn, nn), dtype=np.uint8)
            for src in range(nn):
                drow = dist[src]
                prow = parity[src]
                drow[src] = 0.0
                done = [False] * nn
                heap = [(0.0, src)]
                while heap:
                    d, u = heapq.heappop(heap)
                    if done[u]:
                        continue
                    done[u] = True
                    for v, w, flip in self._adj[u]:
                        nd = d + w
                        if nd < drow[v]:
                            drow[v] = nd
                            prow[v] = prow[u] ^ flip
                            heapq.heappush(heap, (nd, v))
            self._dist = dist
            self._parity = parity
        return self._dist, self._parity


def edge_weight(probability: float, policy: str) -> float:
    if policy == "uniform":
        return 1.0
    if policy == "estimated":
        p = min(max(probability, _P_CLAMP_LO), _P_CLAMP_HI)
        return math.log((1.0 - p) / p)
    raise ValueError(f"unknown weight policy {policy!r}")


def build_decoding_graph(dem: Dem, policy: str = "uniform") -> DecodingGraph:
    dem.validate()
    edges: list[GraphEdge] = []
    n_hyper = 0
    for mech in dem.mechanisms:
        if len(mech.detectors) == 1:
            u, v = mech.detectors[0], dem.n_detectors
        elif len(mech.detectors) == 2:
            u, v = mech.detectors
        else:
            n_hyper += 1
            continue
        edges.append(
            GraphEdge(
                u, v, edge_weight(mech.probability, policy),
                mech.logical_flip, mech.probability,
            )
        )
    if not edges:
        raise ValueError(
            "model has no one- or two-detector mechanisms; nothing to match"
        )
    graph = DecodingGraph(dem.n_detectors, edges, policy)
    graph.n_hyperedges_dropped = n_hyper
    return graph


# -- shot files --------------------------------------------------------------

_SHOT_MAGIC = "# demkit shots"


def write_shots(batch, path: str, fmt: str = "b8") -> None:
    """Write a ShotBatch as packed binary ('b8') or ASCII bits ('01').

    Rows are detectors-then-observables.  In b8 the bits pack little
    endian, eight per byte, each row padded to whole bytes.
    """
    seed = "-" if batch.master_seed is None else str(batch.master_seed)
    header = (
        f"{_SHOT_MAGIC} {fmt} {batch.n_shots} {batch.n_detectors} "
        f"{batch.n_observables} seed={seed}\n"
    )
    if fmt == "b8":
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(batch.rows.tobytes())
    elif fmt == "01":
        bits = batch.unpacked()
        with open(path, "w", encoding="ascii") as fh:
            fh.write(header)
            for row in bits:
                fh.write("".join("1" if b else "0" for b in row))
                fh.write("\n")
    else:
        raise ValueError(f"unknown shot format {fmt!r}")


def read_shots(path: str):
    from .sampler import ShotBatch  # local import; sampler imports this module

    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").rstrip("\n")
        payload = fh.read()
    parts = header.split()
    if (
        len(parts) != 8
        or " ".join(parts[:3]) != _SHOT_MAGIC
        or not parts[7].startswith("seed=")
    ):
        raise ValueError(f"not a demkit shot file: header {header!r}")
    fmt = parts[3]
    n_shots, n_det, n_obs = int(parts[4]), int(parts[5]), int(parts[6])
    seed_tok = parts[7][len("seed=") :]
    seed = None if seed_tok == "-" else int(seed_tok)
    row_bytes = (n_det + n_obs + 7) // 8
    if fmt == "b8":
        want = n_shots * row_bytes
        if len(payload) != want:
            raise ValueError(
                f"truncated shot file: expected {want} payload bytes, "
                f"got {len(payload)}"
            )
        rows = np.frombuffer(payload, dtype=np.uint8).reshape(
            n_shots, row_bytes
        ).copy()
    elif fmt == "01":
        lines = payload.decode("ascii").splitlines()
        if len(lines) != n_shots:
            raise ValueError(
                f"truncated shot file: expected {n_shots} rows, "
                f"got {len(lines)}"
            )
        width = n_det + n_obs
        bits = np.zeros((n_shots, width), dtype=np.uint8)
        for i, line in enumerate(lines):
            if len(line) != width or set(line) - {"0", "1"}:
                raise ValueError(f"bad shot row {i}: {line!r}")
            bits[i] = np.frombuffer(line.encode("ascii"), np.uint8) - ord("0")
        rows = _pack_rows(bits, row_bytes)
    else:
        raise ValueError(f"unknown shot format {fmt!r}")
    return ShotBatch(
        n_shots=n_shots,
        n_detectors=n_det,
        n_observables=n_obs,
        rows=rows,
        master_seed=seed,
    )


def _pack_rows(bits: np.ndarray, row_bytes: int) -> np.ndarray:
    packed = np.packbits(bits, axis=1, bitorder="little")
    if packed.shape[1] < row_bytes:  # all-zero width edge case
        pad = np.zeros((bits.shape[0], row_bytes - packed.shape[1]), np.uint8)
        packed = np.concatenate([packed, pad], axis=1)
    return np.ascontiguousarray(packed)
