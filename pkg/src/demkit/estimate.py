"""Estimate detector-error-model parameters from syndrome statistics.

Every detector is modeled as an XOR of independent Bernoulli error
mechanisms.  Two-detector (bulk) edges follow from the covariance of
the pair of detectors; single-detector (boundary) edges follow from the
detector's marginal once the bulk edges touching it are known; three-
and four-detector mechanisms follow from a Walsh inversion of window
parities F(S) = 1 - 2*P(odd number of the detectors in S fired):

    prod over odd-size T in S of F(T)
    --------------------------------- = (1 - 2 p_S)^(2^(|S|-1))
    prod over even-size T in S of F(T)

because every mechanism that intersects S in anything other than the
whole of S cancels between numerator and denominator.  A mechanism
strictly containing S survives the ratio, which is why four-point
events are estimated first and divided out of the three-point ratios.

Angles are reported as theta = arcsin(sqrt(p)), the rotation angle that
produces flip probability p when twirled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .dem import Dem, Mechanism
from .errors import DegenerateStatisticsError

_DEN_FLOOR = 1e-9
_PARITY_FLOOR = 1e-6
_EXPORT_P_MAX = 0.5 - 1e-9
_INCONSISTENT_LO = -0.05
_INCONSISTENT_HI = 0.55
_CHUNK_ROWS = 65536


# -- moment accumulation -----------------------------------------------------


@dataclass(frozen=True)
class MomentTable:
    """Counts of detection events, pair coincidences and window parities.

    Counts are integers; divide by n_shots at read time.  Two tables
    over the same candidate sets merge by plain addition, so moment
    accumulation can run over shot blocks.
    """

    n_shots: int
    n_detectors: int
    single_counts: np.ndarray  # (D,) int64
    pair_keys: tuple[tuple[int, int], ...]
    pair_counts: np.ndarray  # coincidence counts, aligned with pair_keys
    window_keys: tuple[tuple[int, ...], ...]
    window_odd_counts: np.ndarray  # odd-parity counts per window
    _pair_index: dict = field(default_factory=dict, repr=False, compare=False)
    _window_index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._pair_index.update(
            {k: i for i, k in enumerate(self.pair_keys)}
        )
        self._window_index.update(
            {k: i for i, k in enumerate(self.window_keys)}
        )

    def mean_single(self, i: int) -> float:
        return self.single_counts[i] / self.n_shots

    def mean_pair(self, i: int, j: int) -> float:
        key = (i, j) if i < j else (j, i)
        return self.pair_counts[self._pair_index[key]] / self.n_shots

    def parity_factor(self, subset: tuple[int, ...]) -> float:
        """F(S) = 1 - 2 * P(odd count of fired detectors in S)."""
        s = tuple(sorted(subset))
        if len(s) == 0:
            return 1.0
        if len(s) == 1:
            return 1.0 - 2.0 * self.mean_single(s[0])
        if len(s) == 2:
            a, b = self.mean_single(s[0]), self.mean_single(s[1])
            c = self.mean_pair(*s)
            return 1.0 - 2.0 * (a + b - 2.0 * c)
        idx = self._window_index.get(s)
        if idx is None:
            raise KeyError(f"window {s} was not accumulated")
        return 1.0 - 2.0 * (self.window_odd_counts[idx] / self.n_shots)

    def merge(self, other: "MomentTable") -> "MomentTable":
        if (
            other.n_detectors != self.n_detectors
            or other.pair_keys != self.pair_keys
            or other.window_keys != self.window_keys
        ):
            raise ValueError("tables cover different candidate sets")
        return MomentTable(
            n_shots=self.n_shots + other.n_shots,
            n_detectors=self.n_detectors,
            single_counts=self.single_counts + other.single_counts,
            pair_keys=self.pair_keys,
            pair_counts=self.pair_counts + other.pair_counts,
            window_keys=self.window_keys,
            window_odd_counts=(
                self.window_odd_counts + other.window_odd_counts
            ),
        )


def accumulate_moments(
    batch,
    candidate_pairs: tuple[tuple[int, int], ...],
    windows: tuple[tuple[int, ...], ...] = (),
) -> MomentTable:
    """One pass over the batch, bit-packed along the shot axis."""
    n_det = batch.n_detectors
    pairs = tuple(tuple(sorted(p)) for p in candidate_pairs)
    wins = tuple(tuple(sorted(w)) for w in windows)
    for a, b in pairs:
        if not (0 <= a < b < n_det):
            raise ValueError(f"bad candidate pair {(a, b)}")
    for w in wins:
        if len(w) not in (3, 4) or len(set(w)) != len(w):
            raise ValueError(f"window must be 3 or 4 distinct detectors: {w}")
        if w[0] < 0 or w[-1] >= n_det:
            raise ValueError(f"window {w} outside detector range")
    singles = np.zeros(n_det, np.int64)
    pair_counts = np.zeros(len(pairs), np.int64)
    odd_counts = np.zeros(len(wins), np.int64)
    width = batch.n_detectors + batch.n_observables
    for lo in range(0, batch.n_shots, _CHUNK_ROWS):
        rows = batch.rows[lo : lo + _CHUNK_ROWS]
        det = np.unpackbits(rows, axis=1, count=width, bitorder="little")[
            :, :n_det
        ]
        cols = np.packbits(det.T, axis=1, bitorder="little")
        counts = np.bitwise_count(cols)
        singles += counts.sum(axis=1, dtype=np.int64)
        for k, (a, b) in enumerate(pairs):
            pair_counts[k] += int(
                np.bitwise_count(cols[a] & cols[b]).sum()
            )
        for k, w in enumerate(wins):
            acc = cols[w[0]].copy()
            for d in w[1:]:
                acc ^= cols[d]
            odd_counts[k] += int(np.bitwise_count(acc).sum())
    return MomentTable(
        n_shots=batch.n_shots,
        n_detectors=n_det,
        single_counts=singles,
        pair_keys=pairs,
        pair_counts=pair_counts,
        window_keys=wins,
        window_odd_counts=odd_counts,
    )


# -- candidate enumeration from the reference model ---------------------------


def candidate_pairs(reference: Dem) -> tuple[tuple[int, int], ...]:
    """Reference adjacency plus same-check and adjacent-check extras
    within one round, so slightly misplaced correlations still land in
    the candidate set."""
    if reference.detector_coords is None:
        raise ValueError("reference model must carry detector coordinates")
    coords = reference.detector_coords
    out: set[tuple[int, int]] = set()
    check_adj: set[tuple[int, int]] = set()
    for mech in reference.mechanisms:
        if len(mech.detectors) == 2:
            i, j = mech.detectors
            out.add((i, j))
            c1, c2 = coords[i][0], coords[j][0]
            if c1 != c2:
                check_adj.add((min(c1, c2), max(c1, c2)))
    by_check: dict[int, list[tuple[int, int]]] = {}
    for idx, (c, t) in enumerate(coords):
        by_check.setdefault(c, []).append((t, idx))
    for c, dets in by_check.items():
        dets.sort()
        for (t1, i1), (t2, i2) in zip(dets, dets[1:]):
            if t2 - t1 == 1:
                out.add((min(i1, i2), max(i1, i2)))
    for c1, c2 in check_adj:
        for t1, i1 in by_check.get(c1, ()):
            for t2, i2 in by_check.get(c2, ()):
                if abs(t1 - t2) <= 1:
                    out.add((min(i1, i2), max(i1, i2)))
    return tuple(sorted(out))


def all_detector_pairs(n_detectors: int) -> tuple[tuple[int, int], ...]:
    return tuple(combinations(range(n_detectors), 2))


def candidate_windows(reference: Dem) -> tuple[tuple[int, ...], ...]:
    """All 3- and 4-detector subsets of every two-check, two-round
    block of adjacent checks."""
    if reference.detector_coords is None:
        raise ValueError("reference model must carry detector coordinates")
    coords = reference.detector_coords
    det_at = {ct: i for i, ct in enumerate(coords)}
    check_adj: set[tuple[int, int]] = set()
    for mech in reference.mechanisms:
        if len(mech.detectors) == 2:
            c1 = coords[mech.detectors[0]][0]
            c2 = coords[mech.detectors[1]][0]
            if c1 != c2:
                check_adj.add((min(c1, c2), max(c1, c2)))
    rounds = sorted({t for _, t in coords})
    wins: set[tuple[int, ...]] = set()
    for c1, c2 in sorted(check_adj):
        for t in rounds:
            block = [
                det_at.get((c, tt))
                for c in (c1, c2)
                for tt in (t, t + 1)
            ]
            if any(b is None for b in block):
                continue
            for size in (3, 4):
                for sub in combinations(sorted(block), size):
                    wins.add(sub)
    return tuple(sorted(wins, key=lambda w: (len(w), w)))


# -- closed-form inversions ----------------------------------------------------


def _bulk_edge_detail(m: MomentTable, i: int, j: int):
    a = m.mean_single(i)
    b = m.mean_single(j)
    c = m.mean_pair(i, j)
    den = 1.0 - 2.0 * (a + b) + 4.0 * c
    if abs(den) <= _DEN_FLOOR:
        raise DegenerateStatisticsError(
            f"pair ({i},{j}): denominator {den:.3e} too close to zero"
        )
    num = c - a * b
    radicand = 0.25 - num / den
    clamped = not 0.0 <= radicand <= 0.25
    rad = min(max(radicand, 0.0), 0.25)
    p = 0.5 - math.sqrt(rad)

    # delta-method standard error with the exact covariance of (a, b, c)
    n = m.n_shots
    cov = np.array(
        [
            [a * (1 - a), c - a * b, c * (1 - a)],
            [c - a * b, b * (1 - b), c * (1 - b)],
            [c * (1 - a), c * (1 - b), c * (1 - c)],
        ]
    ) / max(n, 1)
    dg = np.array(
        [
            (-b * den + 2.0 * num) / den**2,
            (-a * den + 2.0 * num) / den**2,
            (den - 4.0 * num) / den**2,
        ]
    )
    root = math.sqrt(max(rad, 1e-12))
    grad = dg / (2.0 * root)
    sigma = float(math.sqrt(max(grad @ cov @ grad, 0.0)))
    return p, sigma, clamped, radicand


def bulk_edge_prob(m: MomentTable, i: int, j: int) -> float:
    """Edge probability between detectors i and j from pair moments."""
    return _bulk_edge_detail(m, i, j)[0]


def _boundary_edge_detail(
    m: MomentTable,
    i: int,
    incident_bulk,
    incident_sigmas=None,
):
    a = m.mean_single(i)
    prod = 1.0
    for p in incident_bulk:
        if p >= 0.5:
            raise ValueError(
                f"detector {i}: incident edge probability {p} is >= 0.5"
            )
        prod *= 1.0 - 2.0 * p
    if abs(prod) <= _DEN_FLOOR:
        raise DegenerateStatisticsError(
            f"detector {i}: incident-edge product {prod:.3e} too small"
        )
    raw = 0.5 + (a - 0.5) / prod
    inconsistent = not _INCONSISTENT_LO <= raw <= _INCONSISTENT_HI
    var = (a * (1 - a) / max(m.n_shots, 1)) / prod**2
    if incident_sigmas is not None:
        for p, s in zip(incident_bulk, incident_sigmas):
            term = (a - 0.5) * 2.0 / ((1.0 - 2.0 * p) * prod)
            var += (term * s) ** 2
    return raw, float(math.sqrt(max(var, 0.0))), inconsistent


def boundary_edge_prob(m: MomentTable, i: int, incident_bulk) -> float:
    """Boundary probability for detector i given its bulk edges."""
    return _boundary_edge_detail(m, i, incident_bulk)[0]


def angle_from_prob(p: float) -> float:
    """Rotation angle (radians) whose twirl gives flip probability p."""
    if not -1e-12 <= p <= 1.0 + 1e-12:
        raise ValueError(f"probability {p} outside [0, 1]")
    return math.asin(math.sqrt(min(max(p, 0.0), 1.0)))


def _hyperedge_detail(
    m: MomentTable, window: tuple[int, ...], containing_factor: float = 1.0
):
    s = tuple(sorted(window))
    if len(s) not in (3, 4):
        raise ValueError("hyperedge windows must have 3 or 4 detectors")
    num = 1.0
    den = 1.0
    for size in range(1, len(s) + 1):
        for sub in combinations(s, size):
            f = m.parity_factor(sub)
            if abs(f) <= _PARITY_FLOOR:
                raise DegenerateStatisticsError(
                    f"window {s}: parity factor F{sub} = {f:.3e} too small"
                )
            if size % 2 == 1:
                num *= f
            else:
                den *= f
    ratio = num / den
    if ratio <= 0.0:
        raise DegenerateStatisticsError(
            f"window {s}: parity ratio {ratio:.3e} is not positive"
        )
    factor = ratio ** (1.0 / 2 ** (len(s) - 1))
    factor /= containing_factor
    raw = (1.0 - factor) / 2.0
    clamped = not 0.0 <= raw <= 0.5
    return min(max(raw, 0.0), 0.5), raw, clamped


def hyperedge_probs(m: MomentTable, window: tuple[int, ...]) -> float:
    """Probability of the mechanism firing exactly the given window."""
    return _hyperedge_detail(m, window)[0]


def apply_higher_order_correction(edges, hyperedges) -> dict:
    """Divide out, per edge, the strongest containing four-point event
    and then the strongest containing three-point event:
    p' = (p - p_h) / (1 - 2 p_h) once per subtracted event."""
    corrected = {}
    for key, p in edges.items():
        kset = set(key)
        val = p
        for size in (4, 3):
            best = None
            for s, ph in hyperedges.items():
                if len(s) == size and kset <= set(s):
                    cand = (ph, tuple(sorted(s)))
                    # highest probability wins; ties go to the earliest
                    # window in detector order
                    if best is None or (
                        cand[0] > best[0]
                        or (cand[0] == best[0] and cand[1] < best[1])
                    ):
                        best = cand
            if best is None:
                continue
            ph = best[0]
            if ph >= 0.5:
                raise ValueError(
                    f"hyperedge probability {ph} >= 0.5 cannot be divided out"
                )
            val = (val - ph) / (1.0 - 2.0 * ph)
        corrected[key] = val
    return corrected


# -- orchestration -------------------------------------------------------------


@dataclass(frozen=True)
class EstimateOptions:
    hyperedges: bool = False
    all_pairs: bool = False
    coincidence_floor: float = 100.0


@dataclass
class EstimatedDem:
    """Estimated probabilities, angles, and how they were obtained."""

    n_detectors: int
    detector_coords: list[tuple[int, int]] | None
    edges: dict  # (i, j) -> corrected probability (may be slightly < 0)
    boundaries: dict  # i -> probability (may sit outside [0, 0.5])
    hyperedges: dict  # sorted tuple -> probability in [0, 0.5]
    angles: dict  # same keys as edges/boundaries, radians
    diagnostics: dict
    n_shots: int
    logical_flags: dict = field(default_factory=dict)

    def to_dem(self) -> Dem:
        mechanisms = []
        for i in sorted(self.boundaries):
            p = min(max(self.boundaries[i], 0.0), _EXPORT_P_MAX)
            mechanisms.append(
                Mechanism((i,), p, self.logical_flags.get((i,), False))
            )
        for key in sorted(self.edges):
            p = min(max(self.edges[key], 0.0), _EXPORT_P_MAX)
            mechanisms.append(
                Mechanism(key, p, self.logical_flags.get(key, False))
            )
        for key in sorted(self.hyperedges):
            p = min(max(self.hyperedges[key], 0.0), _EXPORT_P_MAX)
            mechanisms.append(
                Mechanism(key, p, self.logical_flags.get(key, False))
            )
        dem = Dem(
            self.n_detectors,
            mechanisms,
            None
            if self.detector_coords is None
            else list(self.detector_coords),
        )
        dem.validate()
        return dem


def estimate_dem(
    batch, reference: Dem, options: EstimateOptions | None = None
) -> EstimatedDem:
    """Full pipeline: moments, bulk edges, hyperedges, corrections,
    boundary edges (last, from corrected bulk values and any estimated
    higher-order windows touching the detector)."""
    opts = options or EstimateOptions()
    reference.validate()
    if batch.n_detectors != reference.n_detectors:
        raise ValueError(
            f"batch has {batch.n_detectors} detectors, reference has "
            f"{reference.n_detectors}"
        )
    pairs = (
        all_detector_pairs(reference.n_detectors)
        if opts.all_pairs
        else candidate_pairs(reference)
    )
    windows = candidate_windows(reference) if opts.hyperedges else ()
    m = accumulate_moments(batch, pairs, windows)

    diagnostics: dict = {
        "clamps": [],
        "negative_raw": [],
        "inconsistent": [],
        "low_statistics": [],
        "stderr": {},
        "n_hyperedge_windows": len(windows),
    }

    raw_edges: dict = {}
    for a, b in pairs:
        count = m.pair_counts[m._pair_index[(a, b)]]
        if count < opts.coincidence_floor:
            diagnostics["low_statistics"].append(
                {"pair": (a, b), "coincidences": int(count)}
            )
        p, sigma, clamped, radicand = _bulk_edge_detail(m, a, b)
        raw_edges[(a, b)] = p
        diagnostics["stderr"][(a, b)] = sigma
        if clamped:
            diagnostics["clamps"].append(
                {"key": (a, b), "radicand": radicand}
            )

    hyper: dict = {}
    if opts.hyperedges:
        quad_factor: dict = {}
        for w in windows:
            if len(w) != 4:
                continue
            try:
                p4, raw4, clamped4 = _hyperedge_detail(m, w)
            except DegenerateStatisticsError as exc:
                diagnostics["inconsistent"].append(
                    {"key": w, "reason": str(exc)}
                )
                continue
            hyper[w] = p4
            quad_factor[w] = 1.0 - 2.0 * p4
            if clamped4:
                diagnostics["clamps"].append({"key": w, "raw": raw4})
        for w in windows:
            if len(w) != 3:
                continue
            containing = 1.0
            for q, fac in quad_factor.items():
                if set(w) <= set(q):
                    containing = fac
                    break  # each 3-window sits in exactly one block
            try:
                p3, raw3, clamped3 = _hyperedge_detail(
                    m, w, containing_factor=containing
                )
            except DegenerateStatisticsError as exc:
                diagnostics["inconsistent"].append(
                    {"key": w, "reason": str(exc)}
                )
                continue
            hyper[w] = p3
            if clamped3:
                diagnostics["clamps"].append({"key": w, "raw": raw3})

    edges = (
        apply_higher_order_correction(raw_edges, hyper)
        if hyper
        else dict(raw_edges)
    )
    for key, val in edges.items():
        if val < 0.0:
            diagnostics["negative_raw"].append({"key": key, "raw": val})
        if val < _INCONSISTENT_LO:
            diagnostics["inconsistent"].append(
                {"key": key, "reason": f"corrected probability {val:.4f}"}
            )

    boundaries: dict = {}
    incident: dict = {i: [] for i in range(reference.n_detectors)}
    for (a, b), p in edges.items():
        pc = min(max(p, 0.0), _EXPORT_P_MAX)
        incident[a].append(((a, b), pc))
        incident[b].append(((a, b), pc))
    # Higher-order windows flip the detector too, so their parity factors
    # belong in the same product.  Leaving them out pushes the leaked
    # probability into the boundary estimate, and on interior detectors
    # (whose true boundary rate is zero) that invents cheap boundary
    # arcs that the matcher then abuses.
    for w, p in hyper.items():
        pc = min(p, _EXPORT_P_MAX)
        for i in w:
            incident[i].append((w, pc))
    for i in range(reference.n_detectors):
        ps = [p for _, p in incident[i]]
        sigmas = [diagnostics["stderr"].get(k, 0.0) for k, _ in incident[i]]
        raw, sigma, inconsistent = _boundary_edge_detail(m, i, ps, sigmas)
        boundaries[i] = raw
        diagnostics["stderr"][(i,)] = sigma
        if inconsistent:
            diagnostics["inconsistent"].append(
                {"key": (i,), "reason": f"boundary probability {raw:.4f}"}
            )
        if raw < 0.0:
            diagnostics["negative_raw"].append({"key": (i,), "raw": raw})

    angles: dict = {}
    for key, p in edges.items():
        angles[key] = angle_from_prob(min(max(p, 0.0), 1.0))
    for i, p in boundaries.items():
        angles[(i,)] = angle_from_prob(min(max(p, 0.0), 1.0))

    logical_flags = {
        mech.detectors: mech.logical_flip for mech in reference.mechanisms
    }
    return EstimatedDem(
        n_detectors=reference.n_detectors,
        detector_coords=reference.detector_coords,
        edges=edges,
        boundaries=boundaries,
        hyperedges=hyper,
        angles=angles,
        diagnostics=diagnostics,
        n_shots=batch.n_shots,
        logical_flags=logical_flags,
    )
