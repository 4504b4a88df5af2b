"""Exact minimum-weight perfect matching of defects on a decoding graph.

Each defect (fired detector) must be paired with another defect or with
the boundary.  The cost of a pairing is the shortest-path distance on
the weighted decoding graph; the correction's logical action is the
XOR of path parities.  Minimizing total cost over all pairings is
equivalent to a maximum-weight matching on the "savings" graph whose
edge (i, j) has weight B_i + B_j - d_ij (pair two defects instead of
sending both to the boundary).  Edges with non-positive savings can be
dropped without changing the optimum: replacing such a pair by two
boundary matches never costs more.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .blossom import _mwm_core, max_weight_matching
from .dem import DecodingGraph

_SAVINGS_TOL = 1e-12
_BOUNDARY_CAP = 1e7
_BRUTE_FORCE_MAX = 16


def wilson_interval(
    n_errors: int, n_shots: int, z: float = 1.959963984540054
) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if n_shots <= 0:
        return (0.0, 1.0)
    p = n_errors / n_shots
    z2 = z * z
    denom = 1.0 + z2 / n_shots
    center = (p + z2 / (2.0 * n_shots)) / denom
    half = (
        z
        * math.sqrt(p * (1.0 - p) / n_shots + z2 / (4.0 * n_shots * n_shots))
        / denom
    )
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass(frozen=True)
class MatchingResult:
    """pairs: (i, j) defect-index pairs, j None for a boundary match."""

    pairs: tuple[tuple[int, int | None], ...]
    total_weight: float
    logical_flip: int


def defect_distances(
    graph: DecodingGraph, defects: list[int] | np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """(dist, parity) among the given detectors plus the boundary (last)."""
    dist, parity = graph.all_pairs()
    idx = list(int(d) for d in defects)
    for d in idx:
        if not 0 <= d < graph.n_detectors:
            raise ValueError(f"defect {d} outside detector range")
    idx.append(graph.boundary)
    sel = np.ix_(idx, idx)
    return dist[sel].copy(), parity[sel].copy()


def mwpm(dist: np.ndarray, parity: np.ndarray) -> MatchingResult:
    """Exact minimum-cost pairing; boundary is the last row/column."""
    k = dist.shape[0] - 1
    if dist.shape != (k + 1, k + 1) or parity.shape != (k + 1, k + 1):
        raise ValueError("dist and parity must be square and equal shape")
    if k == 0:
        return MatchingResult((), 0.0, 0)
    bnd = np.minimum(dist[:k, k], _BOUNDARY_CAP)
    eu, ev, wt = [], [], []
    for i in range(k):
        for j in range(i + 1, k):
            if not np.isfinite(dist[i, j]):
                continue
            s = bnd[i] + bnd[j] - dist[i, j]
            if s > _SAVINGS_TOL:
                eu.append(i)
                ev.append(j)
                wt.append(s)
    mate = np.full(k, -1, np.int64)
    if eu:
        mate = max_weight_matching(
            k, np.array(eu), np.array(ev), np.array(wt, dtype=np.float64)
        )
    pairs: list[tuple[int, int | None]] = []
    total = 0.0
    flip = 0
    for i in range(k):
        if mate[i] == -1:
            pairs.append((i, None))
            total += float(bnd[i])
            flip ^= int(parity[i, k])
        elif mate[i] > i:
            pairs.append((i, int(mate[i])))
            total += float(dist[i, mate[i]])
            flip ^= int(parity[i, mate[i]])
    return MatchingResult(tuple(pairs), total, flip)


def brute_force_match(dist: np.ndarray, parity: np.ndarray) -> MatchingResult:
    """Exhaustive minimum-cost pairing by subset DP; oracle for tests."""
    k = dist.shape[0] - 1
    if k > _BRUTE_FORCE_MAX:
        raise ValueError(f"brute force capped at {_BRUTE_FORCE_MAX} defects")
    if k == 0:
        return MatchingResult((), 0.0, 0)
    bnd = np.minimum(dist[:k, k], _BOUNDARY_CAP)
    full = (1 << k) - 1
    best = np.full(1 << k, np.inf)
    choice = np.full(1 << k, -2, np.int64)  # -1 boundary, else partner
    best[0] = 0.0
    for mask in range(1, full + 1):
        i = (mask & -mask).bit_length() - 1
        rest = mask ^ (1 << i)
        c = best[rest] + bnd[i]
        ch = -1
        for j in range(i + 1, k):
            if not mask & (1 << j) or not np.isfinite(dist[i, j]):
                continue
            c2 = best[rest ^ (1 << j)] + dist[i, j]
            if c2 < c:
                c = c2
                ch = j
        best[mask] = c
        choice[mask] = ch
    pairs: list[tuple[int, int | None]] = []
    flip = 0
    mask = full
    while mask:
        i = (mask & -mask).bit_length() - 1
        j = int(choice[mask])
        if j == -1:
            pairs.append((i, None))
            flip ^= int(parity[i, k])
            mask ^= 1 << i
        else:
            pairs.append((i, j))
            flip ^= int(parity[i, j])
            mask ^= (1 << i) | (1 << j)
    return MatchingResult(tuple(pairs), float(best[full]), flip)


@njit(cache=True)
def _decode_rows(bits, dist, par):
    n_rows, n_det = bits.shape
    preds = np.zeros(n_rows, np.uint8)
    defs = np.empty(n_det, np.int64)
    for s in range(n_rows):
        k = 0
        for d in range(n_det):
            if bits[s, d]:
                defs[k] = d
                k += 1
        if k == 0:
            continue
        pred = 0
        maxm = k * (k - 1) // 2
        eu = np.empty(maxm, np.int64)
        ev = np.empty(maxm, np.int64)
        wt = np.empty(maxm, np.float64)
        m = 0
        for i in range(k):
            bi = min(dist[defs[i], n_det], _BOUNDARY_CAP)
            for j in range(i + 1, k):
                dij = dist[defs[i], defs[j]]
                if not np.isfinite(dij):
                    continue
                bj = min(dist[defs[j], n_det], _BOUNDARY_CAP)
                sav = bi + bj - dij
                if sav > _SAVINGS_TOL:
                    eu[m] = i
                    ev[m] = j
                    wt[m] = sav
                    m += 1
        if m == 0:
            for i in range(k):
                pred ^= par[defs[i], n_det]
        else:
            mate = _mwm_core(k, eu[:m], ev[:m], wt[:m])
            for i in range(k):
                if mate[i] == -1:
                    pred ^= par[defs[i], n_det]
                elif mate[i] > i:
                    pred ^= par[defs[i], defs[mate[i]]]
        preds[s] = pred
    return preds


@dataclass(frozen=True)
class DecodeResult:
    predictions: np.ndarray  # uint8, one prediction per row
    n_shots: int
    n_errors: int | None
    p_logical: float | None
    ci_low: float | None
    ci_high: float | None


def decode_batch(graph: DecodingGraph, batch, observable_index: int = 0):
    """Decode every row of a ShotBatch; error stats need observables."""
    if batch.n_detectors != graph.n_detectors:
        raise ValueError(
            f"batch has {batch.n_detectors} detectors, "
            f"graph has {graph.n_detectors}"
        )
    dist, par = graph.all_pairs()
    bits = np.ascontiguousarray(batch.detector_array())
    preds = _decode_rows(bits, dist, par)
    n = batch.n_shots
    if batch.n_observables > observable_index:
        obs = batch.observable_array()[:, observable_index]
        n_err = int(np.count_nonzero(preds != obs))
        lo, hi = wilson_interval(n_err, n)
        return DecodeResult(preds, n, n_err, n_err / n, lo, hi)
    return DecodeResult(preds, n, None, None, None, None)
