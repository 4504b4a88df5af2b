"""Maximum-weight matching on general graphs (Edmonds' blossom method).

Array-based port of Galil's primal-dual formulation, following the
classic van Rantwijk implementation structure, jitted with numba so the
decoder can run millions of small matchings per sweep.  Vertices are
0..n-1; blossom slots n..2n-1.  An "endpoint" p encodes edge p//2
oriented so that endpoint[p] is the vertex at that end; p^1 is the
other end.  This keeps edge identity available everywhere a vertex
pair would otherwise need a dict lookup.

Weights may be floats.  The matching maximizes total weight and may
leave vertices unmatched (this is not maximum-cardinality mode).
"""

from __future__ import annotations

import numpy as np
from numba import njit

_MAX_VERTICES = 1024


@njit(cache=True)
def _leaves(b, n, childs, childcnt, out):
    """Collect leaf vertices of (sub-)blossom b into out; return count."""
    if b < n:
        out[0] = b
        return 1
    stack = np.empty(2 * n, np.int64)
    stack[0] = b
    sp = 1
    cnt = 0
    while sp > 0:
        sp -= 1
        t = stack[sp]
        if t < n:
            out[cnt] = t
            cnt += 1
        else:
            for i in range(childcnt[t]):
                stack[sp] = childs[t, i]
                sp += 1
    return cnt


@njit(cache=True)
def _mwm_core(n, eu, ev, wt):  # noqa: C901  (one algorithm, one function family)
    m = len(eu)
    nb = 2 * n

    endpoint = np.empty(2 * m, np.int64)
    for k in range(m):
        endpoint[2 * k] = eu[k]
        endpoint[2 * k + 1] = ev[k]

    # CSR adjacency of remote endpoints: for vertex v, the p's with
    # endpoint[p ^ 1] == v, i.e. endpoint[p] is v's neighbor.
    deg = np.zeros(n, np.int64)
    for k in range(m):
        deg[eu[k]] += 1
        deg[ev[k]] += 1
    off = np.zeros(n + 1, np.int64)
    for v in range(n):
        off[v + 1] = off[v] + deg[v]
    fill = off[:n].copy()
    plist = np.empty(2 * m, np.int64)
    for k in range(m):
        i = eu[k]
        j = ev[k]
        plist[fill[i]] = 2 * k + 1
        fill[i] += 1
        plist[fill[j]] = 2 * k
        fill[j] += 1

    maxweight = 0.0
    for k in range(m):
        if wt[k] > maxweight:
            maxweight = wt[k]

    mate = np.full(n, -1, np.int64)          # endpoint index or -1
    label = np.zeros(nb, np.int64)           # 0 free, 1 S, 2 T, 5 crumb
    labelend = np.full(nb, -1, np.int64)     # endpoint index or -1
    inblossom = np.arange(n)
    blossomparent = np.full(nb, -1, np.int64)
    blossombase = np.full(nb, -1, np.int64)
    blossombase[:n] = np.arange(n)
    childs = np.empty((nb, n + 2), np.int64)
    childcnt = np.zeros(nb, np.int64)
    endps = np.empty((nb, n + 2), np.int64)
    bestedge = np.full(nb, -1, np.int64)     # edge index or -1
    mbe = np.empty((nb, nb), np.int64)       # my-best-edges per blossom
    mbecnt = np.full(nb, -1, np.int64)       # -1 means "not computed"
    unused = np.empty(n, np.int64)
    for i in range(n):
        unused[i] = nb - 1 - i               # pop() yields n, n+1, ...
    ucnt = n
    dualvar = np.zeros(nb, np.float64)
    dualvar[:n] = maxweight
    allowedge = np.zeros(m, np.bool_)
    qcap = 16 + n * (n + 2)
    queue = np.empty(qcap, np.int64)
    qp = 0
    leafbuf = np.empty(max(n, 1), np.int64)
    leafbuf2 = np.empty(max(n, 1), np.int64)
    bestedgeto = np.empty(nb, np.int64)
    path_buf = np.empty(nb, np.int64)
    endp_buf = np.empty(nb, np.int64)
    expand_stack = np.empty(nb, np.int64)

    # numba closures cannot rebind outer scalars; box the two counters.
    qp_box = np.zeros(1, np.int64)
    ucnt_box = np.zeros(1, np.int64)
    ucnt_box[0] = ucnt

    def slack(k):
        return dualvar[eu[k]] + dualvar[ev[k]] - 2.0 * wt[k]

    # --- inner operations, inlined as closures over the arrays ---

    def assign_label(w0, t0, p0):
        w, t, p = w0, t0, p0
        while True:
            b = inblossom[w]
            label[w] = t
            label[b] = t
            labelend[w] = p
            labelend[b] = p
            bestedge[w] = -1
            bestedge[b] = -1
            if t == 1:
                cnt = _leaves(b, n, childs, childcnt, leafbuf)
                for i in range(cnt):
                    queue[qp_box[0]] = leafbuf[i]
                    qp_box[0] += 1
                return
            # t == 2: label the base's mate S and continue from it.
            base = blossombase[b]
            w, t, p = endpoint[mate[base]], 1, mate[base] ^ 1

    def scan_blossom(v0, w0):
        v, w = v0, w0
        pc = 0
        base = -1
        while v != -1:
            b = inblossom[v]
            if label[b] & 4:
                base = blossombase[b]
                break
            path_buf[pc] = b
            pc += 1
            label[b] = 5
            if labelend[b] == -1:
                v = -1
            else:
                v = endpoint[labelend[b]]
                b = inblossom[v]
                v = endpoint[labelend[b]]
            if w != -1:
                v, w = w, v
        for i in range(pc):
            label[path_buf[i]] = 1
        return base

    def add_blossom(base, k):
        v = eu[k]
        w = ev[k]
        bb = inblossom[base]
        bv = inblossom[v]
        bw = inblossom[w]
        b = unused[ucnt_box[0] - 1]
        ucnt_box[0] -= 1
        blossombase[b] = base
        blossomparent[b] = -1
        blossomparent[bb] = b
        pc = 0
        ec = 0
        while bv != bb:
            blossomparent[bv] = b
            path_buf[pc] = bv
            pc += 1
            endp_buf[ec] = labelend[bv]
            ec += 1
            v = endpoint[labelend[bv]]
            bv = inblossom[v]
        # childs = [bb] + reversed(path); endps = reversed(endps) + [2k]
        childs[b, 0] = bb
        cc = 1
        for i in range(pc - 1, -1, -1):
            childs[b, cc] = path_buf[i]
            cc += 1
        ee = 0
        for i in range(ec - 1, -1, -1):
            endps[b, ee] = endp_buf[i]
            ee += 1
        endps[b, ee] = 2 * k
        ee += 1
        while bw != bb:
            blossomparent[bw] = b
            childs[b, cc] = bw
            cc += 1
            endps[b, ee] = labelend[bw] ^ 1
            ee += 1
            w = endpoint[labelend[bw]]
            bw = inblossom[w]
        childcnt[b] = cc
        label[b] = 1
        labelend[b] = labelend[bb]
        dualvar[b] = 0.0
        cnt = _leaves(b, n, childs, childcnt, leafbuf)
        for i in range(cnt):
            if label[inblossom[leafbuf[i]]] == 2:
                queue[qp_box[0]] = leafbuf[i]
                qp_box[0] += 1
            inblossom[leafbuf[i]] = b
        # Compute least-slack edges to neighboring S-blossoms.
        for i in range(nb):
            bestedgeto[i] = -1
        for ci in range(cc):
            cb = childs[b, ci]
            if mbecnt[cb] == -1:
                lc = _leaves(cb, n, childs, childcnt, leafbuf2)
                for li in range(lc):
                    lv = leafbuf2[li]
                    for pi in range(off[lv], off[lv + 1]):
                        kk = plist[pi] // 2
                        jj = ev[kk] if inblossom[ev[kk]] != b else eu[kk]
                        bj = inblossom[jj]
                        if (
                            bj != b
                            and label[bj] == 1
                            and (
                                bestedgeto[bj] == -1
                                or slack(kk) < slack(bestedgeto[bj])
                            )
                        ):
                            bestedgeto[bj] = kk
            else:
                for li in range(mbecnt[cb]):
                    kk = mbe[cb, li]
                    jj = ev[kk] if inblossom[ev[kk]] != b else eu[kk]
                    bj = inblossom[jj]
                    if (
                        bj != b
                        and label[bj] == 1
                        and (
                            bestedgeto[bj] == -1
                            or slack(kk) < slack(bestedgeto[bj])
                        )
                    ):
                        bestedgeto[bj] = kk
            mbecnt[cb] = -1
            bestedge[cb] = -1
        cnt2 = 0
        for i in range(nb):
            if bestedgeto[i] != -1:
                mbe[b, cnt2] = bestedgeto[i]
                cnt2 += 1
        mbecnt[b] = cnt2
        bestedge[b] = -1
        for i in range(cnt2):
            kk = mbe[b, i]
            if bestedge[b] == -1 or slack(kk) < slack(bestedge[b]):
                bestedge[b] = kk

    def expand_blossom(b0, endstage):
        sp = 0
        expand_stack[sp] = b0
        sp += 1
        while sp > 0:
            sp -= 1
            b = expand_stack[sp]
            for ci in range(childcnt[b]):
                s = childs[b, ci]
                blossomparent[s] = -1
                if s < n:
                    inblossom[s] = s
                elif endstage and dualvar[s] == 0.0:
                    expand_stack[sp] = s
                    sp += 1
                else:
                    cnt = _leaves(s, n, childs, childcnt, leafbuf)
                    for i in range(cnt):
                        inblossom[leafbuf[i]] = s
            if (not endstage) and label[b] == 2:
                # Relabel the path from the entry child to the base.
                entrychild = inblossom[endpoint[labelend[b] ^ 1]]
                cc = childcnt[b]
                j = 0
                for ci in range(cc):
                    if childs[b, ci] == entrychild:
                        j = ci
                        break
                if j & 1:
                    j -= cc
                    jstep = 1
                    endptrick = 0
                else:
                    jstep = -1
                    endptrick = 1
                p = labelend[b]
                while j != 0:
                    label[endpoint[p ^ 1]] = 0
                    q = endps[b, (j - endptrick) % cc] ^ endptrick
                    label[endpoint[q ^ 1]] = 0
                    assign_label(endpoint[p ^ 1], 2, p)
                    allowedge[q // 2] = True
                    j += jstep
                    p = endps[b, (j - endptrick) % cc] ^ endptrick
                    allowedge[p // 2] = True
                    j += jstep
                bv = childs[b, j % cc]
                label[endpoint[p ^ 1]] = 2
                label[bv] = 2
                labelend[endpoint[p ^ 1]] = p
                labelend[bv] = p
                bestedge[bv] = -1
                j += jstep
                while childs[b, j % cc] != entrychild:
                    bv = childs[b, j % cc]
                    if label[bv] == 1:
                        j += jstep
                        continue
                    cnt = _leaves(bv, n, childs, childcnt, leafbuf)
                    vfound = -1
                    for i in range(cnt):
                        if label[leafbuf[i]] != 0:
                            vfound = leafbuf[i]
                            break
                    if vfound != -1:
                        label[vfound] = 0
                        label[endpoint[mate[blossombase[bv]]]] = 0
                        assign_label(vfound, 2, labelend[vfound])
                    j += jstep
            label[b] = 0
            labelend[b] = -1
            blossombase[b] = -1
            mbecnt[b] = -1
            bestedge[b] = -1
            childcnt[b] = 0
            unused[ucnt_box[0]] = b
            ucnt_box[0] += 1

    def augment_blossom(b0, v0):
        # Iterative DFS; parent bookkeeping does not depend on child
        # results because each frame already knows its entry vertex.
        astack_b = np.empty(2 * n, np.int64)
        astack_v = np.empty(2 * n, np.int64)
        asp = 0
        astack_b[asp] = b0
        astack_v[asp] = v0
        asp += 1
        while asp > 0:
            asp -= 1
            b = astack_b[asp]
            v = astack_v[asp]
            t = v
            while blossomparent[t] != b:
                t = blossomparent[t]
            if t >= n:
                astack_b[asp] = t
                astack_v[asp] = v
                asp += 1
            cc = childcnt[b]
            i = 0
            for ci in range(cc):
                if childs[b, ci] == t:
                    i = ci
                    break
            j = i
            if i & 1:
                j -= cc
                jstep = 1
                endptrick = 0
            else:
                jstep = -1
                endptrick = 1
            while j != 0:
                j += jstep
                tt = childs[b, j % cc]
                p = endps[b, (j - endptrick) % cc] ^ endptrick
                if tt >= n:
                    astack_b[asp] = tt
                    astack_v[asp] = endpoint[p]
                    asp += 1
                j += jstep
                tt = childs[b, j % cc]
                if tt >= n:
                    astack_b[asp] = tt
                    astack_v[asp] = endpoint[p ^ 1]
                    asp += 1
                mate[endpoint[p]] = p ^ 1
                mate[endpoint[p ^ 1]] = p
            # Rotate childs/endps so the entry child becomes the base.
            if i > 0:
                tmpc = np.empty(cc, np.int64)
                tmpe = np.empty(cc, np.int64)
                for ci in range(cc):
                    tmpc[ci] = childs[b, (i + ci) % cc]
                    tmpe[ci] = endps[b, (i + ci) % cc]
                for ci in range(cc):
                    childs[b, ci] = tmpc[ci]
                    endps[b, ci] = tmpe[ci]
            blossombase[b] = v

    def augment_matching(k):
        for side in range(2):
            if side == 0:
                s = eu[k]
                p = 2 * k + 1
            else:
                s = ev[k]
                p = 2 * k
            while True:
                bs = inblossom[s]
                if bs >= n:
                    augment_blossom(bs, s)
                mate[s] = p
                if labelend[bs] == -1:
                    break
                t = endpoint[labelend[bs]]
                bt = inblossom[t]
                s = endpoint[labelend[bt]]
                j = endpoint[labelend[bt] ^ 1]
                if bt >= n:
                    augment_blossom(bt, j)
                mate[j] = labelend[bt]
                p = labelend[bt] ^ 1

    # --- main loop: stages and substages ---

    for _stage in range(n):
        for i in range(nb):
            label[i] = 0
            labelend[i] = -1
            bestedge[i] = -1
            mbecnt[i] = -1
        for k in range(m):
            allowedge[k] = False
        qp_box[0] = 0
        for v in range(n):
            if mate[v] == -1 and label[inblossom[v]] == 0:
                assign_label(v, 1, -1)
        augmented = False
        while True:
            while qp_box[0] > 0 and not augmented:
                qp_box[0] -= 1
                v = queue[qp_box[0]]
                for pi in range(off[v], off[v + 1]):
                    p = plist[pi]
                    k = p // 2
                    w = endpoint[p]
                    if inblossom[v] == inblossom[w]:
                        continue
                    kslack = 0.0
                    if not allowedge[k]:
                        kslack = slack(k)
                        if kslack <= 1e-12:
                            allowedge[k] = True
                    if allowedge[k]:
                        if label[inblossom[w]] == 0:
                            assign_label(w, 2, p ^ 1)
                        elif label[inblossom[w]] == 1:
                            base = scan_blossom(v, w)
                            if base >= 0:
                                add_blossom(base, k)
                            else:
                                augment_matching(k)
                                augmented = True
                                break
                        elif label[w] == 0:
                            label[w] = 2
                            labelend[w] = p ^ 1
                    elif label[inblossom[w]] == 1:
                        b = inblossom[v]
                        if bestedge[b] == -1 or kslack < slack(bestedge[b]):
                            bestedge[b] = k
                    elif label[w] == 0:
                        if bestedge[w] == -1 or kslack < slack(bestedge[w]):
                            bestedge[w] = k
            if augmented:
                break

            deltatype = 1
            delta = dualvar[0]
            for v in range(n):
                if dualvar[v] < delta:
                    delta = dualvar[v]
            deltaedge = -1
            deltablossom = -1
            for v in range(n):
                if label[inblossom[v]] == 0 and bestedge[v] != -1:
                    d = slack(bestedge[v])
                    if d < delta:
                        delta = d
                        deltatype = 2
                        deltaedge = bestedge[v]
            for b in range(nb):
                if (
                    blossomparent[b] == -1
                    and label[b] == 1
                    and bestedge[b] != -1
                ):
                    d = slack(bestedge[b]) / 2.0
                    if d < delta:
                        delta = d
                        deltatype = 3
                        deltaedge = bestedge[b]
            for b in range(n, nb):
                if (
                    blossombase[b] >= 0
                    and blossomparent[b] == -1
                    and label[b] == 2
                    and dualvar[b] < delta
                ):
                    delta = dualvar[b]
                    deltatype = 4
                    deltablossom = b

            for v in range(n):
                lb = label[inblossom[v]]
                if lb == 1:
                    dualvar[v] -= delta
                elif lb == 2:
                    dualvar[v] += delta
            for b in range(n, nb):
                if blossombase[b] >= 0 and blossomparent[b] == -1:
                    if label[b] == 1:
                        dualvar[b] += delta
                    elif label[b] == 2:
                        dualvar[b] -= delta

            if deltatype == 1:
                break
            elif deltatype == 2:
                allowedge[deltaedge] = True
                i = eu[deltaedge]
                if label[inblossom[i]] == 0:
                    i = ev[deltaedge]
                queue[qp_box[0]] = i
                qp_box[0] += 1
            elif deltatype == 3:
                allowedge[deltaedge] = True
                queue[qp_box[0]] = eu[deltaedge]
                qp_box[0] += 1
            else:
                expand_blossom(deltablossom, False)

        if not augmented:
            break

        for b in range(n, nb):
            if (
                blossomparent[b] == -1
                and blossombase[b] >= 0
                and label[b] == 1
                and dualvar[b] == 0.0
            ):
                expand_blossom(b, True)

    out = np.full(n, -1, np.int64)
    for v in range(n):
        if mate[v] >= 0:
            out[v] = endpoint[mate[v]]
    return out


def max_weight_matching(
    n: int, edges_u: np.ndarray, edges_v: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    """mate[v] = matched partner vertex, or -1.  Maximizes total weight."""
    if n < 0 or n > _MAX_VERTICES:
        raise ValueError(f"vertex count {n} outside [0, {_MAX_VERTICES}]")
    eu = np.ascontiguousarray(edges_u, dtype=np.int64)
    ev = np.ascontiguousarray(edges_v, dtype=np.int64)
    wt = np.ascontiguousarray(weights, dtype=np.float64)
    if not (len(eu) == len(ev) == len(wt)):
        raise ValueError("edge arrays must have equal length")
    if n == 0 or len(eu) == 0:
        return np.full(n, -1, np.int64)
    if len(eu) and (eu.min() < 0 or max(eu.max(), ev.max()) >= n):
        raise ValueError("edge endpoint out of range")
    if np.any(eu == ev):
        raise ValueError("self-loops are not allowed")
    return _mwm_core(n, eu, ev, wt)
