"""Compiled inner loops for the multi-index query."""
import numpy as np
from numba import njit


@njit(cache=True)
def _sub_dists(q, lo, hi, codebook):
    K = codebook.shape[0]
    out = np.empty(K)
    for c in range(K):
        diff = q[lo] - codebook[c, 0]
        acc = diff * diff
        for j in range(lo + 1, hi):
            diff = q[j] - codebook[c, j - lo]
            acc += diff * diff
        out[c] = acc
    return out


@njit(cache=True)
def _probe_one(q, split, cb1, cb2, n_pairs, out_cells):
    """Multi-sequence traversal; fills ``out_cells`` and returns the count."""
    K = cb1.shape[0]
    d1 = _sub_dists(q, 0, split, cb1)
    d2 = _sub_dists(q, split, q.shape[0], cb2)
    o1 = np.argsort(d1, kind="mergesort")
    o2 = np.argsort(d2, kind="mergesort")
    # frontier of (rank_i, rank_j); at most one entry per row i
    cap = n_pairs + 2
    fi = np.empty(cap, dtype=np.int64)
    fj = np.empty(cap, dtype=np.int64)
    fs = np.empty(cap)
    # next j-rank to push for row i once (i, j-1) is popped
    row_pushed = np.zeros(K, dtype=np.bool_)
    nf = 1
    fi[0] = 0
    fj[0] = 0
    fs[0] = d1[o1[0]] + d2[o2[0]]
    row_pushed[0] = True
    count = 0
    while nf > 0 and count < n_pairs:
        best = 0
        for s in range(1, nf):
            if fs[s] < fs[best] or (fs[s] == fs[best] and (fi[s] < fi[best] or (fi[s] == fi[best] and fj[s] < fj[best]))):
                best = s
        i = fi[best]
        j = fj[best]
        out_cells[count] = o1[i] * K + o2[j]
        count += 1
        nf -= 1
        fi[best] = fi[nf]
        fj[best] = fj[nf]
        fs[best] = fs[nf]
        # successors: (i, j + 1) always; (i + 1, 0) when starting a new row
        if j + 1 < K:
            fi[nf] = i
            fj[nf] = j + 1
            fs[nf] = d1[o1[i]] + d2[o2[j + 1]]
            nf += 1
        if j == 0 and i + 1 < K and not row_pushed[i + 1]:
            row_pushed[i + 1] = True
            fi[nf] = i + 1
            fj[nf] = 0
            fs[nf] = d1[o1[i + 1]] + d2[o2[0]]
            nf += 1
    return count


@njit(cache=True)
def knn_kernel(Q, split, cb1, cb2, n_pairs, cell_start, sorted_vectors, sorted_ids, k, theta, out_ids, out_dist, out_count):
    n_q, dim = Q.shape
    cells = np.empty(n_pairs, dtype=np.int64)
    for qi in range(n_q):
        q = Q[qi]
        n_cells = _probe_one(q, split, cb1, cb2, n_pairs, cells)
        found = 0
        for c in range(n_cells):
            cell = cells[c]
            for pos in range(cell_start[cell], cell_start[cell + 1]):
                diff = sorted_vectors[pos, 0] - q[0]
                acc = diff * diff
                for j in range(1, dim):
                    diff = sorted_vectors[pos, j] - q[j]
                    acc += diff * diff
                if acc > theta:
                    continue
                eid = sorted_ids[pos]
                if found == k:
                    wd = out_dist[qi, k - 1]
                    if acc > wd or (acc == wd and eid > out_ids[qi, k - 1]):
                        continue
                    slot = k - 1
                else:
                    slot = found
                    found += 1
                # insertion sort by (distance, entry id)
                while slot > 0 and (out_dist[qi, slot - 1] > acc or (out_dist[qi, slot - 1] == acc and out_ids[qi, slot - 1] > eid)):
                    out_dist[qi, slot] = out_dist[qi, slot - 1]
                    out_ids[qi, slot] = out_ids[qi, slot - 1]
                    slot -= 1
                out_dist[qi, slot] = acc
                out_ids[qi, slot] = eid
        out_count[qi] = found


@njit(cache=True)
def brute_kernel(Q, V, k, theta, out_ids, out_dist, out_count):
    """Exhaustive top-k with the same distance order and tie-break as ``knn_kernel``."""
    n_q, dim = Q.shape
    for qi in range(n_q):
        q = Q[qi]
        found = 0
        for eid in range(V.shape[0]):
            diff = V[eid, 0] - q[0]
            acc = diff * diff
            for j in range(1, dim):
                diff = V[eid, j] - q[j]
                acc += diff * diff
            if acc > theta:
                continue
            if found == k:
                if acc >= out_dist[qi, k - 1]:
                    continue
                slot = k - 1
            else:
                slot = found
                found += 1
            # ids arrive ascending, so equal distances keep their order
            while slot > 0 and out_dist[qi, slot - 1] > acc:
                out_dist[qi, slot] = out_dist[qi, slot - 1]
                out_ids[qi, slot] = out_ids[qi, slot - 1]
                slot -= 1
            out_dist[qi, slot] = acc
            out_ids[qi, slot] = eid
        out_count[qi] = found


@njit(cache=True)
def nearest_other_kernel(X, owner, out):
    """Squared distance from each row to the nearest row with a different owner."""
    n, dim = X.shape
    for i in range(n):
        best = np.inf
        for e in range(n):
            if owner[e] == owner[i]:
                continue
            diff = X[e, 0] - X[i, 0]
            acc = diff * diff
            for j in range(1, dim):
                diff = X[e, j] - X[i, j]
                acc += diff * diff
            if acc < best:
                best = acc
        out[i] = best
