# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled lattice kernels: periodic ball counting and greedy ball covers."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef Py_ssize_t idx_t


def _layout(shape, offsets, members):
    shape = np.asarray(shape, dtype=np.intp)
    dim = shape.size
    strides = np.ones(dim, dtype=np.intp)
    for ax in range(dim - 2, -1, -1):
        strides[ax] = strides[ax + 1] * shape[ax + 1]
    # offsets reduced to [0, shape) so wrapping needs one compare per axis
    off = np.mod(np.asarray(offsets, dtype=np.intp).reshape(-1, dim), shape)
    mem = np.asarray(members, dtype=np.intp)
    coords = np.stack(np.unravel_index(mem, tuple(shape)), axis=1).astype(np.intp) if mem.size else np.zeros((0, dim), np.intp)
    return (np.ascontiguousarray(shape), np.ascontiguousarray(strides), np.ascontiguousarray(off),
            np.ascontiguousarray(coords), int(np.prod(shape)))


cdef inline idx_t _minus(const idx_t[:, ::1] pts, idx_t i, const idx_t[:, ::1] off, idx_t k,
                         const idx_t[::1] shp, const idx_t[::1] strd, idx_t dim) nogil:
    # flat index of pts[i] - off[k] on the torus
    cdef idx_t ax, c, out = 0
    for ax in range(dim):
        c = pts[i, ax] - off[k, ax]
        if c < 0:
            c += shp[ax]
        out += c * strd[ax]
    return out


cdef inline idx_t _plus(const idx_t[::1] base, const idx_t[:, ::1] off, idx_t k,
                        const idx_t[::1] shp, const idx_t[::1] strd, idx_t dim) nogil:
    cdef idx_t ax, c, out = 0
    for ax in range(dim):
        c = base[ax] + off[k, ax]
        if c >= shp[ax]:
            c -= shp[ax]
        out += c * strd[ax]
    return out


def ball_counts(members, shape, offsets):
    """Count members inside the offset stencil around every node.

    ``members`` are flat node indices; ``offsets`` is a (K, dim) integer
    array of stencil displacements (already reduced to unique residues).
    """
    shp_a, strd_a, off_a, pts_a, n = _layout(shape, offsets, members)
    cdef const idx_t[::1] shp = shp_a
    cdef const idx_t[::1] strd = strd_a
    cdef const idx_t[:, ::1] off = off_a
    cdef const idx_t[:, ::1] pts = pts_a
    cdef idx_t dim = shp.shape[0], K = off.shape[0], M = pts.shape[0], i, k
    counts = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] cv = counts
    with nogil:
        for i in range(M):
            for k in range(K):
                # node c sees member s when s - c is an offset, i.e. c = s - o
                cv[_minus(pts, i, off, k, shp, strd, dim)] += 1
    return counts


def greedy_cover(members, shape, offsets):
    """Greedy cover of ``members`` by stencil-shaped balls centred on nodes.

    Returns the list of chosen centres (flat indices), each chosen as the
    node whose ball holds the most still-uncovered members (lowest index
    on ties).
    """
    shp_a, strd_a, off_a, pts_a, n_nodes = _layout(shape, offsets, members)
    cdef const idx_t[::1] shp = shp_a
    cdef const idx_t[::1] strd = strd_a
    cdef const idx_t[:, ::1] off = off_a
    cdef idx_t n = n_nodes, dim = shp.shape[0], K = off.shape[0], M = pts_a.shape[0]
    cdef idx_t i, k, ax, best, node, rem, remaining = M
    cdef cnp.int64_t bestval
    counts_a = ball_counts(members, shape, offsets)
    cdef cnp.int64_t[::1] counts = counts_a
    cdef cnp.int8_t[::1] uncovered = np.zeros(n, dtype=np.int8)
    cdef idx_t[::1] base = np.zeros(dim, dtype=np.intp)
    cdef idx_t[:, ::1] hit = np.zeros((1, dim), dtype=np.intp)
    cdef const idx_t[::1] mem = np.asarray(members, dtype=np.intp)
    for i in range(M):
        uncovered[mem[i]] = 1
    centres = []
    while remaining > 0:
        with nogil:
            best = 0
            bestval = counts[0]
            for i in range(1, n):
                if counts[i] > bestval:
                    bestval = counts[i]
                    best = i
            rem = best
            for ax in range(dim):
                base[ax] = rem // strd[ax]
                rem -= base[ax] * strd[ax]
            for k in range(K):
                node = _plus(base, off, k, shp, strd, dim)
                if uncovered[node]:
                    uncovered[node] = 0
                    remaining -= 1
                    rem = node
                    for ax in range(dim):
                        hit[0, ax] = rem // strd[ax]
                        rem -= hit[0, ax] * strd[ax]
                    for i in range(K):
                        counts[_minus(hit, 0, off, i, shp, strd, dim)] -= 1
        centres.append(best)
    return centres
