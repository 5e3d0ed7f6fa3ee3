"""Pure numpy versions of the lattice kernels in ``_kernels.pyx``."""

import numpy as np


def _unravel(members, shape):
    return np.stack(np.unravel_index(np.asarray(members, dtype=np.int64), shape), axis=1)


def ball_counts(members, shape, offsets):
    """Count members inside the offset stencil around every node."""
    shape = tuple(int(s) for s in shape)
    mask = np.zeros(shape, dtype=np.int64)
    mask.reshape(-1)[np.asarray(members, dtype=np.int64)] = 1
    counts = np.zeros(shape, dtype=np.int64)
    axes = tuple(range(len(shape)))
    for off in np.asarray(offsets, dtype=np.int64):
        # counts[c] += mask[c + o]
        counts += np.roll(mask, tuple(-int(o) for o in off), axis=axes)
    return counts.reshape(-1)


def greedy_cover(members, shape, offsets):
    """Greedy cover of ``members`` by stencil-shaped balls centred on nodes."""
    shape_arr = np.asarray(shape, dtype=np.int64)
    offsets = np.asarray(offsets, dtype=np.int64)
    members = np.asarray(members, dtype=np.int64)
    counts = ball_counts(members, shape, offsets)
    uncovered = np.zeros(int(np.prod(shape_arr)), dtype=bool)
    uncovered[members] = True
    remaining = members.size
    centres = []
    while remaining > 0:
        best = int(np.argmax(counts))
        centres.append(best)
        best_coord = np.array(np.unravel_index(best, tuple(shape_arr)))
        around = np.ravel_multi_index(tuple(((best_coord + offsets) % shape_arr).T), tuple(shape_arr))
        hit = around[uncovered[around]]
        uncovered[hit] = False
        remaining -= hit.size
        if hit.size:
            coords = _unravel(hit, tuple(shape_arr))
            src = (coords[:, None, :] - offsets[None, :, :]) % shape_arr
            flat = np.ravel_multi_index(tuple(src.reshape(-1, len(shape_arr)).T), tuple(shape_arr))
            np.subtract.at(counts, flat, 1)
    return centres
