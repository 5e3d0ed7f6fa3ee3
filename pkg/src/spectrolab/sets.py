"""Observation sets on the lattice and Hausdorff content bounds.

Sets are node subsets; the measure of a set is its node count times h^d.
Fractal generators record their construction so that sub-grid structure
stays documented even though only nodes are stored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .grid import Grid


@dataclass(frozen=True)
class ObservationSet:
    grid: Grid
    mask: np.ndarray
    kind: str
    R: float
    delta: float
    content_dim: float | None = None
    construction: dict = field(default_factory=dict)

    @property
    def nodes(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @property
    def measure(self) -> float:
        return float(self.mask.sum()) * self.grid.cell_volume

    def indicator(self) -> np.ndarray:
        return self.mask.astype(float)


@dataclass(frozen=True)
class SetSpec:
    kind: str
    params: dict = field(default_factory=dict)


@dataclass
class DensityReport:
    R: float
    delta: float
    min_measure: float
    worst_center: int
    passed: bool


@dataclass
class CoveringEstimate:
    """Bounds on the order-``n`` content with radii in ``[h, max_radius]``.

    ``upper`` comes from an explicit cover (``radii_used``); ``lower`` from
    a mass-distribution argument on window counts, so it bounds every cover
    whose radii lie in the same range.
    """

    n: float
    upper: float
    radii_used: list
    lower: float
    scale_table: list = field(default_factory=list)


# ----------------------------------------------------------------- generators


def _cantor_intervals(depth: int, keep: float, period: float) -> list[tuple[float, float]]:
    """Two-piece Cantor construction keeping fraction ``keep`` per side."""
    ivals = [(0.0, period)]
    for _ in range(depth):
        nxt = []
        for a, b in ivals:
            w = (b - a) * keep
            nxt.append((a, a + w))
            nxt.append((b - w, b))
        ivals = nxt
    return ivals


def _fat_cantor_intervals(depth: int, removed: float, period: float) -> list[tuple[float, float]]:
    """Remove a centred fraction ``removed**k`` of every interval at level k."""
    ivals = [(0.0, period)]
    for k in range(1, depth + 1):
        frac = removed**k
        nxt = []
        for a, b in ivals:
            gap = (b - a) * frac
            mid = 0.5 * (a + b)
            nxt.append((a, mid - gap / 2))
            nxt.append((mid + gap / 2, b))
        ivals = nxt
    return ivals


def _axis_membership(coords: np.ndarray, ivals, period: float, h: float) -> np.ndarray:
    x = np.mod(coords, period)
    tol = 1e-9 * h
    hit = np.zeros(coords.shape, dtype=bool)
    for a, b in ivals:
        hit |= (x >= a - tol) & (x <= b + tol)
    # intervals touching the right end of the period also contain x = 0
    if any(b >= period - tol for _, b in ivals):
        hit |= x <= tol
    return hit


def _product_set(grid: Grid, ivals, period: float) -> np.ndarray:
    pts = grid.coordinates()
    mask = np.ones(grid.size, dtype=bool)
    for ax in range(grid.dim):
        mask &= _axis_membership(pts[:, ax], ivals, period, grid.spacing)
    return mask


def _window_measures(grid: Grid, mask: np.ndarray, R: float) -> np.ndarray:
    offs = grid.ball_offsets(R)
    counts = kernels.ball_counts(np.flatnonzero(mask), grid.shape, offs)
    return counts * grid.cell_volume


def generate_set(spec: SetSpec, grid: Grid) -> ObservationSet:
    p = dict(spec.params)
    kind = spec.kind
    L, h = grid.extent, grid.spacing
    pts = grid.coordinates()
    content_dim = None
    set_kind = "density"
    record = {"generator": kind, **p}

    if kind == "full":
        mask = np.ones(grid.size, dtype=bool)
        R = float(p.get("R", L / 4))
    elif kind == "interval":
        # axis-0 slab [start, stop) of the torus, e.g. the half torus
        start, stop = float(p.get("start", 0.0)), float(p.get("stop", L / 2))
        x = np.mod(pts[:, 0] - start, L)
        mask = x < (stop - start) - 1e-9 * h
        R = float(p.get("R", L / 2))
    elif kind == "periodic-balls":
        radius, pitch = float(p["radius"]), float(p["pitch"])
        count = int(round(L / pitch))
        if abs(count * pitch - L) > 1e-9 * L:
            raise ValueError(f"pitch {pitch} does not divide the extent {L}")
        mask = np.zeros(grid.size, dtype=bool)
        for idx in np.ndindex(*((count,) * grid.dim)):
            mask |= grid.ball_mask(np.array(idx) * pitch, radius)
        R = float(p.get("R", pitch))
    elif kind in ("fat-cantor", "cantor-dust"):
        period = float(p.get("period", L))
        depth = int(p["depth"])
        if kind == "fat-cantor":
            ivals = _fat_cantor_intervals(depth, float(p.get("removed_fraction", 0.25)), period)
        else:
            ratio = float(p.get("ratio", 1.0 / 3.0))
            if not 0 < ratio < 0.5:
                raise ValueError(f"cantor-dust ratio must be in (0, 1/2), got {ratio}")
            ivals = _cantor_intervals(depth, ratio, period)
            set_kind = "content"
            content_dim = grid.dim * math.log(2.0) / math.log(1.0 / ratio)
        finest = min(b - a for a, b in ivals)
        record["finest_interval"] = finest
        record["resolved"] = bool(finest >= 2 * h - 1e-12)
        mask = _product_set(grid, ivals, period)
        R = float(p.get("R", period))
    elif kind == "random-density":
        delta, R = float(p["delta"]), float(p["R"])
        seed = int(p["seed"])
        blob = float(p.get("blob_radius", R / 4))
        rng = np.random.default_rng(seed)
        if delta > grid.ball_measure(R):
            raise ValueError(f"delta {delta} exceeds the measure of a ball of radius {R}")
        offs = grid.ball_offsets(R)
        shape = np.array(grid.shape)
        mask = np.zeros(grid.size, dtype=bool)
        for _ in range(100 * grid.size):
            meas = _window_measures(grid, mask, R)
            short = np.flatnonzero(meas < delta - 1e-12)
            if short.size == 0:
                break
            centre = int(rng.choice(short))
            step = offs[rng.integers(len(offs))]
            spot = (np.array(np.unravel_index(centre, grid.shape)) + step) % shape
            mask |= grid.ball_mask(spot * h, blob)
        record["seed"] = seed
    else:
        raise ValueError(f"unknown set kind {kind!r}")

    if not mask.any():
        raise ValueError(f"set spec {kind} {p} produces an empty set on this grid")
    delta = float(_window_measures(grid, mask, R).min())
    if kind == "random-density":
        record["requested_delta"] = float(p["delta"])
    return ObservationSet(grid=grid, mask=mask, kind=set_kind, R=R, delta=delta,
                          content_dim=content_dim, construction=record)


def set_spec_from_dict(block: dict) -> SetSpec:
    block = dict(block)
    kind = block.pop("kind", None)
    if kind is None:
        raise ValueError("set.kind: missing")
    return SetSpec(kind=kind, params=block)


def verify_density(obs: ObservationSet, R: float, delta: float) -> DensityReport:
    """Minimum over node-centred balls of ``meas(obs & B(x, R))``."""
    meas = _window_measures(obs.grid, obs.mask, R)
    worst = int(np.argmin(meas))
    m = float(meas[worst])
    return DensityReport(R=R, delta=delta, min_measure=m, worst_center=worst, passed=m >= delta - 1e-12)


# ----------------------------------------------------------- Hausdorff content


def _dyadic_radii(h: float, max_radius: float) -> list[float]:
    radii = []
    r = h
    while r <= max_radius * (1 + 1e-12):
        radii.append(r)
        r *= 2
    return radii


def greedy_cover_count(obs: ObservationSet, radius: float) -> int:
    """Balls of ``radius`` needed by the greedy cover.

    Each node stands for its lattice cell, so a ball covers a node only if
    it contains the whole cell: offsets are taken within ``radius - h sqrt(d)/2``.
    """
    g = obs.grid
    offs = g.ball_offsets(radius - g.spacing * math.sqrt(g.dim) / 2)
    return len(kernels.greedy_cover(obs.nodes, g.shape, offs))


def content_lower_bound(obs: ObservationSet, n: float, max_radius: float, growth: float = 2 ** 0.25) -> tuple[float, list]:
    """Mass-distribution bound with the uniform measure on the set's nodes.

    For radii in ``[r_i, r_{i+1})`` every ball sits inside a node-centred
    ball of radius ``r_{i+1} + h sqrt(d)/2``, so
    ``nu(B)/r^n <= max_count(r_{i+1} + h sqrt(d)/2) / (M r_i^n)`` and any
    admissible cover has ``sum r_j^n >= 1 / max_i Q_i``.
    """
    grid = obs.grid
    h = grid.spacing
    members = obs.nodes
    M = members.size
    slack = h * math.sqrt(grid.dim) / 2
    ladder = [h]
    while ladder[-1] < max_radius:
        ladder.append(min(ladder[-1] * growth, max_radius))
    if len(ladder) == 1:
        ladder.append(max_radius)
    worst = 0.0
    table = []
    for lo, hi in zip(ladder[:-1], ladder[1:]):
        counts = kernels.ball_counts(members, grid.shape, grid.ball_offsets(hi + slack))
        q = float(counts.max()) / (M * lo**n)
        table.append((lo, hi, q))
        worst = max(worst, q)
    return 1.0 / worst, table


def ball_scaling(obs: ObservationSet, n: float, radii) -> np.ndarray:
    """Range of ``nu(B(x, r)) / r^n`` over centres ``x`` in the set, one row per radius.

    ``nu`` is the uniform probability on the set's nodes. Rows are
    ``(r, min, max)``; an ``n``-regular set keeps every entry within a
    fixed factor of one across scales.
    """
    g = obs.grid
    members = obs.nodes
    rows = []
    for r in radii:
        counts = kernels.ball_counts(members, g.shape, g.ball_offsets(r))[members]
        q = counts / (members.size * r**n)
        rows.append((float(r), float(q.min()), float(q.max())))
    return np.array(rows)


def hausdorff_content(obs: ObservationSet, n: float, max_radius: float) -> CoveringEstimate:
    grid = obs.grid
    if not (0 < n <= grid.dim):
        raise ValueError(f"content order must lie in (0, {grid.dim}], got {n}")
    if not max_radius > grid.spacing:
        raise ValueError("max_radius must exceed the grid spacing")
    best = math.inf
    best_r = None
    best_count = 0
    table = []
    for r in _dyadic_radii(grid.spacing, max_radius):
        count = greedy_cover_count(obs, r)
        total = count * r**n
        table.append({"radius": r, "balls": count, "sum": total})
        if total < best:
            best, best_r, best_count = total, r, count
    lower, lower_table = content_lower_bound(obs, n, max_radius)
    return CoveringEstimate(
        n=float(n), upper=float(best), radii_used=[best_r] * best_count, lower=float(lower),
        scale_table=table + [{"lower_window": lo, "upper_window": hi, "q": q} for lo, hi, q in lower_table],
    )


def write_set_csv(obs: ObservationSet, path) -> None:
    with open(path, "w") as fh:
        fh.write("node\n")
        for i in obs.nodes:
            fh.write(f"{int(i)}\n")
