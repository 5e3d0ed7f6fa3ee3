"""Periodic lattice, cell covers and coefficient sampling.

The torus ``[0, L)^d`` stands in for ``R^d``: coefficients are periodic,
so every lattice cell sees the same geometry up to translation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with ``resolution`` nodes per axis."""

    dim: int
    extent: float
    resolution: int

    @property
    def spacing(self) -> float:
        return self.extent / self.resolution

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.resolution,) * self.dim

    @property
    def size(self) -> int:
        return self.resolution**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape (size, dim), flat C ordering."""
        axes = [np.arange(self.resolution) * self.spacing] * self.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def periodic_delta(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Componentwise minimal-image displacement ``y - x``."""
        d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        return d - self.extent * np.round(d / self.extent)

    def distance(self, x, y) -> np.ndarray:
        return np.sqrt(np.sum(self.periodic_delta(x, y) ** 2, axis=-1))

    def neighbor(self, index: int, axis: int, step: int = 1) -> int:
        coord = list(np.unravel_index(index, self.shape))
        coord[axis] = (coord[axis] + step) % self.resolution
        return int(np.ravel_multi_index(coord, self.shape))

    def ball_offsets(self, radius: float) -> np.ndarray:
        """Integer displacements (unique mod N) within Euclidean ``radius``.

        The tolerance absorbs round-off so that e.g. radius ``4h`` includes
        offset 4.
        """
        n = self.resolution
        rng = np.arange(-(n // 2), n - n // 2)
        mesh = np.meshgrid(*([rng] * self.dim), indexing="ij")
        offs = np.stack([m.reshape(-1) for m in mesh], axis=1)
        dist = np.sqrt(np.sum((offs * self.spacing) ** 2, axis=1))
        keep = dist <= radius * (1 + 1e-12) + 1e-12 * self.spacing
        return offs[keep]

    def ball_mask(self, center, radius: float) -> np.ndarray:
        return self.distance(self.coordinates(), np.asarray(center, dtype=float)) <= radius * (1 + 1e-12) + 1e-14

    def ball_measure(self, radius: float) -> float:
        """Discrete Lebesgue measure of a ball: node count times ``h^d``."""
        return len(self.ball_offsets(radius)) * self.cell_volume


def build_torus(dim: int, extent: float, resolution: int) -> Grid:
    if dim not in (1, 2):
        raise ValueError(f"unsupported dimension {dim}; only 1 and 2 are supported")
    if not extent > 0:
        raise ValueError(f"extent must be positive, got {extent}")
    if int(resolution) != resolution or resolution < 4:
        raise ValueError(f"resolution must be an integer >= 4, got {resolution}")
    return Grid(dim=int(dim), extent=float(extent), resolution=int(resolution))


@dataclass(frozen=True)
class Cell:
    """Lattice cell: inner ball B(p, R), outer ball B(p, 2R), time half-widths."""

    index: tuple[int, ...]
    center: tuple[float, ...]
    inner_radius: float
    time_inner: float
    time_outer: float

    @property
    def outer_radius(self) -> float:
        return 2.0 * self.inner_radius

    def inner_mask(self, grid: Grid) -> np.ndarray:
        return grid.ball_mask(self.center, self.inner_radius)

    def outer_mask(self, grid: Grid) -> np.ndarray:
        return grid.ball_mask(self.center, self.outer_radius)


def cell_cover(grid: Grid, R: float, T1: float, T2: float, pitch: float | None = None) -> list[Cell]:
    """Cells centred on the lattice ``pitch * Z^d`` whose inner balls cover the torus.

    ``pitch`` defaults to 1 when it divides the extent, else to the extent
    itself (a single cell).
    """
    if not (0 < T1 < T2):
        raise ValueError(f"need 0 < T1 < T2, got T1={T1}, T2={T2}")
    if not R > 0:
        raise ValueError(f"R must be positive, got {R}")
    if pitch is None:
        k = round(grid.extent)
        pitch = 1.0 if k >= 1 and abs(grid.extent - k) < 1e-9 else grid.extent
    count = int(round(grid.extent / pitch))
    if count < 1 or abs(count * pitch - grid.extent) > 1e-9 * grid.extent:
        raise ValueError(f"pitch {pitch} does not divide the extent {grid.extent}")
    cells = []
    for idx in np.ndindex(*((count,) * grid.dim)):
        center = tuple(float(i * pitch) for i in idx)
        cells.append(Cell(tuple(int(i) for i in idx), center, float(R), float(T1), float(T2)))
    covered = np.zeros(grid.size, dtype=bool)
    for c in cells:
        covered |= c.inner_mask(grid)
    if not covered.all():
        missing = int(np.flatnonzero(~covered)[0])
        raise ValueError(
            f"inner balls of radius {R} with pitch {pitch} do not cover the torus "
            f"(node {missing} at {grid.coordinates()[missing]} is uncovered)"
        )
    return cells


# ---------------------------------------------------------------- coefficients


@dataclass(frozen=True)
class CoefficientField:
    """Node samples of kappa and the metric g with ellipticity certificates.

    ``ellipticity`` is the computed lower bound ``a`` (min of kappa and of
    the smallest eigenvalue of g); ``lipschitz`` is the largest
    adjacent-node difference quotient over kappa and every entry of g.
    """

    kappa: np.ndarray
    metric: np.ndarray
    ellipticity: float
    lipschitz: float
    description: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ConstantCoefficients:
    kappa: float = 1.0
    metric: Sequence[Sequence[float]] | float | None = None


@dataclass(frozen=True)
class SmoothPeriodicCoefficients:
    """kappa = kappa_mean + kappa_amp * mean_i sin(2 pi m x_i / L + phase_i);
    g = (metric_mean + metric_amp * prod_i cos(2 pi m x_i / L)) Id, plus an
    off-diagonal ``metric_off * sin(2 pi m (x + y) / L)`` in 2-D."""

    kappa_mean: float = 2.0
    kappa_amp: float = 1.0
    mode: int = 1
    metric_mean: float = 1.0
    metric_amp: float = 0.0
    metric_off: float = 0.0
    phase: Sequence[float] = (0.0, 0.0)


@dataclass(frozen=True)
class ProfileCoefficients:
    """User profiles: callables of coordinates (shape (n, d)) or node arrays.

    ``metric`` may return (n,), treated as a scalar multiple of Id, or
    (n, d, d). Callables are checked for periodicity.
    """

    kappa: Callable[[np.ndarray], np.ndarray] | np.ndarray
    metric: Callable[[np.ndarray], np.ndarray] | np.ndarray | float = 1.0
    min_ellipticity: float = 0.0


@dataclass(frozen=True)
class RandomFourierCoefficients:
    """Random smooth periodic fields with a handful of Fourier modes."""

    seed: int = 0
    modes: int = 3
    kappa_mean: float = 2.0
    kappa_amp: float = 0.5
    metric_amp: float = 0.3
    metric_off: float = 0.1


def _eval_profile(fn, grid: Grid, pts: np.ndarray) -> np.ndarray:
    if callable(fn):
        return np.asarray(fn(pts), dtype=float)
    arr = np.asarray(fn, dtype=float)
    if arr.ndim == 0:
        return np.full(pts.shape[0], float(arr))
    return arr


def _metric_array(raw: np.ndarray, n: int, dim: int) -> np.ndarray:
    raw = np.asarray(raw, dtype=float)
    if raw.ndim == 0:
        raw = np.full(n, float(raw))
    if raw.ndim == 1:
        return raw[:, None, None] * np.eye(dim)[None]
    if raw.shape == (dim, dim):
        return np.broadcast_to(raw, (n, dim, dim)).copy()
    if raw.shape != (n, dim, dim):
        raise ValueError(f"metric has shape {raw.shape}, expected ({n}, {dim}, {dim})")
    return raw


def lipschitz_quotient(values: np.ndarray, grid: Grid) -> float:
    """Largest |f(x) - f(y)| / h over axis-adjacent node pairs (periodic)."""
    arr = np.asarray(values, dtype=float).reshape(grid.shape + values.shape[1:])
    worst = 0.0
    for ax in range(grid.dim):
        diff = np.abs(np.roll(arr, -1, axis=ax) - arr)
        worst = max(worst, float(diff.max()) / grid.spacing)
    return worst


def certify(kappa: np.ndarray, metric: np.ndarray, grid: Grid) -> tuple[float, float]:
    """Return ``(a, A)`` for sampled coefficients."""
    sym = 0.5 * (metric + np.swapaxes(metric, 1, 2))
    gmin = float(np.linalg.eigvalsh(sym)[:, 0].min())
    a = min(float(kappa.min()), gmin)
    A = lipschitz_quotient(kappa, grid)
    for i in range(grid.dim):
        for j in range(grid.dim):
            A = max(A, lipschitz_quotient(metric[:, i, j], grid))
    return a, A


def _check_periodic(fn, grid: Grid, pts: np.ndarray) -> None:
    if not callable(fn):
        return
    base = np.asarray(fn(pts), dtype=float)
    for ax in range(grid.dim):
        shifted = pts.copy()
        shifted[:, ax] += grid.extent
        if not np.allclose(np.asarray(fn(shifted), dtype=float), base, rtol=1e-9, atol=1e-12):
            raise ValueError(f"coefficient profile is not {grid.extent}-periodic along axis {ax}")


def sample_coefficients(spec, grid: Grid) -> CoefficientField:
    pts = grid.coordinates()
    n, d = grid.size, grid.dim
    L = grid.extent
    min_a = 0.0
    if isinstance(spec, ConstantCoefficients):
        kappa = np.full(n, float(spec.kappa))
        g0 = np.eye(d) if spec.metric is None else np.asarray(spec.metric, dtype=float)
        if g0.ndim == 0:
            g0 = float(g0) * np.eye(d)
        metric = np.broadcast_to(g0, (n, d, d)).copy()
        desc = {"kind": "constant", "kappa": float(spec.kappa)}
    elif isinstance(spec, SmoothPeriodicCoefficients):
        w = 2 * np.pi * spec.mode / L
        phase = np.asarray(spec.phase, dtype=float)[:d]
        if phase.size < d:
            phase = np.pad(phase, (0, d - phase.size))
        kappa = spec.kappa_mean + spec.kappa_amp * np.mean(np.sin(w * pts + phase), axis=1)
        scal = spec.metric_mean + spec.metric_amp * np.prod(np.cos(w * pts), axis=1)
        metric = scal[:, None, None] * np.eye(d)[None]
        if d == 2 and spec.metric_off:
            off = spec.metric_off * np.sin(w * (pts[:, 0] + pts[:, 1]))
            metric[:, 0, 1] = off
            metric[:, 1, 0] = off
        desc = {"kind": "smooth-periodic"}
    elif isinstance(spec, ProfileCoefficients):
        _check_periodic(spec.kappa, grid, pts)
        if callable(spec.metric):
            _check_periodic(spec.metric, grid, pts)
        kappa = _eval_profile(spec.kappa, grid, pts).reshape(n)
        metric = _metric_array(_eval_profile(spec.metric, grid, pts), n, d)
        min_a = spec.min_ellipticity
        desc = {"kind": "profile"}
    elif isinstance(spec, RandomFourierCoefficients):
        rng = np.random.default_rng(spec.seed)

        def field_of(amp):
            out = np.zeros(n)
            for _ in range(spec.modes):
                k = rng.integers(-3, 4, size=d)
                c = rng.uniform(-1, 1, size=2) / spec.modes
                arg = 2 * np.pi * pts @ k / L
                out += amp * (c[0] * np.cos(arg) + c[1] * np.sin(arg))
            return out

        kappa = spec.kappa_mean + field_of(spec.kappa_amp)
        metric = (1.0 + field_of(spec.metric_amp))[:, None, None] * np.eye(d)[None]
        if d == 2:
            off = field_of(spec.metric_off)
            metric[:, 0, 1] = off
            metric[:, 1, 0] = off
        desc = {"kind": "random-fourier", "seed": spec.seed}
    else:
        raise TypeError(f"unknown coefficient spec {spec!r}")

    if not np.allclose(metric, np.swapaxes(metric, 1, 2)):
        raise ValueError("metric must be symmetric at every node")
    a, A = certify(kappa, metric, grid)
    if a <= 0 or a < min_a:
        bad = int(np.argmin(np.minimum(kappa, np.linalg.eigvalsh(metric)[:, 0])))
        raise ValueError(f"ellipticity violated: lower bound {a:.3g} at node {bad} (need > {max(min_a, 0.0)})")
    return CoefficientField(kappa=kappa, metric=metric, ellipticity=a, lipschitz=A, description=desc)


def coefficient_spec_from_dict(block: dict):
    """Build a coefficient spec from a config block (``kind`` plus fields)."""
    block = dict(block)
    kind = block.pop("kind", "constant")
    if kind == "constant":
        return ConstantCoefficients(**block)
    if kind == "smooth-periodic":
        return SmoothPeriodicCoefficients(**block)
    if kind == "random-fourier":
        return RandomFourierCoefficients(**block)
    if kind == "profile":
        if "kappa" not in block:
            raise ValueError("coefficients.kappa: profile requires node values")
        return ProfileCoefficients(
            kappa=np.asarray(block["kappa"], dtype=float),
            metric=np.asarray(block.get("metric", 1.0), dtype=float),
            min_ellipticity=float(block.get("min_ellipticity", 0.0)),
        )
    raise ValueError(f"coefficients.kind: unknown kind {kind!r}")
