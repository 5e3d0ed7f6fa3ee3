"""Discrete divergence-form Laplacian and its functional calculus.

``-Delta u = -(1/kappa) sum_ij d_i (g^ij kappa d_j u)`` is assembled as
``A = diag(1/kappa) S`` with ``S`` symmetric, so ``A`` is self-adjoint for
the weighted inner product ``<u, v>_kappa = sum_i kappa_i h^d u_i v_i``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .grid import CoefficientField, Grid

DENSE_CAP = 4096


@dataclass(frozen=True)
class EllipticOperator:
    grid: Grid
    coefficients: CoefficientField
    stiffness: sp.csr_matrix
    matrix: sp.csr_matrix
    weight: np.ndarray

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.matrix @ u

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.sum(self.weight * u * v))

    def norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(u, u), 0.0)))

    def energy(self, u: np.ndarray) -> float:
        """``<A u, u>_kappa = h^d u^T S u``."""
        return float(self.grid.cell_volume * u @ (self.stiffness @ u))

    def norm_estimate(self) -> float:
        """Infinity-norm of the matrix, an upper bound for the spectral radius."""
        return float(abs(self.matrix).sum(axis=1).max())


def assemble(grid: Grid, coeffs: CoefficientField) -> EllipticOperator:
    """Finite-volume stencil with arithmetic face averages of ``g^ii kappa``.

    In 2-D the mixed term uses the cell-centred gradient built from the four
    corners of each lattice square; both pieces enter through a symmetric
    quadratic form, which is what makes ``S`` symmetric.
    """
    n, d, h = grid.size, grid.dim, grid.spacing
    flux = coeffs.metric * coeffs.kappa[:, None, None]
    idx = np.arange(n).reshape(grid.shape)
    rows, cols, vals = [], [], []

    def add_outer(nodes: list[np.ndarray], stencil_a, stencil_b, weight):
        # S += weight * (a b^T + b a^T) / 2 summed over cells, a/b are
        # difference stencils over the listed node arrays
        for p, wa in zip(nodes, stencil_a):
            for q, wb in zip(nodes, stencil_b):
                c = weight * wa * wb
                rows.extend([p.ravel(), q.ravel()])
                cols.extend([q.ravel(), p.ravel()])
                vals.extend([0.5 * c.ravel(), 0.5 * c.ravel()])

    for ax in range(d):
        nb = np.roll(idx, -1, axis=ax)
        c_face = 0.5 * (flux[:, ax, ax].reshape(grid.shape) + flux[nb.ravel(), ax, ax].reshape(grid.shape))
        add_outer([idx, nb], [1.0, -1.0], [1.0, -1.0], c_face / h**2)

    if d == 2:
        i00 = idx
        i10 = np.roll(idx, -1, axis=0)
        i01 = np.roll(idx, -1, axis=1)
        i11 = np.roll(i10, -1, axis=1)
        corners = [i00, i10, i01, i11]
        c12 = sum(flux[c.ravel(), 0, 1] for c in corners).reshape(grid.shape) / 4.0
        dx = [-0.5 / h, 0.5 / h, -0.5 / h, 0.5 / h]
        dy = [-0.5 / h, -0.5 / h, 0.5 / h, 0.5 / h]
        # 2 c12 Dx u Dy u, symmetrised
        add_outer(corners, dx, dy, c12)
        add_outer(corners, dy, dx, c12)

    S = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    S.sum_duplicates()
    S = (0.5 * (S + S.T)).tocsr()
    A = (sp.diags(1.0 / coeffs.kappa) @ S).tocsr()
    weight = coeffs.kappa * grid.cell_volume
    return EllipticOperator(grid=grid, coefficients=coeffs, stiffness=S, matrix=A, weight=weight)


@dataclass(frozen=True)
class SpectralDecomposition:
    """kappa-orthonormal eigenbasis of ``-Delta``, eigenvalues nondecreasing."""

    eigenvalues: np.ndarray
    vectors: np.ndarray
    weight: np.ndarray
    operator: EllipticOperator
    tolerance: float

    @property
    def frequencies(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues)

    @property
    def size(self) -> int:
        return self.eigenvalues.size

    @property
    def grid(self) -> Grid:
        return self.operator.grid

    @property
    def max_frequency(self) -> float:
        return float(self.frequencies[-1])

    def coefficients(self, u: np.ndarray) -> np.ndarray:
        return self.vectors.T @ (self.weight * u)

    def synthesize(self, coeffs: np.ndarray, modes: np.ndarray | None = None) -> np.ndarray:
        if modes is None:
            return self.vectors @ coeffs
        return self.vectors[:, modes] @ coeffs

    def retained(self, mu: float) -> np.ndarray:
        """Indices of modes with frequency at most ``mu``."""
        return np.flatnonzero(self.frequencies <= mu + self.tolerance)

    def inner(self, u, v) -> float:
        return float(np.sum(self.weight * u * v))

    def norm(self, u) -> float:
        return float(np.sqrt(max(self.inner(u, u), 0.0)))


def eigendecompose(op: EllipticOperator, cap: int = DENSE_CAP) -> SpectralDecomposition:
    n = op.grid.size
    if n > cap:
        raise ValueError(f"{n} nodes exceeds the dense eigensolver cap of {cap}")
    root = np.sqrt(op.coefficients.kappa)
    sym = op.stiffness.toarray() / root[:, None] / root[None, :]
    sym = 0.5 * (sym + sym.T)
    lam2, Q = sla.eigh(sym)
    floor = 1e3 * np.finfo(float).eps * max(float(lam2[-1]), 1.0)
    lam2 = np.where(lam2 < floor, 0.0, lam2)
    vectors = Q / np.sqrt(op.weight)[:, None]
    return SpectralDecomposition(
        eigenvalues=lam2, vectors=vectors, weight=op.weight.copy(), operator=op,
        tolerance=float(np.sqrt(floor)),
    )


def apply_function(dec: SpectralDecomposition, phi: Callable[[np.ndarray], np.ndarray], u: np.ndarray) -> np.ndarray:
    """``phi(sqrt(-Delta)) u``; ``phi`` must accept an array of frequencies."""
    values = np.asarray(phi(dec.frequencies), dtype=float)
    return dec.vectors @ (values * dec.coefficients(u))


def projector(mu: float, tol: float = 0.0) -> Callable[[np.ndarray], np.ndarray]:
    return lambda lam: (lam <= mu + tol).astype(float)


def sinhc(t: float) -> Callable[[np.ndarray], np.ndarray]:
    """``sinh(lam t) / lam`` with the value ``t`` at ``lam = 0``."""

    def phi(lam):
        lam = np.asarray(lam, dtype=float)
        out = np.full(lam.shape, float(t))
        nz = lam > 0
        out[nz] = np.sinh(lam[nz] * t) / lam[nz]
        return out

    return phi


def cosh_of(t: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda lam: np.cosh(np.asarray(lam, dtype=float) * t)


def heat_symbol(t: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda lam: np.exp(-t * np.asarray(lam, dtype=float) ** 2)


@dataclass
class BoundReport:
    worst_ratio: float
    worst_ratio_retained: float
    sup_interval: float
    sup_retained: float
    ratios: np.ndarray


def verify_bound(dec: SpectralDecomposition, phi, mu: float, trials: int, rng=None, samples: int = 4001) -> BoundReport:
    """Check ``||phi(sqrt(-Delta)) P_mu u|| <= sup_[0,mu] |phi| ||u||`` on random ``u``.

    ``worst_ratio`` divides by the sup over the whole interval (sampled on a
    dense grid together with the retained frequencies); the retained
    variant divides by the finite sup over retained eigenvalues only.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(rng)
    keep = dec.retained(mu)
    lam = dec.frequencies
    vals = np.abs(np.asarray(phi(lam), dtype=float))
    sup_ret = float(vals[keep].max()) if keep.size else 0.0
    grid_pts = np.concatenate([np.linspace(0.0, mu, samples), lam[keep]])
    sup_int = max(float(np.abs(np.asarray(phi(grid_pts), dtype=float)).max()), sup_ret)
    mask = np.zeros(dec.size)
    mask[keep] = 1.0
    ratios = np.empty(trials)
    for k in range(trials):
        u = rng.standard_normal(dec.size)
        c = dec.coefficients(u)
        lhs = np.sqrt(np.sum((vals * mask * c) ** 2))
        ratios[k] = lhs / dec.norm(u)
    worst_ret = float(ratios.max() / sup_ret) if sup_ret > 0 else 0.0
    worst = float(ratios.max() / sup_int) if sup_int > 0 else 0.0
    assert worst_ret <= 1 + 1e-10, f"functional calculus bound violated: {worst_ret}"
    return BoundReport(worst, worst_ret, sup_int, sup_ret, ratios)


def write_eigenvalues_csv(dec: SpectralDecomposition, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "lambda_squared", "lambda"])
        for k, (l2, l) in enumerate(zip(dec.eigenvalues, dec.frequencies)):
            w.writerow([k, repr(float(l2)), repr(float(l))])


def periodic_stencil_eigenvalues(resolution: int, extent: float) -> np.ndarray:
    """Closed form ``(2/h)^2 sin^2(k pi / N)`` of the 1-D periodic 3-point stencil, sorted."""
    h = extent / resolution
    k = np.arange(resolution)
    return np.sort((2.0 / h) ** 2 * np.sin(np.pi * k / resolution) ** 2)
