"""Harmonic extension ``v_mu(t, x) = sum sinh(lam t)/lam <u, e> e`` and its gradient sups.

Time dependence is analytic per mode; only space is discretised.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.integrate import trapezoid

from .grid import Cell
from .operator import SpectralDecomposition
from .sets import ObservationSet


@dataclass
class ExtensionField:
    times: np.ndarray
    mu: float
    modes: np.ndarray
    coeffs: np.ndarray
    decomposition: SpectralDecomposition
    values: np.ndarray = field(repr=False)
    time_derivative: np.ndarray = field(repr=False)
    _grad: np.ndarray | None = field(default=None, repr=False)

    @property
    def grid(self):
        return self.decomposition.grid

    def spatial_gradient(self) -> np.ndarray:
        """Centred differences, shape (times, nodes, dim)."""
        if self._grad is None:
            g = self.grid
            vals = self.values.reshape((len(self.times),) + g.shape)
            parts = []
            for ax in range(g.dim):
                a = ax + 1
                parts.append(((np.roll(vals, -1, axis=a) - np.roll(vals, 1, axis=a)) / (2 * g.spacing)).reshape(len(self.times), -1))
            self._grad = np.stack(parts, axis=-1)
        return self._grad

    def gradient_magnitude(self) -> np.ndarray:
        grad = self.spatial_gradient()
        return np.sqrt(self.time_derivative**2 + np.sum(grad**2, axis=-1))

    def second_time_derivative(self, i: int) -> np.ndarray:
        lam = self.decomposition.frequencies[self.modes]
        return self.decomposition.synthesize(lam * np.sinh(lam * self.times[i]) * self.coeffs, self.modes)

    def source_projection(self) -> np.ndarray:
        """``P_mu u``, which equals ``d_t v`` at ``t = 0``."""
        return self.decomposition.synthesize(self.coeffs, self.modes)


def _sinhc(lam: np.ndarray, t: float) -> np.ndarray:
    out = np.full(lam.shape, float(t))
    nz = lam > 0
    out[nz] = np.sinh(lam[nz] * t) / lam[nz]
    return out


def extend(dec: SpectralDecomposition, u: np.ndarray, mu: float, T2: float, time_steps: int) -> ExtensionField:
    """Extension on ``2 * time_steps + 1`` symmetric times in ``[-T2, T2]`` (t = 0 included)."""
    if time_steps < 2:
        raise ValueError("time_steps must be >= 2")
    if mu > dec.max_frequency + dec.tolerance:
        raise ValueError(f"mu={mu} exceeds the largest resolved frequency {dec.max_frequency:.6g}")
    modes = dec.retained(mu)
    coeffs = dec.coefficients(u)[modes]
    lam = dec.frequencies[modes]
    times = np.linspace(-T2, T2, 2 * time_steps + 1)
    times[time_steps] = 0.0
    basis = dec.vectors[:, modes]
    sh = np.stack([_sinhc(lam, t) for t in times])
    ch = np.cosh(np.outer(times, lam))
    values = (sh * coeffs) @ basis.T
    dt = (ch * coeffs) @ basis.T
    return ExtensionField(times=times, mu=float(mu), modes=modes, coeffs=coeffs, decomposition=dec,
                          values=values, time_derivative=dt)


@dataclass(frozen=True)
class Region:
    """Space-time region: ``|t| <= half_width`` times a node mask.

    ``half_width == 0`` selects the slice ``t = 0`` only.
    """

    name: str
    half_width: float
    mask: np.ndarray


def region_K(cell: Cell, grid) -> Region:
    return Region("K", cell.time_inner, cell.inner_mask(grid))


def region_Omega(cell: Cell, grid) -> Region:
    return Region("Omega", cell.time_outer, cell.outer_mask(grid))


def region_E(cell: Cell, obs: ObservationSet) -> Region:
    return Region("E", 0.0, cell.inner_mask(obs.grid) & obs.mask)


class SupValue(NamedTuple):
    value: float
    empty: bool


def sup_gradient(fld: ExtensionField, region: Region) -> SupValue:
    tsel = np.abs(fld.times) <= region.half_width * (1 + 1e-12) + 1e-15
    if not tsel.any():
        raise ValueError(f"region {region.name} misses the time grid")
    if not region.mask.any():
        return SupValue(0.0, True)
    mag = fld.gradient_magnitude()
    return SupValue(float(mag[np.ix_(tsel, region.mask)].max()), False)


@dataclass(frozen=True)
class RegionSup:
    cell: Cell
    mu: float
    supE: float
    supK: float
    supOmega: float
    emptyE: bool
    l2_ball: float = 0.0
    l2_observed: float = 0.0


def region_sups(fld: ExtensionField, cell: Cell, obs: ObservationSet) -> RegionSup:
    """Sups over E_p, K_p, Omega_p plus the L^2 norms of ``P_mu u`` on B(p,R) and on its observed part."""
    grid = fld.grid
    e = sup_gradient(fld, region_E(cell, obs))
    k = sup_gradient(fld, region_K(cell, grid))
    o = sup_gradient(fld, region_Omega(cell, grid))
    pu = fld.source_projection()
    w = fld.decomposition.weight
    inner = cell.inner_mask(grid)
    l2b = float(np.sqrt(np.sum(w[inner] * pu[inner] ** 2)))
    obsm = inner & obs.mask
    l2o = float(np.sqrt(np.sum(w[obsm] * pu[obsm] ** 2)))
    return RegionSup(cell, fld.mu, e.value, k.value, o.value, e.empty, l2b, l2o)


@dataclass
class AlphaFit:
    alpha: float
    constant: float
    ls_log_constant: float
    r2: float
    used: int
    excluded: int
    ls_violation_fraction: float
    heldout_fraction: float
    per_cell: dict


def _fit_log_power(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx <= 1e-14 * max(1.0, np.sum(x**2)):
        raise ValueError("alpha is unidentifiable: supE/supOmega has no spread across samples")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    icpt = float(ym - slope * xm)
    res = y - icpt - slope * x
    sst = np.sum((y - ym) ** 2)
    r2 = float(1 - np.sum(res**2) / sst) if sst > 0 else 1.0
    return slope, icpt, r2


def estimate_alpha(samples: list[RegionSup], slack: float = 1e-9) -> AlphaFit:
    """Fit ``supK <= C supE^alpha supOmega^(1-alpha)``.

    alpha is the least-squares slope of ``log(supK/supOmega)`` against
    ``log(supE/supOmega)`` (clamped into (0, 1)); C is the smallest
    constant making the inequality hold on the samples. ``heldout_fraction``
    repeats the fit on even-indexed samples and scores the odd ones.
    """
    good = [s for s in samples if s.supE > 0 and s.supK > 0 and s.supOmega > 0]
    excluded = len(samples) - len(good)
    if len(good) < 10:
        raise ValueError(f"need at least 10 non-degenerate samples, got {len(good)}")
    x = np.log([s.supE / s.supOmega for s in good])
    y = np.log([s.supK / s.supOmega for s in good])

    def fit(xs, ys):
        a, c0, r2 = _fit_log_power(xs, ys)
        a = float(np.clip(a, 1e-6, 1 - 1e-6))
        logc = float(np.max(ys - a * xs))
        return a, logc, c0, r2

    alpha, logc, c_ls, r2 = fit(x, y)
    ls_viol = float(np.mean(y > c_ls + alpha * x + slack))
    a_tr, logc_tr, _, _ = fit(x[::2], y[::2])
    held = float(np.mean(y[1::2] <= logc_tr + a_tr * x[1::2] + slack))

    per_cell = {}
    by_cell: dict = {}
    for xi, yi, s in zip(x, y, good):
        by_cell.setdefault(s.cell.index, []).append((xi, yi))
    for idx, pts in by_cell.items():
        arr = np.array(pts)
        if len(arr) >= 3:
            try:
                per_cell[idx] = _fit_log_power(arr[:, 0], arr[:, 1])[0]
            except ValueError:
                continue
    return AlphaFit(alpha, float(np.exp(logc)), c_ls, r2, len(good), excluded, ls_viol, held, per_cell)


def observed_constant(samples: list[RegionSup], alpha: float) -> float:
    """Smallest C with ``||u||_B(p,R) <= C supOmega^(1-alpha) ||u||_(E & B)^alpha`` on the samples."""
    ratios = [
        s.l2_ball / (s.supOmega ** (1 - alpha) * s.l2_observed**alpha)
        for s in samples
        if s.l2_observed > 0 and s.supOmega > 0
    ]
    return float(max(ratios))


def young_split_holds(sample: RegionSup, constant: float, alpha: float, D: float) -> bool:
    """``||u||^2_B <= C^2 (e^{-D mu} supOmega^2 + e^{(1-alpha)/alpha D mu} ||u||^2_{E & B})``."""
    mu = sample.mu
    rhs = constant**2 * (
        np.exp(-D * mu) * sample.supOmega**2
        + np.exp((1 - alpha) / alpha * D * mu) * sample.l2_observed**2
    )
    return bool(sample.l2_ball**2 <= rhs * (1 + 1e-12))


@dataclass
class SobolevFit:
    slope: float
    log_constant: float
    r2: float
    mus: np.ndarray
    lhs: np.ndarray
    heldout_ok: bool
    heldout_ratio: float


def sobolev_lhs(fld: ExtensionField, cells: list[Cell]) -> float:
    """``(sum_p sup_{Omega_p} |grad v|^2)^{1/2}``."""
    total = 0.0
    for c in cells:
        total += sup_gradient(fld, region_Omega(c, fld.grid)).value ** 2
    return float(np.sqrt(total))


def sobolev_bound_check(dec: SpectralDecomposition, mus, trials: int, T2: float, cells: list[Cell],
                        rng=None, time_steps: int = 16) -> SobolevFit:
    """Worst LHS over random unit ``u`` per ``mu``; log-affine fit on all but the last ``mu``.

    The constant is raised to the envelope of the fitted points, then
    checked on the held-out last ``mu``.
    """
    mus = np.asarray(list(mus), dtype=float)
    if np.any(np.diff(mus) <= 0):
        raise ValueError("mu values must be increasing")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(rng)
    us = []
    for _ in range(trials):
        u = rng.standard_normal(dec.size)
        us.append(u / dec.norm(u))
    lhs = np.array([
        max(sobolev_lhs(extend(dec, u, mu, T2, time_steps), cells) for u in us) for mu in mus
    ])
    logs = np.log(lhs)
    slope, icpt, r2 = _fit_affine(mus[:-1], logs[:-1])
    env = float(np.max(logs[:-1] - icpt - slope * mus[:-1]))
    logc = icpt + env
    pred = logc + slope * mus[-1]
    ratio = float(np.exp(logs[-1] - pred))
    return SobolevFit(slope, logc, r2, mus, lhs, bool(ratio <= 1.0), ratio)


def _fit_affine(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - (slope * x + icpt)
    sst = np.sum((y - y.mean()) ** 2)
    r2 = float(1 - np.sum(res**2) / sst) if sst > 0 else 1.0
    return float(slope), float(icpt), r2


@dataclass
class EnergyReport:
    mu: float
    tau: float
    time_energy: float
    time_bound: float
    gradient_ratio: float
    gradient_constant: float
    gradient_energy: float
    gradient_bound: float


def gradient_constant(dec: SpectralDecomposition) -> float:
    """Smallest C with ``||grad_h v||^2_kappa <= C <A v, v>_kappa`` (forward differences).

    Computed as the top generalised eigenvalue on the non-constant modes.
    """
    grid = dec.grid
    w = dec.weight
    nz = np.flatnonzero(dec.eigenvalues > 0)
    E = dec.vectors[:, nz]
    G = np.zeros((nz.size, nz.size))
    for ax in range(grid.dim):
        De = (np.roll(E.reshape(grid.shape + (-1,)), -1, axis=ax).reshape(grid.size, -1) - E) / grid.spacing
        G += De.T @ (w[:, None] * De)
    s = 1.0 / np.sqrt(dec.eigenvalues[nz])
    return float(np.linalg.eigvalsh(s[:, None] * G * s[None, :])[-1])


def _forward_gradient_energy(dec: SpectralDecomposition, v: np.ndarray) -> float:
    grid = dec.grid
    vals = v.reshape(grid.shape)
    total = 0.0
    for ax in range(grid.dim):
        d = ((np.roll(vals, -1, axis=ax) - vals) / grid.spacing).reshape(-1)
        total += float(np.sum(dec.weight * d**2))
    return total


def energy_checks(dec: SpectralDecomposition, u: np.ndarray, mu: float, tau: float,
                  time_steps: int = 200, c_grad: float | None = None) -> EnergyReport:
    """Quadrature of ``||d_t v||^2`` and ``||grad_x v||^2`` over ``(-tau, tau)``.

    Bounds: ``int cosh^2(mu t) dt <= 2 tau e^{2 tau mu}`` for the time part,
    and ``C_grad int sinh^2(mu t) dt <= C_grad 2 tau e^{2 tau mu}`` for the
    space part, both times ``||u||^2``.
    """
    fld = extend(dec, u, mu, tau, time_steps)
    t = fld.times
    nrm2 = dec.norm(u) ** 2
    dt_energy = np.array([dec.norm(row) ** 2 for row in fld.time_derivative])
    time_energy = float(trapezoid(dt_energy, t))
    if c_grad is None:
        c_grad = gradient_constant(dec)
    op = dec.operator
    grad_e = np.array([_forward_gradient_energy(dec, row) for row in fld.values])
    form = np.array([op.energy(row) for row in fld.values])
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(form > 0, grad_e / np.where(form > 0, form, 1.0), 0.0)
    bound = 2 * tau * np.exp(2 * tau * mu) * nrm2
    return EnergyReport(
        mu=float(mu), tau=float(tau), time_energy=time_energy, time_bound=float(bound),
        gradient_ratio=float(ratios.max()), gradient_constant=c_grad,
        gradient_energy=float(trapezoid(grad_e, t)), gradient_bound=float(c_grad * bound),
    )
