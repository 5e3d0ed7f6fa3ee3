"""Heat semigroup, observability Gramians and three null-control constructions.

Conventions
-----------
Observation runs forward: ``y(t) = 1_omega e^{t Delta} u0`` for ``t in F``.
Controls are built from adjoint states: a control acting on ``F`` is
``f(s) = 1_omega e^{(T - s) Delta} phi``, so the controllability Gramian of
``F`` is the observability Gramian of the reflected set ``T - F``. The
duality tests lock this convention.

All linear algebra happens on a retained set of modes; everything else is
reported as the part left to dissipation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .grid import Cell
from .operator import SpectralDecomposition
from .sets import ObservationSet
from .specineq import observation_matrix

RETAIN_THRESHOLD = 1e-14


def heat_evolve(dec: SpectralDecomposition, u0: np.ndarray, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError(f"heat_evolve needs t >= 0, got {t}")
    return dec.vectors @ (np.exp(-t * dec.eigenvalues) * dec.coefficients(u0))


def retained_modes(dec: SpectralDecomposition, T: float, mu: float | None = None,
                   threshold: float = RETAIN_THRESHOLD) -> np.ndarray:
    """Modes taking part in control: ``lam <= mu`` if given, else ``e^{-T lam^2} >= threshold``."""
    if mu is not None:
        return dec.retained(mu)
    return np.flatnonzero(np.exp(-T * dec.eigenvalues) >= threshold)


@dataclass(frozen=True)
class TimeSet:
    """Finite union of disjoint closed intervals with a trapezoid rule on each."""

    intervals: tuple
    nodes_per_interval: int = 32

    def __post_init__(self):
        ivals = tuple((float(a), float(b)) for a, b in self.intervals)
        object.__setattr__(self, "intervals", ivals)
        if not ivals:
            raise ValueError("time set is empty (measure 0)")
        for a, b in ivals:
            if not a < b:
                raise ValueError(f"degenerate interval [{a}, {b}] (measure 0)")
        for (_, b), (a2, _) in zip(ivals, ivals[1:]):
            if b > a2:
                raise ValueError("intervals must be sorted and disjoint")
        if self.nodes_per_interval < 2:
            raise ValueError("need at least 2 quadrature nodes per interval")

    @property
    def measure(self) -> float:
        return sum(b - a for a, b in self.intervals)

    @property
    def end(self) -> float:
        return self.intervals[-1][1]

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        nodes, weights = [], []
        for a, b in self.intervals:
            t = np.linspace(a, b, self.nodes_per_interval)
            w = np.full(t.size, (b - a) / (t.size - 1))
            w[0] *= 0.5
            w[-1] *= 0.5
            nodes.append(t)
            weights.append(w)
        return np.concatenate(nodes), np.concatenate(weights)

    def reflect(self, T: float) -> "TimeSet":
        return TimeSet(tuple((T - b, T - a) for a, b in reversed(self.intervals)), self.nodes_per_interval)

    def refined(self, factor: int = 2) -> "TimeSet":
        return TimeSet(self.intervals, self.nodes_per_interval * factor)

    def check_inside(self, T: float) -> None:
        if self.intervals[0][0] < 0 or self.end > T:
            raise ValueError(f"time set {self.intervals} is not inside (0, {T})")


def _interval_integral(a: float, b: float, s: np.ndarray) -> np.ndarray:
    """``int_a^b e^{-t s} dt`` elementwise, stable for ``s -> 0``."""
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    small = s * (b - a) < 1e-8
    out[small] = (b - a) * np.exp(-a * s[small]) * (1 - 0.5 * s[small] * (b - a))
    big = ~small
    out[big] = np.exp(-a * s[big]) * (-np.expm1(-(b - a) * s[big])) / s[big]
    return out


def time_kernel(lam2_rows: np.ndarray, lam2_cols: np.ndarray, F: TimeSet, quadrature: str) -> np.ndarray:
    """``K[j, k] = int_F e^{-t (lam_j^2 + lam_k^2)} dt``, exactly or by the trapezoid rule."""
    s = lam2_rows[:, None] + lam2_cols[None, :]
    if quadrature == "exact":
        return sum(_interval_integral(a, b, s) for a, b in F.intervals)
    if quadrature == "trapezoid":
        t, w = F.quadrature()
        K = np.zeros_like(s)
        for ti, wi in zip(t, w):
            K += wi * np.exp(-ti * s)
        return K
    raise ValueError(f"unknown quadrature {quadrature!r}")


@dataclass
class Gramian:
    matrix: np.ndarray
    modes: np.ndarray
    time_set: TimeSet
    quadrature: str
    provenance: dict = field(default_factory=dict)


@dataclass
class SupCellObservation:
    """``u0 -> sum_k int_F sup_{E & B(k,R)} |e^{t Delta} u0|^2 dt``; not a quadratic form."""

    decomposition: SpectralDecomposition
    blocks: list
    time_set: TimeSet

    def __call__(self, u0: np.ndarray) -> float:
        t, w = self.time_set.quadrature()
        total = 0.0
        for ti, wi in zip(t, w):
            u = heat_evolve(self.decomposition, u0, ti)
            total += wi * sum(float(np.max(u[b] ** 2)) for b in self.blocks)
        return total


def observability_gramian(dec: SpectralDecomposition, obs: ObservationSet, F: TimeSet, variant: str = "L2",
                          cells: Sequence[Cell] | None = None, T: float | None = None, mu: float | None = None,
                          modes: np.ndarray | None = None, quadrature: str = "trapezoid"):
    """Quadratic form ``<G c, c> = int_F ||1_omega e^{t Delta} u0||^2_kappa dt`` in mode coordinates.

    The ``supCell`` variant returns a :class:`SupCellObservation` evaluator.
    """
    if not obs.mask.any():
        raise ValueError("observation set is empty")
    if variant == "supCell":
        if not cells:
            raise ValueError("supCell variant needs cells")
        blocks = [np.flatnonzero(c.inner_mask(obs.grid) & obs.mask) for c in cells]
        blocks = [b for b in blocks if b.size]
        return SupCellObservation(dec, blocks, F)
    if variant != "L2":
        raise ValueError(f"unknown variant {variant!r}")
    if modes is None:
        modes = retained_modes(dec, T if T is not None else F.end, mu)
    lam2 = dec.eigenvalues[modes]
    M = observation_matrix(dec, obs, modes)
    G = time_kernel(lam2, lam2, F, quadrature) * M
    G = 0.5 * (G + G.T)
    return Gramian(G, modes, F, quadrature, {"set": obs.construction, "intervals": F.intervals,
                                             "nodes_per_interval": F.nodes_per_interval})


def observability_constant(dec: SpectralDecomposition, G: Gramian, T: float) -> float:
    """Largest ``||e^{T Delta} u0||^2 / <G u0, u0>`` over the retained modes.

    Solved after a symmetric diagonal rescaling of ``G`` so that graded
    Gramians (entries spanning many decades) stay well posed; returns
    ``inf`` when ``G`` is singular on the subspace.
    """
    d = np.sqrt(np.clip(np.diag(G.matrix), 0.0, None))
    if np.any(d <= 0):
        return math.inf
    H = G.matrix / d[:, None] / d[None, :]
    ev, V = np.linalg.eigh(H)
    if ev[0] <= 1e-13 * ev[-1]:
        return math.inf
    b = np.exp(-T * dec.eigenvalues[G.modes]) / d
    X = (V / np.sqrt(ev)[None, :]).T * b[None, :]
    return float(np.linalg.norm(X, 2) ** 2)


@dataclass
class ControlResult:
    kind: str
    times: np.ndarray
    control: np.ndarray
    weights: np.ndarray
    cost: float
    terminal_residual: float
    dissipated_residual: float
    success: bool
    regularization: float
    modes: np.ndarray
    weighted_cost: float | None = None
    diagnostics: dict = field(default_factory=dict)


def default_regularization(matrix: np.ndarray) -> float:
    return 1e-12 * float(np.trace(matrix)) / matrix.shape[0]


def _split_residual(dec, modes, diff_coeffs, defect_norm) -> tuple[float, float]:
    mask = np.zeros(dec.size, dtype=bool)
    mask[modes] = True
    ret = float(np.linalg.norm(diff_coeffs[mask]))
    rest = float(np.linalg.norm(diff_coeffs[~mask]))
    if defect_norm == 0:
        return ret, rest
    return ret / defect_norm, rest / defect_norm


def hum_control(dec: SpectralDecomposition, obs: ObservationSet, F: TimeSet, u0: np.ndarray, v0: np.ndarray,
                T: float, eps: float | None = None, mu: float | None = None, quadrature: str = "trapezoid",
                tol: float = 1e-6) -> ControlResult:
    """Least-norm control on ``F x omega`` steering ``u0`` to ``e^{T Delta} v0``.

    Solves ``(Lambda + eps) phi = e^{T Delta}(v0 - u0)`` on the retained modes
    where ``Lambda`` is the Gramian of the reflected set ``T - F``. With the
    trapezoid rule the control is the sampled ``f(s_i)`` acting with weights
    ``w_i`` and the terminal state is recomputed node-wise through the full
    eigenbasis; with ``quadrature="exact"`` the control is the continuous
    ``f(s)`` and the terminal state is integrated exactly per mode.
    """
    F.check_inside(T)
    modes = retained_modes(dec, T, mu)
    lam2 = dec.eigenvalues
    Fr = F.reflect(T)
    gram = observability_gramian(dec, obs, Fr, modes=modes, quadrature=quadrature)
    Lam = gram.matrix
    eps = default_regularization(Lam) if eps is None else float(eps)
    c0, cv = dec.coefficients(u0), dec.coefficients(v0)
    decay = np.exp(-T * lam2)
    defect_all = decay * (cv - c0)
    w = defect_all[modes]
    phi = sla.solve(Lam + eps * np.eye(modes.size), w, assume_a="pos")
    ind = obs.indicator()
    s, ws = F.quadrature()
    basis = dec.vectors[:, modes]
    samples = np.stack([ind * (basis @ (np.exp(-(T - si) * lam2[modes]) * phi)) for si in s])
    target = heat_evolve(dec, v0, T)
    if quadrature == "trapezoid":
        uT = heat_evolve(dec, u0, T)
        for si, wi, f in zip(s, ws, samples):
            uT = uT + wi * heat_evolve(dec, f, T - si)
        cost = float(sum(wi * dec.norm(f) ** 2 for wi, f in zip(ws, samples)))
        diff = dec.coefficients(uT - target)
    else:
        Mfull = dec.vectors.T @ (dec.weight[:, None] * ind[:, None] * basis)
        R = time_kernel(lam2, lam2[modes], Fr, "exact") * Mfull
        diff = decay * c0 + R @ phi - decay * cv
        cost = float(phi @ Lam @ phi)
    res, rest = _split_residual(dec, modes, diff, float(np.linalg.norm(w)))
    return ControlResult(
        kind="hum", times=s, control=samples, weights=ws, cost=cost, terminal_residual=res,
        dissipated_residual=rest, success=res <= tol, regularization=eps, modes=modes,
        diagnostics={"phi": phi, "defect": w, "gramian": gram, "dual_value": float(w @ phi),
                     "condition": float(np.linalg.cond(Lam + eps * np.eye(modes.size)))},
    )


# ------------------------------------------------------------ Lebeau-Robbiano


@dataclass(frozen=True)
class SlabSchedule:
    """Slabs ``[a_j, b_j]`` partitioning ``(0, T)`` with cutoffs ``mu_j``.

    On each slab the first ``control_fraction`` of its length is used for
    control, the rest for free decay.
    """

    slabs: tuple
    mus: tuple
    control_fraction: float = 0.5

    def __post_init__(self):
        if len(self.slabs) != len(self.mus) or not self.slabs:
            raise ValueError("need one cutoff per slab")
        for (a, b), (a2, _) in zip(self.slabs, self.slabs[1:]):
            if abs(b - a2) > 1e-12:
                raise ValueError("slabs must be contiguous")
        if not 0 < self.control_fraction < 1:
            raise ValueError("control_fraction must lie in (0, 1)")


def geometric_slabs(T: float, count: int, mu0: float, ratio: float = 0.5, growth: float = 2.0,
                    control_fraction: float = 0.5) -> SlabSchedule:
    lengths = np.array([ratio**j for j in range(count)])
    lengths *= T / lengths.sum()
    edges = np.concatenate([[0.0], np.cumsum(lengths)])
    edges[-1] = T
    slabs = tuple((float(a), float(b)) for a, b in zip(edges[:-1], edges[1:]))
    mus = tuple(float(mu0 * growth**j) for j in range(count))
    return SlabSchedule(slabs, mus, control_fraction)


def lebeau_robbiano_control(dec: SpectralDecomposition, obs: ObservationSet, u0: np.ndarray, T: float,
                            schedule: SlabSchedule, eps: float | None = None, tol: float = 1e-6,
                            slope: float | None = None, nodes_per_slab: int = 16) -> ControlResult:
    """Iterated low-frequency annihilation plus free decay.

    On slab j the HUM control for the modes ``lam <= mu_j`` (exact Gramian
    over the control window) zeroes that block of the state; its
    spill-over into higher modes is propagated exactly and left to decay.
    ``tol`` is relative to ``||u0||``. With ``slope`` given, the per-slab
    ratio ``cost_j / (e^{2 slope mu_j} ||z_j||^2)`` is reported.
    """
    if abs(schedule.slabs[-1][1] - T) > 1e-12 or schedule.slabs[0][0] != 0:
        raise ValueError("slab schedule must cover (0, T)")
    lam2 = dec.eigenvalues
    ind = obs.indicator()
    coeff = dec.coefficients(u0)
    u0_norm = float(np.linalg.norm(coeff))
    times, controls, weights, rows = [], [], [], []
    partial = False
    total_cost = 0.0
    for j, ((a, b), mu) in enumerate(zip(schedule.slabs, schedule.mus)):
        if mu > dec.max_frequency:
            partial = True
            break
        modes = dec.retained(mu)
        ell = schedule.control_fraction * (b - a)
        window = TimeSet(((0.0, ell),), nodes_per_slab)
        gram = observability_gramian(dec, obs, window, modes=modes, quadrature="exact")
        Lam = gram.matrix
        e = default_regularization(Lam) if eps is None else float(eps)
        z_norm = float(np.linalg.norm(coeff))
        w = -np.exp(-ell * lam2[modes]) * coeff[modes]
        phi = sla.solve(Lam + e * np.eye(modes.size), w, assume_a="pos")
        basis = dec.vectors[:, modes]
        Mfull = dec.vectors.T @ (dec.weight[:, None] * ind[:, None] * basis)
        R = time_kernel(lam2, lam2[modes], window, "exact") * Mfull
        after = np.exp(-ell * lam2) * coeff + R @ phi
        block_left = float(np.linalg.norm(after[modes]))
        coeff = np.exp(-(b - a - ell) * lam2) * after
        cost = float(phi @ Lam @ phi)
        total_cost += cost
        s_loc, w_loc = window.quadrature()
        for si, wi in zip(s_loc, w_loc):
            controls.append(ind * (basis @ (np.exp(-(ell - si) * lam2[modes]) * phi)))
            times.append(a + si)
            weights.append(wi)
        row = {"slab": j, "start": a, "end": b, "window": ell, "mu": mu, "modes": int(modes.size), "state_norm": z_norm,
               "cost": cost, "block_residual": block_left / max(z_norm, 1e-300),
               "end_norm": float(np.linalg.norm(coeff))}
        if slope is not None and z_norm > 0:
            row["cost_ratio"] = cost / (math.exp(2 * slope * mu) * z_norm**2)
        rows.append(row)
    final = float(np.linalg.norm(coeff))
    rel = final / u0_norm if u0_norm > 0 else final
    n = dec.size
    return ControlResult(
        kind="lebeau-robbiano", times=np.array(times), control=np.array(controls).reshape(-1, n),
        weights=np.array(weights), cost=total_cost, terminal_residual=rel, dissipated_residual=0.0,
        success=(rel <= tol) and not partial, regularization=float("nan"), modes=dec.retained(schedule.mus[-1]),
        diagnostics={"slabs": rows, "partial": partial, "final_state_norm": final},
    )


# ------------------------------------------------------------------ impulsive


def check_not_too_fast(times: Sequence[float], tau: float, decreasing: bool = False, rtol: float = 1e-12) -> None:
    """Raise unless every gap is at least ``tau`` times the previous one."""
    t = np.asarray(times, dtype=float)
    gaps = -np.diff(t) if decreasing else np.diff(t)
    if np.any(gaps <= 0):
        raise ValueError("schedule times must be strictly monotone")
    if not 0 < tau < 1:
        raise ValueError(f"ratio tau must lie in (0, 1), got {tau}")
    for k in range(1, gaps.size):
        if gaps[k] < tau * gaps[k - 1] * (1 - rtol):
            raise ValueError(
                f"gap {k} = {gaps[k]:.6g} is below tau * previous gap = {tau * gaps[k - 1]:.6g}"
            )


@dataclass(frozen=True)
class ImpulseSchedule:
    """Times ``t_0 < ... < t_J``; impulses act at ``t_0 .. t_{J-1}``, the last time only sets a gap."""

    times: tuple
    ratio: float
    D: float

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        if len(self.times) < 2:
            raise ValueError("need at least two schedule times")
        check_not_too_fast(self.times, self.ratio)

    @property
    def count(self) -> int:
        return len(self.times) - 1

    def impulse_weights(self) -> np.ndarray:
        gaps = np.diff(self.times)
        return np.exp(self.D / gaps)


def geometric_schedule(T: float, tau: float, count: int, D: float = 1.0, first: float | None = None) -> ImpulseSchedule:
    """``t_j = T - (T - t_0) tau^j``, gaps shrinking by exactly ``tau``."""
    t0 = T / 2 if first is None else first
    times = tuple(T - (T - t0) * tau**j for j in range(count + 1))
    return ImpulseSchedule(times, tau, D)


def impulsive_control(dec: SpectralDecomposition, obs: ObservationSet, schedule: ImpulseSchedule,
                      u0: np.ndarray, v0: np.ndarray, T: float, eps: float | None = None,
                      mu: float | None = None, tol: float = 1e-6) -> ControlResult:
    """Minimise ``sum_j e^{D/(t_{j+1}-t_j)} ||f_j||^2`` subject to reaching ``e^{T Delta} v0``."""
    if schedule.times[0] <= 0 or schedule.times[-1] >= T:
        raise ValueError("impulse times must lie in (0, T)")
    modes = retained_modes(dec, T, mu)
    lam2 = dec.eigenvalues
    M = observation_matrix(dec, obs, modes)
    rho = schedule.impulse_weights()
    tj = np.array(schedule.times[:-1])
    Lam = np.zeros((modes.size, modes.size))
    for t, r in zip(tj, rho):
        d = np.exp(-(T - t) * lam2[modes])
        Lam += (d[:, None] * M * d[None, :]) / r
    Lam = 0.5 * (Lam + Lam.T)
    eps = default_regularization(Lam) if eps is None else float(eps)
    c0, cv = dec.coefficients(u0), dec.coefficients(v0)
    w = np.exp(-T * lam2[modes]) * (cv - c0)[modes]
    phi = sla.solve(Lam + eps * np.eye(modes.size), w, assume_a="pos")
    ind = obs.indicator()
    basis = dec.vectors[:, modes]
    impulses = np.stack([ind * (basis @ (np.exp(-(T - t) * lam2[modes]) * phi)) / r for t, r in zip(tj, rho)])
    uT = heat_evolve(dec, u0, T)
    for t, f in zip(tj, impulses):
        uT = uT + heat_evolve(dec, f, T - t)
    target = heat_evolve(dec, v0, T)
    norms = np.array([dec.norm(f) for f in impulses])
    res, rest = _split_residual(dec, modes, dec.coefficients(uT - target), float(np.linalg.norm(w)))
    return ControlResult(
        kind="impulsive", times=tj, control=impulses, weights=rho, cost=float(np.sum(rho * norms**2)),
        weighted_cost=float(np.sum(rho * norms)), terminal_residual=res, dissipated_residual=rest,
        success=res <= tol, regularization=eps, modes=modes,
        diagnostics={"phi": phi, "impulse_norms": norms},
    )


@dataclass
class ObsterReport:
    constants: np.ndarray
    constant: float
    spread: float
    skipped: int
    lhs: np.ndarray
    rhs: np.ndarray


def verify_obster(dec: SpectralDecomposition, obs: ObservationSet, s_times: Sequence[float], D: float,
                  trials: int, T: float, tau: float | None = None, rng=None, states=None) -> ObsterReport:
    """Empirical constant in ``||e^{T Delta} u0||^2 <= C sup_n e^{-D/(s_n - s_{n+1})} int_E |e^{s_n Delta} u0|^2 dx``.

    The ``dx`` integral uses the plain cell volume ``h^d``. Initial states
    are standard normal node vectors unless ``states`` is given; states
    with both sides zero are skipped.
    """
    s = np.asarray(s_times, dtype=float)
    if np.any(s <= 0) or np.any(s >= T):
        raise ValueError("observation times must lie in (0, T)")
    if tau is None:
        gaps = -np.diff(s)
        tau = float(np.min(gaps[1:] / gaps[:-1])) if gaps.size > 1 else 0.5
    check_not_too_fast(s, tau, decreasing=True)
    rng = np.random.default_rng(rng)
    factors = np.exp(-D / (-np.diff(s)))
    hd = dec.grid.cell_volume
    lhs_all, rhs_all, consts = [], [], []
    skipped = 0
    if states is None:
        states = (rng.standard_normal(dec.size) for _ in range(trials))
    for u0 in states:
        lhs = dec.norm(heat_evolve(dec, u0, T)) ** 2
        obs_terms = [hd * float(np.sum(heat_evolve(dec, u0, sn)[obs.mask] ** 2)) for sn in s[:-1]]
        rhs = float(np.max(factors * np.array(obs_terms)))
        if lhs == 0 and rhs == 0:
            skipped += 1
            continue
        lhs_all.append(lhs)
        rhs_all.append(rhs)
        consts.append(lhs / rhs if rhs > 0 else math.inf)
    consts = np.array(consts)
    spread = float(consts.max() / consts.min()) if consts.size else float("nan")
    return ObsterReport(consts, float(consts.max()) if consts.size else 0.0, spread, skipped,
                        np.array(lhs_all), np.array(rhs_all))


def write_control_field_csv(result: ControlResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "node", "value"])
        for t, f in zip(result.times, result.control):
            for node in np.flatnonzero(f):
                w.writerow([repr(float(t)), int(node), repr(float(f[node]))])
