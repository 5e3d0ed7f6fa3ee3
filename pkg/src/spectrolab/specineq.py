"""Best constants in ``||u|| <= C ||u||_omega`` on spectral subspaces, and their growth in mu."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .grid import Cell
from .operator import SpectralDecomposition
from .sets import ObservationSet

# singular values below this fraction of the largest are treated as zero
SINGULAR_FLOOR = 1e-13


@dataclass
class SpectralConstantSample:
    """One measured constant.

    For ``variant == "L2"`` the constant is the norm ratio (not squared);
    for ``"LinfSum"`` it is the squared ratio
    ``||u||^2 / sum_p sup_{omega & B(p,R)} |u|^2``, matching how the two
    inequalities are stated.
    """

    mu: float
    constant: float
    variant: str
    dim: int
    witness: np.ndarray | None = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict)


def _observed_rows(dec: SpectralDecomposition, obs: ObservationSet, modes: np.ndarray) -> np.ndarray:
    idx = obs.nodes
    return np.sqrt(dec.weight[idx])[:, None] * dec.vectors[np.ix_(idx, modes)]


def observation_matrix(dec: SpectralDecomposition, obs: ObservationSet, modes: np.ndarray) -> np.ndarray:
    """``M[j, k] = <1_omega e_j, e_k>_kappa`` on the given modes."""
    B = _observed_rows(dec, obs, modes)
    return B.T @ B


def spectral_constant_L2(dec: SpectralDecomposition, obs: ObservationSet, mu: float) -> SpectralConstantSample:
    """``C = lambda_min(M_omega)^{-1/2}``, computed as ``1/sigma_min`` of the
    kappa-weighted restriction of the retained modes to omega.

    The SVD keeps relative accuracy far below where an eigensolve of
    ``M_omega`` would round ``lambda_min`` to zero.
    """
    modes = dec.retained(mu)
    if modes.size == 0:
        raise ValueError(f"no modes with frequency <= {mu}")
    B = _observed_rows(dec, obs, modes)
    _, s, vt = sla.svd(B, full_matrices=B.shape[0] < B.shape[1])
    if s.size < modes.size:
        s = np.concatenate([s, np.zeros(modes.size - s.size)])
    smin = float(s[-1])
    smax = float(s[0]) if s.size else 0.0
    witness_c = vt[-1]
    witness = dec.synthesize(witness_c, modes)
    diag = {"sigma_min": smin, "sigma_max": smax, "lambda_min": smin**2}
    if smin <= SINGULAR_FLOOR * max(smax, 1e-300):
        return SpectralConstantSample(float(mu), math.inf, "L2", modes.size, witness, diag)
    return SpectralConstantSample(float(mu), 1.0 / smin, "L2", modes.size, witness, diag)


def l2_ratio(dec: SpectralDecomposition, obs: ObservationSet, u: np.ndarray) -> float:
    """``||u||_kappa / ||u||_{L^2(omega, kappa)}``."""
    w = dec.weight
    num = np.sum(w * u**2)
    den = np.sum(w[obs.mask] * u[obs.mask] ** 2)
    return float(np.sqrt(num / den)) if den > 0 else math.inf


def _cell_blocks(obs: ObservationSet, cells: list[Cell]) -> list[np.ndarray]:
    blocks = []
    for c in cells:
        idx = np.flatnonzero(c.inner_mask(obs.grid) & obs.mask)
        if idx.size:
            blocks.append(idx)
    return blocks


def linf_denominator(u: np.ndarray, blocks: list[np.ndarray]) -> float:
    return float(sum(np.max(u[b] ** 2) for b in blocks))


def spectral_constant_Linf(dec: SpectralDecomposition, obs: ObservationSet, mu: float, cells: list[Cell],
                           restarts: int = 8, rng=None, iterations: int = 300,
                           warm_start: list[np.ndarray] | None = None) -> SpectralConstantSample:
    """Certified lower bound on ``sup ||u||^2 / sum_p sup_{omega & B(p,R)} |u|^2`` over ran P_mu.

    The denominator ``F(c) = sum_p max_i (Phi_i c)^2`` is convex and
    2-homogeneous, so the problem is minimising a convex function on the
    unit sphere of mode coefficients. Each start runs projected subgradient
    steps interleaved with an active-set step (freeze the argmax node of
    every cell, take the smallest eigenvector of the resulting quadratic
    form). Every evaluated ``u`` gives a valid lower bound; the best is kept.
    ``warm_start`` node vectors (e.g. the witness at a smaller mu, which
    lies in the nested range) are projected and added as starts.
    """
    blocks = _cell_blocks(obs, cells)
    if not blocks:
        raise ValueError("every cell misses the observation set")
    modes = dec.retained(mu)
    if modes.size == 0:
        raise ValueError(f"no modes with frequency <= {mu}")
    rng = np.random.default_rng(rng)
    Phi = dec.vectors[:, modes]
    rows = [Phi[b] for b in blocks]

    def F(c):
        return sum(float(np.max((r @ c) ** 2)) for r in rows)

    def active_form(c):
        Q = np.zeros((modes.size, modes.size))
        grad = np.zeros(modes.size)
        for r in rows:
            vals = r @ c
            i = int(np.argmax(vals**2))
            Q += np.outer(r[i], r[i])
            grad += 2 * vals[i] * r[i]
        return Q, grad

    l2 = spectral_constant_L2(dec, obs, mu)
    starts = [dec.coefficients(l2.witness)[modes]]
    starts += [dec.coefficients(w)[modes] for w in (warm_start or [])]
    starts += [rng.standard_normal(modes.size) for _ in range(restarts)]
    best_val, best_c = math.inf, None
    history = []
    for c in starts:
        c = c / np.linalg.norm(c)
        f = F(c)
        step = 0.5
        for _ in range(iterations):
            Q, g = active_form(c)
            # active-set candidate
            _, vecs = np.linalg.eigh(Q)
            cand = vecs[:, 0]
            fc = F(cand)
            # projected subgradient candidate
            gt = g - (g @ c) * c
            cs = c - step * gt / max(np.linalg.norm(gt), 1e-300)
            cs /= np.linalg.norm(cs)
            fs = F(cs)
            if min(fc, fs) < f:
                c, f = (cand, fc) if fc < fs else (cs, fs)
            else:
                step *= 0.5
                if step < 1e-10:
                    break
        history.append(f)
        if f < best_val:
            best_val, best_c = f, c
    u = dec.synthesize(best_c, modes)
    value = dec.norm(u) ** 2 / linf_denominator(u, blocks)
    diag = {
        "restarts": restarts, "cells_used": len(blocks), "cells_empty": len(cells) - len(blocks),
        "start_denominators": history, "l2_constant": l2.constant,
    }
    return SpectralConstantSample(float(mu), float(value), "LinfSum", modes.size, u, diag)


def linf_sandwich(dec: SpectralDecomposition, obs: ObservationSet, cells: list[Cell], c_l2: float) -> tuple[float, float]:
    """Bounds on the LinfSum constant implied by the L2 one.

    With ``m`` the largest number of observed nodes in a cell and ``r`` the
    largest number of cells sharing an observed node,
    ``kappa_min h^d / r * C_L2^2 <= C_Linf <= kappa_max h^d m * C_L2^2``.
    """
    blocks = _cell_blocks(obs, cells)
    w = dec.weight[obs.mask]
    share = np.zeros(obs.grid.size, dtype=int)
    for b in blocks:
        share[b] += 1
    r = int(share.max())
    m = max(b.size for b in blocks)
    return float(w.min() / r * c_l2**2), float(w.max() * m * c_l2**2)


@dataclass
class ExponentialFit:
    log_c0: float
    slope: float
    r2: float
    heldout_gap: float
    excluded: int
    mus: np.ndarray
    constants: np.ndarray


def fit_exponential(samples: list[SpectralConstantSample]) -> ExponentialFit:
    """Affine fit of ``log C`` against ``mu`` on all but the largest ``mu``.

    ``heldout_gap`` is ``(predicted - actual) / actual`` at the largest mu.
    """
    finite = [s for s in samples if math.isfinite(s.constant) and s.constant > 0]
    excluded = len(samples) - len(finite)
    finite.sort(key=lambda s: s.mu)
    mus = np.array([s.mu for s in finite])
    if len(finite) < 4 or len(np.unique(mus)) != len(mus):
        raise ValueError("need at least 4 finite samples with distinct mu")
    logs = np.log([s.constant for s in finite])
    x, y = mus[:-1], logs[:-1]
    slope, icpt = np.polyfit(x, y, 1)
    res = y - (slope * x + icpt)
    sst = np.sum((y - y.mean()) ** 2)
    r2 = float(1 - np.sum(res**2) / sst) if sst > 0 else 1.0
    pred = math.exp(icpt + slope * mus[-1])
    gap = (pred - finite[-1].constant) / finite[-1].constant
    return ExponentialFit(float(icpt), float(slope), r2, float(gap), excluded, mus, np.exp(logs))


def running_r2(samples: list[SpectralConstantSample]) -> list[float]:
    """R^2 of the log-affine fit on the first k samples (nan for k < 3)."""
    out = []
    pts = [(s.mu, math.log(s.constant)) for s in samples if math.isfinite(s.constant)]
    for k in range(1, len(samples) + 1):
        sub = pts[:k]
        if len(sub) < 3:
            out.append(float("nan"))
            continue
        x, y = np.array(sub).T
        p = np.polyfit(x, y, 1)
        sst = np.sum((y - y.mean()) ** 2)
        out.append(float(1 - np.sum((y - np.polyval(p, x)) ** 2) / sst) if sst > 0 else 1.0)
    return out


def write_constants_csv(samples: list[SpectralConstantSample], path) -> None:
    r2 = running_r2(samples)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mu", "variant", "constant", "r2_running"])
        for s, r in zip(samples, r2):
            w.writerow([repr(s.mu), s.variant, repr(float(s.constant)), repr(r)])
