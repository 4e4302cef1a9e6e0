"""Heuristic MISO downlink beamforming.

All routines take the stacked effective channels ``F`` of shape (M, K)
(column k is ``f_k``) and return beamformers ``W`` of the same shape.
Noise variances may be a scalar or one value per receiver.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from phasecoop.metrics import cross_gains, energy_efficiency, rates, sinr_from_gains


class BeamformingError(RuntimeError):
    """Degenerate channels or a numerical failure."""


class InfeasibleError(BeamformingError):
    """SINR targets cannot be met by any power allocation."""


SINR_RTOL = 1e-6


@dataclass(frozen=True)
class BeamformingSolution:
    w: np.ndarray
    lam: np.ndarray
    powers: np.ndarray
    scheme: str
    feasible: bool
    budget_violated: bool = False
    info: dict = field(default_factory=dict, compare=False)

    @property
    def directions(self) -> np.ndarray:
        return _normalise_columns(self.w)

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.w) ** 2))

    def with_powers(self, powers, gamma=None, F=None, sigma2=None) -> "BeamformingSolution":
        powers = np.asarray(powers, dtype=float)
        w = self.directions * np.sqrt(powers)[None, :]
        feasible = self.feasible
        if gamma is not None:
            feasible = meets_targets(F, w, gamma, sigma2)
        return replace(self, w=w, powers=powers, feasible=feasible)


def _normalise_columns(X: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=0)
    out = np.zeros_like(X)
    nz = norms > 0
    out[:, nz] = X[:, nz] / norms[nz]
    return out


def _noise(sigma2, k: int) -> np.ndarray:
    s = np.broadcast_to(np.asarray(sigma2, dtype=float), (k,)).copy()
    if np.any(s <= 0):
        raise ValueError("noise variance must be positive")
    return s


def _check(F):
    F = np.atleast_2d(np.asarray(F, dtype=complex))
    m, k = F.shape
    if k > m:
        raise BeamformingError(f"{k} receivers cannot be served by {m} antennas")
    return F


def meets_targets(F, W, gamma, sigma2, rtol: float = SINR_RTOL) -> bool:
    s = sinr_from_gains(cross_gains(F, W), sigma2)
    return bool(np.all(s >= gamma * (1.0 - rtol)))


def socp_reform_check(F, W, gamma_min: float, sigma2) -> np.ndarray:
    """Per-user second-order-cone form of the SINR constraint.

    Each beam is first rotated so that ``f_k^H w_k`` is real and non-negative,
    which leaves every SINR unchanged.
    """
    F = np.atleast_2d(np.asarray(F, dtype=complex))
    W = np.atleast_2d(np.asarray(W, dtype=complex)).copy()
    k = F.shape[1]
    s2 = _noise(sigma2, k)
    inner = F.conj().T @ W
    d = np.diag(inner)
    rot = np.ones(k, dtype=complex)
    nz = np.abs(d) > 0
    rot[nz] = np.abs(d[nz]) / d[nz]
    W = W * rot[None, :]
    inner = F.conj().T @ W
    G = np.abs(inner) ** 2
    lhs = np.real(np.diag(inner)) / np.sqrt(gamma_min * s2)
    rhs = np.sqrt((G.sum(axis=1) - np.diag(G)) / s2 + 1.0)
    return lhs >= rhs * (1.0 - 1e-12)


def _t_matrix(F, lam, s2):
    m = F.shape[0]
    return np.eye(m) + (F * (lam / s2)[None, :]) @ F.conj().T


def solve_dual_fixed_point(F, gamma_min: float, sigma2, budget: float | None = None,
                           tol: float = 1e-8, max_iter: int = 500) -> np.ndarray:
    """Duals of the minimum-power problem by fixed-point iteration.

    ``lambda_k <- gamma sigma_k^2 / ((1 + gamma) f_k^H T^{-1} f_k)`` with
    ``T = I + sum_i lambda_i / sigma_i^2 f_i f_i^H``.  At the fixed point the
    duals sum to the minimum transmit power.  ``budget`` is accepted for
    interface symmetry; the duals themselves do not depend on it.
    """
    F = _check(F)
    k = F.shape[1]
    s2 = _noise(sigma2, k)
    if np.any(np.linalg.norm(F, axis=0) == 0):
        raise BeamformingError("zero channel vector")
    lam = gamma_min * s2 / np.sum(np.abs(F) ** 2, axis=0)
    for _ in range(max_iter):
        T = _t_matrix(F, lam, s2)
        try:
            q = np.real(np.einsum("mk,mk->k", F.conj(), np.linalg.solve(T, F)))
        except np.linalg.LinAlgError as exc:
            raise BeamformingError(f"singular system in dual update: {exc}") from None
        if np.any(q <= 0) or not np.all(np.isfinite(q)):
            raise BeamformingError("dual update broke down")
        new = gamma_min * s2 / ((1.0 + gamma_min) * q)
        if np.max(np.abs(new - lam) / np.maximum(np.abs(new), 1e-300)) < tol:
            return new
        lam = new
    raise InfeasibleError(f"dual fixed point did not converge in {max_iter} iterations")


def allocate_powers(F, directions, gamma_min: float, sigma2) -> np.ndarray:
    """Powers meeting every SINR target with equality for fixed unit directions.

    Solves ``A p = sigma^2`` with ``A[k,k] = g_kk / gamma`` and
    ``A[k,i] = -g_ki`` where ``g_ki = |f_k^H wbar_i|^2``.
    """
    k = F.shape[1]
    s2 = _noise(sigma2, k)
    G = cross_gains(F, directions)
    A = -G.copy()
    A[np.diag_indices(k)] = np.diag(G) / gamma_min
    try:
        p = np.linalg.solve(A, s2)
    except np.linalg.LinAlgError:
        raise BeamformingError("singular power-allocation system") from None
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InfeasibleError("SINR targets unreachable with these directions")
    return p


def beamform_lagrangian(F, lam, gamma_min: float, sigma2) -> BeamformingSolution:
    F = _check(F)
    lam = np.asarray(lam, dtype=float)
    s2 = _noise(sigma2, F.shape[1])
    T = _t_matrix(F, lam, s2)
    dirs = _normalise_columns(np.linalg.solve(T, F))
    p = allocate_powers(F, dirs, gamma_min, s2)
    w = dirs * np.sqrt(p)[None, :]
    return BeamformingSolution(w=w, lam=lam, powers=p, scheme="LAGRANGIAN",
                               feasible=meets_targets(F, w, gamma_min, s2))


def min_power_beamforming(F, gamma_min: float, sigma2, budget: float | None = None) -> BeamformingSolution:
    """Fixed-point duals followed by the Lagrangian beamformer; flags budget excess."""
    lam = solve_dual_fixed_point(F, gamma_min, sigma2)
    sol = beamform_lagrangian(F, lam, gamma_min, sigma2)
    if budget is not None and sol.total_power > budget * (1 + 1e-9):
        sol = replace(sol, budget_violated=True)
    return sol


ZF_MAX_COND = 1e7


def zf_directions(F) -> np.ndarray:
    F = _check(F)
    cond = np.linalg.cond(F)
    if not np.isfinite(cond) or cond > ZF_MAX_COND:
        raise BeamformingError(f"channel matrix too ill-conditioned for zero forcing (cond={cond:.3g})")
    return _normalise_columns(F @ np.linalg.inv(F.conj().T @ F))


def beamform_zf(F, powers=None, gamma_min: float | None = None, sigma2=None) -> BeamformingSolution:
    """Zero-forcing beams; powers default to the SINR-equality allocation."""
    F = _check(F)
    dirs = zf_directions(F)
    if powers is None:
        if gamma_min is None or sigma2 is None:
            raise ValueError("either powers or (gamma_min, sigma2) are required")
        powers = allocate_powers(F, dirs, gamma_min, sigma2)
    powers = np.broadcast_to(np.asarray(powers, dtype=float), (F.shape[1],)).copy()
    w = dirs * np.sqrt(powers)[None, :]
    feasible = meets_targets(F, w, gamma_min, sigma2) if gamma_min is not None else True
    return BeamformingSolution(w=w, lam=np.zeros(F.shape[1]), powers=powers, scheme="ZF", feasible=feasible)


def mmse_directions(F, lam: float, sigma2: float = 1.0) -> np.ndarray:
    F = _check(F)
    if not lam > 0:
        raise ValueError("regularisation parameter must be positive")
    k = F.shape[1]
    R = np.eye(k) + (lam / sigma2) * (F.conj().T @ F)
    return _normalise_columns(F @ np.linalg.inv(R))


def beamform_mmse(F, lam: float | None = None, powers=None, gamma_min: float | None = None,
                  sigma2: float = 1.0, budget: float | None = None) -> BeamformingSolution:
    """Regularised zero forcing ``F (I + lam/sigma^2 F^H F)^{-1}`` with normalised columns.

    ``lam`` defaults to ``budget / K``.  Without explicit ``powers`` the
    SINR-equality allocation is used.
    """
    F = _check(F)
    k = F.shape[1]
    if lam is None:
        if budget is None:
            raise ValueError("either lam or budget is required")
        lam = budget / k
    dirs = mmse_directions(F, lam, sigma2)
    if powers is None:
        if gamma_min is None:
            raise ValueError("either powers or gamma_min is required")
        powers = allocate_powers(F, dirs, gamma_min, sigma2)
    powers = np.broadcast_to(np.asarray(powers, dtype=float), (k,)).copy()
    w = dirs * np.sqrt(powers)[None, :]
    feasible = meets_targets(F, w, gamma_min, sigma2) if gamma_min is not None else True
    return BeamformingSolution(w=w, lam=np.full(k, float(lam)), powers=powers, scheme="MMSE",
                               feasible=feasible)


def column_angles(A, B) -> np.ndarray:
    """Angle between corresponding columns, insensitive to a per-column phase."""
    A = _normalise_columns(np.asarray(A, dtype=complex))
    B = _normalise_columns(np.asarray(B, dtype=complex))
    c = np.abs(np.einsum("mk,mk->k", A.conj(), B))
    # sin form keeps precision for tiny angles
    s = np.linalg.norm(B - A * (np.einsum("mk,mk->k", A.conj(), B))[None, :], axis=0)
    return np.arctan2(s, c)


def mmse_line_search(F, budget: float, ee_evaluator: Callable, search_accuracy: float = 0.1,
                     sigma2: float = 1.0, span: int = 6):
    """Search the MMSE regulariser on a log10 grid around ``budget / K``.

    ``ee_evaluator(lam, directions)`` returns ``(ee, solution)``; it decides
    the powers.  A coarse pass over ``+-span`` decades (unit steps) is refined
    to ``search_accuracy`` decades around the best coarse point.  Ties go to
    the smallest regulariser.  Returns ``(lam, solution, ee)``.
    """
    F = _check(F)
    k = F.shape[1]
    if not budget > 0:
        raise ValueError("budget must be positive")
    centre = np.log10(budget / k)
    cache: dict = {}

    def score(x):
        key = round(float(x), 9)
        if key not in cache:
            lam = 10.0 ** key
            ee, sol = ee_evaluator(lam, mmse_directions(F, lam, sigma2))
            cache[key] = (ee, sol)
        return cache[key]

    def best_of(grid):
        best = None
        for x in sorted(grid):
            ee, sol = score(x)
            if best is None or ee > best[1]:
                best = (x, ee, sol)
        return best

    coarse = centre + np.arange(-span, span + 1, dtype=float)
    x0, _, _ = best_of(coarse)
    nfine = int(round(1.0 / search_accuracy))
    fine = x0 + search_accuracy * np.arange(-nfine, nfine + 1)
    x, ee, sol = best_of(np.concatenate([coarse, fine]))
    return 10.0 ** round(float(x), 9), sol, ee


def ee_power_scaling(F, sol: BeamformingSolution, sigma2, budget: float, circuit: float,
                     eta: float, bandwidth: float = 1.0):
    """Scale a minimum-power solution by a common factor to maximise EE.

    Every SINR grows with the scale, so targets stay met.  The sum rate is
    concave in the scale and the consumed power affine, so EE has a single
    stationary point; it is found as the root of the EE derivative on a
    budget-independent bracket and then clipped to ``[1, budget / P_min]``.
    A non-binding budget therefore has no influence on the result.  When the
    minimum power already exceeds the budget no scaling is applied and the
    solution is flagged.  Returns ``(ee, solution)``.
    """
    p = sol.powers
    G = cross_gains(F, sol.directions)
    s2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (F.shape[1],))
    pmin = float(p.sum())
    gp = G * p[None, :]
    sig = np.diag(gp)
    interf = gp.sum(axis=1) - sig

    def ee_at(t):
        rate = rates(sinr_from_gains(G * (t * p)[None, :], s2)).sum()
        return energy_efficiency(rate, t * pmin, circuit, eta, bandwidth)

    def slope(t):
        # sign of dEE/dt: R'(t) (t P / eta + P_C) - R(t) P / eta
        tot = t * (sig + interf) + s2
        rate = np.sum(np.log2(tot / (t * interf + s2)))
        d_rate = np.sum((sig + interf) / tot - interf / (t * interf + s2)) / np.log(2.0)
        return d_rate * (t * pmin / eta + circuit) - rate * pmin / eta

    tmax = budget / pmin if pmin > 0 else 1.0
    if tmax <= 1.0 + 1e-12:
        t = 1.0
        violated = pmin > budget * (1 + 1e-9)
    else:
        t = 1.0
        if slope(1.0) > 0:
            hi = 2.0
            while slope(hi) > 0 and hi < 1e15:
                hi *= 2.0
            t = hi if slope(hi) > 0 else brentq(slope, hi / 2.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        t = min(t, tmax)
        violated = False
    out = sol.with_powers(t * p)
    out = replace(out, budget_violated=violated)
    return ee_at(t), out
