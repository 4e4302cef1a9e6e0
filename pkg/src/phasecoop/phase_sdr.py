"""Phase optimisation by semidefinite relaxation.

For fixed beams the received amplitude of beam i at user k is
``h_k^H Theta G w_i + g_k^H w_i = v^H a_ik + b_ik`` with ``v = conj(nu)``,
``a_ik = conj(h_k) * (G w_i)`` and ``b_ik = g_k^H w_i``.  Appending a unit
entry, ``vbar = [v; 1]``, every squared amplitude becomes the quadratic form
``vbar^H X_ik vbar + |b_ik|^2``.  The relaxation replaces ``vbar vbar^H`` by a
unit-diagonal PSD matrix and maximises the sum of per-user SINR slacks
(expressed in units of the noise power).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from phasecoop.channel import PhaseShifts
from phasecoop.sdp import SdpError, solve_sdp_standard

ELASTIC_PENALTY = 1e4
INFEASIBLE_TOL = 1e-6


@dataclass(frozen=True)
class LiftedInstance:
    a: np.ndarray  # (K, K, N), a[i, k] couples beam i to user k
    b: np.ndarray  # (K, K)
    gamma_min: float
    sigma2: np.ndarray  # (K,)

    @property
    def k(self) -> int:
        return self.b.shape[0]

    @property
    def n(self) -> int:
        return self.a.shape[2]

    @property
    def b_abs2(self) -> np.ndarray:
        return np.abs(self.b) ** 2

    def x_mat(self, i: int, k: int) -> np.ndarray:
        a = self.a[i, k]
        b = self.b[i, k]
        n = a.size
        X = np.zeros((n + 1, n + 1), dtype=complex)
        X[:n, :n] = np.outer(a, a.conj())
        X[:n, n] = a * np.conj(b)
        X[n, :n] = b * a.conj()
        return X

    @property
    def x_mats(self) -> np.ndarray:
        K = self.k
        return np.array([[self.x_mat(i, k) for k in range(K)] for i in range(K)])

    def constraint_data(self, gamma: float | None = None):
        """Per-user ``(C_k, d_k)``: slack ``beta_k <= <C_k, V> + d_k`` in noise units."""
        g = self.gamma_min if gamma is None else gamma
        K = self.k
        X = self.x_mats
        b2 = self.b_abs2
        C = np.empty((K, self.n + 1, self.n + 1), dtype=complex)
        d = np.empty(K)
        for k in range(K):
            others = [i for i in range(K) if i != k]
            C[k] = (X[k, k] - g * X[others, k].sum(axis=0)) / self.sigma2[k]
            d[k] = (b2[k, k] - g * b2[others, k].sum() - g * self.sigma2[k]) / self.sigma2[k]
        return C, d

    def amplitudes(self, v) -> np.ndarray:
        """``v^H a_ik + b_ik`` for one (N,) or a batch (N, D) of vectors; shape (K, K[, D])."""
        v = np.asarray(v, dtype=complex)
        K, N = self.k, self.n
        flat = self.a.reshape(K * K, N) @ v.conj()
        if v.ndim == 1:
            return flat.reshape(K, K) + self.b
        return flat.reshape(K, K, -1) + self.b[:, :, None]

    def margins(self, v, gamma: float | None = None) -> np.ndarray:
        """Per-user SINR slack in noise units, ``(S_k - gamma (I_k + sigma_k^2)) / sigma_k^2``."""
        g = self.gamma_min if gamma is None else gamma
        p = np.abs(self.amplitudes(v)) ** 2
        idx = np.arange(self.k)
        sig = p[idx, idx]
        interf = p.sum(axis=0) - sig
        s2 = self.sigma2 if p.ndim == 2 else self.sigma2[:, None]
        return (sig - g * (interf + s2)) / s2


def lift(h_rows, g_mat, g_dir_rows, W, gamma_min: float, sigma2) -> LiftedInstance:
    h_rows = np.atleast_2d(np.asarray(h_rows, dtype=complex))
    g_mat = np.atleast_2d(np.asarray(g_mat, dtype=complex))
    g_dir_rows = np.atleast_2d(np.asarray(g_dir_rows, dtype=complex))
    W = np.atleast_2d(np.asarray(W, dtype=complex))
    K = h_rows.shape[0]
    if W.shape[1] != K or g_dir_rows.shape[0] != K or g_mat.shape[0] != h_rows.shape[1] \
            or g_mat.shape[1] != W.shape[0]:
        raise ValueError("inconsistent dimensions")
    GW = g_mat @ W  # (N, K): column i is G w_i
    a = h_rows.conj()[None, :, :] * GW.T[:, None, :]  # a[i, k, n]
    b = (g_dir_rows.conj() @ W).T  # b[i, k] = g_k^H w_i
    s2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (K,)).copy()
    return LiftedInstance(a=a, b=b, gamma_min=float(gamma_min), sigma2=s2)


@dataclass(frozen=True)
class SdpSolution:
    v: np.ndarray  # (N+1, N+1) relaxed matrix
    slack: np.ndarray  # beta_k in noise units
    objective: float
    gamma_used: float
    infeasible_at_target: bool
    iterations: int
    residuals: tuple


def _solve_once(inst: LiftedInstance, gamma: float, tol: float, max_iter: int):
    C, d = inst.constraint_data(gamma)
    K, n = inst.k, inst.n + 1
    scale = max(np.abs(C).max(initial=0.0), np.abs(d).max(initial=0.0))
    rho = 1.0 / scale if scale > 0 else 1.0
    B = np.hstack([-np.eye(K), np.eye(K)])
    c = np.concatenate([-np.ones(K), ELASTIC_PENALTY * np.ones(K)])
    res = solve_sdp_standard(np.zeros((n, n)), c, np.ones(n), rho * C, B, -rho * d,
                             tol=tol, max_iter=max_iter)
    return res, rho


def solve_sdp(inst: LiftedInstance, tol: float = 1e-8, max_iter: int = 100,
              max_relax: int = 40) -> SdpSolution:
    """Maximise the summed SINR slack over unit-diagonal PSD matrices.

    Slacks are kept non-negative.  Violations are absorbed by heavily
    penalised elastic variables; when they are needed the target SINR is
    halved (finally set to zero) and the result is flagged.
    """
    gamma = inst.gamma_min
    for attempt in range(max_relax + 1):
        res, rho = _solve_once(inst, gamma, tol, max_iter)
        if not res.converged and max(res.residuals) > 1e-6:
            raise SdpError(f"interior point did not converge (residuals {res.residuals})")
        K = inst.k
        s, u = res.x[:K], res.x[K:]
        if np.all(u <= INFEASIBLE_TOL) or gamma == 0.0:
            beta = np.maximum(s, 0.0) / rho
            return SdpSolution(v=res.X, slack=beta, objective=float(beta.sum()), gamma_used=gamma,
                               infeasible_at_target=attempt > 0, iterations=res.iterations,
                               residuals=res.residuals)
        gamma = gamma / 2.0 if attempt < max_relax - 1 else 0.0
    raise SdpError("unreachable")


def _project(vbar: np.ndarray) -> np.ndarray:
    ratio = vbar[:-1] / vbar[-1]
    return np.exp(1j * np.angle(ratio))


def gaussian_randomize(sol: SdpSolution, inst: LiftedInstance, count: int = 10000,
                       rng: np.random.Generator | None = None, chunk: int = 2000) -> PhaseShifts:
    """Recover unit-modulus phases from the relaxed matrix.

    Draws ``U Lambda^{1/2} r`` with standard complex Gaussian ``r``, normalises by
    the last entry and keeps the phase.  Draws meeting every SINR target are
    preferred and ranked by summed slack; otherwise the largest worst-user slack
    wins.  The first best draw is kept.
    """
    rng = np.random.default_rng() if rng is None else rng
    lam, U = np.linalg.eigh(sol.v)
    root = U * np.sqrt(np.clip(lam, 0.0, None))[None, :]
    n = root.shape[0]
    best_feas = (-np.inf, None)
    best_any = (-np.inf, None)
    done = 0
    while done < count:
        m = min(chunk, count - done)
        r = (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))) / np.sqrt(2.0)
        vbar = root @ r
        vbar[-1, np.abs(vbar[-1]) == 0] = 1.0
        V = np.exp(1j * np.angle(vbar[:-1] / vbar[-1][None, :]))
        mg = inst.margins(V)
        total = mg.sum(axis=0)
        worst = mg.min(axis=0)
        feas = worst >= 0
        if np.any(feas):
            j = int(np.argmax(np.where(feas, total, -np.inf)))
            if total[j] > best_feas[0]:
                best_feas = (total[j], V[:, j])
        j = int(np.argmax(worst))
        if worst[j] > best_any[0]:
            best_any = (worst[j], V[:, j])
        done += m
    v = best_feas[1] if best_feas[1] is not None else best_any[1]
    return PhaseShifts(np.conj(v))


def sdr_phases(inst: LiftedInstance, count: int = 10000, rng=None) -> tuple[PhaseShifts, SdpSolution]:
    sol = solve_sdp(inst)
    return gaussian_randomize(sol, inst, count, rng), sol


def write_spectrum(sol: SdpSolution, path) -> None:
    """Eigenvalues of the relaxed matrix (descending) for rank inspection."""
    lam = np.linalg.eigvalsh(sol.v)[::-1]
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "eigenvalue", "fraction"])
            tot = lam.sum()
            for i, x in enumerate(lam):
                w.writerow([i, repr(float(x)), repr(float(x / tot)) if tot else "nan"])
    except OSError as exc:
        raise OSError(f"cannot write spectrum to {path}: {exc}") from exc
