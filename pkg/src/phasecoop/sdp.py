"""Small dense complex SDP solver (primal-dual interior point).

Problem class, with ``X`` Hermitian PSD and ``x`` a non-negative vector::

    minimise   <C0, X> + c^T x
    subject to diag(X) = dvec
               <A_k, X> + (B x)_k = e_k      k = 1..K

Dual::

    maximise   dvec^T yd + e^T ye
    subject to Z = C0 - diag(yd) - sum_k ye_k A_k  PSD,   z = c - B^T ye >= 0

The search direction is the HKM direction with a Mehrotra predictor-corrector.
The unit-diagonal rows are handled in closed form when assembling the Schur
complement, so one iteration costs O(K n^3 + (n + K)^3).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla


class SdpError(RuntimeError):
    pass


@dataclass
class SdpResult:
    X: np.ndarray
    x: np.ndarray
    yd: np.ndarray
    ye: np.ndarray
    Z: np.ndarray
    z: np.ndarray
    primal_obj: float
    dual_obj: float
    iterations: int
    converged: bool
    residuals: tuple


def _inner(A, B) -> float:
    """Re Tr(A^H B) for Hermitian A."""
    return float(np.real(np.vdot(A, B)))


def _herm(M):
    return 0.5 * (M + M.conj().T)


def _inv_chol(X):
    """``L^{-1}`` for the Cholesky factor of X, or None when X is not positive definite."""
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return None
    return sla.solve_triangular(L, np.eye(X.shape[0]), lower=True, check_finite=False)


def _max_step_psd(Li, dX) -> float:
    """Largest alpha with X + alpha dX PSD, given ``Li`` from :func:`_inv_chol` of X."""
    if Li is None:
        return 0.0
    lmin = np.linalg.eigvalsh(_herm(Li @ dX @ Li.conj().T))[0]
    return np.inf if lmin >= 0 else -1.0 / lmin


def _max_step_vec(x, dx) -> float:
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


def solve_sdp_standard(C0, c, dvec, A, B, e, tol: float = 1e-8, max_iter: int = 100,
                       step_factor: float = 0.95) -> SdpResult:
    C0 = np.asarray(C0, dtype=complex)
    n = C0.shape[0]
    A = np.asarray(A, dtype=complex).reshape(-1, n, n)
    K = A.shape[0]
    c = np.asarray(c, dtype=float).ravel()
    p = c.size
    B = np.asarray(B, dtype=float).reshape(K, p)
    dvec = np.asarray(dvec, dtype=float)
    e = np.asarray(e, dtype=float)

    scale = max(1.0, np.abs(C0).max(initial=0.0), np.abs(A).max(initial=0.0), np.abs(c).max(initial=0.0))
    X = np.eye(n, dtype=complex) * max(1.0, dvec.max())
    x = np.ones(p)
    Z = np.eye(n, dtype=complex) * scale
    z = np.ones(p) * scale
    yd = np.zeros(n)
    ye = np.zeros(K)
    nb = 1.0 + max(np.linalg.norm(dvec), np.linalg.norm(e))
    nc = 1.0 + max(np.linalg.norm(C0), np.linalg.norm(c))

    Af = A.reshape(K, n * n)

    def op_A(M):  # constraint map applied to a (not necessarily Hermitian) matrix
        return np.concatenate([np.real(np.diag(M)), np.real(Af @ M.T.reshape(-1))])

    def comb(w):  # sum_k w_k A_k
        return (w @ Af).reshape(n, n)

    converged = False
    res = (np.inf, np.inf, np.inf)
    it = 0
    for it in range(1, max_iter + 1):
        Adot = op_A(X)
        r_p = np.concatenate([dvec, e]) - Adot - np.concatenate([np.zeros(n), B @ x])
        R_d = C0 - np.diag(yd) - comb(ye) - Z
        r_d = c - B.T @ ye - z
        pobj = _inner(C0, X) + c @ x
        dobj = dvec @ yd + e @ ye
        gap = _inner(X, Z) + x @ z
        res = (np.linalg.norm(r_p) / nb, max(np.linalg.norm(R_d), np.linalg.norm(r_d)) / nc,
               abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj)))
        if max(res) < tol:
            converged = True
            break
        if not (np.isfinite(pobj) and np.isfinite(dobj)) or abs(dobj) > 1e14 or abs(pobj) > 1e14:
            break
        mu = gap / (n + p)

        try:
            Zi = np.linalg.inv(Z)
        except np.linalg.LinAlgError:
            break
        Zi = _herm(Zi)
        P = (X @ A) @ Zi  # X A_k Z^-1
        M = np.empty((n + K, n + K))
        M[:n, :n] = np.real(X * Zi.T)
        M[:n, n:] = np.real(np.diagonal(P, axis1=1, axis2=2)).T
        M[n:, :n] = M[:n, n:].T
        M[n:, n:] = np.real(Af @ P.transpose(0, 2, 1).reshape(K, n * n).T) + (B * (x / z)) @ B.T
        M = 0.5 * (M + M.T)
        try:
            cho = sla.cho_factor(M, check_finite=False)
            solve = lambda rhs: sla.cho_solve(cho, rhs, check_finite=False)  # noqa: E731
        except np.linalg.LinAlgError:
            Mp = np.linalg.pinv(M)
            solve = lambda rhs: Mp @ rhs  # noqa: E731

        XRdZi = X @ R_d @ Zi
        LiX, LiZ = _inv_chol(X), _inv_chol(Z)

        def direction(target_mat, target_vec):
            Rc = target_mat @ Zi - X
            rhs = r_p - op_A(Rc - XRdZi) - np.concatenate(
                [np.zeros(n), B @ (target_vec / z - x - (x / z) * r_d)])
            dy = solve(rhs)
            dyd, dye = dy[:n], dy[n:]
            dZ = R_d - np.diag(dyd) - comb(dye)
            dX = _herm(Rc - X @ dZ @ Zi)
            dz = r_d - B.T @ dye
            dx = target_vec / z - x - (x / z) * dz
            return dX, dx, dyd, dye, dZ, dz

        # predictor
        dX, dx, dyd, dye, dZ, dz = direction(np.zeros((n, n)), np.zeros(p))
        ap = min(1.0, _max_step_psd(LiX, dX), _max_step_vec(x, dx))
        ad = min(1.0, _max_step_psd(LiZ, dZ), _max_step_vec(z, dz))
        mu_aff = (_inner(X + ap * dX, Z + ad * dZ) + (x + ap * dx) @ (z + ad * dz)) / (n + p)
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
        # corrector
        dX, dx, dyd, dye, dZ, dz = direction(sigma * mu * np.eye(n) - dX @ dZ, sigma * mu - dx * dz)
        ap = min(1.0, step_factor * _max_step_psd(LiX, dX), step_factor * _max_step_vec(x, dx))
        ad = min(1.0, step_factor * _max_step_psd(LiZ, dZ), step_factor * _max_step_vec(z, dz))
        if ap <= 0 or ad <= 0:
            break
        X = _herm(X + ap * dX)
        x = x + ap * dx
        yd = yd + ad * dyd
        ye = ye + ad * dye
        Z = _herm(Z + ad * dZ)
        z = z + ad * dz

    pobj = _inner(C0, X) + c @ x
    dobj = dvec @ yd + e @ ye
    return SdpResult(X=X, x=x, yd=yd, ye=ye, Z=Z, z=z, primal_obj=pobj, dual_obj=dobj,
                     iterations=it, converged=converged, residuals=res)
