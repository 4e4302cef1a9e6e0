"""Element-wise block coordinate ascent on the summed effective channel gain.

With ``v = conj(nu)`` the effective channel of user k is
``f_k^H = v^H A_k + d_k^H`` where ``A_k = diag(conj(h_k)) G`` and ``d_k`` is the
direct link, so

    sum_k ||f_k||^2 = v^H Q v + 2 Re(v^H t) + S,
    Q = sum_k A_k A_k^H,  t = sum_k A_k d_k,  S = sum_k ||d_k||^2.

Holding all but element n fixed, the objective is affine in ``Re(conj(v_n) c_n)``
with ``c_n = sum_{l != n} Q[n, l] v_l + t_n``, maximised by ``v_n = c_n/|c_n|``.
Writing ``theta_n = -c_n`` this is ``nu_n = -conj(theta_n) / |theta_n|``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from phasecoop.channel import PhaseShifts


@dataclass(frozen=True)
class EbcdInstance:
    q: np.ndarray
    vartheta_tilde: np.ndarray
    const_s: float
    a_rk: np.ndarray  # (K, N, M)
    d: np.ndarray  # (K, M)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def objective(self, nu) -> float:
        """``v^H Q v + 2 Re(v^H t) + S``."""
        v = _v(nu)
        return float(np.real(v.conj() @ self.q @ v) + 2.0 * np.real(v.conj() @ self.vartheta_tilde)
                     + self.const_s)

    def direct_objective(self, nu) -> float:
        """``sum_k ||v^H A_k + d_k^H||^2`` evaluated term by term."""
        v = _v(nu)
        f = np.einsum("n,knm->km", v.conj(), self.a_rk) + self.d.conj()
        return float(np.sum(np.abs(f) ** 2))


def _v(nu) -> np.ndarray:
    if isinstance(nu, PhaseShifts):
        return nu.v
    return np.conj(np.asarray(nu, dtype=complex))


def build_instance(h_rows, g_mat, g_dir_rows) -> EbcdInstance:
    h_rows = np.atleast_2d(np.asarray(h_rows, dtype=complex))
    g_mat = np.atleast_2d(np.asarray(g_mat, dtype=complex))
    d = np.atleast_2d(np.asarray(g_dir_rows, dtype=complex))
    if h_rows.shape[1] != g_mat.shape[0] or d.shape[1] != g_mat.shape[1] or d.shape[0] != h_rows.shape[0]:
        raise ValueError("inconsistent dimensions")
    a_rk = h_rows.conj()[:, :, None] * g_mat[None, :, :]
    flat = a_rk.transpose(1, 0, 2).reshape(g_mat.shape[0], -1)  # (N, K*M)
    q = flat @ flat.conj().T
    q = 0.5 * (q + q.conj().T)
    t = np.einsum("knm,km->n", a_rk, d)
    s = float(np.sum(np.abs(d) ** 2))
    return EbcdInstance(q=q, vartheta_tilde=t, const_s=s, a_rk=a_rk, d=d)


def theta_n(inst: EbcdInstance, nu: PhaseShifts, n: int) -> complex:
    v = nu.v
    c = inst.q[n] @ v - inst.q[n, n] * v[n] + inst.vartheta_tilde[n]
    return -complex(c)


def update_element(inst: EbcdInstance, nu: PhaseShifts, n: int) -> PhaseShifts:
    th = theta_n(inst, nu, n)
    out = nu.nu.copy()
    out[n] = 1.0 if th == 0 else -np.conj(th) / abs(th)
    return PhaseShifts(out)


@dataclass
class EbcdResult:
    phases: PhaseShifts
    objective: float
    sweeps: int
    converged: bool
    trace: list = field(default_factory=list)


def ebcd(inst: EbcdInstance, nu0: PhaseShifts | None = None, xi: float = 1e-3,
         max_sweeps: int = 3000) -> EbcdResult:
    """Ascending-order sweeps until the relative objective change drops below ``xi``.

    ``trace`` holds the objective at the start and after every sweep.
    """
    N = inst.n
    v = np.ones(N, dtype=complex) if nu0 is None else nu0.v.copy()
    q = inst.q
    t = inst.vartheta_tilde
    qdiag = np.diag(q).copy()
    u = q @ v  # running Q v
    f = inst.objective(np.conj(v))
    trace = [f]
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        for n in range(N):
            c = u[n] - qdiag[n] * v[n] + t[n]
            mag = abs(c)
            new = c / mag if mag > 0 else 1.0 + 0j
            delta = new - v[n]
            if delta != 0:
                u += q[:, n] * delta
                v[n] = new
        f_new = inst.objective(np.conj(v))
        trace.append(f_new)
        change = abs(f_new - f) / abs(f_new) if f_new != 0 else 0.0
        f = f_new
        if change < xi:
            converged = True
            break
    # renormalise against round-off before handing out
    return EbcdResult(phases=PhaseShifts(np.conj(v / np.abs(v))), objective=f, sweeps=sweeps,
                      converged=converged, trace=trace)


def run_ebcd(inst: EbcdInstance, nu0: PhaseShifts | None = None, xi: float = 1e-3,
             max_sweeps: int = 3000) -> PhaseShifts:
    return ebcd(inst, nu0, xi, max_sweeps).phases
