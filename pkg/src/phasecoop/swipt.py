"""Power-splitting SWIPT receivers of the IoT network.

A fraction ``phi_k`` of the received power is harvested and ``1 - phi_k`` goes
to the decoder.  Noise added after the splitter and noise power collected by
the harvester are ignored, so ``phi`` scales signal and interference alike.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from phasecoop.beamforming import InfeasibleError, allocate_powers
from phasecoop.metrics import cross_gains, energy_efficiency, radiated_power, rates

FEAS_RTOL = 1e-9


class InfeasibleDeviceError(ValueError):
    def __init__(self, devices):
        self.devices = list(devices)
        super().__init__(f"no feasible splitting ratio for device(s) {self.devices}")


@dataclass(frozen=True)
class PsCoefficients:
    phi: np.ndarray
    feasible: np.ndarray  # per device

    @property
    def all_feasible(self) -> bool:
        return bool(np.all(self.feasible))


def swipt_sinr(F, W, phi, sigma2) -> np.ndarray:
    """``(1-phi_k) S_k / ((1-phi_k) I_k + sigma_k^2)`` per device."""
    G = cross_gains(F, W)
    phi = np.broadcast_to(np.asarray(phi, dtype=float), (G.shape[0],))
    s = np.diag(G)
    interf = G.sum(axis=1) - s
    keep = 1.0 - phi
    return keep * s / (keep * interf + sigma2)


def optimize_ps(F, W, gamma_min: float, sigma2, eps: float, strict: bool = False) -> PsCoefficients:
    """Largest harvesting ratio that keeps every decoder at the SINR target.

    ``phi_k = 1 - gamma sigma^2 / (S_k - gamma I_k) - eps``.  Devices whose
    interference-corrected signal cannot beat ``gamma sigma^2`` (or whose
    ratio would not be positive) get ``phi = 0`` and are marked infeasible;
    with ``strict`` an :class:`InfeasibleDeviceError` is raised instead.
    """
    G = cross_gains(F, W)
    K = G.shape[0]
    s2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (K,))
    s = np.diag(G)
    margin = s - gamma_min * (G.sum(axis=1) - s)
    ok = margin > gamma_min * s2
    phi = np.zeros(K)
    phi[ok] = 1.0 - gamma_min * s2[ok] / margin[ok] - eps
    ok &= (phi > 0) & (phi < 1)
    phi[~ok] = 0.0
    if strict and not np.all(ok):
        raise InfeasibleDeviceError(np.flatnonzero(~ok))
    return PsCoefficients(phi=phi, feasible=ok)


def harvested_energy(F, W, phi, mu) -> np.ndarray:
    """``phi_k mu_k sum_j |f_k^H w_j|^2``."""
    G = cross_gains(F, W)
    return np.asarray(phi, dtype=float) * np.asarray(mu, dtype=float) * G.sum(axis=1)


def inet_ee(sum_rate: float, W, circuit_power: float, eta: float, bandwidth: float = 1.0) -> float:
    """``sum R / ((1/eta) sum ||w_k||^2 + P_C)``, times ``bandwidth`` when given."""
    if not 0.0 < eta <= 1.0:
        raise ValueError("amplifier efficiency must lie in (0, 1]")
    return energy_efficiency(sum_rate, radiated_power(W), circuit_power, eta, bandwidth)


@dataclass
class SwiptReport:
    sinr_id: np.ndarray
    rates: np.ndarray
    sum_rate: float
    harvested: np.ndarray
    ee: float
    phi: np.ndarray
    device_feasible: np.ndarray
    feasible: dict = field(default_factory=dict)
    w: np.ndarray | None = None

    @property
    def all_feasible(self) -> bool:
        return all(self.feasible.values())


def evaluate_swipt(F, W, phi, device_ok, gamma_min, sigma2, mu, eh_min, budget, circuit, eta,
                   bandwidth: float = 1.0, phases_ok: bool = True) -> SwiptReport:
    """Metrics and constraint flags for given beams and splitting ratios.

    Devices flagged infeasible do not contribute to the sum rate.
    """
    K = F.shape[1]
    sinr_id = swipt_sinr(F, W, phi, sigma2)
    r = rates(sinr_id)
    ok = np.asarray(device_ok, dtype=bool)
    sum_rate = float(r[ok].sum())
    harvested = harvested_energy(F, W, phi, mu)
    flags = {
        "sinr": bool(np.all(sinr_id[ok] >= gamma_min * (1 - FEAS_RTOL))) and bool(np.all(ok)),
        "power": radiated_power(W) <= budget * (1 + FEAS_RTOL),
        "eh": bool(np.all(harvested >= np.broadcast_to(eh_min, (K,)) * (1 - FEAS_RTOL))),
        "unit_modulus": bool(phases_ok),
        "ps_range": bool(np.all((phi > 0) & (phi < 1))),
    }
    return SwiptReport(sinr_id=sinr_id, rates=r, sum_rate=sum_rate, harvested=harvested,
                       ee=inet_ee(sum_rate, W, circuit, eta, bandwidth), phi=np.asarray(phi, dtype=float),
                       device_feasible=ok, feasible=flags, w=W)


def eh_aware_scaling(F, directions, gamma_min: float, sigma2, mu: float, eh_min: float, eps: float):
    """Beams for fixed directions that meet SINR and harvesting targets at least power.

    The SINR-equality powers ``p0`` are scaled by a common ``t``.  Splitting at
    the closed-form ratio then leaves exactly ``1/t + eps`` of the power to the
    decoder, and device k harvests ``((1 - eps) t - 1) mu R0_k`` with ``R0_k``
    its received power at ``t = 1``.  The smallest admissible ``t`` follows in
    closed form.  Returns ``(W, t)``; raises :class:`InfeasibleError` when the
    SINR targets are unreachable with these directions.
    """
    p0 = allocate_powers(F, directions, gamma_min, sigma2)
    r0 = cross_gains(F, directions) @ p0
    t = float(np.max((1.0 + eh_min / (mu * r0)) / (1.0 - eps))) if mu > 0 else np.inf
    if not np.isfinite(t):
        raise InfeasibleError("harvesting target unreachable")
    # guard against round-off so the targets hold after splitting
    t *= 1.0 + 1e-12
    W = directions * np.sqrt(t * p0)[None, :]
    return W, t
