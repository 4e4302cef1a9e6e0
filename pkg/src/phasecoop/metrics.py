"""SINR, rate and energy-efficiency bookkeeping shared by both networks."""

from __future__ import annotations

import numpy as np


def cross_gains(F: np.ndarray, W: np.ndarray) -> np.ndarray:
    """``G[k, i] = |f_k^H w_i|^2`` for channel columns F (M, K) and beams W (M, K)."""
    return np.abs(F.conj().T @ W) ** 2


def sinr_from_gains(G: np.ndarray, sigma2) -> np.ndarray:
    sig = np.diag(G)
    interference = G.sum(axis=1) - sig
    return sig / (interference + np.broadcast_to(np.asarray(sigma2, dtype=float), sig.shape))


def sinr(F: np.ndarray, W: np.ndarray, sigma2) -> np.ndarray:
    """Per-receiver SINR ``|f_k^H w_k|^2 / (sum_{i!=k} |f_k^H w_i|^2 + sigma_k^2)``."""
    return sinr_from_gains(cross_gains(F, W), sigma2)


def rates(sinrs) -> np.ndarray:
    return np.log2(1.0 + np.asarray(sinrs, dtype=float))


def radiated_power(W: np.ndarray) -> float:
    return float(np.sum(np.abs(W) ** 2))


def energy_efficiency(sum_rate: float, radiated: float, circuit: float, eta: float,
                      bandwidth: float = 1.0) -> float:
    """``bandwidth * sum_rate / (radiated / eta + circuit)``.

    With ``bandwidth=1`` the value is in bit/s/Hz per watt, with the system
    bandwidth in Hz it is in bit/J.
    """
    return bandwidth * sum_rate / (radiated / eta + circuit)
