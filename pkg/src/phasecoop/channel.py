"""Channel synthesis and effective-channel composition.

Conventions
-----------
* ``PhaseShifts.nu`` holds the IRS reflection coefficients ``e^{j theta_n}``,
  i.e. the diagonal of Theta.
* Receiver-side vectors ``h`` are stored so that the reflected channel of a
  receiver is ``h^H Theta G``; direct vectors ``g`` so that the direct
  channel is ``g^H``.  The effective channel ``f`` therefore satisfies
  ``f^H = h^H diag(nu) G + g^H``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from phasecoop.scenario import Scenario, TrialStreams, place_receivers


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class PhaseShifts:
    nu: np.ndarray

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=complex).ravel()
        if not np.allclose(np.abs(nu), 1.0, atol=1e-9):
            raise ValueError("IRS reflection coefficients must be unit modulus")
        object.__setattr__(self, "nu", nu)

    @classmethod
    def from_angles(cls, theta) -> "PhaseShifts":
        return cls(np.exp(1j * np.asarray(theta, dtype=float)))

    @classmethod
    def ones(cls, n: int) -> "PhaseShifts":
        return cls(np.ones(n, dtype=complex))

    @classmethod
    def project(cls, x) -> "PhaseShifts":
        """Nearest unit-modulus vector; zero entries map to 1."""
        x = np.asarray(x, dtype=complex)
        mag = np.abs(x)
        out = np.ones_like(x)
        nz = mag > 0
        out[nz] = x[nz] / mag[nz]
        return cls(out)

    @property
    def theta(self) -> np.ndarray:
        t = np.mod(np.angle(self.nu), 2.0 * np.pi)
        # mod of a tiny negative angle rounds up to exactly 2 pi
        t[t >= 2.0 * np.pi] = 0.0
        return t

    @property
    def v(self) -> np.ndarray:
        """conj(nu): the vector used by the quadratic forms (h^H Theta G w = v^H a)."""
        return self.nu.conj()

    @property
    def n(self) -> int:
        return self.nu.size

    def quantize(self, bits: int) -> "PhaseShifts":
        """Round every phase to the nearest of 2**bits uniform levels."""
        if bits < 1:
            raise ValueError("bits must be >= 1")
        step = 2.0 * np.pi / (1 << bits)
        return PhaseShifts.from_angles(np.round(self.theta / step) * step)


@dataclass(frozen=True)
class ChannelRealization:
    g_r: np.ndarray  # (N, M_U)   AP_U -> IRS
    g_d_mat: np.ndarray  # (N, M_I)  AP_I -> IRS
    h_r_users: np.ndarray  # (K_I, N)   IRS -> R_k
    h_r_devices: np.ndarray  # (K_EI, N) IRS -> D_k
    g_dir_users: np.ndarray  # (K_I, M_U) AP_U -> R_k
    g_dir_devices: np.ndarray  # (K_EI, M_I) AP_I -> D_k

    def without_irs(self) -> "ChannelRealization":
        return replace(self, h_r_users=np.zeros_like(self.h_r_users),
                       h_r_devices=np.zeros_like(self.h_r_devices))

    def unet_channels(self, phases: PhaseShifts) -> np.ndarray:
        return effective_channels(self.h_r_users, phases, self.g_r, self.g_dir_users)

    def inet_channels(self, phases: PhaseShifts) -> np.ndarray:
        return effective_channels(self.h_r_devices, phases, self.g_d_mat, self.g_dir_devices)

    def save(self, path) -> None:
        write_matrices(path, {name: getattr(self, name) for name in _REALIZATION_FIELDS})

    @classmethod
    def load(cls, path) -> "ChannelRealization":
        mats = read_matrices(path)
        return cls(**{name: mats[name] for name in _REALIZATION_FIELDS})


_REALIZATION_FIELDS = ("g_r", "g_d_mat", "h_r_users", "h_r_devices", "g_dir_users", "g_dir_devices")


def path_loss(distance, exponent: float, c0: float, d0: float = 1.0):
    """Distance-dependent power gain ``c0 * (d / d0) ** -exponent``."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    out = c0 * (d / d0) ** (-exponent)
    return float(out) if out.ndim == 0 else out


def ula_steering(n: int, direction, axis) -> np.ndarray:
    """Half-wavelength ULA response along ``axis`` for a plane wave travelling along ``direction``."""
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    cos_psi = float(np.dot(direction, np.asarray(axis, dtype=float)))
    return np.exp(1j * np.pi * np.arange(n) * cos_psi)


# array orientations: AP arrays along y, IRS along x
_AP_AXIS = (0.0, 1.0, 0.0)
_IRS_AXIS = (1.0, 0.0, 0.0)


def cn(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-variance circularly-symmetric Gaussian samples.

    Real and imaginary parts are interleaved in the innermost axis so that a
    longer draw from the same stream extends a shorter one element-wise.
    """
    z = rng.standard_normal((*np.atleast_1d(shape), 2))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)


def rician_weights(kappa: float) -> tuple[float, float]:
    if np.isinf(kappa):
        return 1.0, 0.0
    return float(np.sqrt(kappa / (1.0 + kappa))), float(np.sqrt(1.0 / (1.0 + kappa)))


def rician_link(rng, los: np.ndarray, kappa: float, gain: float) -> np.ndarray:
    w_los, w_nlos = rician_weights(kappa)
    out = w_los * los
    if w_nlos > 0:
        out = out + w_nlos * cn(rng, los.shape)
    return np.sqrt(gain) * out


def ap_irs_link(s: Scenario, m: int, rng: np.random.Generator) -> np.ndarray:
    ap = np.asarray(s.ap_pos, dtype=float)
    irs = np.asarray(s.irs_pos, dtype=float)
    d = np.linalg.norm(irs - ap)
    los = np.outer(ula_steering(s.n_irs, ap - irs, _IRS_AXIS),
                   ula_steering(m, irs - ap, _AP_AXIS).conj())
    return rician_link(rng, los, s.kappa, path_loss(d, s.pl_ap_irs, s.c0, s.d0))


def draw_channels(s: Scenario, users: np.ndarray, devices: np.ndarray,
                  streams: TrialStreams) -> ChannelRealization:
    """One realisation of every link of both networks.

    AP-IRS links are Rician, IRS-receiver links Rician with their own factor
    (Rayleigh by default) and direct links complex Gaussian, each scaled by
    its distance-dependent path loss.
    """
    irs = np.asarray(s.irs_pos, dtype=float)
    ap = np.asarray(s.ap_pos, dtype=float)
    g_r = ap_irs_link(s, s.m_u, streams.get("g_r"))
    g_d = ap_irs_link(s, s.m_i, streams.get("g_d"))

    def reflected(points, name):
        rows = []
        for k, p in enumerate(points):
            gain = path_loss(np.linalg.norm(p - irs), s.pl_irs_rx, s.c0, s.d0)
            los = ula_steering(s.n_irs, p - irs, _IRS_AXIS)
            rows.append(rician_link(streams.get(name, k), los, s.rx_kappa, gain))
        return np.array(rows).reshape(len(points), s.n_irs)

    def direct(points, m, name):
        rows = []
        for k, p in enumerate(points):
            gain = path_loss(np.linalg.norm(p - ap), s.pl_ap_rx, s.c0, s.d0)
            rows.append(np.sqrt(gain) * cn(streams.get(name, k), m))
        return np.array(rows).reshape(len(points), m)

    return ChannelRealization(
        g_r=g_r,
        g_d_mat=g_d,
        h_r_users=reflected(users, "h_users"),
        h_r_devices=reflected(devices, "h_devices"),
        g_dir_users=direct(users, s.m_u, "dir_users"),
        g_dir_devices=direct(devices, s.m_i, "dir_devices"),
    )


def draw_trial(s: Scenario, trial: int) -> tuple[ChannelRealization, TrialStreams]:
    """Receiver drop plus channel draw for trial ``trial`` of ``s.seed``."""
    streams = TrialStreams(s.seed, trial)
    users = place_receivers(s, streams.get("users"), "users")
    devices = place_receivers(s, streams.get("devices"), "devices")
    return draw_channels(s, users, devices, streams), streams


def _as_nu(nu) -> np.ndarray:
    return nu.nu if isinstance(nu, PhaseShifts) else np.asarray(nu, dtype=complex).ravel()


def effective_channel(h_r, nu, g_mat, g_dir) -> np.ndarray:
    """``f`` with ``f^H = h_r^H diag(nu) G + g_dir^H``."""
    h_r = np.asarray(h_r, dtype=complex).ravel()
    g_mat = np.atleast_2d(np.asarray(g_mat, dtype=complex))
    g_dir = np.asarray(g_dir, dtype=complex).ravel()
    nu = _as_nu(nu)
    n, m = g_mat.shape
    if h_r.size != n or nu.size != n or g_dir.size != m:
        raise DimensionError(
            f"inconsistent dimensions: h {h_r.size}, nu {nu.size}, G {g_mat.shape}, g_dir {g_dir.size}")
    return g_mat.conj().T @ (nu.conj() * h_r) + g_dir


def effective_channels(h_rows, nu, g_mat, g_dir_rows) -> np.ndarray:
    """Stacked effective channels, shape (M, K), column k is f_k."""
    h_rows = np.atleast_2d(np.asarray(h_rows, dtype=complex))
    g_dir_rows = np.atleast_2d(np.asarray(g_dir_rows, dtype=complex))
    g_mat = np.atleast_2d(np.asarray(g_mat, dtype=complex))
    nu = _as_nu(nu)
    n, m = g_mat.shape
    if h_rows.shape[1] != n or nu.size != n or g_dir_rows.shape[1] != m \
            or h_rows.shape[0] != g_dir_rows.shape[0]:
        raise DimensionError("inconsistent channel dimensions")
    return g_mat.conj().T @ (nu.conj()[:, None] * h_rows.T) + g_dir_rows.T


# ---------------------------------------------------------------------------
# portable matrix file: ASCII header lines + little-endian float64 payload

_MAGIC = b"PCMAT 1\n"


def write_matrices(path, mats: dict) -> None:
    """Write named complex matrices.

    Layout: the magic line, then per matrix a line ``name rows cols\\n``
    followed by rows*cols (re, im) pairs of little-endian doubles, row-major.
    """
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        for name, a in mats.items():
            a = np.asarray(a, dtype=complex)
            if a.ndim == 1:
                a = a[None, :]
            if a.ndim != 2 or " " in name:
                raise ValueError(f"cannot serialise {name!r} with shape {a.shape}")
            fh.write(f"{name} {a.shape[0]} {a.shape[1]}\n".encode())
            fh.write(np.ascontiguousarray(a, dtype="<c16").tobytes())


def read_matrices(path) -> dict:
    out = {}
    with open(path, "rb") as fh:
        if fh.readline() != _MAGIC:
            raise ValueError(f"{path}: not a matrix file")
        while True:
            line = fh.readline()
            if not line:
                break
            name, rows, cols = line.decode().split()
            rows, cols = int(rows), int(cols)
            buf = fh.read(rows * cols * 16)
            if len(buf) != rows * cols * 16:
                raise ValueError(f"{path}: truncated payload for {name}")
            vals = struct.unpack(f"<{2 * rows * cols}d", buf)
            arr = np.array(vals[0::2]) + 1j * np.array(vals[1::2])
            out[name] = arr.reshape(rows, cols)
    return out
