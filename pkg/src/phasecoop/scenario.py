"""Experiment configuration, geometry and seeded random streams.

A :class:`Scenario` is built once from an INI-style document (sections per
network, ``key = value``) and never mutated afterwards.  Power-like keys may be
given either in watts (``p_ap_u_max``) or in dBm (``p_ap_u_max_dbm``); the
conversion to watts happens here and nowhere else.  Ratios that are naturally
quoted in dB (reference path loss, Rician factor, SINR target) stay in dB on
the dataclass and are exposed in linear scale through properties.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import os
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np


class ConfigError(ValueError):
    """Bad or inconsistent scenario configuration."""


def db_to_lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0) if np.ndim(x) else 10.0 ** (float(x) / 10.0)


def lin_to_db(x):
    return 10.0 * np.log10(x)


def dbm_to_w(x):
    return db_to_lin(x) / 1000.0


def w_to_dbm(x):
    return lin_to_db(x) + 30.0


Point = tuple[float, float, float]


@dataclass(frozen=True)
class Scenario:
    # network sizes
    m_u: int = 10
    m_i: int = 10
    k_i: int = 6
    k_ei: int = 6
    n_irs: int = 32
    # geometry (metres)
    ap_pos: Point = (0.0, 0.0, 0.0)
    irs_pos: Point = (6.0, 8.0, 0.0)
    user_center: Point = (10.0, 0.0, 0.0)
    user_radius: float = 6.0
    device_center: Point = (10.0, 0.0, 0.0)
    device_radius: float = 6.0
    # large-scale channel
    pl_ap_irs: float = 2.0
    pl_irs_rx: float = 2.5
    pl_ap_rx: float = 3.5
    c0_db: float = -30.0
    d0: float = 1.0
    rician_k_db: float = 5.0
    # Rician factor of the IRS -> receiver links; -inf gives pure Rayleigh
    rx_rician_k_db: float = float("-inf")
    noise_variance: float = 1e-11  # -80 dBm
    bandwidth: float = 1e6
    # power budgets and targets
    p_ap_u_max: float = 0.01  # 10 dBm
    p_ap_i_max: float = 0.01
    sinr_min_db: float = 4.0
    amp_efficiency: float = 0.8
    # lumped static power P_C plus optional per-IRS-element / per-terminal parts
    p_static: float = 10 ** 0.5 / 1000.0  # 5 dBm
    p_irs_element: float = 0.0
    p_terminal: float = 0.0
    # PS-SWIPT
    eh_efficiency: float = 0.8
    eh_min: float = 1e-9  # -60 dBm
    ps_slack: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        self.validate()

    # -- derived linear quantities -------------------------------------------
    @property
    def gamma_min(self) -> float:
        return db_to_lin(self.sinr_min_db)

    @property
    def kappa(self) -> float:
        return db_to_lin(self.rician_k_db)

    @property
    def rx_kappa(self) -> float:
        return db_to_lin(self.rx_rician_k_db)

    @property
    def c0(self) -> float:
        return db_to_lin(self.c0_db)

    def circuit_power(self, network: str, with_irs: bool = True) -> float:
        """Lumped circuit power P_C of one network in watts."""
        if network == "unet":
            p = self.p_static + self.k_i * self.p_terminal
            if with_irs:
                p += self.n_irs * self.p_irs_element
            return p
        if network == "inet":
            return self.p_static + self.k_ei * self.p_terminal
        raise ValueError(f"unknown network {network!r}")

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    # -- invariants -----------------------------------------------------------
    def validate(self) -> None:
        for name in ("m_u", "m_i", "k_i", "k_ei", "n_irs"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {v!r}")
        if self.m_u < self.k_i:
            raise ConfigError(
                f"m_u={self.m_u} < k_i={self.k_i}: user network cannot spatially multiplex its users")
        if self.m_i < self.k_ei:
            raise ConfigError(
                f"m_i={self.m_i} < k_ei={self.k_ei}: IoT network cannot spatially multiplex its devices")
        for name in ("noise_variance", "bandwidth", "p_ap_u_max", "p_ap_i_max", "p_static", "eh_min", "d0"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be strictly positive, got {getattr(self, name)!r}")
        for name in ("p_irs_element", "p_terminal", "user_radius", "device_radius"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)!r}")
        for name in ("pl_ap_irs", "pl_irs_rx", "pl_ap_rx"):
            if not 2.0 <= getattr(self, name) <= 6.0:
                raise ConfigError(f"{name} must lie in [2, 6], got {getattr(self, name)!r}")
        if not 0.0 < self.amp_efficiency <= 1.0:
            raise ConfigError(f"amp_efficiency must lie in (0, 1], got {self.amp_efficiency!r}")
        if not 0.0 <= self.eh_efficiency <= 1.0:
            raise ConfigError(f"eh_efficiency must lie in [0, 1], got {self.eh_efficiency!r}")
        if not 0.0 < self.ps_slack < 0.1:
            raise ConfigError(f"ps_slack must lie in (0, 0.1), got {self.ps_slack!r}")
        for name in ("ap_pos", "irs_pos", "user_center", "device_center"):
            if len(getattr(self, name)) != 3:
                raise ConfigError(f"{name} must be a 3-D point")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")

    # -- serialisation --------------------------------------------------------
    def to_document(self) -> str:
        cp = configparser.ConfigParser()
        for section, keys in _LAYOUT.items():
            cp[section] = {}
            for key in keys:
                cp[section][key] = _format(getattr(self, key))
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


# section -> field names (watts / dB / plain), also the serialisation layout
_LAYOUT = {
    "general": ["seed", "bandwidth", "noise_variance", "sinr_min_db", "amp_efficiency"],
    "geometry": ["ap_pos", "irs_pos", "n_irs"],
    "channel": ["pl_ap_irs", "pl_irs_rx", "pl_ap_rx", "c0_db", "d0", "rician_k_db",
                "rx_rician_k_db"],
    "unet": ["m_u", "k_i", "p_ap_u_max", "user_center", "user_radius", "p_irs_element"],
    "inet": ["m_i", "k_ei", "p_ap_i_max", "device_center", "device_radius",
             "eh_efficiency", "eh_min", "ps_slack"],
    "power": ["p_static", "p_terminal"],
}

_FIELDS = {f.name: f for f in dataclasses.fields(Scenario)}
# keys accepted in dBm and the watt-valued field they feed
_DBM_KEYS = {f"{name}_dbm": name for name in
             ("noise_variance", "p_ap_u_max", "p_ap_i_max", "p_static", "p_irs_element",
              "p_terminal", "eh_min")}
_ALIASES = {"p_c": "p_static", "p_c_dbm": "p_static_dbm", "kappa_db": "rician_k_db"}


def _format(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(name: str, raw: Any):
    default = _FIELDS[name].default
    try:
        if isinstance(default, tuple):
            if isinstance(raw, str):
                parts = [p for p in raw.replace("(", "").replace(")", "").replace(";", ",").split(",")
                         if p.strip()]
            else:
                parts = list(raw)
            vals = [float(p) for p in parts]
            if len(vals) == 2:
                vals.append(0.0)
            return tuple(vals)
        if isinstance(default, int) and not isinstance(default, bool):
            try:
                return int(str(raw).strip())
            except ValueError:
                val = float(raw)
                if val != int(val):
                    raise ValueError("not an integer") from None
                return int(val)
        return float(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cannot parse {name}={raw!r}: {exc}") from None


def _normalise(items: Mapping[str, Any]) -> dict:
    """Map raw key/value pairs (any units) onto Scenario field values."""
    out = {}
    for key, raw in items.items():
        key = _ALIASES.get(key.strip().lower(), key.strip().lower())
        if key in _DBM_KEYS:
            name = _DBM_KEYS[key]
            try:
                out[name] = float(dbm_to_w(float(raw)))
            except (TypeError, ValueError):
                raise ConfigError(f"cannot parse {key}={raw!r}") from None
        elif key in _FIELDS:
            out[key] = _parse_value(key, raw)
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    return out


def build_scenario(config_source=None, overrides: Mapping[str, Any] | None = None) -> Scenario:
    """Build a validated :class:`Scenario`.

    ``config_source`` may be ``None`` (defaults), a path to an INI file, the
    INI text itself, or a flat/nested mapping.  ``overrides`` (e.g. from the
    command line) take precedence over the document.
    """
    values: dict = {}
    if config_source is None:
        pass
    elif isinstance(config_source, Mapping):
        flat = {}
        for k, v in config_source.items():
            if isinstance(v, Mapping):
                flat.update(v)
            else:
                flat[k] = v
        values.update(_normalise(flat))
    else:
        text = str(config_source)
        if "\n" not in text and "=" not in text:
            if not os.path.exists(text):
                raise ConfigError(f"config file not found: {text}")
            with open(text) as fh:
                text = fh.read()
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config document: {exc}") from None
        flat = {}
        for section in cp.sections():
            flat.update(cp[section])
        values.update(_normalise(flat))
    if overrides:
        values.update(_normalise(overrides))
    try:
        return Scenario(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# randomness

_STREAMS = {
    "users": 1,
    "devices": 2,
    "g_r": 3,
    "g_d": 4,
    "h_users": 5,
    "h_devices": 6,
    "dir_users": 7,
    "dir_devices": 8,
    "sdr": 9,
    "rps": 10,
    "misc": 11,
}


@dataclass(frozen=True)
class TrialStreams:
    """Independent, named random streams for one Monte Carlo trial.

    Each stream is derived from ``(seed, trial, stream, *index)`` only, so
    trials are order independent and, e.g., the direct links of a trial do not
    change when the IRS size changes.
    """

    seed: int
    trial: int = 0

    def get(self, name: str, *index: int) -> np.random.Generator:
        key = (_STREAMS[name], *map(int, index))
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.trial), *key))
        return np.random.Generator(np.random.PCG64(ss))


def uniform_disc(center, radius: float, k: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` points uniform over a horizontal disc, shape (k, 3)."""
    center = np.asarray(center, dtype=float)
    r = radius * np.sqrt(rng.random(k))
    phi = 2.0 * np.pi * rng.random(k)
    pts = np.tile(center, (k, 1))
    pts[:, 0] += r * np.cos(phi)
    pts[:, 1] += r * np.sin(phi)
    return pts


def place_receivers(s: Scenario, rng: np.random.Generator, kind: str = "users") -> np.ndarray:
    """Drop the user-network receivers (``kind='users'``) or the IoT devices."""
    if kind == "users":
        return uniform_disc(s.user_center, s.user_radius, s.k_i, rng)
    if kind == "devices":
        return uniform_disc(s.device_center, s.device_radius, s.k_ei, rng)
    raise ValueError(f"kind must be 'users' or 'devices', got {kind!r}")
