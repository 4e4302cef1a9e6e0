"""End-to-end optimisation of both networks for one channel realisation.

The user network (U-net) alternates between heuristic beamforming at fixed
phases and a phase update at fixed beams, either by semidefinite relaxation
(AO) or by the gain-maximising coordinate ascent (LCAS).  The IoT network
(I-net) keeps the U-net phases and only designs its beams and splitting
ratios.  Baselines quantise the continuous phases (DPS), draw them at random
(RPS) or drop the surface altogether (NO_IRS).
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field

import numpy as np

from phasecoop.beamforming import (
    BeamformingError,
    BeamformingSolution,
    InfeasibleError,
    allocate_powers,
    ee_power_scaling,
    min_power_beamforming,
    mmse_directions,
    mmse_line_search,
    zf_directions,
)
from phasecoop.channel import ChannelRealization, PhaseShifts, draw_trial
from phasecoop.metrics import cross_gains, rates, sinr_from_gains
from phasecoop.phase_ebcd import build_instance, ebcd
from phasecoop.phase_sdr import gaussian_randomize, lift, solve_sdp
from phasecoop.scenario import Scenario, TrialStreams
from phasecoop.swipt import SwiptReport, eh_aware_scaling, evaluate_swipt, optimize_ps

FEAS_RTOL = 1e-9

_KINDS = ("AO_SDR", "LCAS_EBCD", "DPS", "RPS", "NO_IRS")
_BFS = ("MMSE", "ZF")


@dataclass(frozen=True)
class SchemeId:
    kind: str
    bf: str = "MMSE"
    bits: int | None = None
    base: str = "AO_SDR"  # continuous scheme quantised by DPS

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown scheme {self.kind!r}")
        if self.bf not in _BFS:
            raise ValueError(f"unknown beamforming {self.bf!r}")
        if self.kind == "DPS":
            if self.bits is None or self.bits < 1:
                raise ValueError("DPS needs bits >= 1")
            if self.base not in ("AO_SDR", "LCAS_EBCD"):
                raise ValueError("DPS quantises AO_SDR or LCAS_EBCD")

    @property
    def label(self) -> str:
        if self.kind == "DPS":
            return f"DPS{self.bits}" + ("" if self.base == "AO_SDR" else "_LCAS")
        return self.kind

    def __str__(self):
        return f"{self.label}/{self.bf}"

    @classmethod
    def parse(cls, text: str, bf: str = "MMSE") -> "SchemeId":
        """``ao``, ``lcas``, ``dps2``, ``dps2-lcas``, ``rps``, ``noirs`` (case-insensitive);
        an optional ``/zf`` or ``/mmse`` suffix overrides ``bf``."""
        t = text.strip().lower()
        if "/" in t:
            t, bf = t.split("/", 1)
        bf = bf.upper()
        aliases = {"ao": "AO_SDR", "ao_sdr": "AO_SDR", "sdr": "AO_SDR", "cps": "AO_SDR",
                   "lcas": "LCAS_EBCD", "lcas_ebcd": "LCAS_EBCD", "ebcd": "LCAS_EBCD",
                   "rps": "RPS", "noirs": "NO_IRS", "no_irs": "NO_IRS", "no-irs": "NO_IRS"}
        if t in aliases:
            return cls(aliases[t], bf)
        m = re.fullmatch(r"dps[:_]?(\d+)(?:[-_](ao|sdr|lcas|ebcd))?", t)
        if m:
            base = "LCAS_EBCD" if m.group(2) in ("lcas", "ebcd") else "AO_SDR"
            return cls("DPS", bf, bits=int(m.group(1)), base=base)
        raise ValueError(f"cannot parse scheme {text!r}")


@dataclass(frozen=True)
class Settings:
    xi: float = 1e-3
    max_outer: int = 30
    randomizations: int = 10000
    search_accuracy: float = 0.1
    ebcd_xi: float = 1e-3
    ebcd_max_sweeps: int = 3000


@dataclass
class UnetResult:
    phases: PhaseShifts
    bf: BeamformingSolution
    ee: float
    sum_rate: float
    sinr: np.ndarray
    flags: dict


@dataclass
class EEReport:
    scheme: SchemeId
    unet_ee: float
    inet_ee: float
    unet_sum_rate: float
    inet_sum_rate: float
    iterations_outer: int
    converged: bool
    trace: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    phases: PhaseShifts | None = None
    unet: UnetResult | None = None
    inet: SwiptReport | None = None
    timing: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return all(self.flags.values())


# ---------------------------------------------------------------------------
# beamforming at fixed phases

def unet_beamforming(F, s: Scenario, bf: str, settings: Settings, circuit: float) -> tuple[BeamformingSolution, tuple]:
    """Heuristic U-net beams at fixed phases.

    For every candidate direction set the SINR-equality powers are computed and
    then scaled by the common factor that maximises EE within the budget.
    Candidates meeting all targets beat budget-violating ones.
    """
    g, s2, budget = s.gamma_min, s.noise_variance, s.p_ap_u_max

    def evaluator(lam, dirs):
        try:
            p = allocate_powers(F, dirs, g, s2)
        except InfeasibleError:
            return (0, -np.inf), None
        base = BeamformingSolution(w=dirs * np.sqrt(p)[None, :], lam=np.full(F.shape[1], float(lam)),
                                   powers=p, scheme=bf, feasible=True)
        ee, sol = ee_power_scaling(F, base, s2, budget, circuit, s.amp_efficiency, s.bandwidth)
        return (1 if sol.budget_violated else 2, ee), sol

    key, sol = _search_unet(F, bf, budget, evaluator, settings, s2, g)
    return sol, key


def _search_unet(F, bf, budget, evaluator, settings, s2, g):
    best_key, best = (0, -np.inf), None
    try:
        if bf == "ZF":
            best_key, best = evaluator(0.0, zf_directions(F))
        else:
            _, best, best_key = mmse_line_search(F, budget, evaluator, settings.search_accuracy, s2)
    except BeamformingError:
        pass
    if best is None:
        try:
            sol = min_power_beamforming(F, g, s2)
            k2, b2 = evaluator(0.0, sol.directions)
            if b2 is not None:
                return k2, b2
        except BeamformingError:
            pass
        # nothing reaches the targets: spread the budget evenly, flagged infeasible
        K = F.shape[1]
        try:
            dirs = mmse_directions(F, budget / K, s2)
        except BeamformingError:
            dirs = np.zeros_like(F)
        p = np.full(K, budget / K)
        best = BeamformingSolution(w=dirs * np.sqrt(p)[None, :], lam=np.full(K, budget / K), powers=p,
                                   scheme=bf, feasible=False)
        best_key = (0, -np.inf)
    return best_key, best


def _unet_result(F, phases, sol: BeamformingSolution, s: Scenario, circuit: float) -> UnetResult:
    G = cross_gains(F, sol.w)
    sinr = sinr_from_gains(G, s.noise_variance)
    r = rates(sinr)
    ok = sinr >= s.gamma_min * (1 - FEAS_RTOL)
    sum_rate = float(r.sum())
    radiated = sol.total_power
    ee = s.bandwidth * sum_rate / (radiated / s.amp_efficiency + circuit)
    flags = {
        "unet_sinr": bool(np.all(ok)),
        "unet_power": radiated <= s.p_ap_u_max * (1 + FEAS_RTOL),
        "unet_unit_modulus": bool(np.allclose(np.abs(phases.nu), 1.0, atol=1e-9)),
    }
    return UnetResult(phases=phases, bf=sol, ee=ee, sum_rate=sum_rate, sinr=sinr, flags=flags)


def _key(u: UnetResult) -> tuple:
    level = 2 if u.flags["unet_sinr"] and u.flags["unet_power"] else (1 if u.flags["unet_sinr"] else 0)
    return level, u.ee


def solve_unet_at(phases: PhaseShifts, s: Scenario, realization: ChannelRealization, bf: str,
                  settings: Settings, with_irs: bool = True) -> UnetResult:
    F = realization.unet_channels(phases)
    circuit = s.circuit_power("unet", with_irs=with_irs)
    sol, _ = unet_beamforming(F, s, bf, settings, circuit)
    return _unet_result(F, phases, sol, s, circuit)


# ---------------------------------------------------------------------------
# I-net with phase cooperation

def phase_cooperation(unet_phases: PhaseShifts, s: Scenario, realization: ChannelRealization,
                      bf: str = "MMSE", settings: Settings | None = None) -> SwiptReport:
    """Design I-net beams and splitting ratios with the IRS fixed to ``unet_phases``.

    Each candidate direction set gets the least common power scaling that
    meets every SINR and harvesting target once the closed-form splitting
    ratio is applied; the EE-best candidate wins.
    """
    settings = settings or Settings()
    F = realization.inet_channels(unet_phases)
    g, s2, budget = s.gamma_min, s.noise_variance, s.p_ap_i_max
    circuit = s.circuit_power("inet")
    unit = bool(np.allclose(np.abs(unet_phases.nu), 1.0, atol=1e-9))

    def report_for(W):
        ps = optimize_ps(F, W, g, s2, s.ps_slack)
        return evaluate_swipt(F, W, ps.phi, ps.feasible, g, s2, s.eh_efficiency, s.eh_min, budget,
                              circuit, s.amp_efficiency, s.bandwidth, unit)

    def evaluator(lam, dirs):
        try:
            W, _ = eh_aware_scaling(F, dirs, g, s2, s.eh_efficiency, s.eh_min, s.ps_slack)
        except InfeasibleError:
            return (0, -np.inf), None
        rep = report_for(W)
        ok = rep.feasible["sinr"] and rep.feasible["eh"]
        level = (2 if rep.feasible["power"] else 1) if ok else 0
        return (level, rep.ee), rep

    best_key, best = (0, -np.inf), None
    try:
        if bf == "ZF":
            best_key, best = evaluator(0.0, zf_directions(F))
        else:
            _, best, best_key = mmse_line_search(F, budget, evaluator, settings.search_accuracy, s2)
    except BeamformingError:
        pass
    if best is None:
        try:
            sol = min_power_beamforming(F, g, s2)
            best_key, best = evaluator(0.0, sol.directions)
        except BeamformingError:
            pass
    if best is None:
        K = F.shape[1]
        try:
            dirs = mmse_directions(F, budget / K, s2)
        except BeamformingError:
            dirs = np.zeros_like(F)
        best = report_for(dirs * np.sqrt(budget / K))
    return best


# ---------------------------------------------------------------------------
# U-net phase optimisation

def _finish(scheme, u: UnetResult, s, realization, settings, iterations, converged, trace,
            timing, with_inet=True) -> EEReport:
    flags = dict(u.flags)
    inet = None
    inet_ee = inet_rate = float("nan")
    if with_inet:
        t0 = time.perf_counter()
        inet = phase_cooperation(u.phases, s, realization, scheme.bf, settings)
        timing["inet"] = time.perf_counter() - t0
        inet_ee, inet_rate = inet.ee, inet.sum_rate
        flags.update({f"inet_{k}": v for k, v in inet.feasible.items()})
    return EEReport(scheme=scheme, unet_ee=u.ee, inet_ee=inet_ee, unet_sum_rate=u.sum_rate,
                    inet_sum_rate=inet_rate, iterations_outer=iterations, converged=converged,
                    trace=list(trace), flags=flags, phases=u.phases, unet=u, inet=inet, timing=timing)


def _rel_change(new, old) -> float:
    if new == old:
        return 0.0
    if not (np.isfinite(new) and np.isfinite(old)):
        return np.inf
    return abs(new - old) / abs(new) if new != 0 else np.inf


def run_ao(s: Scenario, realization: ChannelRealization, bf: str = "MMSE", xi: float | None = None,
           settings: Settings | None = None, streams: TrialStreams | None = None,
           with_inet: bool = True):
    """Alternate beamforming and SDR phase updates; returns (phases, beams, report).

    A phase update is kept only if it improves the (feasibility, EE) key, so
    the reported EE trace never decreases.
    """
    settings = settings or Settings()
    xi = settings.xi if xi is None else xi
    streams = streams or TrialStreams(s.seed, 0)
    timing = {"phase": 0.0, "sdp": 0.0}
    u = solve_unet_at(PhaseShifts.ones(s.n_irs), s, realization, bf, settings)
    trace = [u.ee]
    converged = False
    it = 0
    for it in range(1, settings.max_outer + 1):
        t0 = time.perf_counter()
        inst = lift(realization.h_r_users, realization.g_r, realization.g_dir_users, u.bf.w,
                    s.gamma_min, s.noise_variance)
        t1 = time.perf_counter()
        sdp = solve_sdp(inst)
        timing["sdp"] += time.perf_counter() - t1
        cand = gaussian_randomize(sdp, inst, settings.randomizations, streams.get("sdr", it))
        timing["phase"] += time.perf_counter() - t0
        cu = solve_unet_at(cand, s, realization, bf, settings)
        if _key(cu) > _key(u):
            u_new = cu
        else:
            u_new = u
        change = _rel_change(u_new.ee, u.ee)
        u = u_new
        trace.append(u.ee)
        if change < xi:
            converged = True
            break
    scheme = SchemeId("AO_SDR", bf)
    rep = _finish(scheme, u, s, realization, settings, it, converged, trace, timing, with_inet)
    return u.phases, u.bf, rep


def run_lcas(s: Scenario, realization: ChannelRealization, bf: str = "MMSE", xi: float | None = None,
             settings: Settings | None = None, with_inet: bool = True):
    """Gain-maximising coordinate ascent for the phases, then U-net beams; repeat until stable."""
    settings = settings or Settings()
    xi = settings.xi if xi is None else xi
    timing = {"phase": 0.0}
    phases = PhaseShifts.ones(s.n_irs)
    u = solve_unet_at(phases, s, realization, bf, settings)
    trace = [u.ee]
    t0 = time.perf_counter()
    inst = build_instance(realization.h_r_users, realization.g_r, realization.g_dir_users)
    timing["phase"] += time.perf_counter() - t0
    converged = False
    it = 0
    for it in range(1, settings.max_outer + 1):
        t0 = time.perf_counter()
        res = ebcd(inst, phases, settings.ebcd_xi, settings.ebcd_max_sweeps)
        timing["phase"] += time.perf_counter() - t0
        phases = res.phases
        new = solve_unet_at(phases, s, realization, bf, settings)
        change = _rel_change(new.ee, u.ee)
        u = new
        trace.append(u.ee)
        if change < xi:
            converged = True
            break
    scheme = SchemeId("LCAS_EBCD", bf)
    rep = _finish(scheme, u, s, realization, settings, it, converged, trace, timing, with_inet)
    return u.phases, u.bf, rep


def apply_baseline(scheme: SchemeId, s: Scenario, realization: ChannelRealization,
                   settings: Settings | None = None, streams: TrialStreams | None = None,
                   continuous: dict | None = None) -> EEReport:
    """Run one scheme on one realisation.

    ``continuous`` caches continuous-phase results keyed by (kind, bf) so that
    quantised variants reuse them.
    """
    settings = settings or Settings()
    streams = streams or TrialStreams(s.seed, 0)
    cache = {} if continuous is None else continuous

    def continuous_run(kind):
        key = (kind, scheme.bf)
        if key not in cache:
            if kind == "AO_SDR":
                cache[key] = run_ao(s, realization, scheme.bf, settings=settings, streams=streams)[2]
            else:
                cache[key] = run_lcas(s, realization, scheme.bf, settings=settings)[2]
        return cache[key]

    if scheme.kind in ("AO_SDR", "LCAS_EBCD"):
        rep = continuous_run(scheme.kind)
        return rep
    if scheme.kind == "DPS":
        base = continuous_run(scheme.base)
        phases = base.phases.quantize(scheme.bits)
        u = solve_unet_at(phases, s, realization, scheme.bf, settings)
        return _finish(scheme, u, s, realization, settings, base.iterations_outer, base.converged,
                       [u.ee], {})
    if scheme.kind == "RPS":
        theta = streams.get("rps").uniform(0.0, 2.0 * np.pi, s.n_irs)
        u = solve_unet_at(PhaseShifts.from_angles(theta), s, realization, scheme.bf, settings)
        return _finish(scheme, u, s, realization, settings, 0, True, [u.ee], {})
    if scheme.kind == "NO_IRS":
        bare = realization.without_irs()
        u = solve_unet_at(PhaseShifts.ones(s.n_irs), s, bare, scheme.bf, settings, with_irs=False)
        return _finish(scheme, u, s, bare, settings, 0, True, [u.ee], {})
    raise ValueError(f"unsupported scheme {scheme}")


def run_trial(s: Scenario, trial: int, schemes, settings: Settings | None = None) -> list[EEReport]:
    """Draw trial ``trial`` and evaluate every scheme on it."""
    realization, streams = draw_trial(s, trial)
    cache: dict = {}
    return [apply_baseline(sc, s, realization, settings, streams, cache) for sc in schemes]
