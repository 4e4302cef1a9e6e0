"""Monte Carlo sweeps over one scenario parameter, written as CSV tables."""

from __future__ import annotations

import csv
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from phasecoop.pipeline import EEReport, SchemeId, Settings, run_trial
from phasecoop.scenario import ConfigError, Scenario, dbm_to_w, w_to_dbm

SWEEP_VARIABLES = ("p_ap_u", "p_ap_i", "n_irs", "p_c", "irs_x", "irs_y", "a_exponents", "eh_min")

TRIAL_COLUMNS = [
    "sweep_var", "sweep_value", "trial", "seed", "scheme", "bf", "network", "N", "M",
    "P_AP_dBm", "P_C_dBm", "sum_rate", "ee", "iterations", "converged",
    "feasible", "sinr_ok", "power_ok", "eh_ok", "unit_modulus_ok", "ps_range_ok",
    "status", "error",
]

AGGREGATE_COLUMNS = [
    "sweep_var", "sweep_value", "scheme", "bf", "network", "trials", "failures",
    "mean_ee", "stderr_ee", "mean_sum_rate", "stderr_sum_rate", "feasible_fraction",
    "converged_fraction",
]


@dataclass(frozen=True)
class SweepSpec:
    variable: str | None
    values: tuple
    trials: int = 50
    schemes: tuple = field(default_factory=lambda: (SchemeId("AO_SDR"),))

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if self.variable is not None and self.variable not in SWEEP_VARIABLES:
            raise ConfigError(f"unknown sweep variable {self.variable!r}; choose from {SWEEP_VARIABLES}")
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        if len(self.values) > 1:
            d = np.diff(np.asarray(self.values, dtype=float))
            if not (np.all(d > 0) or np.all(d < 0)):
                raise ConfigError("sweep values must be strictly monotone")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError("trials must be an integer >= 1")
        if not self.schemes:
            raise ConfigError("at least one scheme is required")


def apply_value(s: Scenario, variable: str | None, value) -> Scenario:
    """Scenario for one sweep point; power-like values are in dBm."""
    if variable is None:
        return s
    if variable == "p_ap_u":
        return s.replace(p_ap_u_max=float(dbm_to_w(value)))
    if variable == "p_ap_i":
        return s.replace(p_ap_i_max=float(dbm_to_w(value)))
    if variable == "n_irs":
        if int(value) != value:
            raise ConfigError(f"n_irs must be an integer, got {value!r}")
        return s.replace(n_irs=int(value))
    if variable == "p_c":
        return s.replace(p_static=float(dbm_to_w(value)))
    if variable == "irs_x":
        return s.replace(irs_pos=(float(value), s.irs_pos[1], s.irs_pos[2]))
    if variable == "irs_y":
        return s.replace(irs_pos=(s.irs_pos[0], float(value), s.irs_pos[2]))
    if variable == "a_exponents":
        return s.replace(pl_ap_irs=float(value), pl_irs_rx=float(value))
    if variable == "eh_min":
        return s.replace(eh_min=float(dbm_to_w(value)))
    raise ConfigError(f"unknown sweep variable {variable!r}")


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _rows_for(spec_var, value, trial, s: Scenario, rep: EEReport) -> list[dict]:
    out = []
    for net in ("unet", "inet"):
        if net == "unet":
            flags = {k[5:]: v for k, v in rep.flags.items() if k.startswith("unet_")}
            ee, rate, m, p_ap = rep.unet_ee, rep.unet_sum_rate, s.m_u, s.p_ap_u_max
            pc = s.circuit_power("unet", with_irs=rep.scheme.kind != "NO_IRS")
        else:
            flags = {k[5:]: v for k, v in rep.flags.items() if k.startswith("inet_")}
            ee, rate, m, p_ap = rep.inet_ee, rep.inet_sum_rate, s.m_i, s.p_ap_i_max
            pc = s.circuit_power("inet")
        out.append({
            "sweep_var": spec_var or "none", "sweep_value": _fmt(value), "trial": trial, "seed": s.seed,
            "scheme": rep.scheme.label, "bf": rep.scheme.bf, "network": net, "N": s.n_irs, "M": m,
            "P_AP_dBm": _fmt(float(w_to_dbm(p_ap))), "P_C_dBm": _fmt(float(w_to_dbm(pc))),
            "sum_rate": _fmt(float(rate)), "ee": _fmt(float(ee)), "iterations": rep.iterations_outer,
            "converged": _fmt(bool(rep.converged)), "feasible": _fmt(all(flags.values())),
            "sinr_ok": _fmt(flags.get("sinr", True)), "power_ok": _fmt(flags.get("power", True)),
            "eh_ok": _fmt(flags.get("eh", True)), "unit_modulus_ok": _fmt(flags.get("unit_modulus", True)),
            "ps_range_ok": _fmt(flags.get("ps_range", True)), "status": "ok", "error": "",
        })
    return out


def _failure_rows(spec_var, value, trial, s, schemes, message) -> list[dict]:
    rows = []
    for sc in schemes:
        for net, m, p_ap in (("unet", s.m_u, s.p_ap_u_max), ("inet", s.m_i, s.p_ap_i_max)):
            row = {c: "" for c in TRIAL_COLUMNS}
            row.update({"sweep_var": spec_var or "none", "sweep_value": _fmt(value), "trial": trial,
                        "seed": s.seed, "scheme": sc.label, "bf": sc.bf, "network": net, "N": s.n_irs,
                        "M": m, "P_AP_dBm": _fmt(float(w_to_dbm(p_ap))), "status": "error",
                        "error": message.replace("\n", " ")[:300]})
            rows.append(row)
    return rows


def _run_point(args):
    """One (value, trial) work unit; never raises."""
    s, variable, value, trial, schemes, settings, trace_dir = args
    try:
        point = apply_value(s, variable, value)
        reports = run_trial(point, trial, schemes, settings)
    except Exception as exc:  # recorded as a failure row
        msg = f"{type(exc).__name__}: {exc}"
        try:
            point = apply_value(s, variable, value)
        except Exception:
            point = s
        return _failure_rows(variable, value, trial, point, schemes, msg), traceback.format_exc()
    rows = []
    for rep in reports:
        rows.extend(_rows_for(variable, value, trial, point, rep))
        if trace_dir is not None and rep.scheme.kind in ("AO_SDR", "LCAS_EBCD"):
            name = f"{variable or 'none'}_{_fmt(value)}_t{trial}_{rep.scheme.label}_{rep.scheme.bf}.csv"
            emit_trace(rep, os.path.join(trace_dir, name))
    return rows, None


def aggregate(rows: list[dict]) -> list[dict]:
    """Mean and standard error per (value, scheme, bf, network) in first-seen order."""
    groups: dict = {}
    for r in rows:
        key = (r["sweep_var"], r["sweep_value"], r["scheme"], r["bf"], r["network"])
        groups.setdefault(key, []).append(r)
    out = []
    for key, grp in groups.items():
        ok = [r for r in grp if r["status"] == "ok"]
        ee = np.array([float(r["ee"]) for r in ok])
        rate = np.array([float(r["sum_rate"]) for r in ok])
        n = len(ok)

        def se(x):
            return float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")

        out.append({
            "sweep_var": key[0], "sweep_value": key[1], "scheme": key[2], "bf": key[3], "network": key[4],
            "trials": n, "failures": len(grp) - n,
            "mean_ee": _fmt(float(ee.mean())) if n else "nan", "stderr_ee": _fmt(se(ee)),
            "mean_sum_rate": _fmt(float(rate.mean())) if n else "nan", "stderr_sum_rate": _fmt(se(rate)),
            "feasible_fraction": _fmt(float(np.mean([r["feasible"] == "1" for r in ok]))) if n else "nan",
            "converged_fraction": _fmt(float(np.mean([r["converged"] == "1" for r in ok]))) if n else "nan",
        })
    return out


@dataclass
class SweepResult:
    rows: list
    aggregate: list
    failures: int
    tracebacks: list


def run_sweep(spec: SweepSpec, scenario: Scenario, settings: Settings | None = None,
              out_dir: str | None = None, workers: int | None = None, trace: bool = False) -> SweepResult:
    """Run every (value, trial) point; failed trials become ``status=error`` rows.

    Rows are collected in (value, trial, scheme, network) order regardless of
    how the work is scheduled, so output depends only on the inputs.
    """
    settings = settings or Settings()
    if workers is None:
        workers = os.cpu_count() or 1
    trace_dir = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        if trace:
            trace_dir = os.path.join(out_dir, "traces")
            os.makedirs(trace_dir, exist_ok=True)
    # validate every point up front so config mistakes surface before any work
    for v in spec.values:
        apply_value(scenario, spec.variable, v)
    tasks = [(scenario, spec.variable, v, t, spec.schemes, settings, trace_dir)
             for v in spec.values for t in range(spec.trials)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_point, tasks))
    else:
        results = [_run_point(t) for t in tasks]
    rows, tbs = [], []
    for r, tb in results:
        rows.extend(r)
        if tb:
            tbs.append(tb)
    failures = sum(1 for _, tb in results if tb)
    agg = aggregate(rows)
    if out_dir is not None:
        write_csv(os.path.join(out_dir, "trials.csv"), TRIAL_COLUMNS, rows)
        write_csv(os.path.join(out_dir, "aggregate.csv"), AGGREGATE_COLUMNS, agg)
    return SweepResult(rows=rows, aggregate=agg, failures=failures, tracebacks=tbs)


def write_csv(path, columns, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({c: r.get(c, "") for c in columns})
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit_trace(report: EEReport, path) -> None:
    """Outer-iteration EE trace: ``iteration, ee, rel_change``."""
    if not report.trace:
        raise ValueError("report carries no trace")
    rows = []
    prev = None
    for i, ee in enumerate(report.trace):
        change = "" if prev is None else _fmt(abs(ee - prev) / abs(ee) if ee else float("inf"))
        rows.append({"iteration": i, "ee": _fmt(float(ee)), "rel_change": change})
        prev = ee
    write_csv(path, ["iteration", "ee", "rel_change"], rows)
