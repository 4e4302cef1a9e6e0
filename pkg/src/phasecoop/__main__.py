"""Command-line entry point: ``python -m phasecoop`` / ``phasecoop``."""

from __future__ import annotations

import argparse
import sys

from phasecoop.harness import SWEEP_VARIABLES, SweepSpec, run_sweep
from phasecoop.pipeline import SchemeId, Settings
from phasecoop.scenario import ConfigError, build_scenario

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _parse_sweep(text: str):
    if "=" not in text:
        raise ConfigError(f"--sweep expects VAR=v1,v2,..., got {text!r}")
    var, vals = text.split("=", 1)
    var = var.strip()
    try:
        values = [float(v) for v in vals.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse sweep values {vals!r}") from None
    if var == "n_irs":
        values = [int(v) if v == int(v) else v for v in values]
    return var, values


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="phasecoop", description="Monte Carlo EE sweeps for the IRS-assisted user and IoT networks.")
    p.add_argument("--config", metavar="PATH", help="INI scenario file")
    p.add_argument("--sweep", metavar="VAR=v1,v2,...",
                   help=f"sweep variable ({', '.join(SWEEP_VARIABLES)}); powers in dBm")
    p.add_argument("--schemes", default="ao,lcas,dps2,rps,noirs",
                   help="comma-separated: ao, lcas, dps<b>[-lcas], rps, noirs")
    p.add_argument("--bf", choices=["mmse", "zf"], default="mmse")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", metavar="DIR", default="results")
    p.add_argument("--trace", action="store_true", help="write per-trial convergence traces")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="scenario override, repeatable (e.g. --set p_ap_u_max_dbm=20)")
    p.add_argument("--randomizations", type=int, default=10000)
    p.add_argument("--workers", type=int, help="worker processes (default: CPU count)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            overrides[k.strip()] = v.strip()
        if args.seed is not None:
            overrides["seed"] = args.seed
        scenario = build_scenario(args.config, overrides)
        schemes = [SchemeId.parse(t, bf=args.bf) for t in args.schemes.split(",") if t.strip()]
        if args.sweep:
            var, values = _parse_sweep(args.sweep)
        else:
            var, values = None, [0]
        spec = SweepSpec(var, values, args.trials, schemes)
        if args.randomizations < 1:
            raise ConfigError("--randomizations must be >= 1")
        settings = Settings(randomizations=args.randomizations)
    except (ConfigError, ValueError) as exc:
        print(f"phasecoop: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_sweep(spec, scenario, settings, out_dir=args.out, workers=args.workers, trace=args.trace)
    except ConfigError as exc:
        print(f"phasecoop: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {len(result.rows)} rows to {args.out}/trials.csv and {args.out}/aggregate.csv")
    if result.failures:
        print(f"{result.failures} trial(s) failed; see the error column", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
