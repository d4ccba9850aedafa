"""Command-line entry point: ``mcamimo <command> [--config FILE] [--seed N] [--out PATH]``."""

from __future__ import annotations

import argparse
import math
import sys

from ..errors import ConvergenceError, ParameterError
from .config import ConfigError, ExperimentConfig, load_config
from .engine import (
    run_ber_sweep,
    run_beta_study,
    run_power_report,
    run_topology_compare,
    run_transient,
)

COMMANDS = {
    "ber-sweep": "BER over the SNR x sigma_m x scheme/beta grid",
    "beta-study": "BER versus beta at the first SNR, SCB and ICB",
    "compare": "proposed versus conventional circuit on paired draws",
    "transient": "op-amp step response and settling time; writes a trace CSV",
    "power": "power, RAPC and compute efficiency over k_grid",
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcamimo", description="Analog crossbar MIMO detector experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in COMMANDS.items():
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="TOML config file (flat key = value)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help="output CSV path; a .meta sidecar is written next to it")
        sp.add_argument("--workers", type=int, help="worker processes for grid points")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(seed=args.seed, out_path=args.out, workers=args.workers)


def _num(v):
    return "" if isinstance(v, float) and math.isnan(v) else f"{v:.4g}" if isinstance(v, float) else str(v)


def _print_ber(records):
    print("snr_db  sigma_m  scheme  beta  topology      ber        ci95                 failures")
    for r in records:
        print(f"{_num(r.snr_db):>6}  {_num(r.sigma_m_frac):>7}  {r.scheme:>6}  {_num(r.beta):>4}  "
              f"{r.topology:<12}  {r.ber:.3e}  [{r.ci_low:.2e}, {r.ci_high:.2e}]  {r.failures}")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _config(args)
        if args.command == "ber-sweep":
            _print_ber(run_ber_sweep(cfg))
        elif args.command == "beta-study":
            _print_ber(run_beta_study(cfg))
        elif args.command == "compare":
            _print_ber(run_topology_compare(cfg))
        elif args.command == "transient":
            for r in run_transient(cfg):
                print(f"{r.topology}: settle {r.settle_time * 1e9:.2f} ns, "
                      f"final vs ideal-OA solution {r.final_rel_error:.2e}"
                      + (f", trace {r.trace_path}" if r.trace_path else ""))
        elif args.command == "power":
            for row in run_power_report(cfg):
                rapc = "" if math.isnan(row["rapc"]) else f"  RAPC {row['rapc']:.3%}"
                print(f"K={row['K']:<3} {row['topology']:<12} P={row['p_total_w']:.4g} W  "
                      f"{row['tops']:.4g} TOPS  {row['tops_per_watt']:.4g} TOPS/W  "
                      f"x{row['ee_ratio_vs_gpu']:.1f} vs GPU{rapc}")
    except (ConfigError, ParameterError, ConvergenceError, OSError) as exc:
        print(f"mcamimo: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
