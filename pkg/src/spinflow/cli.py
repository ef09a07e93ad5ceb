"""Command-line drivers: run, relax, check, blowup-experiment.

Every command takes a config file and an optional output-directory override.
Exit codes: 0 success, 1 failed identity checks, 2 config error, 3 blow-up
under-resolved, 4 non-finite values outside the stepper, 5 relaxation did not
converge, 6 experiment inconclusive (no concentration detected).
"""

from __future__ import annotations

import argparse
import math
import os
import sys

from . import __version__, checks, diagnostics, snapshots
from .config import ConfigError, RunConfig, load_config
from .domain import critical_points
from .flow import BlowUpError, dissipation_coefficient, evolve
from .operators import grad_squared
from .relax import relax

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_NONFINITE = 4
EXIT_NOT_CONVERGED = 5
EXIT_INCONCLUSIVE = 6


def _outdir(cfg: RunConfig, override: str | None) -> str:
    path = override if override is not None else os.path.join(cfg.base_dir,
                                                              cfg["output.dir"])
    os.makedirs(path, exist_ok=True)
    return path


def _write_outputs(cfg: RunConfig, outdir: str, state, ledger, report=None) -> None:
    ledger.to_csv(os.path.join(outdir, "ledger.csv"))
    snapshots.write_snapshot(os.path.join(outdir, "snapshot_final.bin"), state.field)
    if cfg["output.field_csv"]:
        snapshots.write_field_csv(os.path.join(outdir, "field_final.csv"), state.field)
    if cfg["output.heatmaps"]:
        density = diagnostics.energy_density(state.field, cfg.coupling)
        snapshots.write_density_pgm(os.path.join(outdir, "density_final.pgm"), density)
    if report is not None:
        with open(os.path.join(outdir, "report.txt"), "w", encoding="utf-8") as fh:
            fh.write(report.to_text())


def _snapshot_sink(cfg: RunConfig, outdir: str):
    def sink(state):
        snapshots.write_snapshot(os.path.join(outdir, f"snapshot_{state.step:08d}.bin"),
                                 state.field)
        if cfg["output.heatmaps"]:
            density = diagnostics.energy_density(state.field, cfg.coupling)
            snapshots.write_density_pgm(os.path.join(outdir, f"density_{state.step:08d}.pgm"),
                                        density)
    return sink


def cmd_run(cfg: RunConfig, outdir: str) -> int:
    initial = cfg.build_initial()
    try:
        out = evolve(initial, cfg.coupling, cfg.flow, radii=cfg.radii,
                     snapshot_sink=_snapshot_sink(cfg, outdir))
    except BlowUpError as err:
        if err.ledger is not None:
            err.ledger.to_csv(os.path.join(outdir, "ledger.csv"))
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BLOWUP
    state, ledger = out.state, out.ledger
    if not ledger.rows:
        # degenerate no-op run: record the initial state once
        crit = critical_points(cfg.coupling)
        ps = diagnostics.ps_norm(state.field, cfg.coupling)
        v_sq = ps * ps * (2.0 / dissipation_coefficient(cfg.flow.flow_kind))
        ledger.append(diagnostics.measure_row(cfg.grid, cfg.coupling,
                                              grad_squared(state.field), t=state.t,
                                              v_norm_sq=v_sq, ps_norm=ps,
                                              radii=ledger.radii, crit=crit))
    if not all(math.isfinite(r.e_f) for r in ledger.rows):
        ledger.to_csv(os.path.join(outdir, "ledger.csv"))
        print("error: non-finite energy in the ledger", file=sys.stderr)
        return EXIT_NONFINITE
    report = diagnostics.detect_concentration(ledger, state.field, cfg.coupling,
                                              cfg.radii, cfg.eps_conc)
    _write_outputs(cfg, outdir, state, ledger, report)
    print(f"finished: reason = {out.reason}, t = {state.t:.6g}, steps = {state.step}, "
          f"E_f = {ledger.rows[-1].e_f:.6g}")
    return EXIT_OK


def cmd_relax(cfg: RunConfig, outdir: str) -> int:
    initial = cfg.build_initial()
    result = relax(initial, cfg.coupling, tol=cfg["relax.tol"],
                   max_steps=cfg["relax.max_steps"], safety=cfg["relax.safety"])
    with open(os.path.join(outdir, "relax_history.csv"), "w", encoding="utf-8") as fh:
        fh.write("step,ps_norm\n")
        for k, value in enumerate(result.history):
            fh.write(f"{k},{value!r}\n")
    snapshots.write_snapshot(os.path.join(outdir, "snapshot_final.bin"), result.field)
    final_e = diagnostics.energy(result.field, cfg.coupling)
    print(f"relax: converged = {result.converged}, steps = {result.steps}, "
          f"ps_norm = {result.history[-1]:.6g}, E_f = {final_e:.6g}")
    if not result.converged:
        print("error: relaxation did not converge within max_steps", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_check(cfg: RunConfig, outdir: str) -> int:
    field = cfg.build_initial()
    results = checks.run_identity_checks(cfg.grid, cfg.coupling, field,
                                         flow_kind=cfg.flow.flow_kind,
                                         seed=cfg["initial.seed"])
    table = checks.format_table(results)
    print(table)
    with open(os.path.join(outdir, "check_report.txt"), "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


def cmd_blowup_experiment(cfg: RunConfig, outdir: str) -> int:
    """Canonical concentration experiment: evolve seeded data, stop at t_end
    or when the density peak collapses through the grid, then test the final
    argmax against the critical points of the coupling."""
    initial = cfg.build_initial()
    crit = critical_points(cfg.coupling)

    collapse_fraction = cfg["experiment.collapse_fraction"]
    peak = {"value": 0.0}

    def collapsed(row) -> bool:
        peak["value"] = max(peak["value"], row.max_density)
        return row.max_density < collapse_fraction * peak["value"]

    try:
        out = evolve(initial, cfg.coupling, cfg.flow, radii=cfg.radii,
                     snapshot_sink=_snapshot_sink(cfg, outdir), stop_when=collapsed)
    except BlowUpError as err:
        if err.ledger is not None:
            err.ledger.to_csv(os.path.join(outdir, "ledger.csv"))
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BLOWUP
    state, ledger = out.state, out.ledger
    report = diagnostics.detect_concentration(ledger, state.field, cfg.coupling,
                                              cfg.radii, cfg.eps_conc)
    _write_outputs(cfg, outdir, state, ledger, report)

    extra = [f"stop_reason = {out.reason}"]
    if ledger.rows and not crit.everywhere:
        first, last = ledger.rows[0], ledger.rows[-1]
        extra.append(f"initial_distance = {first.dist_to_crit!r}")
        extra.append(f"final_distance = {last.dist_to_crit!r}")
    with open(os.path.join(outdir, "report.txt"), "a", encoding="utf-8") as fh:
        fh.write("\n".join(extra) + "\n")

    print(f"experiment: reason = {out.reason}, detected = {report.detected}")
    for line in extra:
        print(line)
    if not report.detected:
        print("error: no concentration detected (experiment inconclusive)",
              file=sys.stderr)
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spinflow",
        description="Weighted harmonic-map and Landau-Lifshitz flows on a periodic domain")
    parser.add_argument("--version", action="version", version=f"spinflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "evolve the configured flow and write ledger + snapshots"),
        ("relax", "run the gradient flow to stationarity"),
        ("check", "measure the diagnostic identities and report pass/fail"),
        ("blowup-experiment", "run the concentration experiment and report drift"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="path to the run configuration file")
        p.add_argument("-o", "--output-dir", default=None,
                       help="override output.dir from the config")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    outdir = _outdir(cfg, args.output_dir)
    try:
        if args.command == "run":
            return cmd_run(cfg, outdir)
        if args.command == "relax":
            return cmd_relax(cfg, outdir)
        if args.command == "check":
            return cmd_check(cfg, outdir)
        return cmd_blowup_experiment(cfg, outdir)
    except FloatingPointError as err:
        print(f"error: non-finite failure: {err}", file=sys.stderr)
        return EXIT_NONFINITE


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
