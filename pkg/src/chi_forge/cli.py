"""Command-line front end.

Exit codes: 0 success, 1 validation failure, 2 config error, 3 physics error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import analysis
from .config import ConfigError, RunConfig, load_config, reference_config
from .evolve import NormDriftError
from .model import PhysicsError, validate_regime
from .protocol import Engine, ErrorModel, LABEL_ORDER, TimingError, chi_protocol, protocol_to_dict, reorder_amplitudes, run_protocol

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_PHYSICS = 0, 1, 2, 3


def write_json(obj, path) -> Path:
    path = Path(path)
    text = json.dumps(analysis.jsonable(obj), indent=2, sort_keys=True) + "\n"
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)
    return path


def _complex_list(amps):
    return [[float(z.real), float(z.imag)] for z in amps]


def cmd_run(cfg: RunConfig, out: Path) -> int:
    proto = chi_protocol(cfg.params)
    err = TimingError(*cfg.timing_error, cfg.error_model)
    res = run_protocol(proto, engine=cfg.engine, err=err, steps_per_period=cfg.steps_per_period)
    fid = res.fidelity(proto.target)
    amps = res.state.amplitudes
    doc = {
        "engine": cfg.engine.value,
        "error_model": cfg.error_model.value,
        "timing_error": list(cfg.timing_error),
        "omega_s": proto.omega_s,
        "durations": [s.duration for s in proto.steps],
        "fidelity": fid,
        "vacuum_weight": res.vacuum_weight,
        "max_step_drift": res.max_step_drift,
        "amplitudes": {
            "order_1234": _complex_list(amps),
            "order_" + "".join(map(str, LABEL_ORDER)): _complex_list(reorder_amplitudes(amps)),
        },
        "entanglement": dict(analysis.entanglement_diagnostics(res.state)),
        "regime": validate_regime(proto.params, cfg.regime_threshold),
        "protocol": protocol_to_dict(proto),
        "constraints": [list(s.constraints) for s in proto.steps],
    }
    write_json(doc, out / "run.json")
    print(f"fidelity {fid:.6f} ({cfg.engine.value}, Omega_S = {proto.omega_s:.6g})")
    return EXIT_OK


def _sweep_models(cfg: RunConfig, explicit_model: bool):
    return [cfg.error_model] if explicit_model else list(ErrorModel)


def run_sweeps(cfg: RunConfig, out: Path, models) -> list[analysis.SweepGrid]:
    grids = []
    for model in models:
        g = analysis.timing_error_sweep(
            cfg.params,
            cfg.n1_range.values(),
            cfg.n2_range.values(),
            model,
            cfg.engine,
            jobs=cfg.jobs,
            steps_per_period=cfg.steps_per_period,
        )
        analysis.write_sweep_csv(g, out / f"sweep_{model.value}.csv")
        grids.append(g)
    return grids


def cmd_sweep(cfg: RunConfig, out: Path, explicit_model: bool = False) -> int:
    grids = run_sweeps(cfg, out, _sweep_models(cfg, explicit_model))
    summary = analysis.sweep_summary(grids)
    write_json(summary, out / "sweep_summary.json")
    for e in summary["grids"]:
        probe = "n/a" if e["at_probe"] is None else f"{e['at_probe']:.6f}"
        print(f"{e['model']:>10}  F(0.02, 0.02) = {probe}  (reference {analysis.REFERENCE_FIDELITY_AT_2PCT})")
    return EXIT_OK


def cmd_validate(cfg: RunConfig, out: Path) -> int:
    report = validate_regime(cfg.params, cfg.regime_threshold)
    print(report.table())
    write_json(report, out / "regime.json")
    return EXIT_OK if report.passed else EXIT_VALIDATION


def cmd_ladder(cfg: RunConfig, out: Path) -> int:
    if cfg.ladder_time is None and not all(d.rabi > 0 for d in cfg.params.drives):
        raise PhysicsError("the two-step schedule needs every atom driven; set ladder_time for a fixed-time comparison")
    rep = analysis.approximation_ladder(
        cfg.params, t=cfg.ladder_time, engines=cfg.ladder_engines, steps_per_period=cfg.steps_per_period
    )
    write_json(rep, out / "ladder.json")
    full = rep.outcomes.get(Engine.FULL.value)
    if full is not None:
        from .plotting import plot_leakage

        plot_leakage(full.leakage_samples, out / "leakage_full.png")
    for pr in rep.pairs:
        print(f"{pr['a']:>9} vs {pr['b']:<9} {pr['fidelity']:.6f}")
    for name, o in rep.outcomes.items():
        print(f"{name:>9}  weight {o.vacuum_weight:.6f}  leakage {o.max_leakage:.4f}")
    return EXIT_OK


def cmd_report(cfg: RunConfig, out: Path, explicit_model: bool = False) -> int:
    from .plotting import plot_fidelity_map

    feas = analysis.feasibility_report(cfg.params, cfg.g_si, cfg.tau_r, cfg.tau_d)
    deco = analysis.decoherence_impact(cfg.params, cfg.tau_r, cfg.tau_d, cfg.g_si)
    grids = run_sweeps(cfg, out, _sweep_models(cfg, explicit_model))
    figures = [plot_fidelity_map(g, out / f"fidelity_{g.model}.png").name for g in grids]
    doc = {
        "feasibility": feas,
        "decoherence": deco,
        "sweeps": analysis.sweep_summary(grids),
        "figures": figures,
        "config": cfg.to_dict(),
    }
    write_json(doc, out / "report.json")
    print(f"T = {feas.total_si * 1e6:.4f} us, T / tau_r = {feas.ratio:.4f}, decoherence loss {deco.loss:.4f}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "validate": cmd_validate, "ladder": cmd_ladder, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chi-forge", description="Cavity-mediated four-qubit entangling protocol.")
    ap.add_argument("command", choices=list(COMMANDS))
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--config", metavar="PATH", help="JSON run configuration")
    src.add_argument("--paper-defaults", action="store_true", help="use the built-in worked-example parameters")
    ap.add_argument("--engine", metavar="NAME", help="|".join(e.value for e in Engine))
    ap.add_argument("--error-model", metavar="NAME", help="|".join(m.value for m in ErrorModel))
    ap.add_argument("--jobs", type=int, metavar="N")
    ap.add_argument("--out", metavar="DIR", help="output directory (CHI_FORGE_OUT takes precedence)")
    ap.add_argument("--threshold", type=float, help="regime ratio threshold")
    return ap


def resolve_config(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    elif args.paper_defaults:
        cfg = reference_config()
    else:
        raise ConfigError("give --config PATH or --paper-defaults")
    cfg = cfg.with_overrides(engine=args.engine, error_model=args.error_model, jobs=args.jobs)
    if args.threshold is not None:
        cfg = replace(cfg, regime_threshold=args.threshold)
    out = os.environ.get("CHI_FORGE_OUT") or args.out
    if out:
        cfg = replace(cfg, output_dir=out)
    return cfg


def _prepare_out(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = _prepare_out(cfg.output_dir)
        cmd = COMMANDS[args.command]
        if args.command in ("sweep", "report"):
            return cmd(cfg, out, explicit_model=args.error_model is not None)
        return cmd(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PhysicsError, NormDriftError) as exc:
        print(f"physics error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except ValueError as exc:
        # parameter invariants (e.g. fock_dim < 2) raised while building objects
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
