"""Command line: ``teqsci run | validate | report``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from teqsci.hamio import ActiveSpaceSpec, centered_window, read_fcidump
from teqsci.workflow import (
    STAGES,
    RunConfig,
    StageError,
    config_from_run_dir,
    default_full_space,
    load_config,
    run,
    validate,
)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _strings(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _budget(text: str) -> float:
    return math.inf if text.strip().lower() in ("inf", "none") else float(text)


def parse_space(text: str, parent: ActiveSpaceSpec) -> ActiveSpaceSpec:
    """``"E,O"`` is the centred (E, O) window of ``parent``; ``"E:i,j,..."`` lists orbitals."""
    if ":" in text:
        e, orbs = text.split(":", 1)
        return ActiveSpaceSpec(int(e), tuple(int(i) for i in orbs.split(",") if i.strip()))
    e, o = (int(x) for x in text.split(","))
    return centered_window(parent, e, o)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML run configuration")
    p.add_argument("--fcidump", help="integral file (overrides the config)")
    p.add_argument("--full-space", help="full active space: 'E,O' window or 'E:i,j,...'")
    p.add_argument("--initial-space", help="initial active space: 'E,O' window of the full space or 'E:i,j,...'")
    p.add_argument("--dt-grid", type=_floats, help="comma-separated evolution times (a.u.)")
    p.add_argument("--shots-per-pair", type=int)
    p.add_argument("--states", type=_strings, help="comma-separated state labels (S0,S1,T0) or root indices")
    p.add_argument("--trotter-steps", type=int)
    p.add_argument("--gate-budget", type=_budget, help="two-qubit gates per Trotter step, or 'inf'")
    p.add_argument("--seed", type=int)
    p.add_argument("--roots", type=int)
    p.add_argument("--baseline", choices=("initial-sector", "hf"))
    p.add_argument("--oniom-sidecar")
    p.add_argument("--oracle", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--augment", action=argparse.BooleanOptionalAction, default=None)


def config_from_args(args: argparse.Namespace) -> RunConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    elif args.fcidump is not None:
        cfg = RunConfig(fcidump_path=args.fcidump)
    else:
        raise SystemExit("either --config or --fcidump is required")
    overrides = {
        "fcidump_path": args.fcidump,
        "dt_grid": args.dt_grid,
        "shots_per_pair": args.shots_per_pair,
        "states": args.states,
        "trotter_steps": args.trotter_steps,
        "gate_budget": args.gate_budget,
        "seed": args.seed,
        "roots": args.roots,
        "baseline": args.baseline,
        "oniom_sidecar_path": args.oniom_sidecar,
        "oracle": args.oracle,
        "augment": args.augment,
    }
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    if args.full_space or args.initial_space:
        parent = read_fcidump(cfg.fcidump_path)
        if args.full_space:
            cfg = replace(cfg, full_active_space=parse_space(args.full_space, default_full_space(parent)))
        if args.initial_space:
            full = cfg.full_active_space or default_full_space(parent)
            cfg = replace(cfg, initial_active_space=parse_space(args.initial_space, full))
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="teqsci", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute the workflow")
    _add_config_flags(p_run)
    p_run.add_argument("--out", type=Path, required=True, help="run directory")
    p_run.add_argument("--from-stage", choices=STAGES, default=STAGES[0])
    p_run.add_argument("--dump-hamiltonian", action="store_true", help="also write every Pauli term")

    p_val = sub.add_parser("validate", help="list problems with a configuration")
    _add_config_flags(p_val)

    p_rep = sub.add_parser("report", help="rebuild the report from a finished run directory")
    p_rep.add_argument("--out", type=Path, required=True, help="run directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    try:
        if args.command == "validate":
            diags = validate(config_from_args(args))
            for d in diags:
                print(d)
            if not diags:
                print("ok")
            return 1 if diags else 0
        if args.command == "run":
            out = run(config_from_args(args), args.out, args.from_stage, args.dump_hamiltonian)
        else:
            out = run(config_from_run_dir(args.out), args.out, from_stage="report")
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print((out / "metrics.csv").read_text(), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
