"""Command-line interface: deterministic, file-based runs of every pipeline.

    cavtherm <subcommand> --config scenario.json --out outdir
                          [--format csv|json] [--seed N]

Subcommands: rates, evolve, equilibrium, threshold-scan, oracle-check.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
Outputs use fixed decimal formatting and fixed column orders, so identical
configs produce byte-identical files; every run writes a manifest recording
the config hash, tool version, and produced files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ScenarioConfig, parse_config
from .constants import MEV_TO_INV_PS
from .equilibrium import (
    scan_summary_json,
    scan_to_csv,
    solve_chemical_potential,
    threshold_scan,
)
from .kinetics import (
    ConvergenceError,
    DriveSpec,
    KineticState,
    StiffnessError,
    integrate,
    trajectory_to_csv,
)
from .lindblad import (
    DensityMatrix,
    FockSpace,
    fock_state,
    pure_state,
    run_oracle_check,
    thermal_product_state,
)
from .model import ValidationError
from .rates import assemble_rate_matrix, rate_matrix_to_csv, rate_matrix_to_json

SUBCOMMANDS = ("rates", "evolve", "equilibrium", "threshold-scan", "oracle-check")

_REQUIRED_SECTIONS = {
    "rates": (),
    "evolve": ("integration",),
    "equilibrium": ("equilibrium",),
    "threshold-scan": ("threshold_scan",),
    "oracle-check": ("oracle",),
}


class UsageError(ValueError):
    """The config lacks sections the requested subcommand needs."""


def _assemble(cfg: ScenarioConfig):
    return assemble_rate_matrix(
        cfg.modes,
        cfg.ensemble,
        cfg.bath,
        policy=cfg.rate_policy,
        reg=cfg.regularization,
        k_cutoff=cfg.k_cutoff,
    )


def _build_drive(cfg: ScenarioConfig):
    if cfg.drive is None:
        return None
    m = len(cfg.modes)
    pump = np.zeros(m)
    rate = float(cfg.drive.get("pump", 0.0))
    if rate > 0.0:
        targets = cfg.drive.get("pump_modes")
        indices = range(m) if targets is None else targets
        for i in indices:
            if not 0 <= i < m:
                raise ValidationError(f"drive.pump_modes index {i} out of range")
            pump[i] = rate
    loss = (
        cfg.modes.losses * MEV_TO_INV_PS
        if cfg.drive.get("loss_from_modes", True)
        else np.zeros(m)
    )
    return DriveSpec(
        pump=pump,
        loss=loss,
        pump_enabled=bool(cfg.drive.get("pump_enabled", True)),
        loss_enabled=bool(cfg.drive.get("loss_enabled", True)),
    )


def _initial_state(cfg: ScenarioConfig) -> KineticState:
    init = cfg.integration["initial"]
    m = len(cfg.modes)
    kind = init["kind"]
    if kind == "explicit":
        occ = np.asarray(init["occupations"], dtype=float)
    elif kind == "uniform":
        occ = np.full(m, float(init["total"]) / m)
    elif kind == "top":
        occ = np.zeros(m)
        occ[-1] = float(init["total"])
    else:  # ground
        occ = np.zeros(m)
        occ[0] = float(init["total"])
    return KineticState(occupations=occ, time=0.0)


def _oracle_initial(cfg: ScenarioConfig, space: FockSpace) -> DensityMatrix:
    init = (cfg.oracle or {}).get("initial") or {
        "kind": "fock",
        "occupations": [0] * (space.n_modes - 1) + [1],
    }
    kind = init["kind"]
    if kind == "fock":
        return fock_state(space, init["occupations"])
    if kind == "shared_photon":
        amp = 1.0 / len(range(space.n_modes))
        kets = {}
        for mode in range(space.n_modes):
            occ = [0] * space.n_modes
            occ[mode] = 1
            kets[tuple(occ)] = amp
        return pure_state(space, kets)
    # thermal: mu below the lowest mode energy
    energies = [cfg.modes.modes[i].energy for i in range(space.n_modes)]
    mu = float(init.get("mu", min(energies) - cfg.bath.temperature * 0.08617333))
    return thermal_product_state(space, energies, mu, cfg.bath.temperature)


def _write(out_dir: Path, name: str, content: str) -> str:
    path = out_dir / name
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(content)
    return name


def run_subcommand(
    name: str,
    cfg: ScenarioConfig,
    output_dir,
    fmt: str | None = None,
    config_text: str = "",
) -> list[str]:
    """Execute ``name`` on a parsed config, writing outputs plus a manifest.

    Returns the produced file names (manifest included).  Raises
    :class:`UsageError` when the config lacks the sections the subcommand
    needs, and lets numerical failures propagate.
    """
    if name not in SUBCOMMANDS:
        raise UsageError(f"unknown subcommand {name!r}")
    missing = [
        section
        for section in _REQUIRED_SECTIONS[name]
        if getattr(cfg, section.replace("-", "_")) is None
    ]
    if missing:
        raise UsageError(
            f"subcommand {name!r} needs config section(s): {', '.join(missing)}"
        )
    fmt = fmt or cfg.output_format
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files: list[str] = []

    if name == "rates":
        rates = _assemble(cfg)
        if fmt == "json":
            files.append(_write(out_dir, "rate_matrix.json", rate_matrix_to_json(rates)))
        else:
            files.append(_write(out_dir, "rate_matrix.csv", rate_matrix_to_csv(rates)))

    elif name == "evolve":
        rates = _assemble(cfg)
        drive = _build_drive(cfg)
        section = cfg.integration
        trajectory = integrate(
            _initial_state(cfg),
            rates,
            drive,
            t_final=float(section["t_final"]),
            rel_tol=float(section.get("rel_tol", 1e-8)),
            abs_tol=float(section.get("abs_tol", 1e-12)),
            sample_every=section.get("sample_every"),
        )
        files.append(_write(out_dir, "trajectory.csv", trajectory_to_csv(trajectory)))

    elif name == "equilibrium":
        result = solve_chemical_potential(
            cfg.modes, cfg.bath.temperature, float(cfg.equilibrium["n_total"])
        )
        rows = ["mode_id,energy_mev,occupation"]
        for mode, occ in zip(cfg.modes, result.occupations):
            rows.append(
                f"{mode.id},{format(mode.energy, '.17g')},{format(occ, '.17g')}"
            )
        files.append(_write(out_dir, "equilibrium.csv", "\n".join(rows) + "\n"))
        summary = {
            "chemical_potential_mev": result.chemical_potential,
            "ground_fraction": result.ground_fraction,
            "converged": result.converged,
            "iterations": result.iterations,
            "n_total": float(cfg.equilibrium["n_total"]),
        }
        files.append(
            _write(
                out_dir,
                "equilibrium.json",
                json.dumps(summary, sort_keys=True, indent=2) + "\n",
            )
        )

    elif name == "threshold-scan":
        section = cfg.threshold_scan
        result = threshold_scan(
            cfg.modes,
            cfg.ensemble,
            cfg.bath,
            areas=[float(a) for a in section["areas"]],
            policy=cfg.rate_policy,
            reg=cfg.regularization,
            k_cutoff=cfg.k_cutoff,
            pumped_modes=section.get("pumped_modes"),
            criterion_fraction=float(section.get("criterion_fraction", 0.1)),
            pump_bounds=tuple(section.get("pump_bounds", (1e-9, 1e9))),
            pump_rel_tol=float(section.get("pump_rel_tol", 1e-3)),
        )
        files.append(_write(out_dir, "threshold_scan.csv", scan_to_csv(result)))
        files.append(
            _write(out_dir, "threshold_summary.json", scan_summary_json(result))
        )

    elif name == "oracle-check":
        rates = _assemble(cfg)
        space = FockSpace(n_modes=len(cfg.modes), cutoff=int(cfg.oracle["cutoff"]))
        report = run_oracle_check(
            space,
            rates,
            _oracle_initial(cfg, space),
            t_final=float(cfg.oracle["t_final"]),
            num_samples=int(cfg.oracle.get("num_samples", 20)),
        )
        files.append(
            _write(
                out_dir,
                "oracle_report.json",
                json.dumps(report, sort_keys=True, indent=2) + "\n",
            )
        )

    manifest = {
        "subcommand": name,
        "version": __version__,
        "config_sha256": hashlib.sha256(config_text.encode("utf-8")).hexdigest(),
        "seed": cfg.seed,
        "files": sorted(files),
    }
    files.append(
        _write(out_dir, "manifest.json", json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    )
    return files


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cavtherm",
        description="Photon thermalization rates and kinetics for weakly "
        "coupled molecular microcavities",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="scenario JSON document")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--format", choices=("csv", "json"), default=None)
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config_text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"config error: cannot read {args.config}: {exc}", file=sys.stderr)
        return 2

    effective_text = config_text
    if args.seed is not None:
        if args.seed < 0:
            print("config error: --seed must be non-negative", file=sys.stderr)
            return 2
        try:
            raw = json.loads(config_text)
            raw["seed"] = args.seed
            effective_text = json.dumps(raw)
        except json.JSONDecodeError:
            pass  # let parse_config report the syntax error with position

    try:
        cfg = parse_config(effective_text)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return 2

    try:
        files = run_subcommand(
            args.subcommand, cfg, args.out, fmt=args.format, config_text=config_text
        )
    except UsageError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, ConvergenceError, StiffnessError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    for name in files:
        print(f"wrote {Path(args.out) / name}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
