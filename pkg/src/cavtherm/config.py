"""Scenario configuration: one canonical JSON document.

``parse_config`` validates the whole document before any computation and
reports every problem it finds, not just the first: JSON syntax errors with
line/column, schema violations with the offending key path, and physics
invariants with an explanation.  Unknown keys are rejected everywhere.

Top-level sections (see README for the full schema):

  seed                mandatory integer; seeds all randomness
  modes               {"dispersion": {...}} or {"list": [...]}
  ensemble            homogeneous spec or per-molecule table
  bath                temperature and linewidth parameters
  rates               policy, regularization, optional wavevector bound
  drive               optional pump/loss switches            (evolve)
  integration         time span, tolerances, initial state   (evolve)
  equilibrium         total photon number                    (equilibrium)
  threshold_scan      areas and criterion                    (threshold-scan)
  oracle              Fock cutoff and sampling               (oracle-check)
  output              default export format
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import (
    CavityModeSet,
    CavityMode,
    MolecularEnsemble,
    Molecule,
    SpectralProduct,
    ValidationError,
    VibrationalBath,
    build_planar_dispersion,
    square_k_grid,
)
from .rates import RegularizationPolicy


class ConfigError(ValueError):
    """One or more configuration problems; ``errors`` lists all of them."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ScenarioConfig:
    """A fully validated scenario, ready for any compatible subcommand."""

    seed: int
    modes: CavityModeSet
    ensemble: MolecularEnsemble
    bath: VibrationalBath
    rate_policy: str = "estimate"
    regularization: RegularizationPolicy = field(default_factory=RegularizationPolicy)
    k_cutoff: Optional[float] = None
    drive: Optional[dict] = None
    integration: Optional[dict] = None
    equilibrium: Optional[dict] = None
    threshold_scan: Optional[dict] = None
    oracle: Optional[dict] = None
    output_format: str = "csv"
    raw: dict = field(default_factory=dict, repr=False)


class _Collector:
    def __init__(self):
        self.errors: list[str] = []

    def add(self, path: str, message: str):
        self.errors.append(f"{path}: {message}")

    def check_keys(self, path: str, obj: dict, allowed: set[str], required: set[str] = frozenset()):
        for key in obj:
            if key not in allowed:
                self.add(f"{path}.{key}" if path else key, "unknown key")
        for key in required:
            if key not in obj:
                self.add(f"{path}.{key}" if path else key, "missing required key")

    def number(self, path: str, obj: dict, key: str, *, positive=False,
               nonneg=False, default=None, required=False):
        if key not in obj:
            if required:
                self.add(f"{path}.{key}", "missing required key")
            return default
        v = obj[key]
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            self.add(f"{path}.{key}", f"expected a number, got {type(v).__name__}")
            return default
        if positive and v <= 0:
            self.add(f"{path}.{key}", f"must be > 0, got {v}")
            return default
        if nonneg and v < 0:
            self.add(f"{path}.{key}", f"must be >= 0, got {v}")
            return default
        return float(v)


def _parse_spectral_product(spec: dict, path: str, col: _Collector) -> Optional[SpectralProduct]:
    if not isinstance(spec, dict):
        col.add(path, "expected an object")
        return None
    col.check_keys(path, spec, {"kind", "cutoff", "a2", "value", "omegas", "values"},
                   {"kind"})
    kind = spec.get("kind")
    try:
        if kind == "linewidth_matched":
            return SpectralProduct.linewidth_matched(
                a2=float(spec.get("a2", 0.0)), cutoff=float(spec.get("cutoff", 0.0))
            )
        if kind == "constant":
            return SpectralProduct.constant(
                value=float(spec.get("value", 0.0)), cutoff=float(spec.get("cutoff", 0.0))
            )
        if kind == "tabulated":
            return SpectralProduct.tabulated(
                spec.get("omegas", []), spec.get("values", []),
                cutoff=spec.get("cutoff"),
            )
    except (ValidationError, TypeError, ValueError) as exc:
        col.add(path, str(exc))
        return None
    col.add(f"{path}.kind", f"unknown spectral product kind {kind!r}")
    return None


def _parse_modes(section, col: _Collector) -> Optional[CavityModeSet]:
    path = "modes"
    if not isinstance(section, dict):
        col.add(path, "expected an object")
        return None
    col.check_keys(path, section, {"dispersion", "list"})
    has_disp = "dispersion" in section
    has_list = "list" in section
    if has_disp == has_list:
        col.add(path, "exactly one of 'dispersion' or 'list' is required")
        return None
    if has_disp:
        d = section["dispersion"]
        if not isinstance(d, dict):
            col.add(f"{path}.dispersion", "expected an object")
            return None
        col.check_keys(f"{path}.dispersion", d,
                       {"omega0", "alpha_cav", "rabi", "loss", "k_grid"},
                       {"omega0", "alpha_cav", "rabi", "k_grid"})
        omega0 = col.number(f"{path}.dispersion", d, "omega0", positive=True, required=True)
        alpha = col.number(f"{path}.dispersion", d, "alpha_cav", default=0.0)
        rabi = col.number(f"{path}.dispersion", d, "rabi", nonneg=True, required=True)
        loss = col.number(f"{path}.dispersion", d, "loss", nonneg=True, default=0.0)
        grid_spec = d.get("k_grid")
        grid = None
        if isinstance(grid_spec, dict):
            col.check_keys(f"{path}.dispersion.k_grid", grid_spec,
                           {"points_per_axis", "half_extent"},
                           {"points_per_axis", "half_extent"})
            try:
                grid = square_k_grid(
                    int(grid_spec.get("points_per_axis", 0)),
                    float(grid_spec.get("half_extent", 0.0)),
                )
            except (ValidationError, TypeError, ValueError) as exc:
                col.add(f"{path}.dispersion.k_grid", str(exc))
        elif isinstance(grid_spec, list):
            grid = grid_spec
        else:
            col.add(f"{path}.dispersion.k_grid", "expected an object or a list of pairs")
        if grid is None or omega0 is None or rabi is None:
            return None
        try:
            return build_planar_dispersion(omega0, alpha, grid, rabi, loss)
        except (ValidationError, TypeError, ValueError) as exc:
            col.add(f"{path}.dispersion", str(exc))
            return None
    entries = section["list"]
    if not isinstance(entries, list) or not entries:
        col.add(f"{path}.list", "expected a non-empty list of modes")
        return None
    modes = []
    ok = True
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            col.add(f"{path}.list[{i}]", "expected an object")
            ok = False
            continue
        col.check_keys(f"{path}.list[{i}]", entry,
                       {"id", "energy", "rabi", "loss", "wavevector"},
                       {"id", "energy", "rabi"})
        try:
            modes.append(CavityMode.from_dict(entry))
        except (ValidationError, KeyError, TypeError, ValueError) as exc:
            col.add(f"{path}.list[{i}]", str(exc))
            ok = False
    if not ok:
        return None
    try:
        return CavityModeSet(modes=tuple(sorted(modes, key=lambda m: (m.energy, m.id))))
    except ValidationError as exc:
        col.add(path, str(exc))
        return None


def _parse_ensemble(section, seed: int, col: _Collector) -> Optional[MolecularEnsemble]:
    path = "ensemble"
    if not isinstance(section, dict):
        col.add(path, "expected an object")
        return None
    col.check_keys(path, section,
                   {"homogeneous", "molecules", "molecule_size", "concentration",
                    "area", "disorder"})
    has_homog = "homogeneous" in section
    has_list = "molecules" in section
    if has_homog == has_list:
        col.add(path, "exactly one of 'homogeneous' or 'molecules' is required")
        return None
    size = col.number(path, section, "molecule_size", positive=True, default=10.0)

    def molecule_from(d, mpath) -> Optional[Molecule]:
        if not isinstance(d, dict):
            col.add(mpath, "expected an object")
            return None
        col.check_keys(mpath, d,
                       {"exciton_energy", "spectral_product", "couplings", "phases",
                        "n_molecules"},
                       {"exciton_energy", "spectral_product"})
        exciton = col.number(mpath, d, "exciton_energy", positive=True, required=True)
        sp = _parse_spectral_product(d.get("spectral_product", {}), f"{mpath}.spectral_product", col)
        if exciton is None or sp is None:
            return None
        try:
            return Molecule(
                exciton_energy=exciton,
                vib_spectral_product=sp,
                couplings=d.get("couplings"),
                phases=d.get("phases"),
            )
        except (ValidationError, TypeError, ValueError) as exc:
            col.add(mpath, str(exc))
            return None

    if has_homog:
        h = section["homogeneous"]
        mol = molecule_from(h, f"{path}.homogeneous")
        if mol is None:
            return None
        n_raw = h.get("n_molecules")
        if not isinstance(n_raw, int) or isinstance(n_raw, bool) or n_raw < 1:
            col.add(f"{path}.homogeneous.n_molecules", "expected an integer >= 1")
            return None
        disorder = section.get("disorder")
        molecules = None
        if disorder is not None:
            col.check_keys(f"{path}.disorder", disorder, {"exciton_sigma"}, {"exciton_sigma"})
            sigma = col.number(f"{path}.disorder", disorder, "exciton_sigma",
                               nonneg=True, required=True)
            if sigma is None:
                return None
            if n_raw > 10000:
                col.add(f"{path}.disorder",
                        "disorder expansion limited to 10000 molecules")
                return None
            rng = np.random.default_rng(seed)
            energies = rng.normal(mol.exciton_energy, sigma, size=n_raw)
            try:
                molecules = tuple(
                    Molecule(
                        exciton_energy=float(e),
                        vib_spectral_product=mol.vib_spectral_product,
                        couplings=mol.couplings,
                        phases=mol.phases,
                    )
                    for e in energies
                )
            except ValidationError as exc:
                col.add(f"{path}.disorder", f"sampled molecule invalid: {exc}")
                return None
        try:
            if molecules is not None:
                return MolecularEnsemble.from_molecules(molecules, molecule_size=size)
            return MolecularEnsemble.homogeneous(
                mol,
                n_raw,
                molecule_size=size,
                concentration=section.get("concentration"),
                area=section.get("area"),
            )
        except ValidationError as exc:
            col.add(path, str(exc))
            return None

    entries = section["molecules"]
    if not isinstance(entries, list) or not entries:
        col.add(f"{path}.molecules", "expected a non-empty list")
        return None
    mols = []
    for i, entry in enumerate(entries):
        m = molecule_from(entry, f"{path}.molecules[{i}]")
        if m is not None:
            mols.append(m)
    if len(mols) != len(entries):
        return None
    try:
        return MolecularEnsemble.from_molecules(mols, molecule_size=size)
    except ValidationError as exc:
        col.add(path, str(exc))
        return None


def _parse_bath(section, col: _Collector) -> Optional[VibrationalBath]:
    path = "bath"
    if not isinstance(section, dict):
        col.add(path, "expected an object")
        return None
    col.check_keys(path, section,
                   {"temperature", "mlfv_cutoff", "a2", "gamma0", "slope_c"},
                   {"temperature", "mlfv_cutoff", "a2"})
    t = col.number(path, section, "temperature", positive=True, required=True)
    w = col.number(path, section, "mlfv_cutoff", positive=True, required=True)
    a2 = col.number(path, section, "a2", nonneg=True, required=True)
    g0 = col.number(path, section, "gamma0", nonneg=True, default=0.0)
    c = col.number(path, section, "slope_c", nonneg=True)
    if t is None or w is None or a2 is None:
        return None
    try:
        return VibrationalBath(temperature=t, mlfv_cutoff=w, a2=a2, gamma0=g0, slope_c=c)
    except ValidationError as exc:
        col.add(path, str(exc))
        return None


_INITIAL_KINDS = {"explicit", "uniform", "top", "ground"}


def _validate_integration(section, col: _Collector) -> Optional[dict]:
    path = "integration"
    col.check_keys(path, section,
                   {"t_final", "rel_tol", "abs_tol", "sample_every", "initial"},
                   {"t_final", "initial"})
    col.number(path, section, "t_final", positive=True, required=True)
    col.number(path, section, "rel_tol", positive=True, default=1e-8)
    col.number(path, section, "abs_tol", positive=True, default=1e-12)
    col.number(path, section, "sample_every", positive=True)
    init = section.get("initial")
    if not isinstance(init, dict):
        col.add(f"{path}.initial", "expected an object")
        return section
    col.check_keys(f"{path}.initial", init, {"kind", "occupations", "total"}, {"kind"})
    kind = init.get("kind")
    if kind not in _INITIAL_KINDS:
        col.add(f"{path}.initial.kind", f"expected one of {sorted(_INITIAL_KINDS)}")
    elif kind == "explicit":
        occ = init.get("occupations")
        if not isinstance(occ, list) or any(
            not isinstance(v, (int, float)) or v < 0 for v in occ
        ):
            col.add(f"{path}.initial.occupations", "expected a list of numbers >= 0")
    else:
        col.number(f"{path}.initial", init, "total", positive=True, required=True)
    return section


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a scenario document; raises ConfigError with all problems."""
    col = _Collector()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            [f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}"]
        ) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["top level: expected a JSON object"])

    col.check_keys("", raw,
                   {"seed", "modes", "ensemble", "bath", "rates", "drive",
                    "integration", "equilibrium", "threshold_scan", "oracle",
                    "output"},
                   {"seed", "modes", "ensemble", "bath"})

    seed = raw.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        col.add("seed", "expected a non-negative integer (mandatory)")
        seed = 0

    modes = _parse_modes(raw.get("modes", {}), col) if "modes" in raw else None
    ensemble = (
        _parse_ensemble(raw.get("ensemble", {}), seed, col) if "ensemble" in raw else None
    )
    bath = _parse_bath(raw.get("bath", {}), col) if "bath" in raw else None

    policy = "estimate"
    reg = RegularizationPolicy()
    k_cutoff = None
    if "rates" in raw:
        section = raw["rates"]
        if not isinstance(section, dict):
            col.add("rates", "expected an object")
        else:
            col.check_keys("rates", section, {"policy", "regularization", "k_cutoff"})
            policy = section.get("policy", "estimate")
            if policy not in ("estimate", "microscopic"):
                col.add("rates.policy", f"expected estimate|microscopic, got {policy!r}")
                policy = "estimate"
            if "regularization" in section:
                rsec = section["regularization"]
                if not isinstance(rsec, dict):
                    col.add("rates.regularization", "expected an object")
                else:
                    col.check_keys("rates.regularization", rsec, {"mode", "epsilon"})
                    try:
                        reg = RegularizationPolicy.from_dict(rsec)
                    except ValidationError as exc:
                        col.add("rates.regularization", str(exc))
            k_cutoff = col.number("rates", section, "k_cutoff", positive=True)

    drive = raw.get("drive")
    if drive is not None:
        if not isinstance(drive, dict):
            col.add("drive", "expected an object")
            drive = None
        else:
            col.check_keys("drive", drive,
                           {"pump", "pump_modes", "loss_from_modes",
                            "pump_enabled", "loss_enabled"})
            col.number("drive", drive, "pump", nonneg=True)
            pump_modes = drive.get("pump_modes")
            if pump_modes is not None and (
                not isinstance(pump_modes, list)
                or any(not isinstance(i, int) or isinstance(i, bool) for i in pump_modes)
            ):
                col.add("drive.pump_modes", "expected a list of mode indices")

    integration = raw.get("integration")
    if integration is not None:
        if not isinstance(integration, dict):
            col.add("integration", "expected an object")
            integration = None
        else:
            integration = _validate_integration(integration, col)

    equilibrium = raw.get("equilibrium")
    if equilibrium is not None:
        if not isinstance(equilibrium, dict):
            col.add("equilibrium", "expected an object")
            equilibrium = None
        else:
            col.check_keys("equilibrium", equilibrium, {"n_total"}, {"n_total"})
            col.number("equilibrium", equilibrium, "n_total", positive=True, required=True)

    scan = raw.get("threshold_scan")
    if scan is not None:
        if not isinstance(scan, dict):
            col.add("threshold_scan", "expected an object")
            scan = None
        else:
            col.check_keys("threshold_scan", scan,
                           {"areas", "criterion_fraction", "pumped_modes",
                            "pump_bounds", "pump_rel_tol"},
                           {"areas"})
            areas = scan.get("areas")
            if not isinstance(areas, list) or not areas or any(
                not isinstance(a, (int, float)) or a <= 0 for a in areas
            ):
                col.add("threshold_scan.areas", "expected a non-empty list of areas > 0")
            col.number("threshold_scan", scan, "criterion_fraction", positive=True)

    oracle = raw.get("oracle")
    if oracle is not None:
        if not isinstance(oracle, dict):
            col.add("oracle", "expected an object")
            oracle = None
        else:
            col.check_keys("oracle", oracle,
                           {"cutoff", "t_final", "num_samples", "initial"},
                           {"cutoff", "t_final"})
            cut = oracle.get("cutoff")
            if not isinstance(cut, int) or isinstance(cut, bool) or cut < 1:
                col.add("oracle.cutoff", "expected an integer >= 1")
            col.number("oracle", oracle, "t_final", positive=True, required=True)
            init = oracle.get("initial")
            if init is not None:
                if not isinstance(init, dict):
                    col.add("oracle.initial", "expected an object")
                else:
                    col.check_keys("oracle.initial", init,
                                   {"kind", "occupations", "mu"}, {"kind"})
                    kind = init.get("kind")
                    if kind not in ("fock", "thermal", "shared_photon"):
                        col.add("oracle.initial.kind",
                                "expected fock|thermal|shared_photon")
                    elif kind == "fock":
                        occ = init.get("occupations")
                        if not isinstance(occ, list) or any(
                            not isinstance(v, int) or isinstance(v, bool) or v < 0
                            for v in occ
                        ):
                            col.add("oracle.initial.occupations",
                                    "expected a list of integers >= 0")

    output_format = "csv"
    if "output" in raw:
        out = raw["output"]
        if not isinstance(out, dict):
            col.add("output", "expected an object")
        else:
            col.check_keys("output", out, {"format"})
            output_format = out.get("format", "csv")
            if output_format not in ("csv", "json"):
                col.add("output.format", f"expected csv|json, got {output_format!r}")
                output_format = "csv"

    # cross-section physics checks that need several built objects
    if modes is not None and ensemble is not None:
        w_max = float(modes.energies.max())
        if ensemble.mean_exciton_energy() <= w_max and policy == "estimate":
            col.add(
                "ensemble",
                f"mean exciton energy {ensemble.mean_exciton_energy()} must exceed "
                f"the highest mode energy {w_max} for the estimate policy",
            )
    if modes is not None and integration is not None:
        init = integration.get("initial")
        if isinstance(init, dict) and init.get("kind") == "explicit":
            occ = init.get("occupations")
            if isinstance(occ, list) and len(occ) != len(modes):
                col.add(
                    "integration.initial.occupations",
                    f"length {len(occ)} does not match the {len(modes)} modes",
                )

    if col.errors:
        raise ConfigError(col.errors)

    return ScenarioConfig(
        seed=seed,
        modes=modes,
        ensemble=ensemble,
        bath=bath,
        rate_policy=policy,
        regularization=reg,
        k_cutoff=k_cutoff,
        drive=drive,
        integration=integration,
        equilibrium=equilibrium,
        threshold_scan=scan,
        oracle=oracle,
        output_format=output_format,
        raw=raw,
    )
