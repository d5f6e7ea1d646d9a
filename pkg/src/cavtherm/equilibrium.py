"""Bose-Einstein equilibrium, condensation figures of merit, area scans.

The chemical potential is found by bisection on the gap x = w_min - mu
rather than on mu itself: the gap keeps full floating-point resolution as
the ground mode becomes macroscopically occupied and mu crawls toward the
ground energy.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .constants import MEV_TO_INV_PS, thermal_energy
from .model import CavityMode, CavityModeSet, MolecularEnsemble, ValidationError, VibrationalBath
from .rates import RateMatrix, RegularizationPolicy, assemble_rate_matrix

MU_SOLVE_RTOL = 1e-10


@dataclass(frozen=True)
class EquilibriumResult:
    """Bose-Einstein occupation vector and the chemical potential behind it."""

    chemical_potential: float
    occupations: np.ndarray
    ground_fraction: float
    converged: bool
    iterations: int

    def __post_init__(self):
        occ = np.asarray(self.occupations, dtype=float)
        occ.setflags(write=False)
        object.__setattr__(self, "occupations", occ)


def bose_einstein_occupations(
    energies: np.ndarray, mu: float, temperature: float
) -> np.ndarray:
    """n_a = 1/(exp((w_a - mu)/kT) - 1); requires mu below every energy."""
    w = np.asarray(energies, dtype=float)
    if mu >= w.min():
        raise ValidationError("chemical potential must lie below every mode energy")
    kt = thermal_energy(temperature)
    with np.errstate(over="ignore"):
        return 1.0 / np.expm1((w - mu) / kt)


def _occupation_sum(energies, w_min, gap, kt) -> float:
    d = (energies - w_min) + gap
    with np.errstate(over="ignore"):
        return float(np.sum(1.0 / np.expm1(d / kt)))


def solve_chemical_potential(
    modes, temperature: float, n_total: float, max_iter: int = 400
) -> EquilibriumResult:
    """Chemical potential such that the Bose-Einstein occupations sum to N.

    ``modes`` is a CavityModeSet or a plain sequence of mode energies (meV).
    The occupation sum is strictly increasing in mu, so bisection converges
    to the unique solution; the residual target is relative 1e-10.
    """
    if n_total <= 0:
        raise ValidationError("n_total must be > 0")
    if isinstance(modes, CavityModeSet):
        energies = modes.energies
    else:
        energies = np.asarray(modes, dtype=float)
    if energies.ndim != 1 or energies.size == 0:
        raise ValidationError("need at least one mode energy")
    kt = thermal_energy(temperature)
    w_min = float(energies.min())

    # bracket the gap: large gap -> dilute, small gap -> condensed
    gap_hi = kt
    it = 0
    while _occupation_sum(energies, w_min, gap_hi, kt) > n_total:
        gap_hi *= 2.0
        it += 1
        if it > 1000:
            raise ValidationError("failed to bracket the chemical potential from below")
    gap_lo = gap_hi / 2.0
    while _occupation_sum(energies, w_min, gap_lo, kt) < n_total:
        gap_lo /= 2.0
        it += 1
        if it > 2000:
            raise ValidationError("failed to bracket the chemical potential from above")

    converged = False
    gap = 0.5 * (gap_lo + gap_hi)
    for _ in range(max_iter):
        it += 1
        gap = 0.5 * (gap_lo + gap_hi)
        total = _occupation_sum(energies, w_min, gap, kt)
        if abs(total - n_total) <= MU_SOLVE_RTOL * n_total:
            converged = True
            break
        if total > n_total:
            gap_lo = gap
        else:
            gap_hi = gap
    mu = w_min - gap
    occ = bose_einstein_occupations(energies, mu, temperature)
    return EquilibriumResult(
        chemical_potential=mu,
        occupations=occ,
        ground_fraction=float(occ[np.argmin(energies)] / occ.sum()),
        converged=converged,
        iterations=it,
    )


def effective_thermalization_rate(rates: RateMatrix, reference: int = 0) -> float:
    """Total in-rate to the reference (ground) mode at unit source occupation.

    sum_b gamma[ref][b], converted to 1/ps: a scalar figure of merit to
    compare against the cavity loss rate.
    """
    if not 0 <= reference < len(rates):
        raise ValidationError(f"reference mode {reference} out of range")
    return float(rates.gamma[reference].sum()) * MEV_TO_INV_PS


# ---------------------------------------------------------------------------
# Threshold scan over illuminated area
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScanPoint:
    area: float
    n_molecules: int
    threshold_pump: float  # dimensionless: injection in units of mode loss
    found: bool


@dataclass(frozen=True)
class ThresholdScanResult:
    points: tuple[ScanPoint, ...]
    exponent: Optional[float]
    r_squared: Optional[float]
    criterion_fraction: float


def _scaled_scenario(modes, ensemble, area):
    """Mode set and ensemble for illuminated area ``area``.

    Molecules are intensive: adding film area at fixed concentration adds
    molecules with unchanged single-molecule coupling, so the collective
    coupling of every mode grows as sqrt(N_mol).
    """
    n_new = max(1, round(ensemble.concentration * area))
    scale = math.sqrt(n_new / ensemble.n_molecules)
    scaled_modes = CavityModeSet(
        modes=tuple(
            CavityMode(
                id=m.id,
                energy=m.energy,
                rabi=m.rabi * scale,
                loss=m.loss,
                wavevector=m.wavevector,
            )
            for m in modes
        )
    )
    scaled_ensemble = MolecularEnsemble.homogeneous(
        ensemble.molecule,
        n_new,
        molecule_size=ensemble.molecule_size,
        concentration=ensemble.concentration,
        area=n_new / ensemble.concentration,
    )
    return scaled_modes, scaled_ensemble, n_new


def threshold_scan(
    modes: CavityModeSet,
    ensemble: MolecularEnsemble,
    bath: VibrationalBath,
    areas: Sequence[float],
    policy: str = "estimate",
    reg: RegularizationPolicy = RegularizationPolicy(),
    k_cutoff: Optional[float] = None,
    pumped_modes: Optional[Sequence[int]] = None,
    criterion_fraction: float = 0.1,
    pump_bounds: tuple[float, float] = (1e-9, 1e9),
    pump_rel_tol: float = 1e-3,
) -> ThresholdScanResult:
    """Threshold pump vs illuminated area at fixed molecular concentration.

    Pump is dimensionless: each pumped mode is injected at ``p`` times its
    own loss rate (so simultaneously rescaling all thermalization rates and
    all losses leaves thresholds unchanged).  The threshold at each area is
    the minimal ``p`` whose steady state puts at least
    ``criterion_fraction`` of all photons in the ground mode; areas where
    the criterion is never bracketed within ``pump_bounds`` are reported as
    not found.  A log-log least-squares fit of threshold vs area gives the
    scaling exponent (undefined with fewer than two found points).
    """
    from .kinetics import ConvergenceError, DriveSpec, steady_state

    if ensemble.concentration is None:
        raise ValidationError("threshold_scan needs an ensemble with concentration set")
    if not ensemble.is_homogeneous:
        raise ValidationError("threshold_scan rescales homogeneous ensembles only")
    if not areas:
        raise ValidationError("need at least one area")
    loss_mev = modes.losses
    if np.any(loss_mev <= 0):
        raise ValidationError("threshold_scan needs every mode lossy (loss > 0)")
    m = len(modes)
    if pumped_modes is None:
        pumped_modes = range(m // 2, m)  # top half of the energy-sorted list
    pump_mask = np.zeros(m)
    for idx in pumped_modes:
        if not 0 <= idx < m:
            raise ValidationError(f"pumped mode index {idx} out of range")
        pump_mask[idx] = 1.0
    if not pump_mask.any():
        raise ValidationError("at least one mode must be pumped")

    loss_ps = loss_mev * MEV_TO_INV_PS

    points = []
    for area in areas:
        scaled_modes, scaled_ensemble, n_new = _scaled_scenario(modes, ensemble, area)
        rates = assemble_rate_matrix(
            scaled_modes, scaled_ensemble, bath, policy=policy, reg=reg, k_cutoff=k_cutoff
        )

        warm: dict[str, Optional[np.ndarray]] = {"n": None}

        def criterion_met(p: float) -> bool:
            drive = DriveSpec(pump=p * loss_ps * pump_mask, loss=loss_ps)
            try:
                st = steady_state(rates, drive, initial=warm["n"])
            except ConvergenceError:
                st = steady_state(rates, drive)  # retry cold
            warm["n"] = st.occupations
            total = st.total
            return total > 0 and st.occupations[0] >= criterion_fraction * total

        p_lo, p_cap = pump_bounds
        if criterion_met(p_lo):
            points.append(ScanPoint(float(area), n_new, math.nan, False))
            continue
        p_hi = p_lo * 10.0
        while p_hi <= p_cap and not criterion_met(p_hi):
            p_lo = p_hi
            p_hi *= 10.0
        if p_hi > p_cap:
            points.append(ScanPoint(float(area), n_new, math.nan, False))
            continue
        while p_hi / p_lo > 1.0 + pump_rel_tol:
            mid = math.sqrt(p_lo * p_hi)
            if criterion_met(mid):
                p_hi = mid
            else:
                p_lo = mid
        points.append(ScanPoint(float(area), n_new, math.sqrt(p_lo * p_hi), True))

    exponent, r_squared = _fit_power_law(points)
    return ThresholdScanResult(
        points=tuple(points),
        exponent=exponent,
        r_squared=r_squared,
        criterion_fraction=criterion_fraction,
    )


def _fit_power_law(points) -> tuple[Optional[float], Optional[float]]:
    found = [(p.area, p.threshold_pump) for p in points if p.found]
    if len(found) < 2:
        return None, None
    logs = np.log([a for a, _ in found])
    logp = np.log([t for _, t in found])
    slope, intercept = np.polyfit(logs, logp, 1)
    pred = slope * logs + intercept
    ss_res = float(np.sum((logp - pred) ** 2))
    ss_tot = float(np.sum((logp - logp.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def scan_to_csv(result: ThresholdScanResult) -> str:
    """CSV with columns area_um2, N_mol, threshold_pump, converged."""
    buf = io.StringIO()
    buf.write("area_um2,N_mol,threshold_pump,converged\n")
    for p in result.points:
        threshold = format(p.threshold_pump, ".17g") if p.found else "nan"
        buf.write(f"{format(p.area, '.17g')},{p.n_molecules},{threshold},{p.found}\n")
    return buf.getvalue()


def scan_summary_json(result: ThresholdScanResult) -> str:
    payload = {
        "criterion_fraction": result.criterion_fraction,
        "exponent": result.exponent,
        "r_squared": result.r_squared,
        "points": [
            {
                "area_um2": p.area,
                "n_molecules": p.n_molecules,
                "threshold_pump": p.threshold_pump if p.found else None,
                "converged": p.found,
            }
            for p in result.points
        ],
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"
