"""Pairwise photon thermalization rate matrices.

Index convention: ``gamma[a][b]`` is the rate (in meV) of the b -> a transfer
process, i.e. it multiplies ``(n_a + 1) * n_b`` in the kinetic gain term.
For a pair with mode b above mode a in energy, ``gamma[a][b]`` is the
downward rate (a vibration is emitted into the bath, Planck factor 1 + n)
and ``gamma[b][a]`` the upward rate, fixed by detailed balance as the
downward rate times exp(-(w_b - w_a)/kT).

Assembly applies three filters to every unordered pair, recorded in
``cutoff_record``:

  - energy cutoff: pairs separated by more than the low-frequency
    vibrational band edge carry zero rate (no bath mode can absorb the
    mismatch);
  - wavevector cutoff: pairs whose in-plane wavevector distance exceeds the
    single-hop bound (default 2*pi/molecule_size) carry zero rate.  Note the
    bound is taken as configured input: for a 10 nm molecule 2*pi/l is
    628 1/um, although a bound of ~50 1/um is also quoted in the literature
    for the same size; the arithmetic discrepancy is left to the caller.
  - degeneracy regularization: the upward/downward rates diverge like the
    Planck factor as the pair splitting goes to zero.  FLOOR evaluates both
    directions at the splitting clamped to eps_deg (detailed balance then
    holds at the clamped splitting, which is what the KMS invariant checks
    for such pairs); ZERO drops the pair.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .constants import thermal_energy
from .model import (
    CavityMode,
    CavityModeSet,
    MolecularEnsemble,
    ValidationError,
    VibrationalBath,
    planck_occupation,
)

KMS_RTOL = 1e-12

# cutoff_record reasons
ENERGY_CUTOFF = "energy-cutoff"
WAVEVECTOR_CUTOFF = "wavevector-cutoff"
DEGENERACY_FLOOR = "degeneracy-floor"
DEGENERACY_ZERO = "degeneracy-zero"


class ResonanceError(ValidationError):
    """A molecule's exciton is exactly resonant with a cavity mode."""


class DetuningError(ValidationError):
    """The mean exciton energy does not lie above both mode energies."""


@dataclass(frozen=True)
class RegularizationPolicy:
    """How near-degenerate pairs (splitting below ``epsilon``) are handled.

    ``epsilon=None`` defaults to mlfv_cutoff/1000 at assembly time.
    ``mode`` is "floor" (evaluate at the clamped splitting) or "zero".
    """

    mode: str = "floor"
    epsilon: Optional[float] = None

    def __post_init__(self):
        if self.mode not in ("floor", "zero"):
            raise ValidationError(f"regularization mode must be floor|zero, got {self.mode!r}")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValidationError("regularization epsilon must be > 0")

    def resolve_epsilon(self, mlfv_cutoff: float) -> float:
        return self.epsilon if self.epsilon is not None else mlfv_cutoff / 1000.0

    def to_dict(self) -> dict:
        return {"mode": self.mode, "epsilon": self.epsilon}

    @classmethod
    def from_dict(cls, d: dict) -> "RegularizationPolicy":
        return cls(mode=d.get("mode", "floor"), epsilon=d.get("epsilon"))


@dataclass(frozen=True)
class PairCutoff:
    """One zeroed or regularized pair: sorted indices plus the reason."""

    alpha: int  # index of the lower-energy mode in the matrix ordering
    beta: int   # index of the higher-energy mode
    reason: str
    delta_energy: float
    effective_delta: Optional[float] = None  # clamped splitting for floored pairs
    k_distance: Optional[float] = None

    def to_dict(self) -> dict:
        d = {
            "alpha": self.alpha,
            "beta": self.beta,
            "reason": self.reason,
            "delta_energy": self.delta_energy,
        }
        if self.effective_delta is not None:
            d["effective_delta"] = self.effective_delta
        if self.k_distance is not None:
            d["k_distance"] = self.k_distance
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PairCutoff":
        return cls(
            alpha=int(d["alpha"]),
            beta=int(d["beta"]),
            reason=d["reason"],
            delta_energy=float(d["delta_energy"]),
            effective_delta=d.get("effective_delta"),
            k_distance=d.get("k_distance"),
        )


@dataclass(frozen=True)
class RateMatrix:
    """M x M thermalization rates in meV plus the metadata to verify them.

    ``mode_ids``/``mode_energies`` mirror the generating CavityModeSet order;
    ``temperature`` is the bath temperature the detailed-balance structure
    refers to; ``source`` is "microscopic" or "estimate".
    """

    gamma: np.ndarray
    mode_ids: tuple[int, ...]
    mode_energies: tuple[float, ...]
    temperature: float
    source: str
    cutoff_record: tuple[PairCutoff, ...] = field(default_factory=tuple)

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        m = len(self.mode_ids)
        if g.shape != (m, m):
            raise ValidationError(f"gamma must be {m}x{m}, got {g.shape}")
        if len(self.mode_energies) != m:
            raise ValidationError("mode_energies length must match gamma")
        if np.any(g < 0):
            raise ValidationError("rates must be >= 0")
        if np.any(np.diag(g) != 0):
            raise ValidationError("diagonal rates must be 0")
        if np.any((g == 0) != (g.T == 0)):
            raise ValidationError("zeroed pairs must be symmetric")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "mode_ids", tuple(self.mode_ids))
        object.__setattr__(self, "mode_energies", tuple(float(e) for e in self.mode_energies))
        object.__setattr__(self, "cutoff_record", tuple(self.cutoff_record))
        object.__setattr__(
            self,
            "_floor_map",
            {
                (r.alpha, r.beta): r.effective_delta
                for r in self.cutoff_record
                if r.reason == DEGENERACY_FLOOR
            },
        )
        res = kms_residual(self)
        if res > KMS_RTOL:
            raise ValidationError(f"detailed balance violated: residual {res:.3e}")

    def __len__(self) -> int:
        return len(self.mode_ids)

    def pair_delta(self, i: int, j: int) -> float:
        """Effective splitting for the sorted pair (i, j), honoring FLOOR clamps."""
        lo, hi = (i, j) if self.mode_energies[i] <= self.mode_energies[j] else (j, i)
        clamped = self._floor_map.get((lo, hi))
        if clamped is not None:
            return clamped
        return self.mode_energies[hi] - self.mode_energies[lo]

    def nonzero_pairs(self) -> list[tuple[int, int]]:
        """Sorted (lower, upper) index pairs carrying nonzero rate."""
        m = len(self)
        return [(i, j) for i in range(m) for j in range(i + 1, m) if self.gamma[i, j] != 0]

    def to_dict(self) -> dict:
        return {
            "gamma": [[format(v, ".17g") for v in row] for row in self.gamma],
            "mode_ids": list(self.mode_ids),
            "mode_energies": list(self.mode_energies),
            "temperature": self.temperature,
            "source": self.source,
            "cutoff_record": [r.to_dict() for r in self.cutoff_record],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RateMatrix":
        gamma = np.array([[float(v) for v in row] for row in d["gamma"]])
        return cls(
            gamma=gamma,
            mode_ids=tuple(int(i) for i in d["mode_ids"]),
            mode_energies=tuple(float(e) for e in d["mode_energies"]),
            temperature=float(d["temperature"]),
            source=d["source"],
            cutoff_record=tuple(PairCutoff.from_dict(r) for r in d.get("cutoff_record", [])),
        )


def kms_residual(rates: RateMatrix) -> float:
    """Worst relative detailed-balance violation over stored nonzero pairs.

    Each pair is checked at its effective splitting (the clamped value for
    FLOOR-regularized pairs): |gamma_up - gamma_down * exp(-d/kT)| relative
    to the downward rate.
    """
    kt = thermal_energy(rates.temperature)
    worst = 0.0
    for i, j in rates.nonzero_pairs():
        down = rates.gamma[i, j]
        up = rates.gamma[j, i]
        expected_up = down * math.exp(-rates.pair_delta(i, j) / kt)
        worst = max(worst, abs(up - expected_up) / down)
    return worst


# ---------------------------------------------------------------------------
# Pair rates
# ---------------------------------------------------------------------------

def kms_complete(down_rate: float, delta_energy: float, temperature: float) -> float:
    """Upward rate implied by the downward one: down * exp(-d/kT)."""
    if down_rate < 0:
        raise ValidationError("down_rate must be >= 0")
    if delta_energy <= 0:
        raise ValidationError("delta_energy must be > 0")
    return down_rate * math.exp(-delta_energy / thermal_energy(temperature))


def microscopic_pair_rate(
    alpha: CavityMode,
    beta: CavityMode,
    ensemble: MolecularEnsemble,
    bath: VibrationalBath,
    delta_energy: Optional[float] = None,
) -> float:
    """Downward rate from the per-molecule sum, in meV (requires w_b > w_a).

    2*pi * sum_m dw^2 |O_a|^2 |O_b|^2 / ((w_exc - w_b)^2 (w_exc - w_a)^2)
         * spectral_product(dw) * (1 + n_vib(dw))

    ``delta_energy`` overrides the splitting entering the dw-dependent
    factors (used by the FLOOR regularization); the detuning denominators
    always use the actual mode energies.  Phases never enter.
    """
    dw = beta.energy - alpha.energy if delta_energy is None else delta_energy
    if dw <= 0:
        raise ValidationError(
            f"microscopic_pair_rate needs w_beta > w_alpha, got splitting {dw}"
        )
    occ = 1.0 + planck_occupation(dw, bath.temperature)
    total = 0.0
    for idx, (mol, mult) in enumerate(ensemble.iter_molecules()):
        for mode in (alpha, beta):
            if mol.exciton_energy == mode.energy:
                raise ResonanceError(
                    f"molecule {idx} is resonant with mode {mode.id} "
                    f"at {mode.energy} meV"
                )
        o_a = mol.coupling_to(alpha, ensemble.n_molecules)
        o_b = mol.coupling_to(beta, ensemble.n_molecules)
        if o_a == 0.0 or o_b == 0.0:
            continue
        det = (mol.exciton_energy - beta.energy) ** 2 * (mol.exciton_energy - alpha.energy) ** 2
        total += (
            mult * dw * dw * o_a * o_a * o_b * o_b / det * mol.vib_spectral_product(dw)
        )
    return 2.0 * math.pi * total * occ


def estimated_pair_rate(
    alpha: CavityMode,
    beta: CavityMode,
    mean_exciton: float,
    n_molecules: int,
    bath: VibrationalBath,
    delta_energy: Optional[float] = None,
) -> tuple[float, float]:
    """(down, up) estimate rates in meV from macroscopic parameters only.

    down = 2*pi * a2 |O_Ra|^2 |O_Rb|^2 (1 + n_vib(dw))
           / (N_mol * mlfv_cutoff * (w_exc - w_b)^2 (w_exc - w_a)^2)

    and up carries n_vib in place of 1 + n_vib.  Requires w_b > w_a and the
    mean exciton energy above the upper mode.
    """
    dw = beta.energy - alpha.energy if delta_energy is None else delta_energy
    if dw <= 0:
        raise ValidationError(
            f"estimated_pair_rate needs w_beta > w_alpha, got splitting {dw}"
        )
    if mean_exciton <= beta.energy:
        raise DetuningError(
            f"mean exciton energy {mean_exciton} must exceed the upper mode "
            f"energy {beta.energy}"
        )
    if n_molecules < 1:
        raise ValidationError("n_molecules must be >= 1")
    n = planck_occupation(dw, bath.temperature)
    det = (mean_exciton - beta.energy) ** 2 * (mean_exciton - alpha.energy) ** 2
    base = (
        2.0
        * math.pi
        * bath.a2
        * alpha.rabi**2
        * beta.rabi**2
        / (n_molecules * bath.mlfv_cutoff * det)
    )
    return base * (1.0 + n), base * n


def _pair_down_rate(alpha, beta, ensemble, bath, policy, dw) -> float:
    if policy == "estimate":
        down, _ = estimated_pair_rate(
            alpha, beta, ensemble.mean_exciton_energy(), ensemble.n_molecules,
            bath, delta_energy=dw,
        )
        return down
    return microscopic_pair_rate(alpha, beta, ensemble, bath, delta_energy=dw)


def regularize_degenerate(
    alpha: CavityMode,
    beta: CavityMode,
    ensemble: MolecularEnsemble,
    bath: VibrationalBath,
    policy: str,
    reg: RegularizationPolicy,
) -> tuple[float, float]:
    """(down, up) for a near-degenerate pair, per the regularization policy.

    FLOOR evaluates both directions at the splitting clamped to epsilon, so
    detailed balance holds at the clamped value; ZERO returns (0, 0).
    """
    eps = reg.resolve_epsilon(bath.mlfv_cutoff)
    if reg.mode == "zero":
        return 0.0, 0.0
    down = _pair_down_rate(alpha, beta, ensemble, bath, policy, eps)
    return down, kms_complete(down, eps, bath.temperature)


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

def assemble_rate_matrix(
    modes: CavityModeSet,
    ensemble: MolecularEnsemble,
    bath: VibrationalBath,
    policy: str = "estimate",
    reg: RegularizationPolicy = RegularizationPolicy(),
    k_cutoff: Optional[float] = None,
) -> RateMatrix:
    """Assemble the full pairwise rate matrix for a scenario.

    ``policy`` selects the downward-rate formula ("microscopic" per-molecule
    sum or macroscopic "estimate"); the upward direction always follows from
    detailed balance.  ``k_cutoff`` (1/um) overrides the wavevector bound;
    the default is 2*pi/molecule_size when the modes carry wavevectors.
    """
    if policy not in ("microscopic", "estimate"):
        raise ValidationError(f"policy must be microscopic|estimate, got {policy!r}")
    mode_list = list(modes)
    m = len(mode_list)
    eps = reg.resolve_epsilon(bath.mlfv_cutoff)
    use_k = modes.has_wavevectors()
    k_bound = k_cutoff if k_cutoff is not None else (
        ensemble.wavevector_bound() if use_k else None
    )
    kt = thermal_energy(bath.temperature)

    gamma = np.zeros((m, m))
    record: list[PairCutoff] = []
    for i in range(m):
        for j in range(i + 1, m):
            lo, hi = mode_list[i], mode_list[j]
            dw = hi.energy - lo.energy
            if dw > bath.mlfv_cutoff:
                record.append(PairCutoff(i, j, ENERGY_CUTOFF, dw))
                continue
            if use_k:
                dk = math.dist(lo.wavevector, hi.wavevector)
                if dk > k_bound:
                    record.append(PairCutoff(i, j, WAVEVECTOR_CUTOFF, dw, k_distance=dk))
                    continue
            if dw < eps:
                if reg.mode == "zero":
                    record.append(PairCutoff(i, j, DEGENERACY_ZERO, dw))
                    continue
                try:
                    down, up = regularize_degenerate(lo, hi, ensemble, bath, policy, reg)
                except ValidationError as exc:
                    raise type(exc)(f"pair ({lo.id}, {hi.id}): {exc}") from exc
                record.append(
                    PairCutoff(i, j, DEGENERACY_FLOOR, dw, effective_delta=eps)
                )
                gamma[i, j] = down
                gamma[j, i] = up
                continue
            try:
                down = _pair_down_rate(lo, hi, ensemble, bath, policy, dw)
            except ValidationError as exc:
                raise type(exc)(f"pair ({lo.id}, {hi.id}): {exc}") from exc
            gamma[i, j] = down
            gamma[j, i] = down * math.exp(-dw / kt)

    return RateMatrix(
        gamma=gamma,
        mode_ids=modes.ids,
        mode_energies=tuple(m_.energy for m_ in mode_list),
        temperature=bath.temperature,
        source=policy,
        cutoff_record=tuple(record),
    )


def enumerate_cut_pairs(
    modes: CavityModeSet,
    bath: VibrationalBath,
    reg: RegularizationPolicy = RegularizationPolicy(),
    k_cutoff: Optional[float] = None,
    molecule_size: Optional[float] = None,
) -> dict[str, set[tuple[int, int]]]:
    """Which sorted index pairs each filter removes or regularizes.

    Pure enumeration over the mode set (no rate evaluation); applies the
    same precedence as assembly: energy cutoff, then wavevector cutoff,
    then degeneracy handling.
    """
    eps = reg.resolve_epsilon(bath.mlfv_cutoff)
    use_k = modes.has_wavevectors()
    if k_cutoff is None and use_k:
        if molecule_size is None:
            raise ValidationError("need k_cutoff or molecule_size for wavevector sets")
        k_cutoff = 2.0 * math.pi / (molecule_size * 1e-3)
    mode_list = list(modes)
    out = {ENERGY_CUTOFF: set(), WAVEVECTOR_CUTOFF: set(), DEGENERACY_FLOOR: set(),
           DEGENERACY_ZERO: set()}
    for i in range(len(mode_list)):
        for j in range(i + 1, len(mode_list)):
            dw = mode_list[j].energy - mode_list[i].energy
            if dw > bath.mlfv_cutoff:
                out[ENERGY_CUTOFF].add((i, j))
            elif use_k and math.dist(mode_list[i].wavevector, mode_list[j].wavevector) > k_cutoff:
                out[WAVEVECTOR_CUTOFF].add((i, j))
            elif dw < eps:
                key = DEGENERACY_ZERO if reg.mode == "zero" else DEGENERACY_FLOOR
                out[key].add((i, j))
    return out


# ---------------------------------------------------------------------------
# Export / import
# ---------------------------------------------------------------------------

def rate_matrix_to_csv(rates: RateMatrix) -> str:
    """CSV text: header of mode ids, one row per alpha, 17-digit decimals."""
    buf = io.StringIO()
    ids = rates.mode_ids
    buf.write("mode_id," + ",".join(str(i) for i in ids) + "\n")
    for i, row in enumerate(rates.gamma):
        buf.write(str(ids[i]) + "," + ",".join(format(v, ".17g") for v in row) + "\n")
    return buf.getvalue()


def rate_matrix_from_csv(text: str, rates_like: RateMatrix) -> np.ndarray:
    """Parse a matrix exported by :func:`rate_matrix_to_csv`.

    Returns the gamma array; ``rates_like`` supplies the expected ids for
    validation (the CSV carries no KMS metadata).
    """
    lines = [ln for ln in text.strip().split("\n")]
    header = lines[0].split(",")
    ids = tuple(int(x) for x in header[1:])
    if ids != rates_like.mode_ids:
        raise ValidationError("CSV mode ids do not match")
    rows = []
    for ln in lines[1:]:
        cells = ln.split(",")
        rows.append([float(c) for c in cells[1:]])
    return np.array(rows)


def rate_matrix_to_json(rates: RateMatrix) -> str:
    """JSON variant carrying the cutoff record and KMS metadata."""
    return json.dumps(rates.to_dict(), sort_keys=True, indent=2) + "\n"


def rate_matrix_from_json(text: str) -> RateMatrix:
    return RateMatrix.from_dict(json.loads(text))
