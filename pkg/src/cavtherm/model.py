"""Cavity modes, molecular ensembles, and the vibrational bath.

Types here are frozen dataclasses: immutable after construction and safe to
share across threads.  Constructors validate their physical invariants and
raise :class:`ValidationError` on bad input.  Every type round-trips through
``to_dict`` / ``from_dict`` (JSON-compatible payloads), with the single
documented exception of custom spectral-product callables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .constants import KB_MEV_PER_K, thermal_energy


class ValidationError(ValueError):
    """An input violates a type invariant or operation precondition."""


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Planck occupation factor
# ---------------------------------------------------------------------------

def planck_occupation(energy: float, temperature: float) -> float:
    """Thermal occupation 1/(exp(E/kT) - 1) of a bath mode at energy E.

    ``energy`` in meV, ``temperature`` in K.  Both must be positive; the
    divergence as E -> 0 is the caller's concern (see the degeneracy
    regularization in :mod:`cavtherm.rates`).
    """
    if energy <= 0:
        raise ValidationError(f"planck_occupation requires energy > 0, got {energy}")
    if temperature <= 0:
        raise ValidationError(
            f"planck_occupation requires temperature > 0, got {temperature}"
        )
    x = energy / thermal_energy(temperature)
    # expm1 keeps full precision for x << 1 where n ~ 1/x diverges
    return 1.0 / math.expm1(x)


# ---------------------------------------------------------------------------
# Cavity modes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CavityMode:
    """A single photon mode of the cavity.

    ``energy`` is the bare photon energy in meV, ``rabi`` the collective
    light-matter coupling in meV, ``loss`` the cavity dissipation rate in meV
    (0 allowed), and ``wavevector`` an optional in-plane (kx, ky) in 1/um.
    """

    id: int
    energy: float
    rabi: float
    loss: float = 0.0
    wavevector: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if self.energy <= 0:
            raise ValidationError(f"mode {self.id}: energy must be > 0, got {self.energy}")
        if self.rabi < 0:
            raise ValidationError(f"mode {self.id}: rabi must be >= 0, got {self.rabi}")
        if self.loss < 0:
            raise ValidationError(f"mode {self.id}: loss must be >= 0, got {self.loss}")
        if self.wavevector is not None:
            k = tuple(float(c) for c in self.wavevector)
            if len(k) != 2:
                raise ValidationError(f"mode {self.id}: wavevector must be a 2-vector")
            object.__setattr__(self, "wavevector", k)

    def to_dict(self) -> dict:
        d = {"id": self.id, "energy": self.energy, "rabi": self.rabi, "loss": self.loss}
        if self.wavevector is not None:
            d["wavevector"] = list(self.wavevector)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CavityMode":
        wv = d.get("wavevector")
        return cls(
            id=int(d["id"]),
            energy=float(d["energy"]),
            rabi=float(d["rabi"]),
            loss=float(d.get("loss", 0.0)),
            wavevector=tuple(wv) if wv is not None else None,
        )


@dataclass(frozen=True)
class CavityModeSet:
    """An ordered set of cavity modes, sorted by energy ascending.

    ``dispersion_meta`` optionally records the generating dispersion
    (omega0, alpha_cav, grid) when the set was built from a planar model.
    """

    modes: tuple[CavityMode, ...]
    dispersion_meta: Optional[dict] = None

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes:
            raise ValidationError("a CavityModeSet needs at least one mode")
        ids = [m.id for m in modes]
        if len(set(ids)) != len(ids):
            raise ValidationError("mode ids must be unique within a set")
        energies = [m.energy for m in modes]
        if any(b < a for a, b in zip(energies, energies[1:])):
            raise ValidationError("modes must be sorted by energy ascending")
        with_k = sum(m.wavevector is not None for m in modes)
        if with_k not in (0, len(modes)):
            raise ValidationError("either every mode has a wavevector or none does")
        object.__setattr__(self, "modes", modes)

    def __len__(self) -> int:
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    @property
    def energies(self) -> np.ndarray:
        return np.array([m.energy for m in self.modes])

    @property
    def losses(self) -> np.ndarray:
        return np.array([m.loss for m in self.modes])

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(m.id for m in self.modes)

    def has_wavevectors(self) -> bool:
        return self.modes[0].wavevector is not None

    def to_dict(self) -> dict:
        d = {"modes": [m.to_dict() for m in self.modes]}
        if self.dispersion_meta is not None:
            d["dispersion_meta"] = self.dispersion_meta
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CavityModeSet":
        return cls(
            modes=tuple(CavityMode.from_dict(m) for m in d["modes"]),
            dispersion_meta=d.get("dispersion_meta"),
        )


def square_k_grid(points_per_axis: int, half_extent: float) -> list[tuple[float, float]]:
    """Uniform square grid of in-plane wavevectors in [-half_extent, half_extent]^2."""
    if points_per_axis < 1:
        raise ValidationError("points_per_axis must be >= 1")
    if points_per_axis == 1:
        axis = np.array([0.0])
    else:
        axis = np.linspace(-half_extent, half_extent, points_per_axis)
    return [(float(kx), float(ky)) for kx in axis for ky in axis]


def build_planar_dispersion(
    omega0: float,
    alpha_cav: float,
    k_grid: Sequence[tuple[float, float]],
    rabi: float,
    loss: float,
) -> CavityModeSet:
    """Mode set of a planar cavity: energy(k) = omega0 + alpha_cav * |k|^2.

    One mode per grid point, all sharing ``rabi`` and ``loss``; modes are
    sorted by (energy, kx, ky) so the result is independent of grid ordering,
    and ids are assigned 0..M-1 in that order.
    """
    if omega0 <= 0:
        raise ValidationError(f"omega0 must be > 0, got {omega0}")
    points = [tuple(float(c) for c in k) for k in k_grid]
    if not points:
        raise ValidationError("k_grid must be non-empty")
    if len(set(points)) != len(points):
        raise ValidationError("k_grid contains duplicate points")
    entries = sorted(
        (omega0 + alpha_cav * (kx * kx + ky * ky), kx, ky) for kx, ky in points
    )
    modes = tuple(
        CavityMode(id=i, energy=e, rabi=rabi, loss=loss, wavevector=(kx, ky))
        for i, (e, kx, ky) in enumerate(entries)
    )
    meta = {
        "omega0": omega0,
        "alpha_cav": alpha_cav,
        "k_grid": [list(p) for p in points],
        "rabi": rabi,
        "loss": loss,
    }
    return CavityModeSet(modes=modes, dispersion_meta=meta)


# ---------------------------------------------------------------------------
# Vibrational spectral product |Lambda(w)|^2 nu(w)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralProduct:
    """Low-frequency vibrational spectral product of a molecule.

    Maps an energy transfer w (meV) to |Lambda(w)|^2 nu(w) in 1/meV: the
    squared electron-vibration coupling times the vibrational density of
    states.  Zero outside (0, cutoff].  Three declarative kinds serialize;
    ``custom`` wraps an arbitrary callable and does not.

    kinds:
      - ``tabulated``: linear interpolation through (omega, value) samples
      - ``linewidth_matched``: a2 / (cutoff * w^2), the profile whose product
        with w^2 is the constant a2/cutoff extracted from the 0-0 emission
        linewidth temperature slope
      - ``constant``: a flat value on (0, cutoff]
      - ``custom``: user callable (not serializable)
    """

    kind: str
    cutoff: float
    params: dict = field(default_factory=dict)
    fn: Optional[Callable[[float], float]] = None

    def __post_init__(self):
        if self.cutoff <= 0:
            raise ValidationError("spectral product cutoff must be > 0")
        if self.kind not in ("tabulated", "linewidth_matched", "constant", "custom"):
            raise ValidationError(f"unknown spectral product kind {self.kind!r}")
        if self.kind == "custom" and self.fn is None:
            raise ValidationError("custom spectral product needs a callable")

    @classmethod
    def tabulated(cls, omegas, values, cutoff: Optional[float] = None) -> "SpectralProduct":
        om = np.asarray(omegas, dtype=float)
        va = np.asarray(values, dtype=float)
        if om.ndim != 1 or om.shape != va.shape or om.size < 2:
            raise ValidationError("tabulated spectral product needs matching 1-d tables")
        if np.any(np.diff(om) <= 0):
            raise ValidationError("tabulated omegas must be strictly increasing")
        if np.any(va < 0):
            raise ValidationError("spectral product values must be >= 0")
        cut = float(cutoff) if cutoff is not None else float(om[-1])
        return cls(kind="tabulated", cutoff=cut,
                   params={"omegas": om.tolist(), "values": va.tolist()})

    @classmethod
    def linewidth_matched(cls, a2: float, cutoff: float) -> "SpectralProduct":
        if a2 < 0:
            raise ValidationError("a2 must be >= 0")
        return cls(kind="linewidth_matched", cutoff=float(cutoff), params={"a2": float(a2)})

    @classmethod
    def constant(cls, value: float, cutoff: float) -> "SpectralProduct":
        if value < 0:
            raise ValidationError("spectral product value must be >= 0")
        return cls(kind="constant", cutoff=float(cutoff), params={"value": float(value)})

    @classmethod
    def custom(cls, fn: Callable[[float], float], cutoff: float) -> "SpectralProduct":
        return cls(kind="custom", cutoff=float(cutoff), fn=fn)

    def __call__(self, omega: float) -> float:
        if omega <= 0 or omega > self.cutoff:
            return 0.0
        if self.kind == "tabulated":
            return float(np.interp(omega, self.params["omegas"], self.params["values"]))
        if self.kind == "linewidth_matched":
            return self.params["a2"] / (self.cutoff * omega * omega)
        if self.kind == "constant":
            return self.params["value"]
        return float(self.fn(omega))

    def to_dict(self) -> dict:
        if self.kind == "custom":
            raise ValidationError("custom spectral products are not serializable")
        return {"kind": self.kind, "cutoff": self.cutoff, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralProduct":
        return cls(kind=d["kind"], cutoff=float(d["cutoff"]), params=dict(d.get("params", {})))


# ---------------------------------------------------------------------------
# Molecules and ensembles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Molecule:
    """One molecule: exciton energy, per-mode couplings, vibrational spectrum.

    ``couplings[i]``/``phases[i]`` pair with the mode whose id is ``i``
    (sets built by :func:`build_planar_dispersion` number modes 0..M-1).
    ``couplings=None`` means the single-molecule coupling is derived from the
    collective mode coupling as rabi/sqrt(N_mol), the homogeneous convention.
    Phases never enter any rate (moduli only); they are kept for completeness.
    """

    exciton_energy: float
    vib_spectral_product: SpectralProduct
    couplings: Optional[np.ndarray] = None
    phases: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.exciton_energy <= 0:
            raise ValidationError("exciton_energy must be > 0")
        if callable(self.vib_spectral_product) and not isinstance(
            self.vib_spectral_product, SpectralProduct
        ):
            raise ValidationError(
                "wrap bare callables with SpectralProduct.custom(fn, cutoff)"
            )
        if self.couplings is not None:
            arr = _frozen_array(self.couplings)
            if np.any(arr < 0):
                raise ValidationError("couplings must be >= 0")
            object.__setattr__(self, "couplings", arr)
        if self.phases is not None:
            object.__setattr__(self, "phases", _frozen_array(self.phases))
        if (
            self.couplings is not None
            and self.phases is not None
            and self.couplings.shape != self.phases.shape
        ):
            raise ValidationError("couplings and phases must have the same length")

    def coupling_to(self, mode: CavityMode, n_molecules: int) -> float:
        """Single-molecule coupling to ``mode`` in meV."""
        if self.couplings is None:
            return mode.rabi / math.sqrt(n_molecules)
        if mode.id >= len(self.couplings):
            raise ValidationError(
                f"molecule has no coupling entry for mode id {mode.id}"
            )
        return float(self.couplings[mode.id])

    def to_dict(self) -> dict:
        d = {
            "exciton_energy": self.exciton_energy,
            "vib_spectral_product": self.vib_spectral_product.to_dict(),
        }
        if self.couplings is not None:
            d["couplings"] = self.couplings.tolist()
        if self.phases is not None:
            d["phases"] = self.phases.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Molecule":
        return cls(
            exciton_energy=float(d["exciton_energy"]),
            vib_spectral_product=SpectralProduct.from_dict(d["vib_spectral_product"]),
            couplings=d.get("couplings"),
            phases=d.get("phases"),
        )


@dataclass(frozen=True)
class MolecularEnsemble:
    """The molecular film coupled to the cavity.

    Either a homogeneous ensemble (one representative molecule plus a count,
    O(1) memory) or an explicit per-molecule list.  ``molecule_size`` is the
    molecule extent l in nm (sets the default wavevector-transfer bound
    2*pi/l); ``concentration`` (1/um^2) and ``area`` (um^2) are optional
    planar-scenario fields and must satisfy N_mol = round(n_mol * S) when
    both are present.
    """

    molecules: Optional[tuple[Molecule, ...]] = None
    molecule: Optional[Molecule] = None
    n_molecules: Optional[int] = None
    molecule_size: float = 10.0
    concentration: Optional[float] = None
    area: Optional[float] = None

    def __post_init__(self):
        if (self.molecules is None) == (self.molecule is None):
            raise ValidationError(
                "specify either a molecule list or a homogeneous molecule, not both"
            )
        if self.molecules is not None:
            mols = tuple(self.molecules)
            if not mols:
                raise ValidationError("molecule list must be non-empty")
            object.__setattr__(self, "molecules", mols)
            object.__setattr__(self, "n_molecules", len(mols))
        else:
            if self.n_molecules is None or self.n_molecules < 1:
                raise ValidationError("homogeneous ensembles need n_molecules >= 1")
        if self.molecule_size <= 0:
            raise ValidationError("molecule_size must be > 0")
        if self.concentration is not None and self.concentration <= 0:
            raise ValidationError("concentration must be > 0")
        if self.area is not None and self.area <= 0:
            raise ValidationError("area must be > 0")
        if self.concentration is not None and self.area is not None:
            expected = round(self.concentration * self.area)
            if expected != self.n_molecules:
                raise ValidationError(
                    f"n_molecules={self.n_molecules} inconsistent with "
                    f"round(concentration*area)={expected}"
                )

    @classmethod
    def homogeneous(
        cls,
        molecule: Molecule,
        n_molecules: int,
        molecule_size: float = 10.0,
        concentration: Optional[float] = None,
        area: Optional[float] = None,
    ) -> "MolecularEnsemble":
        return cls(
            molecule=molecule,
            n_molecules=n_molecules,
            molecule_size=molecule_size,
            concentration=concentration,
            area=area,
        )

    @classmethod
    def from_molecules(
        cls, molecules: Iterable[Molecule], molecule_size: float = 10.0
    ) -> "MolecularEnsemble":
        return cls(molecules=tuple(molecules), molecule_size=molecule_size)

    @property
    def is_homogeneous(self) -> bool:
        return self.molecule is not None

    def iter_molecules(self) -> Iterable[tuple[Molecule, int]]:
        """Yield (molecule, multiplicity) pairs covering the whole ensemble."""
        if self.is_homogeneous:
            yield self.molecule, self.n_molecules
        else:
            for m in self.molecules:
                yield m, 1

    def mean_exciton_energy(self) -> float:
        if self.is_homogeneous:
            return self.molecule.exciton_energy
        return float(np.mean([m.exciton_energy for m in self.molecules]))

    def wavevector_bound(self) -> float:
        """Default single-hop wavevector transfer bound 2*pi/l in 1/um."""
        return 2.0 * math.pi / (self.molecule_size * 1e-3)

    def to_dict(self) -> dict:
        d: dict = {"molecule_size": self.molecule_size}
        if self.is_homogeneous:
            d["molecule"] = self.molecule.to_dict()
            d["n_molecules"] = self.n_molecules
        else:
            d["molecules"] = [m.to_dict() for m in self.molecules]
        if self.concentration is not None:
            d["concentration"] = self.concentration
        if self.area is not None:
            d["area"] = self.area
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MolecularEnsemble":
        if "molecule" in d:
            return cls(
                molecule=Molecule.from_dict(d["molecule"]),
                n_molecules=int(d["n_molecules"]),
                molecule_size=float(d.get("molecule_size", 10.0)),
                concentration=d.get("concentration"),
                area=d.get("area"),
            )
        return cls(
            molecules=tuple(Molecule.from_dict(m) for m in d["molecules"]),
            molecule_size=float(d.get("molecule_size", 10.0)),
        )


# ---------------------------------------------------------------------------
# Vibrational bath
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VibrationalBath:
    """Thermal reservoir of low-frequency molecular vibrations.

    ``temperature`` in K, ``mlfv_cutoff`` the upper edge of the low-frequency
    band in meV, ``a2`` the squared-linewidth offset in meV^2 and ``slope_c``
    its high-temperature slope in meV^2/K (both from the 0-0 emission line of
    the bare film), ``gamma0`` the inhomogeneous broadening in meV.
    """

    temperature: float
    mlfv_cutoff: float
    a2: float
    gamma0: float = 0.0
    slope_c: Optional[float] = None

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValidationError("temperature must be > 0")
        if self.mlfv_cutoff <= 0:
            raise ValidationError("mlfv_cutoff must be > 0")
        if self.a2 < 0:
            raise ValidationError("a2 must be >= 0")
        if self.gamma0 < 0:
            raise ValidationError("gamma0 must be >= 0")

    @property
    def crossover_temperature(self) -> float:
        """T* = mlfv_cutoff / k_B in K, the linewidth branch switch."""
        return self.mlfv_cutoff / KB_MEV_PER_K

    def occupation(self, energy: float) -> float:
        return planck_occupation(energy, self.temperature)

    def to_dict(self) -> dict:
        d = {
            "temperature": self.temperature,
            "mlfv_cutoff": self.mlfv_cutoff,
            "a2": self.a2,
            "gamma0": self.gamma0,
        }
        if self.slope_c is not None:
            d["slope_c"] = self.slope_c
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VibrationalBath":
        return cls(
            temperature=float(d["temperature"]),
            mlfv_cutoff=float(d["mlfv_cutoff"]),
            a2=float(d["a2"]),
            gamma0=float(d.get("gamma0", 0.0)),
            slope_c=d.get("slope_c"),
        )


class ConfigurationError(ValidationError):
    """A parameter needed by the requested branch or policy is missing."""


def exciton_linewidth(bath: VibrationalBath, temperature: float) -> float:
    """Exciton emission linewidth Gamma_exc(T) in meV.

    Two asymptotic branches, switched hard at T* = mlfv_cutoff/k_B (the
    boundary itself takes the high-T branch): sqrt(gamma0^2 + C*T) above,
    sqrt(gamma0^2 + a2) below.  Near T* both branch values are available via
    :func:`linewidth_diagnostic`; no interpolation is applied.
    """
    if temperature <= 0:
        raise ValidationError("temperature must be > 0")
    if temperature >= bath.crossover_temperature:
        if bath.slope_c is None:
            raise ConfigurationError(
                "slope_c is required for temperatures at or above the crossover "
                f"T* = {bath.crossover_temperature:.2f} K"
            )
        return math.sqrt(bath.gamma0**2 + bath.slope_c * temperature)
    return math.sqrt(bath.gamma0**2 + bath.a2)


def linewidth_diagnostic(bath: VibrationalBath, temperature: float) -> dict:
    """Both linewidth branch values plus which one applies at ``temperature``.

    ``near_crossover`` flags temperatures within 20% of T*, where the hard
    switch is least trustworthy and both values should be inspected.
    """
    t_star = bath.crossover_temperature
    low = math.sqrt(bath.gamma0**2 + bath.a2)
    high = (
        math.sqrt(bath.gamma0**2 + bath.slope_c * temperature)
        if bath.slope_c is not None
        else None
    )
    return {
        "temperature": temperature,
        "crossover_temperature": t_star,
        "branch": "high" if temperature >= t_star else "low",
        "low_branch_value": low,
        "high_branch_value": high,
        "near_crossover": abs(temperature - t_star) <= 0.2 * t_star,
    }


# ---------------------------------------------------------------------------
# Weak-coupling validity report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeCouplingCheck:
    mode_id: int
    rabi_below_broadening: bool
    broadening_below_detuning: bool
    margin_broadening: float
    margin_detuning: float

    @property
    def passed(self) -> bool:
        return self.rabi_below_broadening and self.broadening_below_detuning


@dataclass(frozen=True)
class WeakCouplingReport:
    checks: tuple[ModeCouplingCheck, ...]
    mean_exciton_energy: float

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)


def validate_weak_coupling(
    modes: CavityModeSet, ensemble: MolecularEnsemble, bath: VibrationalBath
) -> WeakCouplingReport:
    """Check Omega_R < max(Gamma_cav, Gamma_0) < omega_exc - omega_cav per mode.

    Uses the ensemble's mean exciton energy.  Report only; inputs are never
    mutated and no exception is raised for failing modes.
    """
    w_exc = ensemble.mean_exciton_energy()
    checks = []
    for m in modes:
        broadening = max(m.loss, bath.gamma0)
        detuning = w_exc - m.energy
        checks.append(
            ModeCouplingCheck(
                mode_id=m.id,
                # zero coupling is trivially weak, whatever the broadening
                rabi_below_broadening=m.rabi == 0.0 or m.rabi < broadening,
                broadening_below_detuning=broadening < detuning,
                margin_broadening=broadening - m.rabi,
                margin_detuning=detuning - broadening,
            )
        )
    return WeakCouplingReport(checks=tuple(checks), mean_exciton_energy=w_exc)
