"""Exact few-mode evolution of the thermalization Lindbladian.

Desk-scale oracle for the kinetics module: evolves the photon density
matrix on a Fock-truncated space and measures number conservation,
stationarity of detailed-balance states, and the error of the mean-field
closure used by :mod:`cavtherm.kinetics`.

Conventions fixed here so superoperator matrices are comparable across
implementations:

  - basis ordering: mode 0 is most significant, i.e. the basis index of
    occupations (n_0, .., n_{k-1}) is sum_i n_i * (cutoff+1)^(k-1-i);
  - vectorization: column stacking, vec(rho)[i + j*d] = rho[i, j], under
    which vec(A rho B) = (B^T kron A) vec(rho);
  - the superoperator is real in this basis (ladder operators are real)
    and carries units of 1/ps.

Truncation policy: hard Fock cutoff, no renormalization of boundary
states.  The dissipator built from truncated jump operators stays exactly
trace preserving and number conserving; what degrades near the cutoff is
fidelity to the untruncated dynamics, monitored via the population of
boundary states (any mode at the cutoff).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse
from scipy.sparse.linalg import expm_multiply

from .constants import MEV_TO_INV_PS, thermal_energy
from .model import ValidationError
from .rates import RateMatrix

MAX_DIM = 4096
MAX_MODES = 3


class CutoffSaturationWarning(UserWarning):
    """Boundary-state population grew beyond the trustworthy range."""


@dataclass(frozen=True)
class FockSpace:
    """Truncated product Fock space of up to three photon modes."""

    n_modes: int
    cutoff: int

    def __post_init__(self):
        if not 1 <= self.n_modes <= MAX_MODES:
            raise ValidationError(f"n_modes must be 1..{MAX_MODES}")
        if self.cutoff < 1:
            raise ValidationError("cutoff must be >= 1")
        if self.dim > MAX_DIM:
            raise ValidationError(
                f"truncated dimension {self.dim} exceeds the {MAX_DIM} limit"
            )

    @property
    def dim(self) -> int:
        return (self.cutoff + 1) ** self.n_modes

    def basis_index(self, occupations: Sequence[int]) -> int:
        if len(occupations) != self.n_modes:
            raise ValidationError("occupation tuple length must equal n_modes")
        idx = 0
        for n in occupations:
            if not 0 <= n <= self.cutoff:
                raise ValidationError(f"occupation {n} outside 0..{self.cutoff}")
            idx = idx * (self.cutoff + 1) + int(n)
        return idx

    def occupation_table(self) -> np.ndarray:
        """(dim, n_modes) array: per-mode occupation of every basis state."""
        base = self.cutoff + 1
        idx = np.arange(self.dim)
        cols = []
        for m in range(self.n_modes):
            cols.append((idx // base ** (self.n_modes - 1 - m)) % base)
        return np.stack(cols, axis=1)

    def destroy(self, mode: int) -> np.ndarray:
        """Truncated annihilation operator of ``mode`` (real, dense)."""
        if not 0 <= mode < self.n_modes:
            raise ValidationError(f"mode {mode} out of range")
        base = self.cutoff + 1
        single = np.diag(np.sqrt(np.arange(1, base)), k=1)
        op = np.array([[1.0]])
        for m in range(self.n_modes):
            op = np.kron(op, single if m == mode else np.eye(base))
        return op

    def number(self, mode: int) -> np.ndarray:
        return np.diag(self.occupation_table()[:, mode].astype(float))

    def boundary_mask(self) -> np.ndarray:
        """True for basis states with any mode saturating the cutoff."""
        return np.any(self.occupation_table() == self.cutoff, axis=1)


@dataclass(frozen=True)
class DensityMatrix:
    """Validated photon density matrix on a truncated Fock space."""

    data: np.ndarray

    HERMITICITY_TOL = 1e-12
    TRACE_TOL = 1e-12
    EIGENVALUE_FLOOR = -1e-10

    def __post_init__(self):
        rho = np.asarray(self.data, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValidationError("density matrix must be square")
        herm = np.max(np.abs(rho - rho.conj().T))
        if herm > self.HERMITICITY_TOL:
            raise ValidationError(f"not Hermitian: max asymmetry {herm:.3e}")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > self.TRACE_TOL:
            raise ValidationError(f"trace {tr!r} differs from 1 beyond tolerance")
        low = float(np.min(np.linalg.eigvalsh(rho)))
        if low < self.EIGENVALUE_FLOOR:
            raise ValidationError(f"negative eigenvalue {low:.3e}")
        rho.setflags(write=False)
        object.__setattr__(self, "data", rho)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.data).real)


# ---------------------------------------------------------------------------
# State builders
# ---------------------------------------------------------------------------

def fock_state(space: FockSpace, occupations: Sequence[int]) -> DensityMatrix:
    rho = np.zeros((space.dim, space.dim), dtype=complex)
    i = space.basis_index(occupations)
    rho[i, i] = 1.0
    return DensityMatrix(rho)


def vacuum_state(space: FockSpace) -> DensityMatrix:
    return fock_state(space, [0] * space.n_modes)


def pure_state(space: FockSpace, amplitudes: dict) -> DensityMatrix:
    """Density matrix of sum_occ amp |occ>; amplitudes keyed by tuples."""
    psi = np.zeros(space.dim, dtype=complex)
    for occ, amp in amplitudes.items():
        psi[space.basis_index(occ)] = amp
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ValidationError("state has zero norm")
    psi /= norm
    return DensityMatrix(np.outer(psi, psi.conj()))


def thermal_product_state(
    space: FockSpace, energies_mev: Sequence[float], mu: float, temperature: float
) -> DensityMatrix:
    """Truncated Gibbs-like product state diag ~ exp(-sum (w_a - mu) n_a / kT)."""
    w = np.asarray(energies_mev, dtype=float)
    if w.shape != (space.n_modes,):
        raise ValidationError("one energy per mode required")
    if mu >= w.min():
        raise ValidationError("mu must lie below every mode energy")
    kt = thermal_energy(temperature)
    occ = space.occupation_table()
    log_weights = -(occ @ ((w - mu) / kt))
    weights = np.exp(log_weights - log_weights.max())
    weights /= weights.sum()
    return DensityMatrix(np.diag(weights.astype(complex)))


# ---------------------------------------------------------------------------
# Superoperator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThermalLindbladian:
    """Dense superoperator matrix (column-stacked convention, 1/ps).

    ``matrix`` is the dense representation; a CSR copy is kept alongside
    because the superoperator is extremely sparse and the exponential
    action is orders of magnitude faster on it.
    """

    matrix: np.ndarray
    space: FockSpace
    trace_defect: float  # worst trace production over basis matrices, 1/ps

    def __post_init__(self):
        object.__setattr__(self, "_csr", scipy.sparse.csr_matrix(self.matrix))

    @property
    def sparse(self) -> scipy.sparse.csr_matrix:
        return self._csr

    def apply(self, rho: np.ndarray) -> np.ndarray:
        d = self.space.dim
        vec = np.asarray(rho).flatten(order="F")
        return (self._csr @ vec).reshape((d, d), order="F")


def build_thermal_lindbladian(space: FockSpace, rates: RateMatrix) -> ThermalLindbladian:
    """Assemble sum_ab (gamma_ab/2) [2 C rho C+ - C+C rho - rho C+C].

    with C = a_a^dag a_b, the b -> a transfer matching the rate convention
    of :class:`cavtherm.rates.RateMatrix`.  The matrix acts on column-
    stacked density matrices and is real in the Fock basis.
    """
    if len(rates) != space.n_modes:
        raise ValidationError(
            f"rate matrix has {len(rates)} modes, space has {space.n_modes}"
        )
    d = space.dim
    eye = np.eye(d)
    total = np.zeros((d * d, d * d))
    lowering = [space.destroy(m) for m in range(space.n_modes)]
    g_ps = rates.gamma * MEV_TO_INV_PS
    for a in range(space.n_modes):
        for b in range(space.n_modes):
            if a == b or g_ps[a, b] == 0.0:
                continue
            c = lowering[a].T @ lowering[b]
            ctc = c.T @ c
            total += g_ps[a, b] * (
                np.kron(c, c) - 0.5 * np.kron(eye, ctc) - 0.5 * np.kron(ctc.T, eye)
            )
    trace_vec = eye.flatten(order="F") @ total
    return ThermalLindbladian(
        matrix=total, space=space, trace_defect=float(np.max(np.abs(trace_vec)))
    )


def _superop_operator(superop):
    """Whatever applies fastest: the CSR cache, or a CSR view of a bare matrix."""
    if isinstance(superop, ThermalLindbladian):
        return superop.sparse
    if scipy.sparse.issparse(superop):
        return superop
    return scipy.sparse.csr_matrix(np.asarray(superop))


def boundary_population(rho: DensityMatrix, space: FockSpace) -> float:
    return float(np.real(np.diag(rho.data)[space.boundary_mask()]).sum())


BOUNDARY_WARN_LEVEL = 1e-6


def evolve_exact(
    rho0: DensityMatrix,
    superop,
    t: float,
    space: Optional[FockSpace] = None,
) -> DensityMatrix:
    """Propagate rho0 by exp(L t) via matrix-exponential action.

    ``t`` in ps.  The tiny Hermiticity drift of the exponential action is
    symmetrized away before validation.  When the space is known (passed
    explicitly or carried by the superoperator) a boundary-state population
    above 1e-6 raises :class:`CutoffSaturationWarning`.
    """
    if t < 0:
        raise ValidationError("t must be >= 0")
    if t == 0:
        return rho0
    op = _superop_operator(superop)
    if space is None and isinstance(superop, ThermalLindbladian):
        space = superop.space
    vec = rho0.data.flatten(order="F")
    out = expm_multiply(op * t, vec)
    d = rho0.dim
    rho = out.reshape((d, d), order="F")
    rho = 0.5 * (rho + rho.conj().T)
    result = DensityMatrix(rho)
    if space is not None:
        pop = boundary_population(result, space)
        if pop > BOUNDARY_WARN_LEVEL:
            warnings.warn(
                f"boundary-state population {pop:.3e} exceeds {BOUNDARY_WARN_LEVEL}; "
                "raise the Fock cutoff",
                CutoffSaturationWarning,
            )
    return result


def evolve_trajectory(
    rho0: DensityMatrix, superop, times: Sequence[float], space: Optional[FockSpace] = None
) -> list[DensityMatrix]:
    """States at each time in ``times`` (ascending, starting at >= 0)."""
    ts = list(times)
    if any(b < a for a, b in zip(ts, ts[1:])) or (ts and ts[0] < 0):
        raise ValidationError("times must be ascending and non-negative")
    out = []
    current = rho0
    t_prev = 0.0
    for t in ts:
        current = evolve_exact(current, superop, t - t_prev, space=space)
        t_prev = t
        out.append(current)
    return out


# ---------------------------------------------------------------------------
# Observables
# ---------------------------------------------------------------------------

def mode_occupations(rho: DensityMatrix, space: FockSpace) -> np.ndarray:
    """Vector of <n_a>."""
    diag = np.real(np.diag(rho.data))
    return diag @ space.occupation_table()


def pair_moments(rho: DensityMatrix, space: FockSpace) -> np.ndarray:
    """Matrix of <n_a n_b> (diagonal holds <n_a^2>)."""
    diag = np.real(np.diag(rho.data))
    occ = space.occupation_table().astype(float)
    return (occ * diag[:, None]).T @ occ


def total_photon_number(rho: DensityMatrix, space: FockSpace) -> float:
    return float(mode_occupations(rho, space).sum())


# ---------------------------------------------------------------------------
# Closure error of the mean-field kinetics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClosureReport:
    """Exact vs mean-field occupation derivatives along a trajectory.

    ``exact`` uses the correlated second moments of the evolved density
    matrix; ``meanfield`` replaces them with products of mean occupations,
    exactly as the kinetics module does.  Everything in 1/ps.
    """

    times: np.ndarray
    exact: np.ndarray       # (n_times, n_modes)
    meanfield: np.ndarray   # (n_times, n_modes)

    @property
    def absolute_discrepancy(self) -> np.ndarray:
        return np.abs(self.exact - self.meanfield)

    @property
    def relative_discrepancy(self) -> np.ndarray:
        scale = np.maximum(np.abs(self.exact), 1e-300)
        return self.absolute_discrepancy / scale

    def to_json(self) -> str:
        payload = {
            "times_ps": self.times.tolist(),
            "exact_dn_dt": self.exact.tolist(),
            "meanfield_dn_dt": self.meanfield.tolist(),
            "absolute_discrepancy": self.absolute_discrepancy.tolist(),
            "relative_discrepancy": self.relative_discrepancy.tolist(),
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def moment_derivatives(
    rho: DensityMatrix, rates: RateMatrix, space: FockSpace
) -> tuple[np.ndarray, np.ndarray]:
    """(exact, meanfield) d<n_a>/dt in 1/ps for one state."""
    g = rates.gamma * MEV_TO_INV_PS
    nbar = mode_occupations(rho, space)
    pm = pair_moments(rho, space)
    m = space.n_modes
    exact = np.zeros(m)
    mean = np.zeros(m)
    for a in range(m):
        for b in range(m):
            if a == b:
                continue
            exact[a] += g[a, b] * (pm[a, b] + nbar[b]) - g[b, a] * (pm[a, b] + nbar[a])
            mean[a] += g[a, b] * (nbar[a] + 1.0) * nbar[b] - g[b, a] * (nbar[b] + 1.0) * nbar[a]
    return exact, mean


def closure_error(
    states: Sequence[DensityMatrix],
    times: Sequence[float],
    rates: RateMatrix,
    space: FockSpace,
) -> ClosureReport:
    """Per-time closure report for a trajectory from :func:`evolve_trajectory`."""
    if len(states) != len(times):
        raise ValidationError("one state per time required")
    exact_rows, mean_rows = [], []
    for rho in states:
        e, mf = moment_derivatives(rho, rates, space)
        exact_rows.append(e)
        mean_rows.append(mf)
    return ClosureReport(
        times=np.asarray(times, dtype=float),
        exact=np.vstack(exact_rows),
        meanfield=np.vstack(mean_rows),
    )


def run_oracle_check(
    space: FockSpace,
    rates: RateMatrix,
    rho0: DensityMatrix,
    t_final: float,
    num_samples: int = 20,
) -> dict:
    """Evolve, then report conservation and closure diagnostics as a dict.

    The report carries per-time trace, total photon number, boundary
    population, and the closure table; drift entries are relative to t=0.
    """
    if num_samples < 2:
        raise ValidationError("num_samples must be >= 2")
    superop = build_thermal_lindbladian(space, rates)
    times = np.linspace(0.0, t_final, num_samples)
    states = [rho0] + evolve_trajectory(rho0, superop, times[1:], space=space)
    traces = [s.trace() for s in states]
    totals = [total_photon_number(s, space) for s in states]
    boundary = [boundary_population(s, space) for s in states]
    report = closure_error(states, times, rates, space)
    n0 = totals[0] if totals[0] != 0 else 1.0
    return {
        "times_ps": [float(t) for t in times],
        "trace": traces,
        "trace_drift": max(abs(tr - traces[0]) for tr in traces),
        "total_photons": totals,
        "photon_number_drift": max(abs(n - totals[0]) for n in totals) / abs(n0),
        "boundary_population": boundary,
        "superoperator_trace_defect": superop.trace_defect,
        "closure": json.loads(report.to_json()),
    }
