"""Occupation kinetics under the bosonic thermalization term.

dn_a/dt = sum_b [gamma[a][b] (n_a + 1) n_b - gamma[b][a] (n_b + 1) n_a]
          + pump_a - loss_a n_a

with rates converted meV -> 1/ps and products of mean occupations (the
mean-field closure; the exact two-mode moments are quantified by
:mod:`cavtherm.lindblad`).  The pairwise antisymmetry of the thermalization
fluxes conserves the total photon number, and Runge-Kutta steps preserve
that linear invariant exactly, so zero-drive number drift is pure roundoff.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import RK45

from .constants import MEV_TO_INV_PS, thermal_energy
from .model import CavityModeSet, ValidationError
from .rates import RateMatrix


class StiffnessError(RuntimeError):
    """The adaptive integrator underflowed its step size."""


class ConvergenceError(RuntimeError):
    """The steady-state Newton iteration did not reach its residual target."""

    def __init__(self, message: str, best_residual: float, best_state: np.ndarray):
        super().__init__(message)
        self.best_residual = best_residual
        self.best_state = best_state


@dataclass(frozen=True)
class KineticState:
    """Mode occupations (dimensionless) at a time (ps)."""

    occupations: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        occ = np.asarray(self.occupations, dtype=float)
        if occ.ndim != 1:
            raise ValidationError("occupations must be a 1-d vector")
        if np.any(occ < 0):
            raise ValidationError("occupations must be >= 0")
        occ.setflags(write=False)
        object.__setattr__(self, "occupations", occ)

    @property
    def total(self) -> float:
        return float(self.occupations.sum())


@dataclass(frozen=True)
class DriveSpec:
    """Per-mode pump injection and loss, both in 1/ps."""

    pump: np.ndarray
    loss: np.ndarray
    pump_enabled: bool = True
    loss_enabled: bool = True

    def __post_init__(self):
        pump = np.asarray(self.pump, dtype=float)
        loss = np.asarray(self.loss, dtype=float)
        if pump.shape != loss.shape or pump.ndim != 1:
            raise ValidationError("pump and loss must be 1-d vectors of equal length")
        if np.any(pump < 0) or np.any(loss < 0):
            raise ValidationError("pump and loss entries must be >= 0")
        pump.setflags(write=False)
        loss.setflags(write=False)
        object.__setattr__(self, "pump", pump)
        object.__setattr__(self, "loss", loss)

    @classmethod
    def from_modes(cls, modes: CavityModeSet, pump=None) -> "DriveSpec":
        """Loss taken from the modes (meV -> 1/ps); pump optional (1/ps)."""
        loss = modes.losses * MEV_TO_INV_PS
        if pump is None:
            pump = np.zeros(len(modes))
        return cls(pump=np.asarray(pump, dtype=float), loss=loss)

    @classmethod
    def none(cls, n_modes: int) -> "DriveSpec":
        return cls(pump=np.zeros(n_modes), loss=np.zeros(n_modes))

    def effective_pump(self) -> np.ndarray:
        return self.pump if self.pump_enabled else np.zeros_like(self.pump)

    def effective_loss(self) -> np.ndarray:
        return self.loss if self.loss_enabled else np.zeros_like(self.loss)

    def is_zero(self) -> bool:
        return not (np.any(self.effective_pump()) or np.any(self.effective_loss()))


def _check_dimensions(n: np.ndarray, rates: RateMatrix):
    if n.shape != (len(rates),):
        raise ValidationError(
            f"occupation vector of length {n.shape[0]} does not match "
            f"{len(rates)}-mode rate matrix"
        )


def thermalization_rhs(state: KineticState, rates: RateMatrix) -> np.ndarray:
    """Time derivative of the occupations from thermalization alone, 1/ps."""
    n = state.occupations
    _check_dimensions(n, rates)
    g = rates.gamma * MEV_TO_INV_PS
    return (1.0 + n) * (g @ n) - n * (g.T @ (1.0 + n))


def full_rhs(
    state: KineticState, rates: RateMatrix, drive: Optional[DriveSpec] = None
) -> np.ndarray:
    """Thermalization plus pump and linear loss, 1/ps."""
    out = thermalization_rhs(state, rates)
    if drive is not None:
        _check_dimensions(drive.pump, rates)
        out = out + drive.effective_pump() - drive.effective_loss() * state.occupations
    return out


@dataclass(frozen=True)
class NegativeExcursion:
    """A sampled occupation dipped below -abs_tol before being clipped."""

    time: float
    mode: int
    value: float


@dataclass(frozen=True)
class Trajectory:
    """Sampled occupations n(t); rows of ``occupations`` align with ``times``."""

    times: np.ndarray
    occupations: np.ndarray
    step_count: int
    reached_t_final: bool
    events: tuple[NegativeExcursion, ...] = field(default_factory=tuple)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        occ = np.asarray(self.occupations, dtype=float)
        t.setflags(write=False)
        occ.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "occupations", occ)

    @property
    def final(self) -> KineticState:
        return KineticState(occupations=self.occupations[-1], time=float(self.times[-1]))

    def totals(self) -> np.ndarray:
        return self.occupations.sum(axis=1)


def integrate(
    state: KineticState,
    rates: RateMatrix,
    drive: Optional[DriveSpec] = None,
    t_final: float = 0.0,
    rel_tol: float = 1e-8,
    abs_tol: float = 1e-12,
    sample_every: Optional[float] = None,
    max_steps: Optional[int] = None,
) -> Trajectory:
    """Adaptive RK5(4) integration of the kinetic equation.

    Samples at every accepted step, or on a fixed cadence (dense output)
    when ``sample_every`` is given.  Sampled occupations are clipped at 0;
    an excursion below ``-abs_tol`` is logged as an event.  A failed step
    raises :class:`StiffnessError` (the usual cure is a larger degeneracy
    regularization epsilon, not an implicit method).
    """
    if t_final <= state.time:
        raise ValidationError("t_final must exceed the initial time")
    if rel_tol <= 0 or abs_tol <= 0:
        raise ValidationError("tolerances must be > 0")
    _check_dimensions(state.occupations, rates)
    g = rates.gamma * MEV_TO_INV_PS
    gt = g.T.copy()
    pump = drive.effective_pump() if drive is not None else 0.0
    loss = drive.effective_loss() if drive is not None else None

    def rhs(_t, n):
        out = (1.0 + n) * (g @ n) - n * (gt @ (1.0 + n))
        if drive is not None:
            out += pump
            out -= loss * n
        return out

    solver = RK45(
        rhs, state.time, state.occupations, t_final, rtol=rel_tol, atol=abs_tol
    )
    times = [state.time]
    samples = [np.array(state.occupations)]
    events: list[NegativeExcursion] = []
    sample_index = 1  # next cadence sample is t0 + sample_index * sample_every
    steps = 0

    def record(t, y):
        low = int(np.argmin(y))
        if y[low] < -abs_tol:
            events.append(NegativeExcursion(time=float(t), mode=low, value=float(y[low])))
        times.append(float(t))
        samples.append(np.maximum(y, 0.0))

    while solver.status == "running":
        message = solver.step()
        if solver.status == "failed":
            raise StiffnessError(
                "adaptive step size underflowed; consider a larger "
                f"degeneracy-regularization epsilon ({message})"
            )
        steps += 1
        if sample_every is None:
            record(solver.t, solver.y)
        else:
            dense = solver.dense_output()
            t_next = state.time + sample_index * sample_every
            while t_next <= solver.t * (1 + 1e-14) + 1e-12:
                record(t_next, dense(t_next))
                sample_index += 1
                t_next = state.time + sample_index * sample_every
        if max_steps is not None and steps >= max_steps:
            break

    finished = solver.status == "finished"
    if sample_every is not None:
        # always include the endpoint actually reached
        if not times or times[-1] < solver.t:
            record(solver.t, solver.y)
    elif not finished and (not times or times[-1] < solver.t):
        record(solver.t, solver.y)

    return Trajectory(
        times=np.array(times),
        occupations=np.vstack(samples),
        step_count=steps,
        reached_t_final=finished,
        events=tuple(events),
    )


def _newton_jacobian(n, g, gt, loss):
    gn = g @ n
    gtn = gt @ (1.0 + n)
    jac = (1.0 + n)[:, None] * g - n[:, None] * gt
    jac[np.diag_indices_from(jac)] += gn - gtn - loss
    return jac


def steady_state(
    rates: RateMatrix,
    drive: Optional[DriveSpec] = None,
    n_total: Optional[float] = None,
    initial: Optional[np.ndarray] = None,
    max_iter: int = 200,
    residual_tol: float = 1e-10,
) -> KineticState:
    """Stationary occupations of the kinetic equation.

    Closed system (no drive): the Bose-Einstein vector at the bath
    temperature with the chemical potential fixed by ``n_total`` - the
    unique detailed-balance fixed point.  Open system (drive given):
    damped-Newton solve of ``full_rhs = 0`` to max-norm ``residual_tol``
    in 1/ps.
    """
    if drive is None or drive.is_zero():
        if n_total is None:
            raise ValidationError("closed-system steady state needs n_total")
        from .equilibrium import solve_chemical_potential

        eq = solve_chemical_potential(
            np.array(rates.mode_energies), rates.temperature, n_total
        )
        return KineticState(occupations=eq.occupations, time=0.0)

    g = rates.gamma * MEV_TO_INV_PS
    gt = g.T.copy()
    pump = drive.effective_pump()
    loss = drive.effective_loss()

    def residual(n):
        return (1.0 + n) * (g @ n) - n * (gt @ (1.0 + n)) + pump - loss * n

    if initial is not None:
        n = np.array(initial, dtype=float)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            n = np.where(loss > 0, pump / np.where(loss > 0, loss, 1.0), 1.0)
    n = np.maximum(n, 0.0)

    f = residual(n)
    best = (float(np.max(np.abs(f))), n.copy())
    for _ in range(max_iter):
        norm = float(np.max(np.abs(f)))
        if norm < best[0]:
            best = (norm, n.copy())
        if norm < residual_tol:
            return KineticState(occupations=np.maximum(n, 0.0), time=0.0)
        jac = _newton_jacobian(n, g, gt, loss)
        try:
            delta = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(jac, -f, rcond=None)[0]
        lam = 1.0
        for _ in range(40):
            trial = np.maximum(n + lam * delta, 0.0)
            f_trial = residual(trial)
            if np.max(np.abs(f_trial)) < norm:
                n, f = trial, f_trial
                break
            lam *= 0.5
        else:
            break  # no descent direction left
    norm = float(np.max(np.abs(residual(n))))
    if norm < best[0]:
        best = (norm, n.copy())
    if best[0] < residual_tol:
        return KineticState(occupations=np.maximum(best[1], 0.0), time=0.0)
    raise ConvergenceError(
        f"steady-state Newton stalled at residual {best[0]:.3e} 1/ps "
        f"(target {residual_tol:.1e})",
        best_residual=best[0],
        best_state=best[1],
    )


def free_energy(
    occupations: np.ndarray,
    energies_mev: np.ndarray,
    temperature: float,
    mu: float,
) -> float:
    """Lyapunov diagnostic F = sum (w - mu) n - kT s(n), in meV.

    s(n) = (1 + n) ln(1 + n) - n ln n is the bosonic entropy per mode;
    F is non-increasing along zero-drive trajectories of KMS-consistent
    rate matrices.
    """
    n = np.asarray(occupations, dtype=float)
    w = np.asarray(energies_mev, dtype=float)
    kt = thermal_energy(temperature)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (1.0 + n) * np.log1p(n) - np.where(n > 0, n * np.log(n), 0.0)
    return float(np.sum((w - mu) * n - kt * s))


def trajectory_to_csv(trajectory: Trajectory) -> str:
    """CSV text with columns time_ps, n_0..n_{M-1}, N_total."""
    m = trajectory.occupations.shape[1]
    buf = io.StringIO()
    buf.write("time_ps," + ",".join(f"n_{i}" for i in range(m)) + ",N_total\n")
    for t, row in zip(trajectory.times, trajectory.occupations):
        cells = [format(t, ".17g")]
        cells.extend(format(v, ".17g") for v in row)
        cells.append(format(row.sum(), ".17g"))
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()
