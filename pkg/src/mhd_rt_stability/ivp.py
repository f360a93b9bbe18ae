"""
Crank-Nicolson integration of the linearized system for one wavevector.

In reduced coordinates the system reads

    eta' = u
    J2 u' = -A1 u - A0 eta + f(t)

with ``(J2, A1, A0) = (2J, 2E1, 2E0)``. The midpoint rule makes the energy
``u^H J u + eta^H E0 eta`` drop by exactly ``dt u_m^H A1 u_m`` per step
(plus the work of the forcing), up to the accuracy of the linear solve.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, lu_factor, lu_solve

from .chebgrid import TwoLayerGrid
from .exceptions import ConvergenceError, InvalidInputError, MHDStabilityError
from .forms import QuadForms, assemble_forms, quadratic_value
from .growthrate import fixed_point
from .model import FluidParams, MagneticField

logger = logging.getLogger(__name__)

LEDGER_COLUMNS = [
    "t",
    "kinetic",
    "magnetic",
    "surface",
    "dissipation_integral",
    "u_norm",
]
RESIDUAL_COLUMNS = ["viscous_eta", "interactive", "balance"]
MIN_FIT_SAMPLES = 10
REFINEMENT_DRIFT_TOL = 0.05

Forcing = Union[Callable[[float], np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ModeState:
    """Displacement and velocity in reduced coordinates at time ``t``."""

    eta: np.ndarray
    u: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        eta = np.asarray(self.eta, dtype=complex)
        u = np.asarray(self.u, dtype=complex)
        if eta.shape != u.shape or eta.ndim != 1:
            raise InvalidInputError(f"eta {eta.shape} and u {u.shape} must be matching vectors")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "u", u)


@dataclass
class EnergyLedger:
    """
    Energy terms per sample.

    ``interactive`` and ``balance`` hold the per-step residuals of the
    discrete interactive identity and of the energy balance; they are 0 for
    the initial sample.
    """

    rows: List[Dict[str, float]] = field(default_factory=list)

    def append(self, **values: float) -> None:
        self.rows.append(values)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def to_frame(self, residuals: bool = False) -> pd.DataFrame:
        """The ledger columns, followed by the residual columns when asked for."""
        columns = LEDGER_COLUMNS + RESIDUAL_COLUMNS if residuals else LEDGER_COLUMNS
        return pd.DataFrame(self.rows, columns=columns)

    @property
    def energy(self) -> np.ndarray:
        """Natural energy kinetic + magnetic - surface."""
        return self.column("kinetic") + self.column("magnetic") - self.column("surface")


@dataclass(frozen=True)
class Trajectory:
    states: List[ModeState]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def __len__(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class ForcedGrowthReport:
    """Weighted velocity supremum of a forced run and its refinement drift."""

    lam: float
    weighted_sup: float
    refined_sup: float
    drift: float
    forcing_sup: float
    forcing_weighted_integral: float
    initial_norm: float

    @property
    def stable_under_refinement(self) -> bool:
        return self.drift <= REFINEMENT_DRIFT_TOL


class CrankNicolson:
    """
    Midpoint stepper for fixed forms and time step.

    Eliminating ``eta+ = eta + dt (u + u+) / 2`` leaves one solve per step
    with ``J2 + dt/2 A1 + dt^2/4 A0``, factored once.
    """

    def __init__(self, forms: QuadForms, dt: float):
        if not dt > 0:
            raise InvalidInputError(f"dt must be positive, got: {dt}")
        self.forms = forms
        self.dt = dt
        self.j2 = 2.0 * forms.J
        self.a1 = 2.0 * forms.E1
        self.a0 = 2.0 * forms.E0
        system = self.j2 + 0.5 * dt * self.a1 + 0.25 * dt**2 * self.a0
        try:
            self._lu = lu_factor(system)
        except (LinAlgError, ValueError) as e:
            raise MHDStabilityError(f"Crank-Nicolson factorization failed: {e}") from e
        self._explicit = self.j2 - 0.5 * dt * self.a1 - 0.25 * dt**2 * self.a0

    def advance(self, state: ModeState, force: Optional[np.ndarray] = None) -> ModeState:
        dt = self.dt
        rhs = self._explicit @ state.u - dt * (self.a0 @ state.eta)
        if force is not None:
            rhs = rhs + dt * force
        u_next = lu_solve(self._lu, rhs)
        if not np.all(np.isfinite(u_next)):
            raise MHDStabilityError("Crank-Nicolson solve produced non-finite values")
        eta_next = state.eta + 0.5 * dt * (state.u + u_next)
        return ModeState(eta=eta_next, u=u_next, t=state.t + dt)

    def energies(self, state: ModeState) -> Dict[str, float]:
        forms = self.forms
        jump_g = forms.params.density_jump * forms.params.g
        kinetic = quadratic_value(forms.J, state.u)
        return {
            "kinetic": kinetic,
            "magnetic": 0.5 * quadratic_value(forms.magnetic, state.eta),
            "surface": 0.5 * jump_g * quadratic_value(forms.surface, state.eta),
            "u_norm": math.sqrt(max(2.0 * kinetic, 0.0)),
            "viscous_eta": quadratic_value(forms.E1, state.eta),
        }

    def residuals(
        self, before: ModeState, after: ModeState, force: Optional[np.ndarray]
    ) -> Tuple[float, float, float]:
        """Interactive residual, energy-balance residual and dissipated energy of one step."""
        dt = self.dt
        eta_m = 0.5 * (before.eta + after.eta)
        u_m = 0.5 * (before.u + after.u)
        du = after.u - before.u

        inertia = float(np.real(np.vdot(eta_m, self.j2 @ du)))
        viscous = quadratic_value(self.forms.E1, after.eta) - quadratic_value(
            self.forms.E1, before.eta
        )
        potential = dt * quadratic_value(self.a0, eta_m)
        work = 0.0
        if force is not None:
            work = dt * float(np.real(np.vdot(eta_m, force)))
        interactive_terms = (inertia, viscous, potential, work)
        interactive = abs(inertia + viscous + potential - work) / max(
            max(abs(v) for v in interactive_terms), np.finfo(float).tiny
        )

        def energy(s: ModeState) -> float:
            return quadratic_value(self.forms.J, s.u) + quadratic_value(self.forms.E0, s.eta)

        change = energy(after) - energy(before)
        dissipated = dt * quadratic_value(self.a1, u_m)
        power = dt * float(np.real(np.vdot(u_m, force))) if force is not None else 0.0
        balance_terms = (energy(after), energy(before), dissipated, power)
        scale = max(
            max(abs(v) for v in balance_terms),
            quadratic_value(self.forms.J, before.u)
            + 0.5 * quadratic_value(self.forms.magnetic, before.eta),
            np.finfo(float).tiny,
        )
        balance = abs(change + dissipated - power) / scale
        return interactive, balance, dissipated


def _forces(
    forcing: Optional[Forcing], times: Sequence[float], dim: int
) -> List[Optional[np.ndarray]]:
    if forcing is None:
        return [None] * len(times)
    values = []
    for t in times:
        f = np.asarray(forcing(t) if callable(forcing) else forcing, dtype=complex)
        if f.shape != (dim,):
            raise InvalidInputError(f"forcing has shape {f.shape}, expected ({dim},)")
        if not np.all(np.isfinite(f)):
            raise InvalidInputError(f"forcing is not finite at t={t}")
        values.append(f)
    return values


def step(
    params: FluidParams,
    field: MagneticField,
    k: Sequence[float],
    state: ModeState,
    dt: float,
    grid: Optional[TwoLayerGrid] = None,
    forms: Optional[QuadForms] = None,
    force: Optional[np.ndarray] = None,
) -> ModeState:
    """
    Advance one Crank-Nicolson step.

    Either ``forms`` or ``grid`` must be given; forms are assembled from the
    grid otherwise.

    Raises:
        InvalidInputError: If dt is not positive or shapes do not match
        MHDStabilityError: If the linear solve fails
    """
    if forms is None:
        if grid is None:
            raise InvalidInputError("step needs either forms or a grid")
        forms = assemble_forms(params, field, k, grid)
    if state.eta.shape != (forms.dim,):
        raise InvalidInputError(
            f"state has dimension {state.eta.shape[0]}, forms expect {forms.dim}"
        )
    return CrankNicolson(forms, dt).advance(state, force)


def evolve(
    params: FluidParams,
    field: MagneticField,
    k: Sequence[float],
    state0: ModeState,
    T: float,
    dt: float,
    grid: Optional[TwoLayerGrid] = None,
    forms: Optional[QuadForms] = None,
    forcing: Optional[Forcing] = None,
) -> Tuple[Trajectory, EnergyLedger]:
    """
    Integrate from ``state0`` over ``[t0, t0 + T]``.

    The step is shortened to ``T / ceil(T / dt)`` so the run ends at ``T``.
    Forcing, when given, is a constant reduced vector or a function of time
    evaluated at step midpoints.

    Args:
        params: Fluid configuration
        field: Steady magnetic field
        k: Horizontal wavevector
        state0: Initial state
        T: Horizon
        dt: Largest time step
        grid: Grid to assemble forms on when ``forms`` is omitted
        forms: Pre-assembled forms
        forcing: Momentum forcing in reduced coordinates

    Returns:
        (Trajectory with every step, EnergyLedger with one row per sample)

    Raises:
        InvalidInputError: If T or dt is not positive, dt > T or forcing is not finite
    """
    if not T > 0 or not dt > 0 or dt > T * (1 + 1e-12):
        raise InvalidInputError(f"need T > 0 and 0 < dt <= T, got T={T}, dt={dt}")
    if forms is None:
        if grid is None:
            raise InvalidInputError("evolve needs either forms or a grid")
        forms = assemble_forms(params, field, k, grid)
    if state0.eta.shape != (forms.dim,):
        raise InvalidInputError(
            f"state has dimension {state0.eta.shape[0]}, forms expect {forms.dim}"
        )

    n_steps = max(1, math.ceil(T / dt - 1e-9))
    stepper = CrankNicolson(forms, T / n_steps)
    midpoints = [state0.t + (i + 0.5) * stepper.dt for i in range(n_steps)]
    forces = _forces(forcing, midpoints, forms.dim)

    ledger = EnergyLedger()
    ledger.append(t=state0.t, dissipation_integral=0.0, interactive=0.0, balance=0.0,
                  **stepper.energies(state0))
    states = [state0]
    dissipation = 0.0
    state = state0
    for force in forces:
        nxt = stepper.advance(state, force)
        interactive, balance, dissipated = stepper.residuals(state, nxt, force)
        dissipation += dissipated
        ledger.append(t=nxt.t, dissipation_integral=dissipation, interactive=interactive,
                      balance=balance, **stepper.energies(nxt))
        states.append(nxt)
        state = nxt

    logger.debug(
        "Evolved k=%s over T=%g in %d steps; max balance residual %.3e",
        forms.k,
        T,
        n_steps,
        float(np.max(ledger.column("balance"))),
    )
    return Trajectory(states), ledger


def interactive_residual(ledger: EnergyLedger) -> List[float]:
    """Per-step residuals of the discrete interactive identity, initial sample excluded."""
    return [float(v) for v in ledger.column("interactive")[1:]]


def growth_fit(ledger: EnergyLedger) -> Tuple[float, float]:
    """
    Least-squares slope of ``log ||u(t)||`` over the last half of a run.

    ``||u||`` is the kinetic norm ``sqrt(u^H J2 u)`` recorded in the ledger.

    Returns:
        (fitted rate, coefficient of determination)

    Raises:
        InvalidInputError: With fewer than 10 samples or a non-positive norm
    """
    t = ledger.column("t")
    norms = ledger.column("u_norm")
    if len(t) < MIN_FIT_SAMPLES:
        raise InvalidInputError(
            f"growth_fit needs at least {MIN_FIT_SAMPLES} samples, got {len(t)}"
        )
    half = len(t) // 2
    t, norms = t[half:], norms[half:]
    if np.any(norms <= 0):
        raise InvalidInputError("growth_fit needs strictly positive norms")

    logs = np.log(norms)
    slope, intercept = np.polyfit(t, logs, 1)
    fitted = slope * t + intercept
    total = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 - float(np.sum((logs - fitted) ** 2)) / total if total > 0 else 1.0
    return float(slope), r2


def growing_mode_state(coords: np.ndarray, lam: float) -> ModeState:
    """Initial data ``(eta, u) = (w, lam w)`` of a growing mode."""
    w = np.asarray(coords, dtype=complex)
    return ModeState(eta=w, u=lam * w, t=0.0)


def random_state(dim: int, seed: Union[int, np.random.SeedSequence] = 0) -> ModeState:
    """Random complex displacement and velocity, each of unit Euclidean norm."""
    rng = np.random.default_rng(seed)
    eta = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    u = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return ModeState(eta=eta / np.linalg.norm(eta), u=u / np.linalg.norm(u))


def _weighted_sup(ledger: EnergyLedger, lam: float) -> float:
    return float(np.max(np.exp(-lam * ledger.column("t")) * ledger.column("u_norm")))


def forced_growth_check(
    params: FluidParams,
    field: MagneticField,
    k: Sequence[float],
    forcing: Optional[Forcing],
    T: float,
    dt: float,
    grid: Optional[TwoLayerGrid] = None,
    forms: Optional[QuadForms] = None,
    state0: Optional[ModeState] = None,
    lam: Optional[float] = None,
) -> ForcedGrowthReport:
    """
    Growth of a forced run measured against ``exp(lam t)``.

    Integrates the forced system at ``dt`` and ``dt / 2`` and reports
    ``sup_t exp(-lam t) ||u(t)||`` for both, their relative drift, and the
    forcing norms ``sup_t ||f||`` and ``int exp(-lam t) ||f|| dt``.

    Args:
        params: Fluid configuration
        field: Steady magnetic field
        k: Horizontal wavevector
        forcing: Constant reduced vector, function of time, or None
        T: Horizon
        dt: Coarse time step
        grid: Grid to assemble forms on when ``forms`` is omitted
        forms: Pre-assembled forms
        state0: Initial data; zero when omitted
        lam: Growth rate; computed with ``fixed_point`` when omitted

    Raises:
        InvalidInputError: If a forcing sample is not finite
        ConvergenceError: If the supremum moves by more than 5% when dt is halved
    """
    if forms is None:
        if grid is None:
            raise InvalidInputError("forced_growth_check needs either forms or a grid")
        forms = assemble_forms(params, field, k, grid)
    if lam is None:
        lam = fixed_point(params, field, k, forms.basis.grid, forms=forms).lam
    if state0 is None:
        zero = np.zeros(forms.dim, dtype=complex)
        state0 = ModeState(eta=zero, u=zero)

    _, coarse = evolve(params, field, k, state0, T, dt, forms=forms, forcing=forcing)
    _, fine = evolve(params, field, k, state0, T, dt / 2, forms=forms, forcing=forcing)
    sup_coarse = _weighted_sup(coarse, lam)
    sup_fine = _weighted_sup(fine, lam)
    drift = abs(sup_coarse - sup_fine) / sup_fine if sup_fine > 0 else 0.0

    times = fine.column("t")
    samples = _forces(forcing, times, forms.dim)
    norms = np.array([np.linalg.norm(f) if f is not None else 0.0 for f in samples])
    weighted = np.exp(-lam * times) * norms
    forcing_integral = float(np.sum(0.5 * (weighted[1:] + weighted[:-1]) * np.diff(times)))

    report = ForcedGrowthReport(
        lam=lam,
        weighted_sup=sup_coarse,
        refined_sup=sup_fine,
        drift=drift,
        forcing_sup=float(norms.max(initial=0.0)),
        forcing_weighted_integral=forcing_integral,
        initial_norm=float(coarse.column("u_norm")[0]),
    )
    if not report.stable_under_refinement:
        raise ConvergenceError(
            f"forced growth supremum drifts by {100 * drift:.2f}% under dt halving "
            f"(limit {100 * REFINEMENT_DRIFT_TOL:.0f}%)",
            trace=[(dt, sup_coarse), (dt / 2, sup_fine)],
        )
    return report
