"""
Growth rates from the fixed point ``s = lambda(s)`` and scans over wavevectors.

For each wavevector, ``lambda(s) = sqrt(-alpha(s, k))`` on the set where
``alpha < 0``. ``Phi(s) = s / lambda(s)`` is continuous and strictly
increasing there, runs from 0 to infinity, and its unique crossing of 1 is
the physical growth rate.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg
from scipy.optimize import bisect

from .chebgrid import TwoLayerGrid
from .exceptions import (
    BracketError,
    ConvergenceError,
    EigensolveError,
    InvalidInputError,
    MHDStabilityError,
)
from .forms import QuadForms, ReducedMode, assemble_forms
from .model import FluidParams, MagneticField, Regime, classify_regime
from .spectrum import alpha

logger = logging.getLogger(__name__)

DEFAULT_FIXED_POINT_TOL = 1e-10
FIXED_POINT_FAILURE_TOL = 1e-6
S_FLOOR = 1e-8
MAX_DOUBLINGS = 120
MAX_BISECTIONS = 200

STABLE = "stable"
UNSTABLE = "unstable"
ERROR = "error"

DISPERSION_COLUMNS = ["k1", "k2", "status", "lambda", "s_star", "iterations"]
STABILITY_MAP_COLUMNS = ["b3", "lambda_max", "k1_argmax", "k2_argmax", "regime"]


@dataclass(frozen=True)
class FixedPointResult:
    """
    Outcome of the fixed-point search for one wavevector.

    ``lam`` is the growth rate (0 when stable) and equals ``s_star`` when
    unstable. Rows of a scan that failed carry ``status == "error"`` and the
    failure in ``message``.
    """

    k: Tuple[float, float]
    status: str
    lam: float = 0.0
    s_star: float = 0.0
    minimizer: Optional[ReducedMode] = None
    iterations: int = 0
    bracket: Tuple[float, float] = (0.0, 0.0)
    phi_residual: float = 0.0
    eig_residual: float = 0.0
    message: Optional[str] = None

    @property
    def unstable(self) -> bool:
        return self.status == UNSTABLE


@dataclass(frozen=True)
class DispersionCurve:
    """Fixed-point results over a wavevector grid, in grid order."""

    samples: List[FixedPointResult]
    lambda_max: float
    k_argmax: Optional[Tuple[float, float]]

    def to_frame(self) -> pd.DataFrame:
        """One row per wavevector with the dispersion CSV columns."""
        rows = [
            {
                "k1": r.k[0],
                "k2": r.k[1],
                "status": r.status,
                "lambda": r.lam,
                "s_star": r.s_star,
                "iterations": r.iterations,
            }
            for r in self.samples
        ]
        return pd.DataFrame(rows, columns=DISPERSION_COLUMNS)


@dataclass(frozen=True)
class StabilityRow:
    b3: float
    lambda_max: float
    k_argmax: Optional[Tuple[float, float]]
    regime: Regime


@dataclass(frozen=True)
class StabilityMap:
    """Largest growth rate per vertical field strength, sorted by ``b3``."""

    rows: List[StabilityRow]
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                "b3": r.b3,
                "lambda_max": r.lambda_max,
                "k1_argmax": r.k_argmax[0] if r.k_argmax else float("nan"),
                "k2_argmax": r.k_argmax[1] if r.k_argmax else float("nan"),
                "regime": r.regime.value,
            }
            for r in self.rows
        ]
        return pd.DataFrame(rows, columns=STABILITY_MAP_COLUMNS)


def wavevector_grid(
    k_min: float,
    k_max: float,
    count: int,
    mode: str = "log",
    direction: Any = "perp-to-Bstar",
    field: Optional[MagneticField] = None,
) -> List[Tuple[float, float]]:
    """
    Wavevectors ``|k| e`` along a fixed horizontal direction ``e``.

    Args:
        k_min: Smallest modulus
        k_max: Largest modulus
        count: Number of wavevectors
        mode: "log" or "linear" spacing of the moduli
        direction: A horizontal 2-vector, or "perp-to-Bstar" for the direction
            perpendicular to the horizontal field (the second axis when the
            field is vertical)
        field: Field used to resolve "perp-to-Bstar"

    Raises:
        InvalidInputError: On an empty or inverted range or a zero direction
    """
    if count < 1:
        raise InvalidInputError(f"count must be positive, got: {count}")
    if not 0 < k_min <= k_max:
        raise InvalidInputError(f"need 0 < k_min <= k_max, got: {k_min}, {k_max}")

    if isinstance(direction, str):
        if direction != "perp-to-Bstar":
            raise InvalidInputError(f"unknown direction: {direction}")
        b_star = field.b_star if field is not None else np.zeros(2)
        norm = float(np.hypot(*b_star))
        e = np.array([-b_star[1], b_star[0]]) / norm if norm > 0 else np.array([0.0, 1.0])
    else:
        e = np.asarray(direction, dtype=float)
        norm = float(np.hypot(*e))
        if e.shape != (2,) or norm == 0:
            raise InvalidInputError(f"direction must be a nonzero 2-vector, got: {direction}")
        e = e / norm

    if mode == "log":
        moduli = np.geomspace(k_min, k_max, count)
    elif mode == "linear":
        moduli = np.linspace(k_min, k_max, count)
    else:
        raise InvalidInputError(f"kgrid mode must be 'log' or 'linear', got: {mode}")
    return [(float(q * e[0]), float(q * e[1])) for q in moduli]


def phi(forms: QuadForms, s: float) -> float:
    """``Phi(s) = s / sqrt(-alpha(s))``; infinite where ``alpha(s) >= 0``."""
    a = alpha(forms, s).alpha
    return s / math.sqrt(-a) if a < 0 else math.inf


def _stable(k: Tuple[float, float], iterations: int = 0, message: Optional[str] = None):
    return FixedPointResult(k=k, status=STABLE, iterations=iterations, message=message)


def fixed_point(
    params: FluidParams,
    field: MagneticField,
    k: Sequence[float],
    grid: TwoLayerGrid,
    tol: float = DEFAULT_FIXED_POINT_TOL,
    forms: Optional[QuadForms] = None,
) -> FixedPointResult:
    """
    Solve ``s = lambda(s)`` for one wavevector.

    Doubles ``s = 1e-8 * 2^j`` until ``Phi`` exceeds 1 (or ``alpha`` turns
    nonnegative), then bisects ``Phi(s) - 1`` inside that bracket.

    Args:
        params: Fluid configuration
        field: Steady magnetic field
        k: Horizontal wavevector, nonzero
        grid: Two-layer collocation grid
        tol: Target for ``|Phi(s_star) - 1|``
        forms: Pre-assembled forms for ``k``; assembled when omitted

    Returns:
        FixedPointResult; stable with ``lam == 0`` when ``alpha`` is
        nonnegative at the smallest s, and stable with a warning message
        when no s with ``Phi(s) > 1`` is found

    Raises:
        InvalidInputError: If k = 0
        ConvergenceError: If the bisection fails or ends far from ``Phi = 1``
        EigensolveError: If an eigensolve fails
    """
    if forms is None:
        forms = assemble_forms(params, field, k, grid)
    kk = forms.k

    first = alpha(forms, S_FLOOR)
    if first.alpha >= 0:
        logger.debug("k=%s stable: alpha(%g)=%.6g", kk, S_FLOOR, first.alpha)
        return _stable(kk, iterations=1)
    if S_FLOOR / math.sqrt(-first.alpha) >= 1.0:
        logger.warning(
            "k=%s: growth rate below the floor s = %g, reported stable", kk, S_FLOOR
        )
        return _stable(kk, iterations=1, message="growth rate below the s floor")

    trace: List[Tuple[float, float, float]] = []

    def excess(s: float) -> float:
        a = alpha(forms, s).alpha
        value = s / math.sqrt(-a) - 1.0 if a < 0 else 1.0
        trace.append((s, a, value))
        return value

    lo, hi = S_FLOOR, None
    s = S_FLOOR
    for _ in range(MAX_DOUBLINGS):
        s *= 2.0
        if excess(s) > 0:
            hi = s
            break
        lo = s
    if hi is None:
        logger.warning(
            "k=%s: Phi stayed below 1 up to s=%.3g, no bracket; reported stable", kk, lo
        )
        return _stable(kk, iterations=len(trace), message="no bracket for Phi = 1")

    try:
        root, info = bisect(
            excess,
            lo,
            hi,
            xtol=1e-300,
            rtol=4 * np.finfo(float).eps,
            maxiter=MAX_BISECTIONS,
            full_output=True,
            disp=False,
        )
    except (ValueError, RuntimeError) as e:
        raise ConvergenceError(f"bisection failed at k={kk}: {e}", trace=trace) from e
    if not info.converged:
        raise ConvergenceError(f"bisection did not converge at k={kk}", trace=trace)

    result = alpha(forms, root)
    if result.alpha >= 0:
        raise ConvergenceError(f"fixed point left the unstable set at k={kk}", trace=trace)
    phi_residual = abs(root / math.sqrt(-result.alpha) - 1.0)
    if phi_residual > FIXED_POINT_FAILURE_TOL:
        raise ConvergenceError(
            f"|Phi - 1| = {phi_residual:.3e} at k={kk} after bisection", trace=trace
        )
    if phi_residual > tol:
        logger.warning(
            "k=%s: |Phi - 1| = %.3e exceeds tol %.1e (eigenvalue accuracy limit)",
            kk,
            phi_residual,
            tol,
        )

    logger.debug(
        "k=%s unstable: lambda=%.12g after %d doublings and %d bisections",
        kk,
        root,
        len(trace) - info.iterations,
        info.iterations,
    )
    return FixedPointResult(
        k=kk,
        status=UNSTABLE,
        lam=float(root),
        s_star=float(root),
        minimizer=result.minimizer,
        iterations=len(trace),
        bracket=(lo, hi),
        phi_residual=phi_residual,
        eig_residual=result.eig_residual,
    )


def pencil_matrices(forms: QuadForms) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(J2, A1, A0) = (2J, 2E1, 2E0)``, the coefficients of the quadratic pencil."""
    return 2.0 * forms.J, 2.0 * forms.E1, 2.0 * forms.E0


def quadratic_pencil_check(
    params: FluidParams,
    field: MagneticField,
    k: Sequence[float],
    grid: TwoLayerGrid,
    lam: float,
    mode: ReducedMode,
    forms: Optional[QuadForms] = None,
) -> float:
    """Residual ``||(lam^2 J2 + lam A1 + A0) x|| / ||x||`` of a mode; 0 for the zero mode."""
    if forms is None:
        forms = assemble_forms(params, field, k, grid)
    x = forms.basis.to_coords(mode)
    norm = np.linalg.norm(x)
    if norm == 0:
        return 0.0
    j2, a1, a0 = pencil_matrices(forms)
    return float(np.linalg.norm((lam**2 * j2 + lam * a1 + a0) @ x) / norm)


def companion_growth_rate(forms: QuadForms) -> float:
    """
    Largest real part among the eigenvalues of ``lam^2 J2 + lam A1 + A0``.

    Uses the first companion linearization ``[[0, I], [-A0, -A1]] z = lam
    [[I, 0], [0, J2]] z``.
    """
    j2, a1, a0 = pencil_matrices(forms)
    n = forms.dim
    eye = np.eye(n)
    zero = np.zeros((n, n))
    lhs = np.block([[zero, eye], [-a0, -a1]])
    rhs = np.block([[eye, zero], [zero, j2]])
    try:
        values = scipy.linalg.eig(lhs, rhs, right=False)
    except scipy.linalg.LinAlgError as e:
        raise EigensolveError(
            f"companion eigensolve failed: {e}", diagnostics={"size": 2 * n, "k": forms.k}
        ) from e
    finite = values[np.isfinite(values)]
    return float(np.max(finite.real))


def growth_bounds(
    params: FluidParams, field: MagneticField, s: float, alpha_value: float
) -> Tuple[float, Optional[float]]:
    """
    Observed constants of the a priori bounds on ``lambda(s)^2``.

    Returns ``(lambda^2 (mu_plus + mu_minus) s, lambda^2 B3^2)``; the second
    entry is None for a horizontal field. Both are 0 when ``alpha >= 0``.
    """
    lam2 = max(-alpha_value, 0.0)
    viscous = lam2 * (params.mu_plus + params.mu_minus) * s
    magnetic = lam2 * field.b3**2 if field.b3 != 0 else None
    return viscous, magnetic


def _dispersion_row(
    params: FluidParams,
    field: MagneticField,
    k: Tuple[float, float],
    grid: TwoLayerGrid,
    tol: float,
) -> FixedPointResult:
    kk = (float(k[0]), float(k[1]))
    if kk == (0.0, 0.0):
        return _stable(kk, message="k = 0 carries no surface deformation")
    try:
        return fixed_point(params, field, kk, grid, tol)
    except MHDStabilityError as e:
        logger.warning("Dispersion row k=%s failed: %s", kk, e)
        return FixedPointResult(k=kk, status=ERROR, message=str(e))


def dispersion(
    params: FluidParams,
    field: MagneticField,
    k_grid: Sequence[Sequence[float]],
    grid: TwoLayerGrid,
    tol: float = DEFAULT_FIXED_POINT_TOL,
    threads: Optional[int] = None,
) -> DispersionCurve:
    """
    Growth rate at every wavevector of ``k_grid``.

    Rows run on a thread pool and come back in grid order. A failing row is
    recorded with status "error" and the scan continues; ``k = 0`` is stable.

    Raises:
        InvalidInputError: If k_grid is empty
    """
    ks = [tuple(k) for k in k_grid]
    if not ks:
        raise InvalidInputError("k_grid is empty")

    with ThreadPoolExecutor(max_workers=threads) as pool:
        samples = list(pool.map(lambda k: _dispersion_row(params, field, k, grid, tol), ks))

    lambda_max, k_argmax = 0.0, None
    for r in samples:
        if r.unstable and r.lam > lambda_max:
            lambda_max, k_argmax = r.lam, r.k
    errors = sum(r.status == ERROR for r in samples)
    logger.info(
        "Dispersion over %d wavevectors: lambda_max=%.6g at k=%s (%d errors)",
        len(samples),
        lambda_max,
        k_argmax,
        errors,
    )
    return DispersionCurve(samples=samples, lambda_max=lambda_max, k_argmax=k_argmax)


def _unit_direction(direction: Sequence[float]) -> np.ndarray:
    d = np.asarray(direction, dtype=float)
    if d.shape != (3,) or not np.all(np.isfinite(d)):
        raise InvalidInputError(f"direction must be a finite 3-vector, got: {direction}")
    norm = float(np.linalg.norm(d))
    if norm == 0 or d[2] == 0:
        raise InvalidInputError(f"direction needs a nonzero vertical component, got: {direction}")
    return d / norm


def critical_field_estimate(
    params: FluidParams,
    direction: Sequence[float],
    k_max: float,
    grid: TwoLayerGrid,
    tol: float = 1e-6,
    k_min: float = 0.1,
    count: int = 40,
    threads: Optional[int] = None,
) -> float:
    """
    Smallest field strength along ``direction`` that stabilizes every scanned mode.

    Modes are taken on a log grid ``k_min .. k_max`` perpendicular to the
    horizontal part of ``direction``. A mode is unstable at magnitude ``B``
    when ``alpha(1e-8, k) < 0`` for the field ``B * direction``; the magnetic
    form scales as ``B^2``, so each wavevector is assembled once. The
    magnitude is bisected to ``tol``.

    Args:
        params: Fluid configuration
        direction: Field direction; its vertical component must be nonzero
        k_max: Largest wavevector modulus scanned
        grid: Two-layer collocation grid
        tol: Absolute tolerance on the magnitude
        k_min: Smallest wavevector modulus scanned
        count: Number of wavevectors
        threads: Worker count for assembly

    Returns:
        The critical ``|B3|``, i.e. the magnitude times ``|direction_3|``

    Raises:
        InvalidInputError: On a direction without vertical component
        BracketError: If no scanned magnitude is stable
        ConvergenceError: If the bisection does not reach ``tol``
    """
    d = _unit_direction(direction)
    unit = MagneticField(tuple(d))
    ks = wavevector_grid(k_min, k_max, count, "log", "perp-to-Bstar", unit)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        base = list(pool.map(lambda k: assemble_forms(params, unit, k, grid), ks))
    # largest wavevectors destabilize last, so they are checked first
    base.reverse()
    surface_term = params.density_jump * params.g

    def unstable(magnitude: float) -> bool:
        field = MagneticField(tuple(magnitude * d))
        for forms in base:
            magnetic = magnitude**2 * forms.magnetic
            scaled = replace(
                forms,
                E0=0.5 * (magnetic - surface_term * forms.surface),
                magnetic=magnetic,
                field=field,
            )
            if alpha(scaled, S_FLOOR).alpha < 0:
                return True
        return False

    lo, hi = 0.0, 1.0
    if not unstable(lo):
        logger.warning("No scanned mode is unstable without a field; estimate is 0")
        return 0.0
    for _ in range(60):
        if not unstable(hi):
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise BracketError(f"every magnitude up to {hi:g} leaves a scanned mode unstable")

    trace = []
    for _ in range(MAX_BISECTIONS):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        flag = unstable(mid)
        trace.append((mid, flag))
        logger.debug("critical field bisection: B=%.12g unstable=%s", mid, flag)
        if flag:
            lo = mid
        else:
            hi = mid
    else:
        raise ConvergenceError("critical field bisection did not converge", trace=trace)

    estimate = hi * abs(d[2])
    logger.info("Critical field estimate with k_max=%g: |B3|=%.8g", k_max, estimate)
    return float(estimate)


def stability_map(
    params: FluidParams,
    direction: Sequence[float],
    b3_values: Sequence[float],
    k_grid: Optional[Sequence[Sequence[float]]],
    grid: TwoLayerGrid,
    threads: Optional[int] = None,
    tol: float = DEFAULT_FIXED_POINT_TOL,
    classify_tol: float = 1e-9,
) -> StabilityMap:
    """
    One dispersion scan per vertical field strength.

    The field at ``b3`` is ``b3 * direction / direction_3``. When ``k_grid``
    is None each row scans the default log grid perpendicular to the
    horizontal field.

    Raises:
        InvalidInputError: On a direction without vertical component or no b3 values
    """
    d = _unit_direction(direction)
    if len(b3_values) == 0:
        raise InvalidInputError("b3_values is empty")

    rows = []
    bounds = []
    for b3 in sorted(float(v) for v in b3_values):
        field = MagneticField(tuple(b3 * d / d[2]))
        ks = k_grid if k_grid is not None else wavevector_grid(0.1, 200.0, 40, field=field)
        curve = dispersion(params, field, ks, grid, tol, threads)
        label = classify_regime(params, field, classify_tol)
        rows.append(StabilityRow(b3, curve.lambda_max, curve.k_argmax, label.regime))
        lam = curve.lambda_max
        bounds.append(growth_bounds(params, field, lam, -(lam**2)))

    metadata = {
        "params": params.to_dict(),
        "direction": tuple(d),
        "k_grid": None if k_grid is None else [tuple(k) for k in k_grid],
        "n_upper": grid.upper.n,
        "n_lower": grid.lower.n,
        "growth_bounds": bounds,
    }
    return StabilityMap(rows=rows, metadata=metadata)

