"""
Smallest eigenvalue of the modified problem and residual checks.

``alpha(s, k)`` is the infimum of ``E(w; s)`` over divergence-free modes with
``J(w) = 1``: the smallest eigenvalue of the Hermitian pencil
``(E0 + s E1, J)``. When it is negative, ``-alpha = lambda(s)^2``.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from numpy.polynomial import chebyshev
from scipy.linalg import LinAlgError, null_space, orth, pinvh

from .chebgrid import LayerGrid, TwoLayerGrid
from .exceptions import DegenerateTraceError, EigensolveError, InvalidInputError
from .forms import (
    QuadForms,
    ReducedMode,
    assemble_forms,
    reduce_basis,
)
from .model import FluidParams, MagneticField

logger = logging.getLogger(__name__)

EIG_FAILURE_TOL = 1e-6
RESIDUAL_TOL = 1e-8
COEFF_FLOOR = 1e-13


@dataclass(frozen=True)
class AlphaResult:
    """Infimum of the modified energy together with its J-normalized minimizer."""

    alpha: float
    s: float
    coords: np.ndarray
    minimizer: ReducedMode
    eig_residual: float


@dataclass(frozen=True)
class SteadyResidual:
    """Strong-form residuals of a growing mode and the recovered pressure per layer."""

    momentum_residual: float
    jump_residual: float
    pressure_upper: np.ndarray
    pressure_lower: np.ndarray
    trusted: bool = True


def phase_normalize(vector: np.ndarray) -> np.ndarray:
    """Rotate the phase so the first entry of largest modulus is real and positive."""
    if not np.any(vector):
        return vector
    idx = int(np.argmax(np.abs(vector)))
    return vector * (abs(vector[idx]) / vector[idx])


def alpha(forms: QuadForms, s: float, tol: float = EIG_FAILURE_TOL) -> AlphaResult:
    """
    Smallest eigenvalue of the pencil ``(E0 + s E1, J)``.

    Args:
        forms: Assembled quadratic forms
        s: Artificial viscosity parameter
        tol: Relative residual above which the eigenpair is rejected

    Returns:
        AlphaResult with a phase-normalized, J-normalized minimizer

    Raises:
        InvalidInputError: If s is negative
        EigensolveError: If LAPACK fails or the returned pair is inaccurate
    """
    if s < 0:
        raise InvalidInputError(f"s must be nonnegative, got: {s}")

    a = forms.E0 + s * forms.E1
    try:
        values, vectors = scipy.linalg.eigh(a, forms.J, subset_by_index=[0, 0])
    except (LinAlgError, ValueError) as e:
        raise EigensolveError(
            f"generalized eigensolve failed: {e}",
            diagnostics={"size": forms.dim, "s": s, "k": forms.k},
        ) from e

    x = phase_normalize(vectors[:, 0])
    jx = forms.J @ x
    norm = np.real(np.vdot(x, jx))
    if not np.isfinite(values[0]) or not norm > 0:
        raise EigensolveError(
            "eigensolve returned a degenerate vector",
            diagnostics={"size": forms.dim, "s": s, "k": forms.k},
        )
    x, jx = x / np.sqrt(norm), jx / np.sqrt(norm)

    # Rayleigh quotient of the returned vector
    ax = a @ x
    value = float(np.real(np.vdot(x, ax)) / np.real(np.vdot(x, jx)))
    residual = float(np.linalg.norm(ax - value * jx) / np.linalg.norm(x))
    scale = max(np.linalg.norm(a, 2), 1.0)
    if not np.isfinite(value) or residual > tol * scale:
        raise EigensolveError(
            "eigenpair residual too large",
            diagnostics={"size": forms.dim, "s": s, "k": forms.k, "residual": residual},
        )

    return AlphaResult(
        alpha=value,
        s=s,
        coords=x,
        minimizer=forms.basis.to_mode(x),
        eig_residual=residual,
    )


def inviscid_quotient(
    field: MagneticField,
    k: Sequence[float],
    grid: TwoLayerGrid,
    trace: str = "vector",
) -> float:
    """
    Infimum of ``int |(B.grad) w|^2 / int_Sigma |w|^2`` over divergence-free modes.

    With ``trace="vector"`` the denominator is the full interface trace
    ``|w(0)|^2``; with ``trace="vertical"`` only ``|w3(0)|^2`` enters, which is
    the quotient governing the surface term of E0. Both are bounded below by
    ``B3^2 (1/ell + 1/m)``.

    Raises:
        InvalidInputError: If k = 0 or the trace mode is unknown
        DegenerateTraceError: If every admissible mode vanishes on the interface
    """
    if trace not in ("vector", "vertical"):
        raise InvalidInputError(f"trace must be 'vector' or 'vertical', got: {trace}")

    params = FluidParams(1.0, 1.0, 1.0, 1.0, 1.0, grid.ell, grid.m, validate=False)
    forms = assemble_forms(params, field, k, grid)
    basis = forms.basis
    magnetic = forms.magnetic

    values, _ = basis.components(True, [0.0])
    if trace == "vertical":
        values = values[2:]
    trace_op = np.vstack(values)

    r = orth(trace_op.conj().T)
    if r.shape[1] == 0:
        raise DegenerateTraceError(f"no admissible mode has a nonzero trace at k={basis.k}")
    n = null_space(trace_op)

    m_rr = r.conj().T @ magnetic @ r
    if n.shape[1]:
        m_rn = r.conj().T @ magnetic @ n
        m_nn = n.conj().T @ magnetic @ n
        schur = m_rr - m_rn @ pinvh(0.5 * (m_nn + m_nn.conj().T)) @ m_rn.conj().T
    else:
        schur = m_rr
    schur = 0.5 * (schur + schur.conj().T)
    t_rr = r.conj().T @ (trace_op.conj().T @ trace_op) @ r
    t_rr = 0.5 * (t_rr + t_rr.conj().T)

    value = float(scipy.linalg.eigh(schur, t_rr, eigvals_only=True)[0])
    logger.debug("Inviscid quotient (%s trace) at k=%s: %.12g", trace, basis.k, value)
    return value


def _trimmed(coeffs: np.ndarray) -> np.ndarray:
    """Chebyshev coefficients with the roundoff tail removed."""
    mags = np.abs(coeffs)
    if not mags.any():
        return coeffs
    keep = np.nonzero(mags > COEFF_FLOOR * mags.max())[0][-1] + 1
    return coeffs[:keep]


class _LayerSeries:
    """Derivatives of a filtered Chebyshev series evaluated at chosen points of a layer."""

    def __init__(self, layer: LayerGrid, coeffs: np.ndarray, points: np.ndarray):
        self.coeffs = _trimmed(coeffs)
        self.scale = 2.0 / layer.length
        self.xhat = 2.0 * (points - layer.lower) / layer.length - 1.0

    def __call__(self, order: int = 0) -> np.ndarray:
        c = self.coeffs
        if order:
            if len(c) <= order:
                return np.zeros_like(self.xhat, dtype=complex)
            c = chebyshev.chebder(c, m=order, scl=self.scale)
        return chebyshev.chebval(self.xhat, c)


def _operator_terms(
    f: _LayerSeries,
    order: int,
    lam: float,
    rho: float,
    mu: float,
    kappa: float,
    beta: float,
    b3: float,
) -> Tuple[np.ndarray, ...]:
    """
    Pieces of ``d^order L(f)`` with
    ``L f = lam^2 rho f - lam mu (f'' - kappa^2 f) - (i beta + b3 d)^2 f``.
    """
    f0, f1, f2 = f(order), f(order + 1), f(order + 2)
    return (
        lam**2 * rho * f0,
        -lam * mu * f2,
        lam * mu * kappa**2 * f0,
        beta**2 * f0,
        -2j * beta * b3 * f1,
        -(b3**2) * f2,
    )


def _sup(*arrays: np.ndarray) -> float:
    return max((float(np.max(np.abs(a), initial=0.0)) for a in arrays), default=0.0)


def steady_residual(
    params: FluidParams,
    field: MagneticField,
    k: Sequence[float],
    lam: float,
    mode: ReducedMode,
    eig_residual: Optional[float] = None,
) -> SteadyResidual:
    """
    Residuals of the growing-mode equations with the pressure recovered.

    Per wavevector the longitudinal horizontal momentum row determines the
    pressure algebraically, ``q = i L(a) / |k|``. The vertical and transverse
    momentum rows are then checked at the interior nodes, and the stress jump
    ``[[q I - lam mu D(w)]] e3 - [[B3 (B.grad) w]] - [rho] g w3 e3`` at the
    interface. Both residuals are sup-norms relative to the largest term.

    Derivatives are taken from the Chebyshev series of the mode in each layer,
    read off its reduced coordinates, with coefficients below ``1e-13`` of the
    largest dropped from the tail; the vertical row is fourth order in ``w3``.

    Args:
        params: Fluid configuration
        field: Steady magnetic field
        k: Wavevector of the mode
        lam: Growth rate, the fixed point ``s = lambda(s)``
        mode: Minimizer at the fixed point
        eig_residual: Residual of the eigensolve that produced the mode

    Returns:
        SteadyResidual; ``trusted`` is False when ``eig_residual`` exceeds the
        residual tolerance, in which case the numbers carry no meaning

    Raises:
        InvalidInputError: If the mode breaks a wall or interface condition
    """
    basis = reduce_basis(mode.grid, k)
    coords = basis.to_coords(mode)
    grid = mode.grid
    kappa = basis.kappa
    beta = float(field.b_star @ np.array(basis.k))
    b3 = field.b3
    trusted = eig_residual is None or eig_residual <= RESIDUAL_TOL
    if not trusted:
        logger.warning(
            "steady_residual called with eig_residual=%.3e; residuals are not meaningful",
            eig_residual,
        )

    momentum_num = 0.0
    momentum_scale = 0.0
    pressures = {}
    stresses = {}
    jump_terms = []
    surface_w3 = 0.0

    for upper in (True, False):
        layer = grid.layer(upper)
        args = (lam, params.density(upper), params.viscosity(upper), kappa, beta, b3)
        side = 0 if upper else 1
        w3_coeffs = basis.w3_series[side] @ coords
        b_coeffs = basis.b_series[side] @ coords

        # a = i w3' / kappa, so q = i L(a) / kappa = -L(w3') / kappa^2
        w3 = _LayerSeries(layer, w3_coeffs, layer.nodes[1:-1])
        b = _LayerSeries(layer, b_coeffs, layer.nodes[1:-1])
        vertical = list(_operator_terms(w3, 0, *args)) + [
            -t / kappa**2 for t in _operator_terms(w3, 2, *args)
        ]
        transverse = list(_operator_terms(b, 0, *args))
        momentum_num = max(momentum_num, _sup(sum(vertical)), _sup(sum(transverse)))
        momentum_scale = max(momentum_scale, _sup(*vertical, *transverse))

        nodal = _LayerSeries(layer, w3_coeffs, layer.nodes)
        pressures[upper] = -sum(_operator_terms(nodal, 1, *args)) / kappa**2

        w3_i = _LayerSeries(layer, w3_coeffs, np.array([0.0]))
        b_i = _LayerSeries(layer, b_coeffs, np.array([0.0]))
        q_0 = -sum(_operator_terms(w3_i, 1, *args))[0] / kappa**2
        w3_0, w3_1, w3_2 = w3_i(0)[0], w3_i(1)[0], w3_i(2)[0]
        a_0, a_1 = 1j * w3_1 / kappa, 1j * w3_2 / kappa
        b_0, b_1 = b_i(0)[0], b_i(1)[0]

        horiz = [basis.e_k[j] * a_0 + basis.e_perp[j] * b_0 for j in range(2)]
        horiz_dz = [basis.e_k[j] * a_1 + basis.e_perp[j] * b_1 for j in range(2)]
        strain = np.array(
            [
                horiz_dz[0] + 1j * basis.k[0] * w3_0,
                horiz_dz[1] + 1j * basis.k[1] * w3_0,
                2 * w3_1,
            ]
        )
        advect = np.array(
            [
                1j * beta * horiz[0] + b3 * horiz_dz[0],
                1j * beta * horiz[1] + b3 * horiz_dz[1],
                1j * beta * w3_0 + b3 * w3_1,
            ]
        )
        pressure_part = np.array([0.0, 0.0, q_0])
        viscous_part = -lam * params.viscosity(upper) * strain
        magnetic_part = -b3 * advect
        stresses[upper] = pressure_part + viscous_part + magnetic_part
        jump_terms.extend([pressure_part, viscous_part, magnetic_part])
        if upper:
            surface_w3 = w3_0

    gravity = np.array([0.0, 0.0, params.density_jump * params.g * surface_w3])
    jump = stresses[True] - stresses[False] - gravity
    jump_scale = _sup(*jump_terms, gravity)

    momentum = momentum_num / momentum_scale if momentum_scale > 0 else 0.0
    jump_residual = _sup(jump) / jump_scale if jump_scale > 0 else 0.0
    logger.debug(
        "Steady residual at k=%s lam=%.6g: momentum=%.3e jump=%.3e",
        basis.k,
        lam,
        momentum,
        jump_residual,
    )

    return SteadyResidual(
        momentum_residual=momentum,
        jump_residual=jump_residual,
        pressure_upper=np.asarray(pressures[True]),
        pressure_lower=np.asarray(pressures[False]),
        trusted=trusted,
    )
