"""
Quadratic forms of the variational problem for one horizontal wavevector.

A velocity profile w(x3) exp(i k.x) is divergence free when its horizontal
part is ``a k/|k| + b kperp/|k|`` with ``a = i w3' / |k|``. The reduced basis
parameterizes such profiles by Chebyshev series of ``w3`` and ``b`` in each
layer, built from polynomials that satisfy the essential conditions exactly

* ``w3 = w3' = b = 0`` on both walls (``w = 0`` there),
* ``w3``, ``w3'`` and ``b`` continuous across the interface (``[w] = 0``).

The stress-jump condition on the interface is natural for the forms and is
not imposed. Integrals are taken per unit horizontal area with the complex
amplitude convention (``|f|^2`` of the Fourier amplitude).
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import scipy.linalg
from numpy.polynomial import chebyshev

from .chebgrid import LayerGrid, TwoLayerGrid
from .exceptions import InvalidInputError
from .model import FluidParams, MagneticField

logger = logging.getLogger(__name__)

CONSTRAINT_TOL = 1e-9


@dataclass(frozen=True)
class ReducedMode:
    """
    Nodal samples of ``w3`` and of the transverse shear amplitude ``b``.

    Each array covers every node of its layer, walls and interface included.
    """

    grid: TwoLayerGrid
    k: Tuple[float, float]
    w3_upper: np.ndarray
    w3_lower: np.ndarray
    b_upper: np.ndarray
    b_lower: np.ndarray

    def nodal_vector(self) -> np.ndarray:
        return np.concatenate([self.w3_upper, self.w3_lower, self.b_upper, self.b_lower]).astype(
            complex
        )

    def scaled(self, factor: complex) -> "ReducedMode":
        return ReducedMode(
            grid=self.grid,
            k=self.k,
            w3_upper=factor * self.w3_upper,
            w3_lower=factor * self.w3_lower,
            b_upper=factor * self.b_upper,
            b_lower=factor * self.b_lower,
        )


@dataclass(frozen=True)
class VelocityProfile:
    """Full three-component velocity amplitude at the nodes of each layer, shape (3, n+1)."""

    upper: np.ndarray
    lower: np.ndarray
    k: Tuple[float, float]


@dataclass(frozen=True)
class ReducedBasis:
    """
    Divergence-free parameterization for one wavevector.

    Reduced coordinates ``y`` weight polynomial basis functions that satisfy
    the essential conditions exactly. Per layer, ``w3_series`` and
    ``b_series`` hold the Chebyshev coefficients of every basis function in
    the layer variable (one column each); ``span`` holds their nodal values,
    so ``x = span @ y`` is the nodal vector
    ``[w3_upper, w3_lower, b_upper, b_lower]``. ``constraints`` are the same
    conditions written on nodal vectors.
    """

    grid: TwoLayerGrid
    k: Tuple[float, float]
    kappa: float
    e_k: np.ndarray
    e_perp: np.ndarray
    constraints: np.ndarray
    w3_series: Tuple[np.ndarray, np.ndarray]
    b_series: Tuple[np.ndarray, np.ndarray]
    span: np.ndarray

    @property
    def dim(self) -> int:
        return self.span.shape[1]

    @property
    def nodal_dim(self) -> int:
        return self.span.shape[0]

    def layer_slices(self, upper: bool) -> Tuple[slice, slice]:
        """Slices of the ``w3`` and ``b`` samples of one layer in the nodal vector."""
        nu, nl = self.grid.upper.size, self.grid.lower.size
        if upper:
            return slice(0, nu), slice(nu + nl, 2 * nu + nl)
        return slice(nu, nu + nl), slice(2 * nu + nl, 2 * nu + 2 * nl)

    def to_mode(self, coords: np.ndarray) -> ReducedMode:
        x = self.span @ np.asarray(coords, dtype=complex)
        w3u, b_u = self.layer_slices(True)
        w3l, b_l = self.layer_slices(False)
        return ReducedMode(
            grid=self.grid,
            k=self.k,
            w3_upper=x[w3u],
            w3_lower=x[w3l],
            b_upper=x[b_u],
            b_lower=x[b_l],
        )

    def to_coords(self, mode: ReducedMode) -> np.ndarray:
        """
        Reduced coordinates of a mode.

        Raises:
            InvalidInputError: If the mode breaks a wall or interface condition
                or belongs to another wavevector
        """
        if not np.allclose(mode.k, self.k, rtol=0.0, atol=1e-14):
            raise InvalidInputError(f"mode wavevector {mode.k} does not match basis {self.k}")
        x = mode.nodal_vector()
        if x.shape[0] != self.nodal_dim:
            raise InvalidInputError(
                f"mode has {x.shape[0]} nodal values, basis expects {self.nodal_dim}"
            )
        violation = np.max(np.abs(self.constraints @ x), initial=0.0)
        scale = max(np.max(np.abs(x), initial=0.0), 1.0)
        if violation > CONSTRAINT_TOL * scale * max(self.grid.upper.n, self.grid.lower.n) ** 2:
            raise InvalidInputError(
                f"mode violates wall/interface conditions (residual {violation:.3e})"
            )
        return scipy.linalg.lstsq(self.span, x)[0]

    def components(
        self, upper: bool, points: Sequence[float]
    ) -> Tuple[List[np.ndarray], List[np.ndarray]]:
        """
        Values and vertical derivatives of ``(w1, w2, w3)`` at points of one layer.

        Each entry has shape ``(len(points), dim)`` and acts on reduced
        coordinates. Derivatives come from the coefficient series.
        """
        layer = self.grid.layer(upper)
        xi = layer_variable(layer, points)
        scale = 2.0 / layer.length
        w3c = self.w3_series[0 if upper else 1]
        bc = self.b_series[0 if upper else 1]

        def evaluate(coeffs: np.ndarray, order: int) -> np.ndarray:
            if order:
                coeffs = chebyshev.chebder(coeffs, m=order, scl=scale, axis=0)
            return chebyshev.chebval(xi, coeffs).T

        a = (1j / self.kappa) * evaluate(w3c, 1)
        a_dz = (1j / self.kappa) * evaluate(w3c, 2)
        b, b_dz = evaluate(bc, 0), evaluate(bc, 1)
        w3, w3_dz = evaluate(w3c, 0), evaluate(w3c, 1)
        values = [self.e_k[j] * a + self.e_perp[j] * b for j in range(2)] + [w3 + 0j]
        dz = [self.e_k[j] * a_dz + self.e_perp[j] * b_dz for j in range(2)] + [w3_dz + 0j]
        return values, dz

    def component_operators(self, upper: bool) -> List[np.ndarray]:
        """
        Nodal operators mapping the nodal vector to ``(w1, w2, w3)`` on one layer.
        """
        layer = self.grid.layer(upper)
        w3_slice, b_slice = self.layer_slices(upper)
        size = layer.size

        select_w3 = np.zeros((size, self.nodal_dim))
        select_w3[:, w3_slice] = np.eye(size)
        select_b = np.zeros((size, self.nodal_dim))
        select_b[:, b_slice] = np.eye(size)

        longitudinal = (1j / self.kappa) * (layer.diff @ select_w3)
        w1 = self.e_k[0] * longitudinal + self.e_perp[0] * select_b
        w2 = self.e_k[1] * longitudinal + self.e_perp[1] * select_b
        return [w1, w2, select_w3.astype(complex)]


@dataclass(frozen=True)
class QuadForms:
    """
    Hermitian matrices over reduced coordinates.

    ``E0 = (magnetic - [rho] g surface) / 2``, ``E1`` is the viscous form and
    ``J`` the density-weighted mass form. ``magnetic`` and ``surface`` are
    kept separately for the energy ledger.
    """

    E0: np.ndarray
    E1: np.ndarray
    J: np.ndarray
    magnetic: np.ndarray
    surface: np.ndarray
    basis: ReducedBasis
    params: FluidParams
    field: MagneticField
    k: Tuple[float, float]

    @property
    def dim(self) -> int:
        return self.J.shape[0]


def _check_wavevector(k: Sequence[float]) -> Tuple[float, float]:
    kk = tuple(float(v) for v in k)
    if len(kk) != 2:
        raise InvalidInputError(f"wavevector must have two components, got: {k}")
    if kk[0] == 0.0 and kk[1] == 0.0:
        raise InvalidInputError("wavevector k = 0 has no divergence-free reduced basis")
    return kk  # type: ignore[return-value]


def layer_variable(layer: LayerGrid, points) -> np.ndarray:
    """Map physical heights of a layer onto the Chebyshev interval [-1, 1]."""
    return 2.0 * (np.asarray(points, dtype=float) - layer.lower) / layer.length - 1.0


def _clamped_series(n: int) -> np.ndarray:
    """Combinations of T_j, T_j+2, T_j+4 vanishing with their slope at both ends."""
    c = np.zeros((n + 1, n - 3))
    for j in range(n - 3):
        c[j, j] = 1.0
        c[j + 2, j] = -2.0 * (j + 2) / (j + 3)
        c[j + 4, j] = (j + 1) / (j + 3)
    return c


def _dirichlet_series(n: int) -> np.ndarray:
    """``T_j - T_j+2``, vanishing at both ends."""
    c = np.zeros((n + 1, n - 1))
    idx = np.arange(n - 1)
    c[idx, idx] = 1.0
    c[idx + 2, idx] = -1.0
    return c


def _interface_cubics(layer: LayerGrid) -> np.ndarray:
    """
    Cubics clamped at the wall with unit value (first) or unit physical slope
    (second) at the interface.
    """
    xi_interface = float(layer_variable(layer, 0.0))
    xi_wall = -xi_interface
    scale = 2.0 / layer.length
    slopes = chebyshev.chebder(np.eye(4), axis=0)
    conditions = np.array(
        [
            chebyshev.chebvander(xi_interface, 3),
            scale * chebyshev.chebval(xi_interface, slopes),
            chebyshev.chebvander(xi_wall, 3),
            scale * chebyshev.chebval(xi_wall, slopes),
        ]
    )
    cubics = np.zeros((layer.size, 2))
    cubics[:4] = np.linalg.solve(conditions, np.eye(4)[:, :2])
    return cubics


def scalar_series(grid: TwoLayerGrid) -> Tuple[np.ndarray, np.ndarray]:
    """
    Chebyshev coefficients per layer of a basis of the continuous piecewise
    polynomials vanishing on both walls.

    Columns are the interface hat, then the functions of the upper layer,
    then those of the lower layer; each function is zero in the other layer.
    """
    nu, nl = grid.upper.n, grid.lower.n
    upper = np.zeros((nu + 1, nu + nl - 1))
    lower = np.zeros((nl + 1, nu + nl - 1))
    for coeffs, layer in ((upper, grid.upper), (lower, grid.lower)):
        coeffs[:2, 0] = [0.5, 0.5 * float(layer_variable(layer, 0.0))]
    upper[:, 1:nu] = _dirichlet_series(nu)
    lower[:, nu:] = _dirichlet_series(nl)
    return upper, lower


def _nodal_constraints(grid: TwoLayerGrid) -> np.ndarray:
    """Wall and interface conditions as rows acting on nodal vectors."""
    nu, nl = grid.upper.size, grid.lower.size
    nodal_dim = 2 * (nu + nl)
    w3u, w3l, bu, bl = 0, nu, nu + nl, 2 * nu + nl

    def row() -> np.ndarray:
        return np.zeros(nodal_dim)

    rows = []
    walls = ((w3u, grid.upper, grid.upper_wall), (w3l, grid.lower, grid.lower_wall))
    for offset, layer, wall in walls:
        r = row()
        r[offset + wall] = 1.0
        rows.append(r)
        r = row()
        r[offset : offset + layer.size] = layer.diff[wall]
        rows.append(r)

    r = row()
    r[w3u + grid.upper_interface] = 1.0
    r[w3l + grid.lower_interface] = -1.0
    rows.append(r)
    r = row()
    r[w3u : w3u + nu] = grid.upper.diff[grid.upper_interface]
    r[w3l : w3l + nl] = -grid.lower.diff[grid.lower_interface]
    rows.append(r)

    for offset, wall in ((bu, grid.upper_wall), (bl, grid.lower_wall)):
        r = row()
        r[offset + wall] = 1.0
        rows.append(r)
    r = row()
    r[bu + grid.upper_interface] = 1.0
    r[bl + grid.lower_interface] = -1.0
    rows.append(r)
    return np.array(rows)


def reduce_basis(grid: TwoLayerGrid, k: Sequence[float]) -> ReducedBasis:
    """
    Build the divergence-free reduced basis for wavevector ``k``.

    Coordinates are ordered as: the two interface cubics of ``w3`` (shared by
    both layers), the clamped ``w3`` functions of the upper then the lower
    layer, the interface hat of ``b``, then the ``b`` functions vanishing at
    both ends of the upper then the lower layer. Each function is scaled to
    unit ``int |w|^2`` over both layers.

    Raises:
        InvalidInputError: If k = 0
    """
    kk = _check_wavevector(k)
    kappa = float(np.hypot(*kk))
    e_k = np.array(kk) / kappa
    e_perp = np.array([-kk[1], kk[0]]) / kappa

    nu, nl = grid.upper.n, grid.lower.n
    n_w3 = 2 + (nu - 3) + (nl - 3)
    dim = n_w3 + 1 + (nu - 1) + (nl - 1)

    w3_series, b_series = [], []
    for upper, scalar in zip((True, False), scalar_series(grid)):
        layer = grid.layer(upper)
        w3c = np.zeros((layer.size, dim))
        bc = np.zeros((layer.size, dim))
        w3c[:, :2] = _interface_cubics(layer)
        if upper:
            w3c[:, 2 : nu - 1] = _clamped_series(nu)
        else:
            w3c[:, nu - 1 : n_w3] = _clamped_series(nl)
        bc[:, n_w3:] = scalar
        w3_series.append(w3c)
        b_series.append(bc)

    norms = np.zeros(dim)
    for upper, w3c, bc in zip((True, False), w3_series, b_series):
        layer = grid.layer(upper)
        xi = layer_variable(layer, layer.fine_nodes)
        slope = chebyshev.chebder(w3c, scl=2.0 / layer.length, axis=0)
        density = (
            np.abs(chebyshev.chebval(xi, w3c).T) ** 2
            + np.abs(chebyshev.chebval(xi, slope).T) ** 2 / kappa**2
            + np.abs(chebyshev.chebval(xi, bc).T) ** 2
        )
        norms += layer.fine_weights @ density
    scale = 1.0 / np.sqrt(norms)
    w3_series = [c * scale for c in w3_series]
    b_series = [c * scale for c in b_series]

    span = np.vstack(
        [
            chebyshev.chebval(layer_variable(layer, layer.nodes), c).T
            for c, layer in (
                (w3_series[0], grid.upper),
                (w3_series[1], grid.lower),
                (b_series[0], grid.upper),
                (b_series[1], grid.lower),
            )
        ]
    )
    constraints = _nodal_constraints(grid)
    logger.debug(
        "Reduced basis for k=%s: %d nodal values, %d coordinates", kk, span.shape[0], dim
    )

    return ReducedBasis(
        grid=grid,
        k=kk,
        kappa=kappa,
        e_k=e_k,
        e_perp=e_perp,
        constraints=constraints,
        w3_series=(w3_series[0], w3_series[1]),
        b_series=(b_series[0], b_series[1]),
        span=span,
    )


def _gram(op: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return op.conj().T @ (weights[:, None] * op)


def _hermitian(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def assemble_forms(
    params: FluidParams, field: MagneticField, k: Sequence[float], grid: TwoLayerGrid
) -> QuadForms:
    """
    Assemble E0, E1 and J for one wavevector.

    Per mode, ``(B.grad)`` acts as ``i (B_star . k) + B3 d/dx3``. Every
    integrand is evaluated from the coefficient series of the basis on the
    degree-2n quadrature grid, where it is integrated exactly.

    Args:
        params: Fluid configuration
        field: Steady magnetic field
        k: Horizontal wavevector, nonzero
        grid: Two-layer collocation grid

    Returns:
        QuadForms over the reduced coordinates of ``reduce_basis(grid, k)``

    Raises:
        InvalidInputError: If k = 0
    """
    basis = reduce_basis(grid, k)
    kx, ky = basis.k
    beta = float(field.b_star @ np.array(basis.k))
    b3 = field.b3
    n = basis.dim

    mass = np.zeros((n, n), dtype=complex)
    viscous = np.zeros((n, n), dtype=complex)
    magnetic = np.zeros((n, n), dtype=complex)

    for upper in (True, False):
        layer = grid.layer(upper)
        w = layer.fine_weights
        values, dz = basis.components(upper, layer.fine_nodes)
        grads = [[1j * kx * v, 1j * ky * v, d] for v, d in zip(values, dz)]

        for j in range(3):
            mass += 0.5 * params.density(upper) * _gram(values[j], w)
            magnetic += _gram(1j * beta * values[j] + b3 * grads[j][2], w)
            for m in range(3):
                sym = grads[j][m] + grads[m][j]
                viscous += 0.25 * params.viscosity(upper) * _gram(sym, w)

    trace = basis.components(True, [0.0])[0][2]
    surface = _hermitian(trace.conj().T @ trace)
    magnetic = _hermitian(magnetic)
    e0 = 0.5 * (magnetic - params.density_jump * params.g * surface)

    return QuadForms(
        E0=e0,
        E1=_hermitian(viscous),
        J=_hermitian(mass),
        magnetic=magnetic,
        surface=surface,
        basis=basis,
        params=params,
        field=field,
        k=basis.k,
    )


def lift_velocity(mode: ReducedMode) -> VelocityProfile:
    """
    Full velocity amplitude of a reduced mode at the collocation nodes.

    Raises:
        InvalidInputError: If the mode violates a wall or interface condition
    """
    basis = reduce_basis(mode.grid, mode.k)
    basis.to_coords(mode)
    x = mode.nodal_vector()
    upper = np.array([op @ x for op in basis.component_operators(True)])
    lower = np.array([op @ x for op in basis.component_operators(False)])
    return VelocityProfile(upper=upper, lower=lower, k=basis.k)


def divergence_residual(profile: VelocityProfile, grid: TwoLayerGrid) -> float:
    """Sup-norm of ``i k . w_star + w3'`` over all nodes."""
    kx, ky = profile.k
    worst = 0.0
    for upper, values in ((True, profile.upper), (False, profile.lower)):
        div = 1j * kx * values[0] + 1j * ky * values[1] + grid.layer(upper).diff @ values[2]
        worst = max(worst, float(np.max(np.abs(div))))
    return worst


def quadratic_value(matrix: np.ndarray, coords: np.ndarray) -> float:
    return float(np.real(np.vdot(coords, matrix @ coords)))


def evaluate_energy(
    forms: QuadForms, mode: ReducedMode, s: float
) -> Tuple[float, float, float, float]:
    """
    Evaluate ``E(w; s) = E0(w) + s E1(w)`` together with E0, E1 and J.

    Raises:
        InvalidInputError: If s is negative or the mode does not fit the forms
    """
    if s < 0:
        raise InvalidInputError(f"s must be nonnegative, got: {s}")
    y = forms.basis.to_coords(mode)
    if y.shape[0] != forms.dim:
        raise InvalidInputError(f"mode has dimension {y.shape[0]}, forms expect {forms.dim}")
    e0 = quadratic_value(forms.E0, y)
    e1 = quadratic_value(forms.E1, y)
    j = quadratic_value(forms.J, y)
    return e0 + s * e1, e0, e1, j


def direct_energies(
    params: FluidParams, field: MagneticField, mode: ReducedMode
) -> Dict[str, float]:
    """
    Energies of a mode by direct quadrature of its lifted profile.

    Interpolates the lifted velocity and its vertical derivative onto the
    fine grid and integrates the integrands of E0, E1 and J there. Used as an
    independent check of the assembled matrices.
    """
    grid = mode.grid
    profile = lift_velocity(mode)
    kx, ky = profile.k
    beta = float(field.b_star @ np.array(profile.k))

    totals = {"magnetic": 0.0, "E1": 0.0, "J": 0.0}
    for upper, values in ((True, profile.upper), (False, profile.lower)):
        layer = grid.layer(upper)
        w = layer.fine_weights
        fine = values @ layer.interp.T
        dz = (values @ layer.diff.T) @ layer.interp.T
        grad = np.stack([1j * kx * fine, 1j * ky * fine, dz], axis=1)
        sym = grad + grad.transpose(1, 0, 2)

        totals["J"] += 0.5 * params.density(upper) * float(w @ np.sum(np.abs(fine) ** 2, axis=0))
        advected = np.abs(1j * beta * fine + field.b3 * dz) ** 2
        totals["magnetic"] += float(w @ np.sum(advected, axis=0))
        totals["E1"] += 0.25 * params.viscosity(upper) * float(
            w @ np.sum(np.abs(sym) ** 2, axis=(0, 1))
        )

    trace = abs(mode.w3_upper[grid.upper_interface]) ** 2
    totals["surface"] = float(trace)
    totals["E0"] = 0.5 * (totals["magnetic"] - params.density_jump * params.g * trace)
    return totals
