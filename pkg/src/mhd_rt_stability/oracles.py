"""
Discrete checks of the functional inequalities behind the stability theory.

Each check computes the extremal constant over the whole discrete space as
a generalized eigenvalue, on the grid and on the grid of twice the degree;
``refinement_drift`` compares the two, so it measures how far the discrete
constant is from converged. Smooth random profiles (Chebyshev series with
geometrically decaying coefficients, of degree tied to the grid) are
checked against the explicit bounds as well.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.linalg
from numpy.polynomial import Chebyshev, chebyshev
from scipy import integrate, special
from scipy.optimize import minimize_scalar

from .chebgrid import TwoLayerGrid, build, psi_profile, sample
from .exceptions import InvalidInputError, MHDStabilityError
from .forms import (
    QuadForms,
    ReducedMode,
    assemble_forms,
    layer_variable,
    lift_velocity,
    quadratic_value,
    reduce_basis,
    scalar_series,
)
from .model import FluidParams, MagneticField, canonicalize, critical_field

logger = logging.getLogger(__name__)

Seed = Union[int, np.random.SeedSequence]

COEFF_DECAY = 0.6
GAUSS_TRUNCATION_TOL = 1e-10
BOUND_SLACK = 1e-12
LOG_T_RANGE = (-12.0, 12.0)
LOG_T_POINTS = 97


@dataclass(frozen=True)
class ConstantEstimate:
    """
    Extremal ratio of a functional inequality.

    ``best_ratio`` is the extremal constant over the discrete space of the
    grid and ``refinement_drift`` its relative change at twice the degree.
    ``sample_ratio`` is the extremal ratio over the random profiles. ``bound``
    is the explicit constant being checked, when there is one, and
    ``violations`` counts the profiles (the extremal one included) on the
    wrong side of it.
    """

    best_ratio: float
    sample_size: int
    refinement_drift: float
    violations: int = 0
    bound: Optional[float] = None
    sample_ratio: Optional[float] = None


def _drift(coarse: float, fine: float) -> float:
    if fine == 0:
        return abs(coarse)
    return abs(coarse - fine) / abs(fine)


def _require_vertical(field: MagneticField) -> None:
    if field.b3 == 0:
        raise InvalidInputError("this check needs a nonzero vertical field B3")


def _random_series(rng: np.random.Generator, degree: int, domain: Tuple[float, float]) -> Chebyshev:
    decay = COEFF_DECAY ** np.arange(degree + 1)
    coeffs = (rng.standard_normal(degree + 1) + 1j * rng.standard_normal(degree + 1)) * decay
    return Chebyshev(coeffs, domain=list(domain))


def _sample_degree(grid: TwoLayerGrid, reserved: int) -> int:
    return max(0, min(grid.upper.n, grid.lower.n) - reserved)


def _gram(op: np.ndarray, weights: np.ndarray) -> np.ndarray:
    gram = op.conj().T @ (weights[:, None] * op)
    return 0.5 * (gram + gram.conj().T)


def scalar_norms(
    grid: TwoLayerGrid,
    upper_samples: np.ndarray,
    lower_samples: np.ndarray,
    beta: float,
    b3: float,
) -> Tuple[float, float, complex]:
    """
    ``(int |f|^2, int |(i beta + b3 d) f|^2, f(0))`` for nodal samples of a scalar profile.

    Raises:
        InvalidInputError: If f does not vanish on both walls or is identically zero
    """
    upper = np.asarray(upper_samples, dtype=complex)
    lower = np.asarray(lower_samples, dtype=complex)
    scale = max(np.max(np.abs(upper)), np.max(np.abs(lower)))
    if scale == 0:
        raise InvalidInputError("the zero profile has no defined ratio")
    if max(abs(upper[grid.upper_wall]), abs(lower[grid.lower_wall])) > 1e-12 * scale:
        raise InvalidInputError("profile must vanish on both walls")

    mass = 0.0
    advected = 0.0
    for layer, values in ((grid.upper, upper), (grid.lower, lower)):
        fine = layer.interp @ values
        dz = layer.interp @ (layer.diff @ values)
        mass += float(layer.fine_weights @ np.abs(fine) ** 2)
        advected += float(layer.fine_weights @ np.abs(1j * beta * fine + b3 * dz) ** 2)
    return mass, advected, complex(upper[grid.upper_interface])


def scalar_forms(
    grid: TwoLayerGrid, beta: float, b3: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Gram matrices of ``int |f|^2`` and ``int |(i beta + b3 d) f|^2`` over the
    scalar profiles vanishing on both walls, with the interface trace row.
    """
    series = scalar_series(grid)
    dim = series[0].shape[1]
    mass = np.zeros((dim, dim))
    advected = np.zeros((dim, dim), dtype=complex)
    for layer, coeffs in zip((grid.upper, grid.lower), series):
        xi = layer_variable(layer, layer.fine_nodes)
        values = chebyshev.chebval(xi, coeffs).T
        slopes = chebyshev.chebval(
            xi, chebyshev.chebder(coeffs, scl=2.0 / layer.length, axis=0)
        ).T
        mass += _gram(values, layer.fine_weights).real
        advected += _gram(1j * beta * values + b3 * slopes, layer.fine_weights)
    trace = chebyshev.chebval(float(layer_variable(grid.upper, 0.0)), series[0])
    return mass, advected, trace


def _scalar_samples(
    grid: TwoLayerGrid, n_samples: int, seed: Seed, degree: int
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Random ``p(x)(x - ell)(x + m) + c psi`` sampled at the nodes of ``grid``."""
    rng = np.random.default_rng(seed)
    ell, m = grid.ell, grid.m
    samples = []
    for _ in range(n_samples):
        p = _random_series(rng, degree, (-m, ell))
        c = complex(rng.standard_normal(), rng.standard_normal())

        def profile(x: np.ndarray) -> np.ndarray:
            return p(x) * (x - ell) * (x + m) + c * psi_profile(x, ell, m)

        upper, lower = sample(grid, profile)
        upper[grid.upper_wall] = 0.0
        lower[grid.lower_wall] = 0.0
        samples.append((upper, lower))
    return samples


def _beta(field: MagneticField, k: Sequence[float]) -> float:
    return float(field.b_star @ np.asarray(k, dtype=float))


def poincare_ratio(
    field: MagneticField,
    k: Sequence[float],
    grid: TwoLayerGrid,
    upper: np.ndarray,
    lower: np.ndarray,
) -> float:
    """``int |f|^2 / int |(B.grad) f|^2`` for one scalar profile."""
    _require_vertical(field)
    mass, advected, _ = scalar_norms(grid, upper, lower, _beta(field, k), field.b3)
    return mass / advected


def trace_ratio(
    field: MagneticField,
    k: Sequence[float],
    grid: TwoLayerGrid,
    upper: np.ndarray,
    lower: np.ndarray,
) -> float:
    """``|f(0)|^2 / (|B3|^-1 ||(B.grad) f|| ||f||)`` for one scalar profile."""
    _require_vertical(field)
    mass, advected, trace = scalar_norms(grid, upper, lower, _beta(field, k), field.b3)
    return abs(trace) ** 2 / (math.sqrt(advected) * math.sqrt(mass) / abs(field.b3))


def poincare_constant(field: MagneticField, k: Sequence[float], grid: TwoLayerGrid) -> float:
    """Largest ``poincare_ratio`` over every scalar profile of the grid."""
    _require_vertical(field)
    mass, advected, _ = scalar_forms(grid, _beta(field, k), field.b3)
    return float(scipy.linalg.eigh(mass, advected, eigvals_only=True)[-1])


def trace_constant(field: MagneticField, k: Sequence[float], grid: TwoLayerGrid) -> float:
    """
    Largest ``trace_ratio`` over every scalar profile of the grid.

    With ``||g|| ||f|| = min_t (t ||g||^2 + ||f||^2 / t) / 2`` the supremum is
    ``max_t 2 tau^H (t A + M / t)^-1 tau`` for the advected form ``A``, the
    mass form ``M`` and the trace row ``tau``; the maximum over ``log t`` is
    located on a grid and then refined.
    """
    _require_vertical(field)
    mass, advected, trace = scalar_forms(grid, _beta(field, k), field.b3)

    def negative(log_t: float) -> float:
        t = math.exp(log_t)
        solved = scipy.linalg.solve(t * advected + mass / t, trace + 0j, assume_a="her")
        return -2.0 * float(np.real(np.vdot(trace, solved)))

    knots = np.linspace(*LOG_T_RANGE, LOG_T_POINTS)
    values = [negative(u) for u in knots]
    i = int(np.argmin(values))
    lo, hi = knots[max(i - 1, 0)], knots[min(i + 1, len(knots) - 1)]
    refined = minimize_scalar(negative, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    return abs(field.b3) * -min(float(refined.fun), values[i])


def poincare_check(
    field: MagneticField,
    k: Sequence[float],
    grid: TwoLayerGrid,
    n_samples: int,
    seed: Seed = 0,
) -> ConstantEstimate:
    """
    Poincare inequality ``||f||^2 <= ((m^2 + ell^2) / B3^2) ||(B.grad) f||^2``.

    Raises:
        InvalidInputError: If B3 = 0 or n_samples < 1
    """
    _require_vertical(field)
    if n_samples < 1:
        raise InvalidInputError(f"n_samples must be positive, got: {n_samples}")
    bound = (grid.m**2 + grid.ell**2) / field.b3**2
    seq = np.random.SeedSequence(seed) if isinstance(seed, int) else seed

    coarse = poincare_constant(field, k, grid)
    fine = poincare_constant(field, k, grid.refined())
    samples = _scalar_samples(grid, n_samples, seq, _sample_degree(grid, 2))
    ratios = [poincare_ratio(field, k, grid, u, lo) for u, lo in samples]
    limit = bound * (1 + BOUND_SLACK)
    violations = sum(r > limit for r in ratios) + int(coarse > limit)

    if violations:
        logger.warning("Poincare bound %.6g violated by %d profiles", bound, violations)
    return ConstantEstimate(
        best_ratio=coarse,
        sample_size=n_samples,
        refinement_drift=_drift(coarse, fine),
        violations=violations,
        bound=bound,
        sample_ratio=max(ratios),
    )


def trace_check(
    field: MagneticField,
    k: Sequence[float],
    grid: TwoLayerGrid,
    n_samples: int,
    seed: Seed = 0,
) -> ConstantEstimate:
    """
    Trace estimate ``|f(0)|^2 <~ |B3|^-1 ||(B.grad) f|| ||f||``; reports the observed constant.

    Raises:
        InvalidInputError: If B3 = 0 or n_samples < 1
    """
    _require_vertical(field)
    if n_samples < 1:
        raise InvalidInputError(f"n_samples must be positive, got: {n_samples}")
    seq = np.random.SeedSequence(seed) if isinstance(seed, int) else seed

    coarse = trace_constant(field, k, grid)
    fine = trace_constant(field, k, grid.refined())
    samples = _scalar_samples(grid, n_samples, seq, _sample_degree(grid, 2))
    return ConstantEstimate(
        best_ratio=coarse,
        sample_size=n_samples,
        refinement_drift=_drift(coarse, fine),
        sample_ratio=max(trace_ratio(field, k, grid, u, lo) for u, lo in samples),
    )


def korn_ratio(mode: ReducedMode) -> float:
    """
    ``H^1`` form over the symmetric-gradient form ``int |D w|^2`` of a lifted mode.

    Raises:
        InvalidInputError: If the mode breaks a wall or interface condition
    """
    grid = mode.grid
    profile = lift_velocity(mode)
    kx, ky = profile.k
    kappa2 = kx**2 + ky**2

    h1 = 0.0
    strain = 0.0
    for upper, values in ((True, profile.upper), (False, profile.lower)):
        layer = grid.layer(upper)
        w = layer.fine_weights
        fine = values @ layer.interp.T
        dz = (values @ layer.diff.T) @ layer.interp.T
        grad = np.stack([1j * kx * fine, 1j * ky * fine, dz], axis=1)
        sym = grad + grad.transpose(1, 0, 2)
        h1 += float(w @ np.sum((1 + kappa2) * np.abs(fine) ** 2 + np.abs(dz) ** 2, axis=0))
        strain += float(w @ np.sum(np.abs(sym) ** 2, axis=(0, 1)))
    if strain == 0:
        raise InvalidInputError("the zero mode has no defined Korn ratio")
    return h1 / strain


def korn_constant(k: Sequence[float], grid: TwoLayerGrid) -> float:
    """Largest ``korn_ratio`` over the reduced basis of the grid."""
    basis = reduce_basis(grid, k)
    kx, ky = basis.k
    h1 = np.zeros((basis.dim, basis.dim), dtype=complex)
    strain = np.zeros((basis.dim, basis.dim), dtype=complex)
    for upper in (True, False):
        layer = grid.layer(upper)
        w = layer.fine_weights
        values, dz = basis.components(upper, layer.fine_nodes)
        grads = [[1j * kx * v, 1j * ky * v, d] for v, d in zip(values, dz)]
        for j in range(3):
            h1 += (1 + basis.kappa**2) * _gram(values[j], w) + _gram(dz[j], w)
            for i in range(3):
                strain += _gram(grads[j][i] + grads[i][j], w)
    return float(scipy.linalg.eigh(h1, strain, eigvals_only=True)[-1])


def _random_modes(
    grid: TwoLayerGrid, k: Tuple[float, float], n_samples: int, seed: Seed, degree: int
) -> List[ReducedMode]:
    """Random modes with ``w3 = p (x - ell)^2 (x + m)^2`` and ``b = q (x - ell)(x + m)``."""
    rng = np.random.default_rng(seed)
    ell, m = grid.ell, grid.m
    w3_degree = max(0, degree - 2)
    b_degree = degree
    modes = []
    for _ in range(n_samples):
        p = _random_series(rng, w3_degree, (-m, ell))
        q = _random_series(rng, b_degree, (-m, ell))
        w3u, w3l = sample(grid, lambda x: p(x) * (x - ell) ** 2 * (x + m) ** 2)
        bu, bl = sample(grid, lambda x: q(x) * (x - ell) * (x + m))
        modes.append(ReducedMode(grid, k, w3u, w3l, bu, bl))
    return modes


def korn_check(
    k: Sequence[float], grid: TwoLayerGrid, n_samples: int, seed: Seed = 0
) -> ConstantEstimate:
    """
    Korn inequality ``||w||_1 <~ ||D w||_0`` over divergence-free modes.

    Raises:
        InvalidInputError: If k = 0 or n_samples < 1
    """
    kk = (float(k[0]), float(k[1]))
    if kk == (0.0, 0.0):
        raise InvalidInputError("wavevector k = 0 has no divergence-free reduced basis")
    if n_samples < 1:
        raise InvalidInputError(f"n_samples must be positive, got: {n_samples}")
    seq = np.random.SeedSequence(seed) if isinstance(seed, int) else seed

    coarse = korn_constant(kk, grid)
    fine = korn_constant(kk, grid.refined())
    modes = _random_modes(grid, kk, n_samples, seq, _sample_degree(grid, 2))
    return ConstantEstimate(
        best_ratio=coarse,
        sample_size=n_samples,
        refinement_drift=_drift(coarse, fine),
        sample_ratio=max(korn_ratio(mode) for mode in modes),
    )


def _bump(z: float) -> float:
    return math.exp(-1.0 / (1.0 - z * z)) if abs(z) < 1 else 0.0


def _bump_prime(z: float) -> float:
    return _bump(z) * (-2.0 * z / (1.0 - z * z) ** 2) if abs(z) < 1 else 0.0


def _quad(func, a: float, b: float, points: Optional[Sequence[float]] = None) -> float:
    value, _ = integrate.quad(func, a, b, points=points, epsabs=1e-15, epsrel=1e-13, limit=200)
    return float(value)


def gaussian_factors(n: float) -> dict:
    """
    Horizontal Gaussian integrals for ``phi_n(z) = n^(-1/4) exp(-n z^2)``.

    Integrates on ``[-L, L]`` with ``L = 7 / sqrt(n)``; the tails are bounded
    with ``erfc``. ``raw`` is ``int exp(-2 n z^2)``, whose closed form is
    ``sqrt(pi / (2 n))``.

    Raises:
        MHDStabilityError: If the truncation error exceeds 1e-10
    """
    half = 7.0 / math.sqrt(n)
    a = math.sqrt(2.0 * n) * half
    raw = _quad(lambda z: math.exp(-2.0 * n * z * z), -half, half, points=[0.0])
    phi_sq = raw / math.sqrt(n)
    phi_prime_sq = _quad(
        lambda z: 4.0 * n**1.5 * z * z * math.exp(-2.0 * n * z * z), -half, half, points=[0.0]
    )

    raw_tail = math.sqrt(math.pi / (2.0 * n)) * special.erfc(a)
    prime_tail = 4.0 * n**1.5 * (
        half * math.exp(-a * a) / (2.0 * n)
        + math.sqrt(math.pi) / (2.0 * (2.0 * n) ** 1.5) * special.erfc(a)
    )
    truncation = max(raw_tail / math.sqrt(n), prime_tail)
    if truncation > GAUSS_TRUNCATION_TOL:
        raise MHDStabilityError(f"Gaussian truncation error {truncation:.3e} at n={n}")
    return {
        "raw": raw,
        "phi_sq": phi_sq,
        "phi_prime_sq": phi_prime_sq,
        "truncation_error": truncation,
    }


def testfn_limits(
    params: FluidParams,
    field: MagneticField,
    k_seq: Sequence[float],
    n_seq: Sequence[float],
    grid: Optional[TwoLayerGrid] = None,
) -> pd.DataFrame:
    """
    Magnetic-to-trace ratio of the concentrating test fields ``w_{k,n}``.

    The field is first rotated so its horizontal part lies along x1. The
    test field has transverse component ``phi(x1/k) phi_n(x2/k) psi'(x3)``
    and vertical component ``phi(x1/k) phi_n'(x2/k) psi(x3) / k`` with the
    bump ``phi(z) = exp(-1 / (1 - z^2))`` and the tent ``psi``. After
    factorization the ratio is

        [B1^2 Ip' Ig Ipsi' + (B1^2 / k^2) Ip' Ig' Ipsi + B3^2 Ip Ig' Ipsi'] / (Ip Ig')

    with ``Ip = int phi^2``, ``Ip' = int phi'^2``, ``Ig = int phi_n^2``,
    ``Ig' = int phi_n'^2`` and the vertical integrals taken layer by layer
    on the grid (``psi'`` is constant in each layer). The ratio tends to
    ``B3^2 (1/ell + 1/m)``.

    Args:
        params: Fluid configuration, for E0 and the layer depths
        field: Steady magnetic field
        k_seq: Increasing horizontal stretch factors
        n_seq: Increasing Gaussian concentrations, paired with ``k_seq``
        grid: Grid for the vertical integrals; degree 16 when omitted

    Returns:
        DataFrame with columns k, n, ratio, limit, e0, phi_n_sq,
        phi_n_prime_sq, raw_gaussian, truncation_error

    Raises:
        InvalidInputError: If the sequences differ in length or are not increasing
    """
    if len(k_seq) != len(n_seq) or not len(k_seq):
        raise InvalidInputError("k_seq and n_seq must be nonempty and of equal length")
    for name, seq in (("k_seq", k_seq), ("n_seq", n_seq)):
        if any(b <= a for a, b in zip(seq, seq[1:])) or seq[0] <= 0:
            raise InvalidInputError(f"{name} must be positive and increasing")
    if grid is None:
        grid = build(16, 16, params.ell, params.m)

    canonical, _, _ = canonicalize(field, (1.0, 0.0))
    b1, b3 = canonical.b[0], canonical.b3

    psi_u, psi_l = sample(grid, lambda x: psi_profile(x, grid.ell, grid.m))
    psi_sq = float(grid.upper.weights @ psi_u**2 + grid.lower.weights @ psi_l**2)
    dpsi_u = grid.upper.diff @ psi_u
    dpsi_l = grid.lower.diff @ psi_l
    psi_prime_sq = float(grid.upper.weights @ dpsi_u**2 + grid.lower.weights @ dpsi_l**2)

    bump_sq = _quad(lambda z: _bump(z) ** 2, -1.0, 1.0)
    bump_prime_sq = _quad(lambda z: _bump_prime(z) ** 2, -1.0, 1.0)

    rows = []
    for k, n in zip(k_seq, n_seq):
        g = gaussian_factors(n)
        numerator = (
            b1**2 * bump_prime_sq * g["phi_sq"] * psi_prime_sq
            + (b1**2 / k**2) * bump_prime_sq * g["phi_prime_sq"] * psi_sq
            + b3**2 * bump_sq * g["phi_prime_sq"] * psi_prime_sq
        )
        trace = bump_sq * g["phi_prime_sq"]
        rows.append(
            {
                "k": float(k),
                "n": float(n),
                "ratio": numerator / trace,
                "limit": b3**2 * (1.0 / grid.ell + 1.0 / grid.m),
                "e0": 0.5 * (numerator - params.density_jump * params.g * trace),
                "phi_n_sq": g["phi_sq"],
                "phi_n_prime_sq": g["phi_prime_sq"],
                "raw_gaussian": g["raw"],
                "truncation_error": g["truncation_error"],
            }
        )
    logger.debug("testfn_limits: final ratio %.10g", rows[-1]["ratio"])
    return pd.DataFrame(rows)


def coercivity_check(
    params: FluidParams,
    field: MagneticField,
    k: Sequence[float],
    grid: TwoLayerGrid,
    refine: bool = True,
) -> ConstantEstimate:
    """
    Supercritical coercivity ``2 E0(w) >= (1 - M_c^2 / B3^2) int |(B.grad) w|^2``.

    ``best_ratio`` is the smallest eigenvalue of ``(2 E0, magnetic)`` over
    the reduced basis and ``bound`` is ``1 - M_c^2 / B3^2``.

    Raises:
        InvalidInputError: If ``|B3| <= M_c`` or k = 0
    """
    mc = critical_field(params)
    if abs(field.b3) <= mc:
        raise InvalidInputError(f"coercivity needs |B3| > M_c = {mc:.6g}, got: {field.b3}")

    def smallest(g: TwoLayerGrid) -> Tuple[float, int]:
        forms = assemble_forms(params, field, k, g)
        values = scipy.linalg.eigh(2.0 * forms.E0, forms.magnetic, eigvals_only=True)
        return float(values[0]), forms.dim

    coarse, dim = smallest(grid)
    drift = _drift(coarse, smallest(grid.refined())[0]) if refine else 0.0
    bound = 1.0 - mc**2 / field.b3**2
    return ConstantEstimate(
        best_ratio=coarse,
        sample_size=dim,
        refinement_drift=drift,
        violations=int(coarse < bound - 1e-10),
        bound=bound,
    )


def variational_bound_check(
    forms: QuadForms, lam: float, n_samples: int, seed: Seed = 0
) -> ConstantEstimate:
    """
    ``E0(v) + lam E1(v) + lam^2 J(v) >= 0`` on random reduced modes.

    Holds for every mode when ``lam`` is the growth rate of ``forms``.
    ``best_ratio`` is the smallest ``(E0 + lam E1 + lam^2 J) / J`` observed.

    Raises:
        InvalidInputError: If n_samples < 1 or lam < 0
    """
    if n_samples < 1:
        raise InvalidInputError(f"n_samples must be positive, got: {n_samples}")
    if lam < 0:
        raise InvalidInputError(f"lam must be nonnegative, got: {lam}")
    rng = np.random.default_rng(seed)

    worst = math.inf
    violations = 0
    for _ in range(n_samples):
        y = rng.standard_normal(forms.dim) + 1j * rng.standard_normal(forms.dim)
        j = quadratic_value(forms.J, y)
        e = quadratic_value(forms.E0, y) + lam * quadratic_value(forms.E1, y)
        value = e / j + lam**2
        worst = min(worst, value)
        if value < -1e-10 * max(1.0, abs(e / j), lam**2):
            violations += 1
    return ConstantEstimate(
        best_ratio=worst,
        sample_size=n_samples,
        refinement_drift=0.0,
        violations=violations,
        bound=0.0,
    )
