"""
Chebyshev collocation on the two fluid layers.

Each layer carries Chebyshev-Lobatto nodes, the spectral differentiation
matrix, Clenshaw-Curtis weights at the nodes, and an interpolation operator
onto a Lobatto grid of twice the degree. Quadratic forms are integrated on
that finer grid, where Clenshaw-Curtis is exact for products of two
polynomials of the layer degree.
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from numpy.polynomial import chebyshev
from scipy.interpolate import BarycentricInterpolator

from .exceptions import InvalidInputError

logger = logging.getLogger(__name__)

MIN_DEGREE = 8
DEFAULT_DEGREE = 48


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _lobatto_points(n: int, a: float, b: float) -> np.ndarray:
    x = chebyshev.chebpts2(n + 1)
    nodes = a + (b - a) * (x + 1.0) / 2.0
    nodes[0], nodes[-1] = a, b
    return nodes


def _diff_matrix(n: int, length: float) -> np.ndarray:
    """Differentiation matrix on ascending Lobatto nodes (negative-sum diagonal)."""
    x = chebyshev.chebpts2(n + 1)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n + 1)

    dx = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (dx + np.eye(n + 1))
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -d.sum(axis=1))
    return d * (2.0 / length)


def _clenshaw_curtis_weights(n: int, length: float) -> np.ndarray:
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    v = np.ones(n - 1)
    interior = slice(1, n)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n**2 - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * theta[interior]) / (4 * k**2 - 1)
        v -= np.cos(n * theta[interior]) / (n**2 - 1)
    else:
        w[0] = w[n] = 1.0 / n**2
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[interior]) / (4 * k**2 - 1)
    w[interior] = 2.0 * v / n
    return w * (length / 2.0)


@dataclass(frozen=True)
class LayerGrid:
    """
    Collocation data for one layer.

    ``nodes`` ascend from the lower to the upper layer boundary. ``fine_nodes``
    and ``fine_weights`` form the degree-``2n`` quadrature grid and ``interp``
    maps nodal samples onto it.
    """

    n: int
    lower: float
    upper: float
    nodes: np.ndarray
    diff: np.ndarray
    weights: np.ndarray
    fine_nodes: np.ndarray
    fine_weights: np.ndarray
    interp: np.ndarray

    @property
    def length(self) -> float:
        return self.upper - self.lower

    @property
    def size(self) -> int:
        return self.n + 1


@dataclass(frozen=True)
class TwoLayerGrid:
    """
    Upper layer on ``(0, ell)`` and lower layer on ``(-m, 0)``.

    The interface x3 = 0 is the first upper node and the last lower node; the
    walls are the last upper node and the first lower node.
    """

    upper: LayerGrid
    lower: LayerGrid

    @property
    def upper_interface(self) -> int:
        return 0

    @property
    def lower_interface(self) -> int:
        return self.lower.n

    @property
    def upper_wall(self) -> int:
        return self.upper.n

    @property
    def lower_wall(self) -> int:
        return 0

    @property
    def ell(self) -> float:
        return self.upper.upper

    @property
    def m(self) -> float:
        return -self.lower.lower

    def layer(self, upper: bool) -> LayerGrid:
        return self.upper if upper else self.lower

    def refined(self) -> "TwoLayerGrid":
        """The same layers at twice the degree."""
        return build(2 * self.upper.n, 2 * self.lower.n, self.ell, self.m)


def build_layer(n: int, a: float, b: float) -> LayerGrid:
    """Build one layer grid of degree ``n`` on ``(a, b)``."""
    if n < MIN_DEGREE:
        raise InvalidInputError(f"degree must be at least {MIN_DEGREE}, got: {n}")
    if not b > a:
        raise InvalidInputError(f"empty layer interval ({a}, {b})")

    length = b - a
    nodes = _lobatto_points(n, a, b)
    fine_nodes = _lobatto_points(2 * n, a, b)
    interp = BarycentricInterpolator(nodes, np.eye(n + 1))(fine_nodes)

    return LayerGrid(
        n=n,
        lower=a,
        upper=b,
        nodes=_frozen(nodes),
        diff=_frozen(_diff_matrix(n, length)),
        weights=_frozen(_clenshaw_curtis_weights(n, length)),
        fine_nodes=_frozen(fine_nodes),
        fine_weights=_frozen(_clenshaw_curtis_weights(2 * n, length)),
        interp=_frozen(np.asarray(interp, dtype=float)),
    )


def build(
    n_upper: int = DEFAULT_DEGREE,
    n_lower: int = DEFAULT_DEGREE,
    ell: float = 1.0,
    m: float = 1.0,
) -> TwoLayerGrid:
    """
    Build the two-layer collocation grid.

    Args:
        n_upper: Polynomial degree in the upper layer
        n_lower: Polynomial degree in the lower layer
        ell: Upper layer depth
        m: Lower layer depth

    Returns:
        TwoLayerGrid with the upper layer on (0, ell) and the lower on (-m, 0)

    Raises:
        InvalidInputError: If a degree is below 8 or a depth is not positive
    """
    if not (ell > 0 and m > 0):
        raise InvalidInputError(f"layer depths must be positive, got ell={ell}, m={m}")
    grid = TwoLayerGrid(upper=build_layer(n_upper, 0.0, ell), lower=build_layer(n_lower, -m, 0.0))
    logger.debug("Built two-layer grid n_upper=%d n_lower=%d ell=%g m=%g", n_upper, n_lower, ell, m)
    return grid


def _check_length(layer: LayerGrid, samples: np.ndarray, name: str) -> None:
    if samples.shape[0] != layer.size:
        raise InvalidInputError(
            f"{name} has {samples.shape[0]} samples, expected {layer.size} (n={layer.n})"
        )


def differentiate(grid: LayerGrid, samples: Sequence[complex]) -> np.ndarray:
    """Spectral derivative of nodal samples; exact for polynomials of degree <= n."""
    values = np.asarray(samples)
    _check_length(grid, values, "samples")
    return grid.diff @ values


def integrate(
    grid: TwoLayerGrid, upper_samples: Sequence[complex], lower_samples: Sequence[complex]
) -> complex:
    """Clenshaw-Curtis integral over both layers of nodal samples."""
    upper = np.asarray(upper_samples)
    lower = np.asarray(lower_samples)
    _check_length(grid.upper, upper, "upper_samples")
    _check_length(grid.lower, lower, "lower_samples")
    return complex(grid.upper.weights @ upper + grid.lower.weights @ lower)


def integrate_fine(
    grid: TwoLayerGrid, upper_values: np.ndarray, lower_values: np.ndarray
) -> complex:
    """Integral of values given on the degree-2n quadrature grids."""
    return complex(grid.upper.fine_weights @ upper_values + grid.lower.fine_weights @ lower_values)


def interface_value(
    grid: TwoLayerGrid, upper_samples: Sequence[complex], lower_samples: Sequence[complex]
) -> Tuple[complex, complex]:
    """One-sided values at x3 = 0, read directly off the interface nodes."""
    upper = np.asarray(upper_samples)
    lower = np.asarray(lower_samples)
    _check_length(grid.upper, upper, "upper_samples")
    _check_length(grid.lower, lower, "lower_samples")
    return complex(upper[grid.upper_interface]), complex(lower[grid.lower_interface])


def sample(grid: TwoLayerGrid, func, fine: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluate a vectorized function of x3 at the nodes of both layers."""
    if fine:
        return func(grid.upper.fine_nodes), func(grid.lower.fine_nodes)
    return func(grid.upper.nodes), func(grid.lower.nodes)


def psi_profile(x3: np.ndarray, ell: float, m: float) -> np.ndarray:
    """Tent profile equal to 1 on the interface and 0 on both walls."""
    x3 = np.asarray(x3, dtype=float)
    return np.where(x3 >= 0.0, 1.0 - x3 / ell, 1.0 + x3 / m)
