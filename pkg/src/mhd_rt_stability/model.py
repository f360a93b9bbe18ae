"""
Physical configuration of the two-layer problem.

Holds the fluid parameters, the uniform steady magnetic field, the critical
vertical field strength M_c and the horizontal rotation that brings a field
into its canonical orientation.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Sequence, Tuple

import numpy as np

from .exceptions import InvalidInputError

DEFAULT_CLASSIFY_TOL = 1e-9


@dataclass(frozen=True)
class FluidParams:
    """
    Densities, viscosities, gravity and layer depths.

    The heavier fluid sits on top: ``rho_plus`` is the upper density and
    ``rho_minus`` the lower one. The upper layer occupies ``(0, ell)`` and the
    lower one ``(-m, 0)``.

    Args:
        rho_plus: Upper mass density
        rho_minus: Lower mass density
        mu_plus: Upper dynamic viscosity
        mu_minus: Lower dynamic viscosity
        g: Gravitational acceleration
        ell: Upper layer depth
        m: Lower layer depth
        validate: Enforce positivity and a positive density jump. Degenerate
            test configurations (no jump, no viscosity) switch it off.

    Raises:
        InvalidInputError: If a field is not strictly positive or the density
            jump is not positive while ``validate`` is set
    """

    rho_plus: float
    rho_minus: float
    mu_plus: float
    mu_minus: float
    g: float
    ell: float
    m: float
    validate: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self) -> None:
        values = self.to_dict()
        for name, value in values.items():
            if not math.isfinite(value):
                raise InvalidInputError(f"{name} must be finite, got: {value}")
        if self.ell <= 0 or self.m <= 0:
            raise InvalidInputError("layer depths ell and m must be positive")
        if not self.validate:
            return
        for name, value in values.items():
            if value <= 0:
                raise InvalidInputError(f"{name} must be positive, got: {value}")
        if self.rho_plus <= self.rho_minus:
            raise InvalidInputError(
                "rho_plus must exceed rho_minus: the density jump [rho] > 0 is assumed "
                f"(got rho_plus={self.rho_plus}, rho_minus={self.rho_minus})"
            )

    def to_dict(self) -> Dict[str, float]:
        """The seven physical fields, without the validation switch."""
        return {
            "rho_plus": self.rho_plus,
            "rho_minus": self.rho_minus,
            "mu_plus": self.mu_plus,
            "mu_minus": self.mu_minus,
            "g": self.g,
            "ell": self.ell,
            "m": self.m,
        }

    @property
    def density_jump(self) -> float:
        """The jump [rho] = rho_plus - rho_minus across the interface."""
        return self.rho_plus - self.rho_minus

    def density(self, upper: bool) -> float:
        return self.rho_plus if upper else self.rho_minus

    def viscosity(self, upper: bool) -> float:
        return self.mu_plus if upper else self.mu_minus

    def depth(self, upper: bool) -> float:
        return self.ell if upper else self.m


@dataclass(frozen=True)
class MagneticField:
    """Uniform steady magnetic field B = (b1, b2, b3)."""

    b: Tuple[float, float, float]

    def __post_init__(self) -> None:
        b = tuple(float(v) for v in self.b)
        if len(b) != 3 or not all(math.isfinite(v) for v in b):
            raise InvalidInputError(f"magnetic field must be a finite 3-vector, got: {self.b}")
        object.__setattr__(self, "b", b)

    @property
    def b_star(self) -> np.ndarray:
        """Horizontal part of the field."""
        return np.array(self.b[:2], dtype=float)

    @property
    def b3(self) -> float:
        return self.b[2]


class Regime(str, Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


@dataclass(frozen=True)
class RegimeLabel:
    """Regime of a field relative to M_c; ``margin`` is ``|B3| - M_c``."""

    regime: Regime
    margin: float


def critical_field(params: FluidParams) -> float:
    """
    Critical vertical field strength M_c = sqrt([rho] g / (1/ell + 1/m)).

    The value does not depend on the viscosities.
    """
    return math.sqrt(params.density_jump * params.g / (1.0 / params.ell + 1.0 / params.m))


def classify_regime(
    params: FluidParams, field: MagneticField, tol: float = DEFAULT_CLASSIFY_TOL
) -> RegimeLabel:
    """
    Place a field relative to the critical value.

    Args:
        params: Fluid configuration
        field: Steady magnetic field
        tol: Absolute half-width of the band labelled critical

    Returns:
        RegimeLabel with the margin ``|B3| - M_c``

    Raises:
        InvalidInputError: If tol is not positive
    """
    if not tol > 0:
        raise InvalidInputError(f"tol must be positive, got: {tol}")

    margin = abs(field.b3) - critical_field(params)
    if margin < -tol:
        regime = Regime.SUBCRITICAL
    elif margin > tol:
        regime = Regime.SUPERCRITICAL
    else:
        regime = Regime.CRITICAL
    return RegimeLabel(regime=regime, margin=margin)


def canonicalize(
    field: MagneticField, k: Sequence[float]
) -> Tuple[MagneticField, np.ndarray, np.ndarray]:
    """
    Rotate the horizontal plane so the field lies along the first axis.

    Returns ``(field', k', R)`` with ``R`` orthogonal, ``R.T @ b_star =
    (|b_star|, 0)`` and ``k' = R.T @ k``. A purely vertical field keeps the
    identity rotation.
    """
    k = np.asarray(k, dtype=float)
    b_star = field.b_star
    norm = math.hypot(b_star[0], b_star[1])
    if norm == 0.0:
        rotation = np.eye(2)
    else:
        c, s = b_star / norm
        rotation = np.array([[c, -s], [s, c]])

    rotated = MagneticField((norm, 0.0, field.b3))
    return rotated, rotation.T @ k, rotation
