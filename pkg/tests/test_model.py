"""
Tests for the physical configuration: parameters, field, M_c and regimes.
"""

import math

import numpy as np
import pytest

from mhd_rt_stability.exceptions import InvalidInputError
from mhd_rt_stability.model import (
    FluidParams,
    MagneticField,
    Regime,
    canonicalize,
    classify_regime,
    critical_field,
)


class TestFluidParams:
    """Test parameter validation."""

    def test_density_jump(self, canonical_params):
        assert canonical_params.density_jump == 1.0
        assert canonical_params.density(True) == 2.0
        assert canonical_params.density(False) == 1.0

    def test_equal_densities_rejected(self):
        """A stable or neutral stratification is outside the model."""
        with pytest.raises(InvalidInputError) as exc_info:
            FluidParams(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
        assert "[rho] > 0" in str(exc_info.value)

    def test_nonpositive_viscosity_rejected(self):
        with pytest.raises(InvalidInputError):
            FluidParams(2.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0)

    def test_validation_can_be_disabled(self):
        """Inviscid test configurations switch validation off."""
        params = FluidParams(2.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, validate=False)
        assert params.viscosity(True) == 0.0

    def test_nonfinite_rejected_even_without_validation(self):
        with pytest.raises(InvalidInputError):
            FluidParams(2.0, 1.0, math.nan, 1.0, 1.0, 1.0, 1.0, validate=False)

    def test_depths_must_be_positive(self):
        with pytest.raises(InvalidInputError):
            FluidParams(2.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0, validate=False)


class TestMagneticField:
    def test_components(self, tilted_field):
        np.testing.assert_array_equal(tilted_field.b_star, [1.0, 0.0])
        assert tilted_field.b3 == 0.5

    def test_rejects_bad_vectors(self):
        with pytest.raises(InvalidInputError):
            MagneticField((1.0, 0.0))
        with pytest.raises(InvalidInputError):
            MagneticField((1.0, math.inf, 0.0))


class TestCriticalField:
    """Test M_c and regime classification."""

    def test_canonical_value(self, canonical_params):
        assert critical_field(canonical_params) == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-15)

    def test_independent_of_viscosity(self, canonical_params):
        """M_c does not depend on the viscosities, bit for bit."""
        other = FluidParams(2.0, 1.0, 5.0, 0.01, 1.0, 1.0, 1.0)
        assert critical_field(other) == critical_field(canonical_params)

    def test_asymmetric_layers(self):
        params = FluidParams(3.0, 1.0, 1.0, 1.0, 9.81, 2.0, 0.5)
        expected = math.sqrt(2.0 * 9.81 / (1.0 / 2.0 + 1.0 / 0.5))
        assert critical_field(params) == pytest.approx(expected, rel=1e-15)

    def test_classify_regimes(self, canonical_params, critical_value):
        sub = classify_regime(canonical_params, MagneticField((0.0, 0.0, 0.3)))
        sup = classify_regime(canonical_params, MagneticField((0.0, 0.0, 1.0)))
        crit = classify_regime(canonical_params, MagneticField((0.0, 0.0, critical_value)))
        assert sub.regime is Regime.SUBCRITICAL
        assert sup.regime is Regime.SUPERCRITICAL
        assert crit.regime is Regime.CRITICAL
        assert sub.margin == pytest.approx(0.3 - critical_value)

    def test_classify_uses_absolute_b3(self, canonical_params):
        label = classify_regime(canonical_params, MagneticField((0.0, 0.0, -1.0)))
        assert label.regime is Regime.SUPERCRITICAL

    def test_classify_tolerance_must_be_positive(self, canonical_params, tilted_field):
        with pytest.raises(InvalidInputError):
            classify_regime(canonical_params, tilted_field, tol=0.0)


class TestCanonicalize:
    def test_rotates_field_onto_first_axis(self):
        field = MagneticField((1.0, 1.0, 0.5))
        rotated, k_rot, rotation = canonicalize(field, (2.0, -1.0))
        assert rotated.b[0] == pytest.approx(math.sqrt(2.0))
        assert rotated.b[1] == 0.0
        assert rotated.b3 == 0.5
        np.testing.assert_allclose(rotation.T @ rotation, np.eye(2), atol=1e-15)

    def test_preserves_projection_and_modulus(self):
        field = MagneticField((0.3, -0.8, 0.2))
        k = np.array([1.5, 2.5])
        rotated, k_rot, _ = canonicalize(field, k)
        assert rotated.b_star @ k_rot == pytest.approx(field.b_star @ k, rel=1e-14)
        assert np.linalg.norm(k_rot) == pytest.approx(np.linalg.norm(k), rel=1e-14)

    def test_vertical_field_keeps_identity(self, subcritical_field):
        _, k_rot, rotation = canonicalize(subcritical_field, (1.0, 2.0))
        np.testing.assert_array_equal(rotation, np.eye(2))
        np.testing.assert_array_equal(k_rot, [1.0, 2.0])
