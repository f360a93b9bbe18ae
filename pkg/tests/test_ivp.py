"""
Tests for the Crank-Nicolson integrator and its energy ledger.
"""

import math

import numpy as np
import pytest

from mhd_rt_stability.exceptions import ConvergenceError, InvalidInputError
from mhd_rt_stability.forms import assemble_forms
from mhd_rt_stability.growthrate import fixed_point
from mhd_rt_stability.ivp import (
    LEDGER_COLUMNS,
    RESIDUAL_COLUMNS,
    EnergyLedger,
    ModeState,
    evolve,
    forced_growth_check,
    growing_mode_state,
    growth_fit,
    interactive_residual,
    random_state,
    step,
)

K = (0.0, 10.0)


@pytest.fixture
def unstable_forms(canonical_params, subcritical_field, small_grid):
    return assemble_forms(canonical_params, subcritical_field, K, small_grid)


@pytest.fixture
def stable_forms(canonical_params, supercritical_field, small_grid):
    return assemble_forms(canonical_params, supercritical_field, K, small_grid)


def _synthetic_ledger(times, norms):
    ledger = EnergyLedger()
    for t, u in zip(times, norms):
        ledger.append(t=float(t), u_norm=float(u))
    return ledger


class TestModeState:
    def test_coerces_to_complex(self):
        state = ModeState(eta=[1.0, 2.0], u=[0.0, 1.0])
        assert state.eta.dtype == complex
        assert state.t == 0.0

    def test_mismatched_shapes_rejected(self):
        with pytest.raises(InvalidInputError):
            ModeState(eta=np.zeros(3), u=np.zeros(4))

    def test_random_state_is_seeded(self):
        a = random_state(5, seed=3)
        b = random_state(5, seed=3)
        np.testing.assert_array_equal(a.eta, b.eta)
        assert np.linalg.norm(a.u) == pytest.approx(1.0)


class TestStep:
    def test_matches_first_step_of_evolve(
        self, canonical_params, subcritical_field, unstable_forms
    ):
        state0 = random_state(unstable_forms.dim, seed=1)
        one = step(canonical_params, subcritical_field, K, state0, 0.01, forms=unstable_forms)
        trajectory, _ = evolve(
            canonical_params, subcritical_field, K, state0, 0.01, 0.01, forms=unstable_forms
        )
        np.testing.assert_allclose(one.u, trajectory.states[1].u, rtol=1e-13, atol=1e-15)
        assert one.t == pytest.approx(0.01)

    def test_requires_forms_or_grid(self, canonical_params, subcritical_field):
        with pytest.raises(InvalidInputError):
            step(canonical_params, subcritical_field, K, random_state(4), 0.01)

    def test_dimension_mismatch_rejected(self, canonical_params, subcritical_field, unstable_forms):
        with pytest.raises(InvalidInputError):
            step(canonical_params, subcritical_field, K, random_state(3), 0.01, forms=unstable_forms)

    def test_nonpositive_dt_rejected(self, canonical_params, subcritical_field, unstable_forms):
        state0 = random_state(unstable_forms.dim)
        with pytest.raises(InvalidInputError):
            step(canonical_params, subcritical_field, K, state0, 0.0, forms=unstable_forms)


class TestEvolve:
    """Test trajectories and the energy ledger."""

    def test_step_shortened_to_land_on_horizon(
        self, canonical_params, subcritical_field, unstable_forms
    ):
        state0 = random_state(unstable_forms.dim)
        trajectory, ledger = evolve(
            canonical_params, subcritical_field, K, state0, 1.0, 0.3, forms=unstable_forms
        )
        np.testing.assert_allclose(trajectory.times, [0.0, 0.25, 0.5, 0.75, 1.0])
        assert len(trajectory) == 5
        assert list(ledger.to_frame().columns) == LEDGER_COLUMNS

    def test_residual_columns_kept_apart(
        self, canonical_params, subcritical_field, unstable_forms
    ):
        state0 = random_state(unstable_forms.dim)
        _, ledger = evolve(
            canonical_params, subcritical_field, K, state0, 0.5, 0.25, forms=unstable_forms
        )
        assert LEDGER_COLUMNS == [
            "t", "kinetic", "magnetic", "surface", "dissipation_integral", "u_norm"
        ]
        full = ledger.to_frame(residuals=True)
        assert list(full.columns) == LEDGER_COLUMNS + RESIDUAL_COLUMNS
        assert full.loc[0, "balance"] == 0.0

    @pytest.mark.parametrize("T,dt", [(0.0, 0.1), (1.0, 0.0), (1.0, 2.0)])
    def test_invalid_horizon_rejected(
        self, canonical_params, subcritical_field, unstable_forms, T, dt
    ):
        state0 = random_state(unstable_forms.dim)
        with pytest.raises(InvalidInputError):
            evolve(canonical_params, subcritical_field, K, state0, T, dt, forms=unstable_forms)

    def test_balance_and_interactive_residuals(
        self, canonical_params, subcritical_field, unstable_forms
    ):
        state0 = random_state(unstable_forms.dim, seed=7)
        _, ledger = evolve(
            canonical_params, subcritical_field, K, state0, 1.0, 0.01, forms=unstable_forms
        )
        assert max(interactive_residual(ledger)) < 1e-8
        assert float(np.max(ledger.column("balance"))) < 1e-8
        assert len(interactive_residual(ledger)) == 100

    def test_viscous_energy_decreases(self, canonical_params, supercritical_field, stable_forms):
        state0 = random_state(stable_forms.dim, seed=2)
        _, ledger = evolve(
            canonical_params, supercritical_field, K, state0, 2.0, 0.02, forms=stable_forms
        )
        energy = ledger.energy
        assert np.all(np.diff(energy) <= 1e-12 * energy[0])
        assert energy[-1] < energy[0]
        dissipation = ledger.column("dissipation_integral")
        assert energy[0] - energy[-1] == pytest.approx(dissipation[-1], rel=1e-8)

    def test_inviscid_energy_conserved(
        self, inviscid_params, supercritical_field, small_grid
    ):
        forms = assemble_forms(inviscid_params, supercritical_field, K, small_grid)
        state0 = random_state(forms.dim, seed=4)
        _, ledger = evolve(inviscid_params, supercritical_field, K, state0, 10.0, 0.01, forms=forms)
        energy = ledger.energy
        assert np.max(np.abs(energy - energy[0])) / abs(energy[0]) < 1e-8
        assert ledger.column("dissipation_integral")[-1] == pytest.approx(0.0, abs=1e-14)

    def test_growing_mode(self, canonical_params, subcritical_field, small_grid, unstable_forms):
        result = fixed_point(canonical_params, subcritical_field, K, small_grid, forms=unstable_forms)
        coords = unstable_forms.basis.to_coords(result.minimizer)
        state0 = growing_mode_state(coords, result.lam)
        T = 2.0 / result.lam
        _, ledger = evolve(
            canonical_params, subcritical_field, K, state0, T, T / 400, forms=unstable_forms
        )
        norms = ledger.column("u_norm")
        assert norms[-1] / norms[0] == pytest.approx(math.exp(result.lam * T), rel=0.01)
        rate, r2 = growth_fit(ledger)
        assert rate == pytest.approx(result.lam, rel=0.01)
        assert r2 > 0.999

    def test_constant_forcing_keeps_balance(
        self, canonical_params, supercritical_field, stable_forms
    ):
        state0 = random_state(stable_forms.dim, seed=5)
        force = np.ones(stable_forms.dim, dtype=complex)
        _, ledger = evolve(
            canonical_params, supercritical_field, K, state0, 0.5, 0.01, forms=stable_forms,
            forcing=force,
        )
        assert float(np.max(ledger.column("balance"))) < 1e-8

    def test_nonfinite_forcing_rejected(self, canonical_params, supercritical_field, stable_forms):
        state0 = random_state(stable_forms.dim)

        def forcing(t):
            return np.full(stable_forms.dim, np.nan)

        with pytest.raises(InvalidInputError):
            evolve(
                canonical_params, supercritical_field, K, state0, 0.1, 0.01, forms=stable_forms,
                forcing=forcing,
            )

    def test_forcing_shape_rejected(self, canonical_params, supercritical_field, stable_forms):
        state0 = random_state(stable_forms.dim)
        with pytest.raises(InvalidInputError):
            evolve(
                canonical_params, supercritical_field, K, state0, 0.1, 0.01, forms=stable_forms,
                forcing=np.ones(3),
            )


class TestGrowthFit:
    def test_exact_exponential(self):
        t = np.linspace(0.0, 4.0, 41)
        rate, r2 = growth_fit(_synthetic_ledger(t, 3.0 * np.exp(0.7 * t)))
        assert rate == pytest.approx(0.7, rel=1e-10)
        assert r2 == pytest.approx(1.0)

    def test_uses_last_half(self):
        t = np.linspace(0.0, 2.0, 21)
        norms = np.where(t < 1.0, 1.0, np.exp(1.5 * (t - 1.0)))
        rate, _ = growth_fit(_synthetic_ledger(t, norms))
        assert rate == pytest.approx(1.5, rel=1e-10)

    def test_too_few_samples(self):
        t = np.linspace(0.0, 1.0, 9)
        with pytest.raises(InvalidInputError):
            growth_fit(_synthetic_ledger(t, np.exp(t)))

    def test_nonpositive_norm(self):
        t = np.linspace(0.0, 1.0, 12)
        norms = np.exp(t)
        norms[-1] = 0.0
        with pytest.raises(InvalidInputError):
            growth_fit(_synthetic_ledger(t, norms))


class TestForcedGrowth:
    def test_weighted_sup_stable_under_refinement(
        self, canonical_params, subcritical_field, unstable_forms
    ):
        rng = np.random.default_rng(11)
        force = rng.standard_normal(unstable_forms.dim) + 0j
        report = forced_growth_check(
            canonical_params, subcritical_field, K, force, 3.0, 0.01, forms=unstable_forms
        )
        assert report.lam > 0
        assert report.stable_under_refinement
        assert report.initial_norm == 0.0
        assert report.forcing_sup == pytest.approx(np.linalg.norm(force))
        assert report.forcing_weighted_integral > 0

    def test_drift_under_refinement_raises(
        self, mocker, canonical_params, subcritical_field, unstable_forms
    ):
        mocker.patch("mhd_rt_stability.ivp._weighted_sup", side_effect=[1.0, 2.0])
        force = np.ones(unstable_forms.dim, dtype=complex)
        with pytest.raises(ConvergenceError) as exc_info:
            forced_growth_check(
                canonical_params, subcritical_field, K, force, 0.2, 0.1,
                forms=unstable_forms, lam=0.1,
            )
        assert exc_info.value.trace == [(0.1, 1.0), (0.05, 2.0)]

    def test_requires_forms_or_grid(self, canonical_params, subcritical_field):
        with pytest.raises(InvalidInputError):
            forced_growth_check(canonical_params, subcritical_field, K, None, 1.0, 0.1)
