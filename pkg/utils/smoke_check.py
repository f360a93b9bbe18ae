#!/usr/bin/env python3
"""
Quick sanity check of an installation on the canonical configuration.
"""

import os
import sys

try:
    from dotenv import load_dotenv

    load_dotenv()
except ImportError:
    print("Note: python-dotenv not installed. Using environment variables only.")

# Add src to path to import the package
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from mhd_rt_stability import FluidParams, MagneticField, critical_field  # noqa: E402
from mhd_rt_stability.chebgrid import build  # noqa: E402
from mhd_rt_stability.forms import assemble_forms  # noqa: E402
from mhd_rt_stability.growthrate import companion_growth_rate, fixed_point  # noqa: E402
from mhd_rt_stability.ivp import evolve, random_state  # noqa: E402


def smoke_check() -> bool:
    """Run one growth rate, one companion solve and one short IVP."""
    print("MHD Rayleigh-Taylor Smoke Check")
    print("=" * 50)

    params = FluidParams(2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    field = MagneticField((0.0, 0.0, 0.3))
    k = (0.0, 10.0)
    n = int(os.environ.get("MHDRT_SMOKE_DEGREE", "16"))

    print("\n1. Critical field:")
    mc = critical_field(params)
    print(f"   ✓ M_c = {mc:.8f}")

    try:
        print(f"\n2. Fixed point at k={k}, n={n}:")
        grid = build(n, n)
        forms = assemble_forms(params, field, k, grid)
        result = fixed_point(params, field, k, grid, forms=forms)
        if not result.unstable:
            print("   ✗ Expected a growing mode below M_c")
            return False
        print(f"   ✓ lambda = {result.lam:.12g} (|Phi - 1| = {result.phi_residual:.2e})")

        print("\n3. Companion linearization:")
        companion = companion_growth_rate(forms)
        gap = abs(companion - result.lam) / result.lam
        mark = "✓" if gap < 1e-6 else "✗"
        print(f"   {mark} largest real part {companion:.12g} (relative gap {gap:.2e})")

        print("\n4. Energy ledger:")
        _, ledger = evolve(params, field, k, random_state(forms.dim), 1.0, 0.01, forms=forms)
        balance = float(ledger.column("balance").max())
        mark = "✓" if balance < 1e-9 else "✗"
        print(f"   {mark} max balance residual {balance:.2e} over {len(ledger.rows) - 1} steps")
    except Exception as e:
        print(f"\n❌ Error during smoke check: {type(e).__name__}: {e}")
        return False

    ok = gap < 1e-6 and balance < 1e-9
    print("\n✅ Smoke check passed!" if ok else "\n❌ Smoke check failed!")
    return ok


if __name__ == "__main__":
    success = smoke_check()
    sys.exit(0 if success else 1)
