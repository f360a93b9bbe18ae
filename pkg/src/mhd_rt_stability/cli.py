"""
Command-line interface: configuration loading, subcommand dispatch and output.

Usage::

    mhdrt dispersion --config run.json --out dispersion.csv --format csv

Flags take precedence over the ``MHDRT_THREADS``, ``MHDRT_SEED`` and
``MHDRT_LOG_LEVEL`` environment variables, which may also come from a
``.env`` file when python-dotenv is installed.
"""

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field, is_dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from . import __version__
from .chebgrid import DEFAULT_DEGREE, TwoLayerGrid, build
from .exceptions import ConfigurationError, InvalidInputError, MHDStabilityError
from .forms import assemble_forms
from .growthrate import (
    DEFAULT_FIXED_POINT_TOL,
    companion_growth_rate,
    critical_field_estimate,
    dispersion,
    fixed_point,
    pencil_matrices,
    quadratic_pencil_check,
    stability_map,
    wavevector_grid,
)
from .ivp import evolve, growing_mode_state, growth_fit, random_state
from .model import DEFAULT_CLASSIFY_TOL, FluidParams, MagneticField, critical_field
from .oracles import (
    coercivity_check,
    korn_check,
    poincare_check,
    testfn_limits,
    trace_check,
    variational_bound_check,
)
from .spectrum import inviscid_quotient, steady_residual

try:
    from dotenv import load_dotenv
except ImportError:  # pragma: no cover
    load_dotenv = None

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("mc", "dispersion", "critical-field", "stability-map", "ivp", "verify")
FORMATS = ("csv", "json")
PARAM_NAMES = ("rho_plus", "rho_minus", "mu_plus", "mu_minus", "g", "ell", "m")
DRIFT_TOL = 0.1
LIMIT_TOL = 0.02
LEDGER_TOL = 1e-9

_REQUIRED = object()


@dataclass(frozen=True)
class GridConfig:
    n_upper: int = DEFAULT_DEGREE
    n_lower: int = DEFAULT_DEGREE


@dataclass(frozen=True)
class KGridConfig:
    mode: str = "log"
    min: float = 0.1
    max: float = 200.0
    count: int = 40
    direction: Union[str, Tuple[float, float]] = "perp-to-Bstar"


@dataclass(frozen=True)
class SweepConfig:
    b3_min: float
    b3_max: float
    count: int

    @property
    def values(self) -> List[float]:
        return [float(v) for v in np.linspace(self.b3_min, self.b3_max, self.count)]


@dataclass(frozen=True)
class IVPConfig:
    """``T`` and ``dt`` default to ``3 / lambda`` and ``1e-3 / lambda`` at run time."""

    T: Optional[float] = None
    dt: Optional[float] = None
    seed: int = 0
    k: Optional[Tuple[float, float]] = None


@dataclass(frozen=True)
class CriticalConfig:
    direction: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    k_max: Optional[float] = None
    tol: float = 1e-6


@dataclass(frozen=True)
class VerifyConfig:
    n_samples: int = 1000
    k: Tuple[float, float] = (3.0, -2.0)


@dataclass(frozen=True)
class Tolerances:
    eig: float = 1e-12
    fixed_point: float = DEFAULT_FIXED_POINT_TOL
    classify: float = DEFAULT_CLASSIFY_TOL


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration; ``raw`` keeps the parsed document for hashing."""

    params: FluidParams
    field: MagneticField
    grid: GridConfig = GridConfig()
    kgrid: KGridConfig = KGridConfig()
    sweep: Optional[SweepConfig] = None
    ivp: IVPConfig = IVPConfig()
    critical: CriticalConfig = CriticalConfig()
    verify: VerifyConfig = VerifyConfig()
    tolerances: Tolerances = Tolerances()
    raw: Dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def build_grid(self) -> TwoLayerGrid:
        return build(self.grid.n_upper, self.grid.n_lower, self.params.ell, self.params.m)

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class ResultBundle:
    """
    Output of one subcommand.

    ``payload`` is the JSON body and ``frame`` the table written in CSV mode.
    Timestamps live only in ``metadata``.
    """

    subcommand: str
    metadata: Dict[str, Any]
    payload: Dict[str, Any]
    frame: pd.DataFrame


def _section(doc: Dict[str, Any], key: str, path: str, allowed: Sequence[str]) -> Dict[str, Any]:
    value = doc.get(key, {})
    where = f"{path}.{key}" if path else key
    if not isinstance(value, dict):
        raise ConfigurationError("must be an object", path=where)
    unknown = sorted(set(value) - set(allowed))
    if unknown:
        raise ConfigurationError(f"unknown keys {unknown}", path=where)
    return value


def _number(
    doc: Dict[str, Any],
    key: str,
    path: str,
    default: Any = _REQUIRED,
    positive: bool = False,
    integer: bool = False,
) -> Any:
    where = f"{path}.{key}"
    if key not in doc:
        if default is _REQUIRED:
            raise ConfigurationError("is required", path=where)
        return default
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"must be a number, got: {value!r}", path=where)
    if integer and (not isinstance(value, int)):
        raise ConfigurationError(f"must be an integer, got: {value!r}", path=where)
    if not math.isfinite(value):
        raise ConfigurationError(f"must be finite, got: {value!r}", path=where)
    if positive and value <= 0:
        raise ConfigurationError(f"must be positive, got: {value!r}", path=where)
    return value if integer else float(value)


def _vector(value: Any, size: int, where: str) -> Tuple[float, ...]:
    if not isinstance(value, list) or len(value) != size:
        raise ConfigurationError(f"must be a list of {size} numbers, got: {value!r}", path=where)
    out = []
    for i, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigurationError(f"entry {i} is not a finite number: {v!r}", path=where)
        out.append(float(v))
    return tuple(out)


def _parse_params(doc: Dict[str, Any]) -> FluidParams:
    section = _section(doc, "params", "", PARAM_NAMES)
    values = {name: _number(section, name, "params", positive=True) for name in PARAM_NAMES}
    if values["rho_plus"] <= values["rho_minus"]:
        raise ConfigurationError(
            "must exceed rho_minus: the density jump [rho] > 0 is assumed "
            f"(got rho_plus={values['rho_plus']}, rho_minus={values['rho_minus']})",
            path="params.rho_plus",
        )
    try:
        return FluidParams(**values)
    except InvalidInputError as e:
        raise ConfigurationError(str(e), path="params") from e


def _parse_kgrid(doc: Dict[str, Any]) -> KGridConfig:
    section = _section(doc, "kgrid", "", ("mode", "min", "max", "count", "direction"))
    defaults = KGridConfig()
    mode = section.get("mode", defaults.mode)
    if mode not in ("log", "linear"):
        raise ConfigurationError(f"must be 'log' or 'linear', got: {mode!r}", path="kgrid.mode")
    k_min = _number(section, "min", "kgrid", defaults.min, positive=True)
    k_max = _number(section, "max", "kgrid", defaults.max, positive=True)
    if k_min >= k_max:
        raise ConfigurationError(
            f"must be below kgrid.max, got: {k_min} >= {k_max}", path="kgrid.min"
        )
    count = _number(section, "count", "kgrid", defaults.count, positive=True, integer=True)

    direction: Union[str, Tuple[float, float]] = section.get("direction", defaults.direction)
    if isinstance(direction, str):
        if direction != "perp-to-Bstar":
            raise ConfigurationError(f"unknown direction {direction!r}", path="kgrid.direction")
    else:
        direction = _vector(direction, 2, "kgrid.direction")  # type: ignore[assignment]
        if direction == (0.0, 0.0):
            raise ConfigurationError("must be nonzero", path="kgrid.direction")
    return KGridConfig(mode=mode, min=k_min, max=k_max, count=count, direction=direction)


def _parse_sweep(doc: Dict[str, Any]) -> Optional[SweepConfig]:
    if "sweep" not in doc:
        return None
    section = _section(doc, "sweep", "", ("b3_min", "b3_max", "count"))
    b3_min = _number(section, "b3_min", "sweep")
    b3_max = _number(section, "b3_max", "sweep")
    if b3_min > b3_max:
        raise ConfigurationError("must not exceed sweep.b3_max", path="sweep.b3_min")
    count = _number(section, "count", "sweep", positive=True, integer=True)
    return SweepConfig(b3_min=b3_min, b3_max=b3_max, count=count)


def _parse_ivp(doc: Dict[str, Any]) -> IVPConfig:
    section = _section(doc, "ivp", "", ("T", "dt", "seed", "k"))
    T = _number(section, "T", "ivp", None, positive=True)
    dt = _number(section, "dt", "ivp", None, positive=True)
    if T is not None and dt is not None and dt > T:
        raise ConfigurationError("must not exceed ivp.T", path="ivp.dt")
    seed = _number(section, "seed", "ivp", 0, integer=True)
    if seed < 0:
        raise ConfigurationError("must be nonnegative", path="ivp.seed")
    k = _vector(section["k"], 2, "ivp.k") if "k" in section else None
    if k == (0.0, 0.0):
        raise ConfigurationError("must be nonzero", path="ivp.k")
    return IVPConfig(T=T, dt=dt, seed=seed, k=k)  # type: ignore[arg-type]


def _parse_critical(doc: Dict[str, Any]) -> CriticalConfig:
    section = _section(doc, "critical", "", ("direction", "k_max", "tol"))
    defaults = CriticalConfig()
    direction = defaults.direction
    if "direction" in section:
        where = "critical.direction"
        direction = _vector(section["direction"], 3, where)  # type: ignore[assignment]
        if direction[2] == 0:
            raise ConfigurationError("needs a nonzero vertical component", path=where)
    k_max = _number(section, "k_max", "critical", None, positive=True)
    tol = _number(section, "tol", "critical", defaults.tol, positive=True)
    return CriticalConfig(direction=direction, k_max=k_max, tol=tol)


def _parse_verify(doc: Dict[str, Any]) -> VerifyConfig:
    section = _section(doc, "verify", "", ("n_samples", "k"))
    defaults = VerifyConfig()
    n_samples = _number(section, "n_samples", "verify", defaults.n_samples, True, True)
    k = _vector(section["k"], 2, "verify.k") if "k" in section else defaults.k
    if k == (0.0, 0.0):
        raise ConfigurationError("must be nonzero", path="verify.k")
    return VerifyConfig(n_samples=n_samples, k=k)  # type: ignore[arg-type]


def parse_config(text: str) -> RunConfig:
    """
    Parse and validate a JSON run configuration.

    Only ``params`` and ``field`` are required; every other section falls
    back to its defaults.

    Args:
        text: JSON document

    Returns:
        RunConfig with defaults filled in

    Raises:
        ConfigurationError: On malformed JSON or a schema violation; the
            error's ``path`` names the offending field
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"malformed JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigurationError("configuration must be a JSON object")
    sections = (
        "params",
        "field",
        "grid",
        "kgrid",
        "sweep",
        "ivp",
        "critical",
        "verify",
        "tolerances",
    )
    unknown = sorted(set(doc) - set(sections))
    if unknown:
        raise ConfigurationError(f"unknown top-level keys {unknown}")

    params = _parse_params(doc)
    if "field" not in doc:
        raise ConfigurationError("is required", path="field")
    magnetic = MagneticField(_vector(doc["field"], 3, "field"))  # type: ignore[arg-type]

    grid_doc = _section(doc, "grid", "", ("n_upper", "n_lower"))
    grid = GridConfig(
        n_upper=_number(grid_doc, "n_upper", "grid", DEFAULT_DEGREE, True, True),
        n_lower=_number(grid_doc, "n_lower", "grid", DEFAULT_DEGREE, True, True),
    )
    for name in ("n_upper", "n_lower"):
        if getattr(grid, name) < 8:
            raise ConfigurationError("must be at least 8", path=f"grid.{name}")

    tol_doc = _section(doc, "tolerances", "", ("eig", "fixed_point", "classify"))
    defaults = Tolerances()
    tolerances = Tolerances(
        eig=_number(tol_doc, "eig", "tolerances", defaults.eig, positive=True),
        fixed_point=_number(tol_doc, "fixed_point", "tolerances", defaults.fixed_point, True),
        classify=_number(tol_doc, "classify", "tolerances", defaults.classify, positive=True),
    )

    return RunConfig(
        params=params,
        field=magnetic,
        grid=grid,
        kgrid=_parse_kgrid(doc),
        sweep=_parse_sweep(doc),
        ivp=_parse_ivp(doc),
        critical=_parse_critical(doc),
        verify=_parse_verify(doc),
        tolerances=tolerances,
        raw=doc,
    )


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _jsonable(value: Any) -> Any:
    if is_dataclass(value) and not isinstance(value, type):
        return _jsonable(asdict(value))
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return float(value) if math.isfinite(value) else None
    return value


def _frame_records(frame: pd.DataFrame) -> List[Dict[str, Any]]:
    return [_jsonable(row) for row in frame.to_dict(orient="records")]


def _kgrid(config: RunConfig, magnetic: MagneticField) -> List[Tuple[float, float]]:
    kg = config.kgrid
    return wavevector_grid(kg.min, kg.max, kg.count, kg.mode, kg.direction, magnetic)


def _run_mc(config: RunConfig, threads: Optional[int], seed: int) -> Tuple[Dict, pd.DataFrame]:
    mc = critical_field(config.params)
    return {"M_c": mc}, pd.DataFrame([{"M_c": mc}])


def _run_dispersion(
    config: RunConfig, threads: Optional[int], seed: int
) -> Tuple[Dict, pd.DataFrame]:
    curve = dispersion(
        config.params,
        config.field,
        _kgrid(config, config.field),
        config.build_grid(),
        config.tolerances.fixed_point,
        threads,
    )
    frame = curve.to_frame()
    payload = {
        "lambda_max": curve.lambda_max,
        "k_argmax": curve.k_argmax,
        "rows": _frame_records(frame),
        "messages": {str(r.k): r.message for r in curve.samples if r.message},
    }
    return payload, frame


def _run_critical(
    config: RunConfig, threads: Optional[int], seed: int
) -> Tuple[Dict, pd.DataFrame]:
    crit = config.critical
    k_max = crit.k_max if crit.k_max is not None else config.kgrid.max
    estimate = critical_field_estimate(
        config.params,
        crit.direction,
        k_max,
        config.build_grid(),
        tol=crit.tol,
        k_min=config.kgrid.min,
        count=config.kgrid.count,
        threads=threads,
    )
    mc = critical_field(config.params)
    row = {
        "critical_field": estimate,
        "M_c": mc,
        "relative_gap": abs(estimate - mc) / mc,
        "k_max": k_max,
    }
    return row, pd.DataFrame([row])


def _sweep_direction(config: RunConfig) -> Tuple[float, float, float]:
    if config.field.b3 != 0:
        return config.field.b  # type: ignore[return-value]
    return config.critical.direction


def _run_stability_map(
    config: RunConfig, threads: Optional[int], seed: int
) -> Tuple[Dict, pd.DataFrame]:
    if config.sweep is None:
        raise ConfigurationError("is required for stability-map", path="sweep")
    direction = _sweep_direction(config)
    unit = MagneticField(tuple(np.asarray(direction) / direction[2]))
    result = stability_map(
        config.params,
        direction,
        config.sweep.values,
        _kgrid(config, unit),
        config.build_grid(),
        threads=threads,
        tol=config.tolerances.fixed_point,
        classify_tol=config.tolerances.classify,
    )
    frame = result.to_frame()
    metadata = dict(result.metadata)
    metadata.pop("k_grid", None)
    return {"rows": _frame_records(frame), "map": _jsonable(metadata)}, frame


def _run_ivp(config: RunConfig, threads: Optional[int], seed: int) -> Tuple[Dict, pd.DataFrame]:
    grid = config.build_grid()
    params, magnetic = config.params, config.field
    k = config.ivp.k
    if k is None:
        k = dispersion(params, magnetic, _kgrid(config, magnetic), grid, threads=threads).k_argmax
        if k is None:
            raise ConfigurationError("is required when no scanned mode is unstable", path="ivp.k")

    forms = assemble_forms(params, magnetic, k, grid)
    result = fixed_point(params, magnetic, k, grid, config.tolerances.fixed_point, forms=forms)
    if result.unstable:
        state0 = growing_mode_state(forms.basis.to_coords(result.minimizer), result.lam)
        T = config.ivp.T or 3.0 / result.lam
        dt = config.ivp.dt or 1e-3 / result.lam
    else:
        if config.ivp.T is None or config.ivp.dt is None:
            raise ConfigurationError(f"T and dt are required for the stable mode k={k}", path="ivp")
        state0 = random_state(forms.dim, seed)
        T, dt = config.ivp.T, config.ivp.dt

    _, ledger = evolve(params, magnetic, k, state0, T, min(dt, T), forms=forms)
    frame = ledger.to_frame()
    full = ledger.to_frame(residuals=True)
    slope, r2 = growth_fit(ledger) if len(frame) >= 10 else (float("nan"), float("nan"))
    payload = {
        "k": k,
        "lambda": result.lam,
        "T": T,
        "dt": float(frame["t"].iloc[1] - frame["t"].iloc[0]),
        "fitted_rate": slope,
        "fit_r2": r2,
        "max_balance_residual": float(full["balance"].max()),
        "max_interactive_residual": float(full["interactive"].max()),
        "ledger": _frame_records(full),
    }
    return payload, frame


def _entry(name: str, passed: bool, value: Any, threshold: Any, **extra: Any) -> Dict[str, Any]:
    return {"name": name, "passed": bool(passed), "value": value, "threshold": threshold, **extra}


def _verify_entries(config: RunConfig, seed: int) -> List[Dict[str, Any]]:
    params, magnetic = config.params, config.field
    k = config.verify.k
    n_samples = config.verify.n_samples
    grid = config.build_grid()
    streams = np.random.SeedSequence(seed).spawn(5)
    entries = []

    if magnetic.b3 != 0:
        est = poincare_check(magnetic, k, grid, n_samples, streams[0])
        entries.append(_entry("poincare", est.violations == 0, est.best_ratio, est.bound,
                              violations=est.violations, sample_ratio=est.sample_ratio))
        est = trace_check(magnetic, k, grid, n_samples, streams[1])
        entries.append(_entry("trace", est.refinement_drift < DRIFT_TOL, est.best_ratio, DRIFT_TOL,
                              drift=est.refinement_drift, sample_ratio=est.sample_ratio))
        table = testfn_limits(params, magnetic, [10.0, 100.0, 1000.0], [1e2, 1e4, 1e6])
        last = table.iloc[-1]
        gap = abs(last["ratio"] - last["limit"]) / last["limit"]
        entries.append(_entry("testfn_limits", gap < LIMIT_TOL, float(last["ratio"]),
                              float(last["limit"]), relative_gap=gap))
        quotient = inviscid_quotient(magnetic, k, grid)
        bound = magnetic.b3**2 * (1.0 / params.ell + 1.0 / params.m)
        entries.append(_entry("inviscid_quotient", quotient >= bound * (1 - 1e-9), quotient, bound))
    else:
        logger.info("Horizontal field: Poincare, trace and quotient oracles skipped")

    est = korn_check(k, grid, n_samples, streams[2])
    entries.append(_entry("korn", est.refinement_drift < DRIFT_TOL, est.best_ratio, DRIFT_TOL,
                          drift=est.refinement_drift, sample_ratio=est.sample_ratio))

    if abs(magnetic.b3) > critical_field(params):
        est = coercivity_check(params, magnetic, k, grid)
        entries.append(_entry("coercivity", est.violations == 0, est.best_ratio, est.bound))

    forms = assemble_forms(params, magnetic, k, grid)
    result = fixed_point(params, magnetic, k, grid, config.tolerances.fixed_point, forms=forms)
    companion = companion_growth_rate(forms)
    if result.unstable:
        lam = result.lam
        entries.append(_entry("fixed_point", result.phi_residual <= config.tolerances.fixed_point,
                              result.phi_residual, config.tolerances.fixed_point))
        a = forms.E0 + lam * forms.E1
        relative_eig = result.eig_residual / max(np.linalg.norm(a, 2), 1.0)
        entries.append(_entry("eigenpair", relative_eig <= config.tolerances.eig, relative_eig,
                              config.tolerances.eig))
        j2, a1, a0 = pencil_matrices(forms)
        scale = lam**2 * np.linalg.norm(j2, 2) + lam * np.linalg.norm(a1, 2) + np.linalg.norm(a0, 2)
        pencil = quadratic_pencil_check(params, magnetic, k, grid, lam, result.minimizer, forms)
        entries.append(_entry("quadratic_pencil", pencil / scale < 1e-8, pencil / scale, 1e-8))
        steady = steady_residual(params, magnetic, k, lam, result.minimizer, result.eig_residual)
        worst = max(steady.momentum_residual, steady.jump_residual)
        entries.append(_entry("steady_residual", steady.trusted and worst < 1e-6, worst, 1e-6))
        entries.append(_entry("companion", abs(companion - lam) <= 1e-6 * max(1.0, lam),
                              companion, lam))
        est = variational_bound_check(forms, lam, min(n_samples, 200), streams[3])
        entries.append(_entry("variational_bound", est.violations == 0, est.best_ratio, 0.0))
        state0 = growing_mode_state(forms.basis.to_coords(result.minimizer), lam)
        T, dt = 1.0 / lam, 1e-2 / lam
    else:
        entries.append(_entry("companion", companion <= 1e-8, companion, 1e-8))
        state0 = random_state(forms.dim, streams[4])
        T, dt = 1.0, 1e-2

    _, ledger = evolve(params, magnetic, k, state0, T, dt, forms=forms)
    balance = float(ledger.column("balance").max())
    interactive = float(ledger.column("interactive").max())
    entries.append(_entry("energy_balance", balance < LEDGER_TOL, balance, LEDGER_TOL))
    entries.append(
        _entry("interactive_identity", interactive < LEDGER_TOL, interactive, LEDGER_TOL)
    )
    return entries


def _run_verify(config: RunConfig, threads: Optional[int], seed: int) -> Tuple[Dict, pd.DataFrame]:
    entries = [_jsonable(e) for e in _verify_entries(config, seed)]
    failed = [e["name"] for e in entries if not e["passed"]]
    if failed:
        logger.warning("Verification failed for: %s", ", ".join(failed))
    frame = pd.DataFrame(
        [{k: e[k] for k in ("name", "passed", "value", "threshold")} for e in entries],
        columns=["name", "passed", "value", "threshold"],
    )
    return {"passed": not failed, "entries": entries}, frame


_DISPATCH: Dict[str, Callable[[RunConfig, Optional[int], int], Tuple[Dict, pd.DataFrame]]] = {
    "mc": _run_mc,
    "dispersion": _run_dispersion,
    "critical-field": _run_critical,
    "stability-map": _run_stability_map,
    "ivp": _run_ivp,
    "verify": _run_verify,
}


def run(
    subcommand: str,
    config: RunConfig,
    threads: Optional[int] = None,
    seed: Optional[int] = None,
) -> ResultBundle:
    """
    Run one analysis.

    Args:
        subcommand: One of mc, dispersion, critical-field, stability-map, ivp, verify
        config: Validated configuration
        threads: Worker count for scans; the executor default when None
        seed: Random seed; ``config.ivp.seed`` when None

    Returns:
        ResultBundle whose payload is deterministic for a fixed config and seed

    Raises:
        InvalidInputError: On an unknown subcommand
        MHDStabilityError: Propagated from the analysis
    """
    if subcommand not in _DISPATCH:
        raise InvalidInputError(f"unknown subcommand {subcommand!r}; expected one of {SUBCOMMANDS}")
    seed = config.ivp.seed if seed is None else seed

    started = _now()
    logger.info("Running %s (config %s)", subcommand, config.config_hash[:12])
    payload, frame = _DISPATCH[subcommand](config, threads, seed)
    metadata = {
        "subcommand": subcommand,
        "config_hash": config.config_hash,
        "started_at": started,
        "finished_at": _now(),
        "n_upper": config.grid.n_upper,
        "n_lower": config.grid.n_lower,
        "seed": seed,
        "version": __version__,
    }
    return ResultBundle(subcommand, metadata, _jsonable(payload), frame)


def emit(
    bundle: ResultBundle, format: str = "json", path: Optional[Union[str, Path]] = None
) -> None:
    """
    Write a bundle as CSV (the table only) or JSON (metadata and payload).

    Floats keep 17 significant digits; non-finite values become empty CSV
    cells or JSON null. Writes to stdout when ``path`` is None.

    Raises:
        InvalidInputError: On an unknown format
        MHDStabilityError: If the destination cannot be written
    """
    if format == "csv":
        text = bundle.frame.to_csv(index=False, float_format="%.17g")
    elif format == "json":
        body = {"metadata": bundle.metadata, "payload": bundle.payload}
        text = json.dumps(_jsonable(body), indent=2, allow_nan=False) + "\n"
    else:
        raise InvalidInputError(f"unknown format {format!r}; expected one of {FORMATS}")

    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise MHDStabilityError(f"cannot write {path}: {e}") from e
    logger.info("Wrote %s output to %s", format, path)


def _env_int(name: str) -> Optional[int]:
    value = os.environ.get(name)
    if value in (None, ""):
        return None
    try:
        return int(value)  # type: ignore[arg-type]
    except ValueError as e:
        raise ConfigurationError(f"must be an integer, got: {value!r}", path=name) from e


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mhdrt",
        description="Linear stability of two-layer viscous MHD Rayleigh-Taylor flow",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="Path to the JSON run configuration")
    parser.add_argument("--out", default=None, help="Output path (stdout when omitted)")
    parser.add_argument("--format", choices=FORMATS, default="json")
    parser.add_argument("--threads", type=int, default=None, help="Worker count for scans")
    parser.add_argument("--seed", type=int, default=None, help="Seed for random sampling")
    parser.add_argument("--log-level", default=None, help="Logging level (default WARNING)")
    return parser


def _report_error(error: Exception, status: int) -> int:
    report = {
        "error": type(error).__name__,
        "message": str(error),
        "path": getattr(error, "path", None),
    }
    sys.stderr.write(json.dumps(report) + "\n")
    return status


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the ``mhdrt`` command; returns the exit status."""
    args = _build_parser().parse_args(argv)
    if load_dotenv is not None:
        load_dotenv()

    level = (args.log_level or os.environ.get("MHDRT_LOG_LEVEL") or "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )

    try:
        threads = args.threads if args.threads is not None else _env_int("MHDRT_THREADS")
        seed = args.seed if args.seed is not None else _env_int("MHDRT_SEED")
        if threads is not None and threads < 1:
            raise ConfigurationError(f"must be positive, got: {threads}", path="threads")
        if seed is not None and seed < 0:
            raise ConfigurationError(f"must be nonnegative, got: {seed}", path="seed")
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigurationError(f"cannot read configuration: {e}", path="--config") from e
        config = parse_config(text)
        bundle = run(args.subcommand, config, threads=threads, seed=seed)
        emit(bundle, args.format, args.out)
    except ConfigurationError as e:
        return _report_error(e, 2)
    except MHDStabilityError as e:
        logger.error("%s failed: %s", args.subcommand, e)
        return _report_error(e, 1)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
