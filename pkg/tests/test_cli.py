"""
Tests for configuration parsing, subcommand dispatch, output and the entry point.
"""

import json
import math

import pandas as pd
import pytest

from mhd_rt_stability.chebgrid import DEFAULT_DEGREE
from mhd_rt_stability.cli import (
    ResultBundle,
    emit,
    main,
    parse_config,
    run,
)
from mhd_rt_stability.exceptions import (
    ConfigurationError,
    EigensolveError,
    InvalidInputError,
)
from mhd_rt_stability.growthrate import DISPERSION_COLUMNS

PARAMS = {
    "rho_plus": 2.0,
    "rho_minus": 1.0,
    "mu_plus": 1.0,
    "mu_minus": 1.0,
    "g": 1.0,
    "ell": 1.0,
    "m": 1.0,
}


def _doc(**sections):
    doc = {"params": dict(PARAMS), "field": [0.0, 0.0, 0.3]}
    doc.update(sections)
    return doc


def _config(**sections):
    return parse_config(json.dumps(_doc(**sections)))


@pytest.fixture
def config_file(tmp_path):
    def write(doc):
        path = tmp_path / "run.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        return str(path)

    return write


class TestParseConfig:
    """Test validation of run configurations."""

    def test_defaults(self):
        config = _config()
        assert config.params.rho_plus == 2.0
        assert config.field.b3 == 0.3
        assert config.grid.n_upper == DEFAULT_DEGREE
        assert config.kgrid.mode == "log"
        assert config.kgrid.count == 40
        assert config.sweep is None
        assert config.ivp.T is None
        assert config.critical.direction == (0.0, 0.0, 1.0)
        assert config.verify.n_samples == 1000
        assert config.tolerances.eig == 1e-12

    def test_hash_ignores_key_order(self):
        doc = _doc()
        reordered = {"field": doc["field"], "params": dict(reversed(list(doc["params"].items())))}
        assert parse_config(json.dumps(doc)).config_hash == parse_config(
            json.dumps(reordered)
        ).config_hash

    def test_hash_changes_with_content(self):
        assert _config().config_hash != _config(grid={"n_upper": 16}).config_hash

    def test_sections_parsed(self):
        config = _config(
            kgrid={"mode": "linear", "min": 1, "max": 5, "count": 3, "direction": [1, 0]},
            sweep={"b3_min": 0.1, "b3_max": 0.5, "count": 3},
            ivp={"T": 1.0, "dt": 0.1, "seed": 4, "k": [0, 2]},
        )
        assert config.kgrid.direction == (1.0, 0.0)
        assert config.sweep.values == pytest.approx([0.1, 0.3, 0.5])
        assert config.ivp.k == (0.0, 2.0)
        assert config.ivp.seed == 4

    @pytest.mark.parametrize(
        "doc,path",
        [
            (_doc(params={**PARAMS, "rho_plus": 1.0}), "params.rho_plus"),
            (_doc(params={k: v for k, v in PARAMS.items() if k != "g"}), "params.g"),
            (_doc(params={**PARAMS, "mu_plus": -1.0}), "params.mu_plus"),
            ({"params": PARAMS}, "field"),
            (_doc(field=[0.0, 0.0]), "field"),
            (_doc(grid={"n_upper": 4}), "grid.n_upper"),
            (_doc(kgrid={"min": 5.0, "max": 1.0}), "kgrid.min"),
            (_doc(kgrid={"count": 2.5}), "kgrid.count"),
            (_doc(kgrid={"spacing": "log"}), "kgrid"),
            (_doc(kgrid={"direction": "along-B"}), "kgrid.direction"),
            (_doc(ivp={"T": 0.1, "dt": 1.0}), "ivp.dt"),
            (_doc(critical={"direction": [1, 0, 0]}), "critical.direction"),
            (_doc(verify={"k": [0, 0]}), "verify.k"),
            (_doc(tolerances={"eig": 0}), "tolerances.eig"),
        ],
    )
    def test_violations_name_path(self, doc, path):
        with pytest.raises(ConfigurationError) as exc_info:
            parse_config(json.dumps(doc))
        assert exc_info.value.path == path

    def test_density_message_mentions_assumption(self):
        with pytest.raises(ConfigurationError) as exc_info:
            parse_config(json.dumps(_doc(params={**PARAMS, "rho_plus": 0.5})))
        assert "[rho] > 0" in str(exc_info.value)

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigurationError):
            parse_config(json.dumps(_doc(extras={})))

    def test_malformed_json(self):
        with pytest.raises(ConfigurationError):
            parse_config("{not json")


class TestRun:
    """Test subcommands on small grids."""

    def test_mc(self):
        bundle = run("mc", _config())
        assert bundle.payload["M_c"] == pytest.approx(math.sqrt(0.5))
        assert bundle.metadata["subcommand"] == "mc"
        assert bundle.metadata["config_hash"] == _config().config_hash
        assert bundle.metadata["version"]

    def test_unknown_subcommand(self):
        with pytest.raises(InvalidInputError):
            run("spectrum", _config())

    def test_dispersion_csv(self, tmp_path):
        config = _config(grid={"n_upper": 12, "n_lower": 12}, kgrid={"min": 1, "max": 10, "count": 3})
        bundle = run("dispersion", config, threads=2)
        out = tmp_path / "dispersion.csv"
        emit(bundle, "csv", out)
        lines = out.read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(DISPERSION_COLUMNS)
        assert len(lines) == 4
        assert bundle.payload["lambda_max"] > 0

    def test_dispersion_deterministic(self):
        config = _config(grid={"n_upper": 12, "n_lower": 12}, kgrid={"min": 1, "max": 10, "count": 3})
        assert run("dispersion", config).payload == run("dispersion", config).payload

    def test_critical_field(self):
        config = _config(
            grid={"n_upper": 12, "n_lower": 12},
            kgrid={"min": 0.1, "max": 5, "count": 4},
            critical={"tol": 1e-3},
        )
        payload = run("critical-field", config).payload
        assert 0 < payload["critical_field"] <= payload["M_c"] + 1e-3
        assert payload["k_max"] == 5.0

    def test_stability_map_requires_sweep(self):
        with pytest.raises(ConfigurationError) as exc_info:
            run("stability-map", _config())
        assert exc_info.value.path == "sweep"

    def test_stability_map(self):
        config = _config(
            grid={"n_upper": 12, "n_lower": 12},
            kgrid={"min": 1, "max": 8, "count": 2},
            sweep={"b3_min": 0.3, "b3_max": 1.0, "count": 2},
        )
        bundle = run("stability-map", config)
        assert list(bundle.frame["regime"]) == ["subcritical", "supercritical"]
        assert bundle.payload["map"]["params"] == PARAMS

    def test_ivp_with_horizon(self):
        config = _config(grid={"n_upper": 12, "n_lower": 12}, ivp={"T": 0.5, "dt": 0.05, "k": [0, 5]})
        bundle = run("ivp", config)
        assert list(bundle.frame.columns) == [
            "t", "kinetic", "magnetic", "surface", "dissipation_integral", "u_norm"
        ]
        assert "balance" in bundle.payload["ledger"][0]
        assert len(bundle.frame) == 11
        assert bundle.payload["dt"] == pytest.approx(0.05)
        assert bundle.payload["lambda"] > 0
        assert bundle.payload["max_balance_residual"] < 1e-8

    def test_stable_ivp_needs_horizon(self):
        doc = _doc(grid={"n_upper": 12, "n_lower": 12}, ivp={"k": [0, 5]})
        doc["field"] = [0.0, 0.0, 1.0]
        with pytest.raises(ConfigurationError) as exc_info:
            run("ivp", parse_config(json.dumps(doc)))
        assert exc_info.value.path == "ivp"

    def test_verify_entries(self):
        config = _config(grid={"n_upper": 12, "n_lower": 12}, verify={"n_samples": 10})
        bundle = run("verify", config, seed=1)
        names = [e["name"] for e in bundle.payload["entries"]]
        for name in ("poincare", "trace", "korn", "companion", "energy_balance"):
            assert name in names
        assert isinstance(bundle.payload["passed"], bool)
        assert list(bundle.frame.columns) == ["name", "passed", "value", "threshold"]


class TestEmit:
    def test_header_only_csv(self, tmp_path):
        bundle = ResultBundle("dispersion", {}, {}, pd.DataFrame(columns=DISPERSION_COLUMNS))
        out = tmp_path / "empty.csv"
        emit(bundle, "csv", out)
        assert out.read_text(encoding="utf-8").strip() == ",".join(DISPERSION_COLUMNS)

    def test_json_round_trip(self, tmp_path):
        bundle = run("mc", _config())
        out = tmp_path / "mc.json"
        emit(bundle, "json", out)
        body = json.loads(out.read_text(encoding="utf-8"))
        assert body["payload"]["M_c"] == bundle.payload["M_c"]
        assert body["metadata"]["subcommand"] == "mc"

    def test_nonfinite_becomes_null(self, tmp_path):
        bundle = ResultBundle("mc", {}, {"value": float("nan")}, pd.DataFrame())
        out = tmp_path / "nan.json"
        emit(bundle, "json", out)
        assert json.loads(out.read_text(encoding="utf-8"))["payload"]["value"] is None

    def test_stdout(self, capsys):
        emit(run("mc", _config()), "json")
        assert json.loads(capsys.readouterr().out)["payload"]["M_c"] > 0

    def test_unknown_format(self):
        with pytest.raises(InvalidInputError):
            emit(run("mc", _config()), "xml")


class TestMain:
    """Test exit codes and environment handling."""

    def test_success(self, config_file, tmp_path):
        out = tmp_path / "mc.csv"
        status = main(["mc", "--config", config_file(_doc()), "--out", str(out), "--format", "csv"])
        assert status == 0
        assert out.read_text(encoding="utf-8").startswith("M_c")

    def test_invalid_config_exit_code(self, config_file, capsys):
        path = config_file(_doc(params={**PARAMS, "rho_plus": 1.0}))
        assert main(["mc", "--config", path]) == 2
        report = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert report["error"] == "ConfigurationError"
        assert report["path"] == "params.rho_plus"

    def test_missing_config_file(self, tmp_path):
        assert main(["mc", "--config", str(tmp_path / "absent.json")]) == 2

    def test_analysis_failure_exit_code(self, mocker, config_file):
        mocker.patch("mhd_rt_stability.cli.run", side_effect=EigensolveError("boom"))
        assert main(["dispersion", "--config", config_file(_doc())]) == 1

    def test_threads_from_environment(self, mocker, monkeypatch, config_file):
        monkeypatch.setenv("MHDRT_THREADS", "3")
        monkeypatch.delenv("MHDRT_SEED", raising=False)
        mock_run = mocker.patch("mhd_rt_stability.cli.run")
        mocker.patch("mhd_rt_stability.cli.emit")
        assert main(["mc", "--config", config_file(_doc())]) == 0
        assert mock_run.call_args.kwargs["threads"] == 3
        assert mock_run.call_args.kwargs["seed"] is None

    def test_flag_overrides_environment(self, mocker, monkeypatch, config_file):
        monkeypatch.setenv("MHDRT_THREADS", "3")
        mock_run = mocker.patch("mhd_rt_stability.cli.run")
        mocker.patch("mhd_rt_stability.cli.emit")
        main(["mc", "--config", config_file(_doc()), "--threads", "2", "--seed", "9"])
        assert mock_run.call_args.kwargs["threads"] == 2
        assert mock_run.call_args.kwargs["seed"] == 9

    def test_invalid_environment_value(self, monkeypatch, config_file):
        monkeypatch.setenv("MHDRT_THREADS", "many")
        assert main(["mc", "--config", config_file(_doc())]) == 2
