import csv
import json
import math
import os
from pathlib import Path

import pytest

from app.config import get_settings
from app.exceptions import ConfigError
from app.main import main
from app.models.schemas import BalanceReport
from app.services.harness import (
    EXIT_INPUT,
    EXIT_OK,
    _violations,
    cmd_equality_case,
    cmd_evaluate,
    cmd_sweep,
    cmd_verify,
    flag_monotone,
    format_value,
    load_run_config,
    prepare,
    sweep_values,
    write_csv,
)

FIXTURE = Path(__file__).resolve().parents[1] / "fixtures" / "reference_values.json"


@pytest.fixture
def reference():
    return json.loads(FIXTURE.read_text())


@pytest.fixture
def write_config(tmp_path):
    def write(operation: str, surface: str = "family = geodesic_sphere\ncurvature_sign = -1\nradius = 1.0", extra: str = ""):
        path = tmp_path / "run.ini"
        path.write_text(
            f"[surface]\n{surface}\n\n[operation]\n{operation}\n\n"
            f"[quadrature]\nbase_cells_per_axis = 8\ngauss_points_per_cell_axis = 4\n{extra}",
            encoding="utf-8",
        )
        return str(path)

    return write


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def test_load_run_config(write_config):
    config = load_run_config(write_config("name = density_ratio\nsigmas = 0.08 0.04"))
    assert config.surface.family == "geodesic_sphere"
    assert config.operation.sigmas == [0.08, 0.04]
    assert config.base_point.chart == 0
    assert config.output.path is None


def test_load_run_config_rejects_bad_input(tmp_path, write_config):
    with pytest.raises(ConfigError):
        load_run_config(str(tmp_path / "missing.ini"))
    with pytest.raises(ConfigError, match="unknown config section"):
        load_run_config(write_config("name = chen_inequality", extra="\n[plot]\ncolor = red\n"))
    with pytest.raises(ConfigError, match="operation.colour"):
        load_run_config(write_config("name = chen_inequality\ncolour = red"))
    with pytest.raises(ConfigError):
        load_run_config(write_config("name = chen_inequality", surface="family = klein_bottle"))


def test_prepare_rejects_missing_chart(write_config):
    config = load_run_config(write_config("name = chen_inequality", extra="\n[base_point]\nchart = 3\n"))
    with pytest.raises(ConfigError):
        prepare(config)


def test_format_value():
    assert format_value(True) == "true"
    assert format_value(False) == "false"
    assert format_value(7) == "7"
    assert format_value(1.0 / 3.0) == "0.333333333333"
    assert format_value(None) == ""


def test_write_csv_unions_columns(tmp_path):
    out = tmp_path / "rows.csv"
    write_csv([{"a": 1, "b": 2.5}, {"b": 3.0, "c": True}], str(out), leading=("x",))
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "x,a,b,c"
    assert lines[2] == ",,3,true"


def test_evaluate_willmore_energy(write_config, tmp_path, reference):
    out = tmp_path / "energy.csv"
    code = cmd_evaluate(load_run_config(write_config("name = willmore_energy")), str(out))
    assert code == EXIT_OK
    row = _read_csv(out)[0]
    assert row["operation"] == "willmore_energy"
    assert float(row["quarter_willmore"]) == pytest.approx(reference["hyperbolic_spheres"][1]["willmore_quarter"], rel=1e-8)


def test_evaluate_chen_on_sphere(write_config, tmp_path):
    out = tmp_path / "chen.csv"
    code = cmd_evaluate(load_run_config(write_config("name = chen_inequality")), str(out))
    assert code == EXIT_OK
    row = _read_csv(out)[0]
    assert row["passed"] == "true"
    assert float(row["area"]) == pytest.approx(4 * math.pi * math.sinh(1.0) ** 2, rel=1e-8)


def test_violations_ignore_identities_and_embeddedness():
    failing = BalanceReport.build("chen_inequality", "inequality", 5.0, 4.0, {}, 1e-5)
    uncertified = BalanceReport.build("embeddedness_criterion", "inequality", 5.0, 4.0, {}, 1e-5)
    identity = BalanceReport.build("crude_balance", "identity", 5.0, 4.0, {}, 1e-5)
    assert _violations([failing, uncertified, identity]) == [failing]


def test_sweep_values(write_config):
    config = load_run_config(
        write_config("name = chen_inequality\nsweep_variable = resolution\nsweep_start = 8\nsweep_stop = 9\nsweep_count = 4")
    )
    assert sweep_values(config.operation) == [8.0, 9.0]
    with pytest.raises(ConfigError):
        sweep_values(config.operation.model_copy(update={"sweep_count": 0}))
    with pytest.raises(ConfigError):
        sweep_values(config.operation.model_copy(update={"sweep_variable": None}))


def test_flag_monotone():
    rows = [{"q": 1.0}, {"q": 2.0}, {"q": 1.5}, {"q": 1.5}]
    assert flag_monotone(rows, "q", 1, 1e-6) == [True, True, False, True]
    assert flag_monotone(rows, "q", -1, 1e-6) == [True, False, True, True]


def test_resolution_sweep(write_config, tmp_path):
    out = tmp_path / "sweep.csv"
    config = load_run_config(
        write_config("name = chen_inequality\nsweep_variable = resolution\nsweep_start = 8\nsweep_stop = 16\nsweep_count = 2")
    )
    assert cmd_sweep(config, str(out)) == EXIT_OK
    rows = _read_csv(out)
    assert [row["resolution"] for row in rows] == ["8", "16"]
    assert {"observed_order", "abs_residual", "monotone_ok"} <= set(rows[0])


def test_t_sweep_rebuilds_the_surface(write_config, tmp_path):
    out = tmp_path / "t.csv"
    config = load_run_config(
        write_config("name = willmore_energy\nsweep_variable = t\nsweep_start = 0.5\nsweep_stop = 1.0\nsweep_count = 2")
    )
    assert cmd_sweep(config, str(out)) == EXIT_OK
    rows = _read_csv(out)
    assert float(rows[0]["quarter_willmore"]) == pytest.approx(4 * math.pi * math.cosh(0.5) ** 2, rel=1e-8)
    assert float(rows[1]["quarter_willmore"]) == pytest.approx(4 * math.pi * math.cosh(1.0) ** 2, rel=1e-8)


def test_equality_case_command(write_config, tmp_path):
    out = tmp_path / "pairs.csv"
    config = load_run_config(write_config("name = equality_case_residual\nsample_pairs = 300"))
    assert cmd_equality_case(config, str(out)) == EXIT_OK
    row = _read_csv(out)[0]
    assert float(row["max_residual"]) < 1e-8
    assert row["mean_curvature_positive"] == "true"


def test_verify_selected_items(capsys):
    assert cmd_verify(["weight_identity_H", "weight_identity_S"]) == EXIT_OK
    printed = capsys.readouterr().out
    assert "PASS weight_identity_H" in printed
    assert "2/2 passed" in printed
    with pytest.raises(ConfigError):
        cmd_verify(["no_such_item"])


def test_main_exit_codes(tmp_path):
    assert main(["evaluate", "--config", str(tmp_path / "missing.ini")]) == EXIT_INPUT
    assert main(["verify", "no_such_item"]) == EXIT_INPUT


def test_verify_threads_reach_the_settings(monkeypatch):
    monkeypatch.delenv("WILLMORE_THREADS", raising=False)
    get_settings.cache_clear()
    try:
        assert cmd_verify(["weight_identity_H"], threads=3) == EXIT_OK
        assert get_settings().THREADS == 3
    finally:
        # apply_overrides writes os.environ directly; pop it so monkeypatch's undo cannot restore it
        os.environ.pop("WILLMORE_THREADS", None)
        get_settings.cache_clear()
