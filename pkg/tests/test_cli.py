import json
import subprocess
import sys

import pytest

from loglap.cli import EXIT_CHECK, EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, format_float, main
from loglap.experiments import CATALOG, KINDS, Check, list_experiments, validate_config, ConfigError

MOMENTS = {
    "kind": "moments",
    "m": 2.0,
    "seed": 3,
    "k_max": 3,
    "pair": {"first": {"kind": "circle", "N": 32}, "relabel": True},
    "observation": {"start": 0, "stop": 8},
}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg) if not isinstance(cfg, str) else cfg)
    return str(p)


def test_catalog_has_five_kinds_with_equation_labels(capsys):
    cat = list_experiments()
    assert [k for k, _, _ in cat] == list(KINDS) and len(cat) == 5
    assert all(len(anchors) >= 1 for _, _, anchors in cat)
    assert main(["--list"]) == EXIT_OK
    first = capsys.readouterr().out
    main(["--list"])
    assert capsys.readouterr().out == first
    assert all(k in first for k in CATALOG)


def test_module_entry_point_lists():
    out = subprocess.run([sys.executable, "-m", "loglap", "--list"], capture_output=True, text=True, check=True)
    assert "kernel-recovery" in out.stdout


def test_m_equal_one_is_a_validation_error(tmp_path, capsys):
    cfg = dict(MOMENTS, m=1.0)
    assert main([write(tmp_path, cfg), "--output-dir", str(tmp_path / "o")]) == EXIT_VALIDATION
    assert "m > 1 required" in capsys.readouterr().err


@pytest.mark.parametrize(
    "bad",
    [
        {"kind": "nonsense"},
        {"kind": "moments"},
        {"kind": "moments", "pair": {"first": {"kind": "circle", "N": 2}}},
        dict(MOMENTS, extra_key=1),
    ],
)
def test_schema_violations(tmp_path, bad):
    assert main([write(tmp_path, bad), "--output-dir", str(tmp_path / "o")]) == EXIT_VALIDATION


def test_parse_errors(tmp_path):
    assert main([write(tmp_path, "{not json")]) == EXIT_PARSE
    assert main([str(tmp_path / "missing.json")]) == EXIT_PARSE
    assert main([]) == EXIT_PARSE


def test_identical_pair_moments_are_exact_zeros(tmp_path):
    cfg = dict(MOMENTS, pair={"first": {"kind": "circle", "N": 32}})
    out = tmp_path / "o"
    assert main([write(tmp_path, cfg), "--output-dir", str(out)]) == EXIT_OK
    lines = (out / "moments.csv").read_text().splitlines()
    assert lines[0].split(",")[:3] == ["node", "k", "moment"]
    assert all(line.split(",")[2] == "0" for line in lines[1:])
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] and summary["kind"] == "moments"
    assert all("tolerance" in c for c in summary["checks"])


def test_check_failure_names_invariant(tmp_path, capsys):
    out = tmp_path / "o"
    cfg = {"kind": "kernel-recovery", "pair": {"first": {"kind": "circle", "N": 32}, "second": {"kind": "circle", "N": 32, "radius": 1.2}, "cauchy_equal": True}, "observation": {"start": 0, "stop": 8}}
    assert main([write(tmp_path, cfg), "--output-dir", str(out)]) == EXIT_CHECK
    assert "heat-kernel equality" in capsys.readouterr().err


def test_tolerance_scale_loosens(tmp_path):
    cfg = {"kind": "kernel-recovery", "pair": {"first": {"kind": "circle", "N": 32}, "second": {"kind": "circle", "N": 32, "radius": 1.2}, "cauchy_equal": True}, "observation": {"start": 0, "stop": 8}}
    assert main([write(tmp_path, cfg), "--output-dir", str(tmp_path / "o"), "--tolerance-scale", "1e12"]) == EXIT_OK


def test_env_output_dir_and_seed_override(tmp_path, monkeypatch):
    monkeypatch.setenv("LOGLAP_OUTPUT_DIR", str(tmp_path / "env"))
    assert main([write(tmp_path, MOMENTS), "--seed", "11"]) == EXIT_OK
    summary = json.loads((tmp_path / "env" / "summary.json").read_text())
    assert summary["config"]["seed"] == 11
    assert (tmp_path / "env" / "runtime.json").exists()


def test_format_float():
    assert format_float(-0.0) == "0"
    assert format_float(0.1) == "0.10000000000000001"
    assert format_float(float("inf")) == "inf"


def test_check_scaling():
    c = Check("x", "inv", 2.0, 1.0)
    assert not c.passed and c.scaled(3.0).passed
    g = Check("y", "inv", 10.0, 100.0, "ge")
    assert not g.passed and g.scaled(20.0).passed
    assert not Check("z", "inv", float("nan"), 1.0).passed


def test_validate_fills_defaults():
    cfg = validate_config({"kind": "distinguishability"})
    assert cfg["m"] == 2.0 and cfg["ratios"] == [1.0, 1.05, 1.1, 1.2]
    with pytest.raises(ConfigError, match="m > 1"):
        validate_config({"kind": "distinguishability", "m": 0.5})
