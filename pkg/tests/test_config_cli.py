import json
from pathlib import Path

import pytest

from certrom.cli import main
from certrom.config import SchemaError, load_config, parse_config
from certrom.report import FLAG_NAMES, emit, exit_code, orchestrate, recompute_bounds

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
MINIMAL = {"grid": {"N": 16, "nu": 0.1}, "fom": {"theta": 0.5, "dt": 0.01, "steps": 2}}


def test_theta_outside_interval_rejected():
    bad = json.loads(json.dumps(MINIMAL))
    bad["fom"]["theta"] = 0.4
    with pytest.raises(SchemaError) as ei:
        parse_config(bad)
    assert ei.value.path == "fom.theta"
    assert "[1/2, 1]" in str(ei.value)


@pytest.mark.parametrize("key", ["hyperreduction", "learned_closure", "no_slip", "gram_matrix"])
def test_unsupported_feature_named(key):
    bad = json.loads(json.dumps(MINIMAL))
    bad.setdefault("rom", {"n": 2})[key] = True
    with pytest.raises(SchemaError, match="unsupported feature") as ei:
        parse_config(bad)
    assert ei.value.path.endswith(key)


def test_unknown_key_rejected():
    with pytest.raises(SchemaError, match="unknown key"):
        parse_config({**MINIMAL, "gird": {}})


def test_defaults_filled():
    cfg = parse_config(MINIMAL)
    assert cfg.fom.snapshot_count == 50
    assert cfg.seed is None and cfg.rom is None
    assert cfg.to_dict()["grid"]["N"] == 16


def test_missing_file_is_oserror(tmp_path):
    with pytest.raises(OSError):
        load_config(tmp_path / "nope.json")


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("full")
    code = main(["report", "--config", str(CONFIGS / "taylor_green_full.json"), "--out", str(out)])
    return code, out, json.loads((out / "report.json").read_text())


def test_full_report_flags_and_inventory(full_run):
    import hashlib

    code, out, body = full_run
    assert code == 0
    assert list(body["flags"]) == sorted(FLAG_NAMES) or set(body["flags"]) == set(FLAG_NAMES)
    assert set(FLAG_NAMES) == {"skew-ok", "diss-ok", "margin-ok", "residual-computed", "regime-ok"}
    assert all(body["flags"][k] is True for k in FLAG_NAMES)
    for item in body["artifacts"]:
        data = (out / item["file"]).read_bytes()
        assert len(data) == item["bytes"]
        assert hashlib.sha256(data).hexdigest() == item["sha256"]
    assert (out / "structure_K.txt").read_text().split()[2] == "10.0"


def test_recomputed_bounds_match(full_run):
    _, _, body = full_run
    pairs = recompute_bounds(body)
    assert {"aposteriori", "apriori", "fsi_margin.dt_max", "fsi_run.alpha_min"} <= set(pairs)
    for reported, again in pairs.values():
        assert abs(reported - again) <= 1e-12 * max(1.0, abs(again))


def test_report_byte_identical(full_run, tmp_path):
    _, out, _ = full_run
    main(["report", "--config", str(CONFIGS / "taylor_green_full.json"), "--out", str(tmp_path)])
    assert (tmp_path / "report.json").read_bytes() == (out / "report.json").read_bytes()


def test_seed_override_changes_random_stages(full_run, tmp_path):
    _, _, body = full_run
    main(["rom-certify", "--config", str(CONFIGS / "taylor_green_full.json"), "--out", str(tmp_path),
          "--seed", "7"])
    other = json.loads((tmp_path / "report.json").read_text())
    assert other["seed"] == 7 != body["seed"]


@pytest.mark.parametrize("name, code, false_flag", [
    ("fom_only.json", 0, None),
    ("tampered_tensor.json", 2, "skew-ok"),
    ("negative_damping.json", 2, "diss-ok"),
])
def test_scenario_exit_codes(tmp_path, name, code, false_flag, capsys):
    assert main(["report", "--config", str(CONFIGS / name), "--out", str(tmp_path)]) == code
    body = json.loads((tmp_path / "report.json").read_text())
    if false_flag:
        assert body["flags"][false_flag] is False
    assert f"exit {code}" in capsys.readouterr().out


def test_bad_config_exit_one(tmp_path, capsys):
    p = tmp_path / "bad.json"
    bad = json.loads(json.dumps(MINIMAL))
    bad["fom"]["theta"] = 0.4
    p.write_text(json.dumps(bad))
    assert main(["fom-run", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    assert "fom.theta" in capsys.readouterr().err


def test_unrequested_flags_are_null(tmp_path):
    cfg = parse_config(MINIMAL)
    rep = orchestrate(cfg, ["fom"])
    assert rep.flags["skew-ok"] is None and rep.flags["margin-ok"] is None
    assert exit_code(rep) == 0
    emit(rep, tmp_path)
    assert (tmp_path / "fom_final_state.csv").exists()


def test_randomized_stage_needs_seed():
    data = json.loads((CONFIGS / "taylor_green_full.json").read_text())
    data.pop("seed")
    with pytest.raises(SchemaError, match="seed"):
        orchestrate(parse_config(data, CONFIGS), ["certify"])
