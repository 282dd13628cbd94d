import json
from pathlib import Path

import pytest

from ergolab import cli
from ergolab.config import ConfigError, load_config
from ergolab.errors import NumericalError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, text, name="cfg.json"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_every_shipped_config_validates():
    for p in sorted(CONFIGS.glob("*.json")):
        exp = json.loads(p.read_text())["experiment"]
        assert load_config(p, exp, {}).experiment == exp


def test_missing_map_reports_line_number(tmp_path):
    text = (
        '{\n'
        '  "experiment": "oseledets",\n'
        '  "driver": {"kind": "iid", "probabilities": [0.5, 0.5]},\n'
        '  "matrices": {"1": [[1.0, 0.0], [0.0, 1.0]]},\n'
        '  "horizon": 10,\n'
        '  "seeds": [1]\n'
        '}\n'
    )
    p = write(tmp_path, text)
    with pytest.raises(ConfigError) as err:
        load_config(p, "oseledets", {})
    assert f"{p}:4:" in str(err.value) and "symbol 0" in str(err.value)


@pytest.mark.parametrize(
    "patch",
    [
        {"driver": {"kind": "iid", "probabilities": [0.5, 0.6]}},
        {"horizon": 0},
        {"seeds": "one"},
        {"experiment": "goodtimes"},
    ],
)
def test_invalid_fields_exit_two(tmp_path, patch, capsys):
    raw = json.loads((CONFIGS / "drift_walk.json").read_text())
    raw.update(patch)
    p = write(tmp_path, json.dumps(raw, indent=2))
    assert cli.main(["drift", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "config error" in capsys.readouterr().err


def test_malformed_json_and_missing_file_exit_two(tmp_path):
    p = write(tmp_path, "{not json")
    assert cli.main(["drift", "--config", str(p)]) == 2
    assert cli.main(["drift", "--config", str(tmp_path / "nope.json")]) == 2


def test_drift_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "drift"
    code = cli.main(["drift", "--config", str(CONFIGS / "drift_walk.json"), "--out", str(out),
                     "--horizon", "20000", "--seeds", "1,2,3"])
    assert code == 0
    assert "PASS drift.drift" in capsys.readouterr().out
    summary = json.loads((out / "summary.json").read_text())
    assert summary["horizon"] == 20000 and summary["seeds"] == [1, 2, 3]
    assert abs(summary["results"]["drift"]["A_hat_as"] - 0.5) < 0.02
    assert (out / "drift.csv").read_text().startswith("n,mean_ratio\n")


def test_failed_expectation_exits_one(tmp_path):
    raw = json.loads((CONFIGS / "drift_walk.json").read_text())
    raw["expect"] = {"A": 0.9}
    raw["horizon"] = 5000
    p = write(tmp_path, json.dumps(raw))
    assert cli.main(["drift", "--config", str(p), "--out", str(tmp_path / "o")]) == 1


def test_numerical_failure_exits_three(tmp_path, monkeypatch, capsys):
    def boom(cfg, res):
        raise NumericalError("products left the representable range")

    monkeypatch.setitem(cli.RUNNERS, "drift", boom)
    assert cli.main(["drift", "--config", str(CONFIGS / "drift_walk.json"), "--out", str(tmp_path / "o")]) == 3
    assert "numerical failure in ergolab" in capsys.readouterr().err


def test_goodtimes_additive_bundle(tmp_path):
    out = tmp_path / "gt"
    cfg = str(CONFIGS / "goodtimes_additive.json")
    assert cli.main(["goodtimes", "--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert all(s["density"] == 1.0 for s in summary["results"]["seeds"])
    assert cli.main(["bundle", "--config", cfg, "--out", str(out)]) == 0
    manifest = json.loads((out / "bundle" / "manifest.json").read_text())
    assert manifest["experiment"] == "goodtimes"
    assert {e["file"] for e in manifest["entries"]} == {f"goodtimes_seed{s}.csv" for s in (1, 2, 3)}
    assert all(e["y"] == "density" for e in manifest["entries"])
    for e in manifest["entries"]:
        assert (out / "bundle" / e["file"]).is_file()


def test_oseledets_bundle_references_the_norm_of_the_limit(tmp_path):
    out = tmp_path / "os"
    cfg = str(CONFIGS / "oseledets_shear.json")
    assert cli.main(["oseledets", "--config", cfg, "--out", str(out), "--horizon", "5000"]) == 0
    assert cli.main(["bundle", "--config", cfg, "--out", str(out)]) == 0
    entries = json.loads((out / "bundle" / "manifest.json").read_text())["entries"]
    assert entries and entries[0]["y"] == "a_rate"


def test_bundle_without_run_exits_four(tmp_path):
    assert cli.main(["bundle", "--config", str(CONFIGS / "drift_walk.json"), "--out", str(tmp_path / "e")]) == 4


def test_reruns_are_byte_identical(tmp_path):
    cfg = str(CONFIGS / "goodtimes_additive.json")
    for d in ("a", "b"):
        assert cli.main(["goodtimes", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
