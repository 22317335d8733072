import csv
import io
import json
from pathlib import Path

import pytest

from mdri import cli

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def load(name):
    return json.loads((CONFIGS / name).read_text())


def strip_stamp(text):
    return "\n".join(l for l in text.splitlines() if "generated_at" not in l)


def test_norm_command(tmp_path):
    code = cli.main(["norm", "--config", str(CONFIGS / "norm_diag.json"), "--out", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "norm_diag.json").read_text().splitlines()
    assert lines[1].lstrip().startswith('"generated_at"')
    assert json.loads("\n".join(lines))["norm"] == pytest.approx(2.0)


def test_conjugate_csv(tmp_path):
    assert cli.run(CONFIGS / "conjugate_quadratic.json", tmp_path) == 0
    with open(tmp_path / "conjugate_quadratic_conjugate.csv") as fh:
        assert fh.readline().startswith("# generated_at:")
        rows = list(csv.DictReader(fh))
    for r in rows:
        assert float(r["value"]) == pytest.approx(0.5 * float(r["x1"]) ** 2, abs=1e-6)


def test_unknown_key_is_invalid(tmp_path):
    cfg = load("norm_diag.json")
    cfg["colour"] = "blue"
    err = io.StringIO()
    assert cli.run(write(tmp_path, cfg), tmp_path, stream=err) == 2
    assert "colour" in err.getvalue()


def test_nested_unknown_key_is_invalid(tmp_path):
    cfg = load("norm_diag.json")
    cfg["model"]["extra"] = 1
    assert cli.run(write(tmp_path, cfg), tmp_path, stream=io.StringIO()) == 2


def test_missing_file_and_bad_json(tmp_path):
    assert cli.run(tmp_path / "nope.json", tmp_path, stream=io.StringIO()) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.run(bad, tmp_path, stream=io.StringIO()) == 2


def test_command_mismatch(tmp_path):
    err = io.StringIO()
    assert cli.run(CONFIGS / "norm_diag.json", tmp_path, command="chain", stream=err) == 2


def test_acceptance_requires_constants(tmp_path):
    cfg = load("tail_chernoff.json")
    del cfg["constants"]
    p = write(tmp_path, cfg)
    assert cli.run(p, tmp_path, stream=io.StringIO()) == 0
    assert cli.run(p, tmp_path, acceptance=True, stream=io.StringIO()) == 2


def test_violation_exit_code(tmp_path):
    cfg = load("mc_chernoff.json")
    cfg["trials"] = 200000
    cfg["constants"]["c"] = 5.0
    p = write(tmp_path, cfg)
    assert cli.run(p, tmp_path, acceptance=True, stream=io.StringIO()) == 3
    # outside acceptance mode the violation is reported but not fatal
    assert cli.run(p, tmp_path, stream=io.StringIO()) == 0
    summary = json.loads((tmp_path / "mc_chernoff.json").read_text())
    assert summary["dominance"]["violations"] > 0


def test_internal_error_exit_code(tmp_path, monkeypatch):
    def boom(config, threads):
        raise RuntimeError("boom")
    monkeypatch.setitem(cli.HANDLERS, "norm", boom)
    assert cli.run(CONFIGS / "norm_diag.json", tmp_path, stream=io.StringIO()) == 1


def test_domain_error_is_invalid(tmp_path):
    cfg = load("norm_diag.json")
    cfg["model"]["covariance"] = [[1, 2], [2, 1]]
    assert cli.run(write(tmp_path, cfg), tmp_path, stream=io.StringIO()) == 2


def test_emit_plot_data_empty(tmp_path):
    p = cli.emit_plot_data(None, tmp_path / "e.csv")
    assert p.read_text() == "series,x,y\n"
    p = cli.emit_plot_data([], tmp_path / "e2.csv")
    assert p.read_text() == "series,x,y\n"


def test_dumps_report_layout():
    text = cli.dumps_report({"b": 1, "a": [1.5, float("nan")]}, "T")
    lines = text.splitlines()
    assert lines[1] == '  "generated_at": "T",'
    assert json.loads(text) == {"generated_at": "T", "a": [1.5, None], "b": 1}
    assert json.loads(cli.dumps_report({}, "T")) == {"generated_at": "T"}


def test_reproducible_across_threads(tmp_path):
    cfg = load("mc_chernoff.json")
    cfg["trials"] = 300000
    p = write(tmp_path, cfg)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.run(p, a, threads=1) == 0
    assert cli.run(p, b, threads=8) == 0
    for f in sorted(a.iterdir()):
        assert strip_stamp(f.read_text()) == strip_stamp((b / f.name).read_text())


@pytest.mark.parametrize("name", ["tail_chernoff.json", "entropy_square.json", "sums_verify.json"])
def test_shipped_configs_pass_acceptance(tmp_path, name):
    assert cli.run(CONFIGS / name, tmp_path, acceptance=True) == 0


def test_schema_is_packaged():
    schema = cli.load_schema()
    assert schema["additionalProperties"] is False
