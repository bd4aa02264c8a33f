from __future__ import annotations

import csv
import io
import json

import pytest

from wanderlab.cantor.tent import tent_thickness
from wanderlab.cli import SUBCOMMANDS, run


def _run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    buf = io.StringIO()
    code = run([*argv, "--out", str(out)], stdout=buf)
    return code, out, buf.getvalue()


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_thickness_example(tmp_path):
    code, out, line = _run(tmp_path, "thickness", "--m", "4", "--mu", "-2", "--depth", "10")
    assert code == 0
    assert json.loads(line) == {"experiment": "thickness", "rows": 10, "verified": None}
    rows = _rows(out / "thickness.csv")
    assert [int(r["depth"]) for r in rows] == list(range(1, 11))
    # the streaming tent-coordinate kernel is a separate route to the same numbers
    for r in rows:
        assert float(r["tau"]) == pytest.approx(tent_thickness(4, int(r["depth"])).tau, rel=1e-9)
    body = json.loads((out / "thickness.json").read_text())
    assert body["config"]["params"] == {"depth": 10, "m": 4, "mu": -2.0}
    assert body["config"]["schema_version"] == 1


def test_historic_example(tmp_path):
    code, out, _ = _run(tmp_path, "historic", "--z0", "3", "--switches", "geometric", "--Kmax", "12")
    assert code == 0
    body = json.loads((out / "historic.json").read_text())
    assert body["verified"] is True and body["result"]["historic"] is True
    rows = _rows(out / "historic.csv")
    assert len(rows) == 12
    assert list(rows[0]) == ["k", "m_hat", "weight_p", "weight_phat", "weight_other",
                             "dist_to_nu0", "dist_to_nu1"]


def test_historic_control(tmp_path):
    code, out, _ = _run(tmp_path, "historic", "--switches", "none")
    assert code == 0
    assert json.loads((out / "historic.json").read_text())["result"]["historic"] is False


def test_malformed_config(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("schema_version: 1\nexperiment: thickness\nparams:\n  m: 4\n  dpeth: 3\n")
    code, _, _ = _run(tmp_path, "thickness", "--config", str(cfg))
    assert code == 1
    assert "params.dpeth" in capsys.readouterr().err


@pytest.mark.parametrize("text, field", [
    ("schema_version: 2\n", "schema_version"),
    ("schema_version: 1\nparams:\n  m: four\n", "params.m"),
    ("schema_version: 1\nexperiment: renorm\n", "experiment"),
    ("schema_version: 1\nextra: 1\n", "extra"),
])
def test_config_field_paths(tmp_path, capsys, text, field):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(text)
    code, _, _ = _run(tmp_path, "thickness", "--config", str(cfg))
    assert code == 1
    assert field in capsys.readouterr().err


def test_set_override_and_type_error(tmp_path, capsys):
    code, out, _ = _run(tmp_path, "thickness", "--set", "depth=3")
    assert code == 0 and len(_rows(out / "thickness.csv")) == 3
    code, _, _ = _run(tmp_path, "thickness", "--set", "depth=abc", name="o2")
    assert code == 1 and "params.depth" in capsys.readouterr().err


def test_precondition_exit(tmp_path):
    code, _, _ = _run(tmp_path, "historic", "--switches", "weird")
    assert code == 2


def test_verification_failure_exit(tmp_path):
    code, out, _ = _run(tmp_path, "rectangle-lemma", "--span", "3", "--eps_factor", "10")
    assert code == 3
    assert json.loads((out / "rectangle-lemma.json").read_text())["verified"] is False


def test_deterministic(tmp_path):
    argv = ("gap-lemma", "--pairs", "6", "--depth", "10", "--seed", "7")
    _, a, _ = _run(tmp_path, *argv, name="a")
    _, b, _ = _run(tmp_path, *argv, name="b")
    for f in ("gap-lemma.csv", "gap-lemma.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_every_subcommand_listed():
    assert set(SUBCOMMANDS) == {
        "thickness", "bridges", "gap-lemma", "distortion", "link-search", "linear-growth",
        "critical-chain", "perturb-budget", "chain", "rectangle-lemma", "wander", "historic",
        "henon-scan", "renorm"}
