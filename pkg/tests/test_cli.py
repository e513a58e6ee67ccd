import csv
import io
import json

import pytest

from openbilliards import __version__
from openbilliards.cli import main


@pytest.fixture(autouse=True)
def scene_path(scene_dir, monkeypatch):
    monkeypatch.setenv("BILLIARD_SCENE_DIR", str(scene_dir))


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_check_exit_codes(capsys):
    assert main(["check", "eq.json"]) == 0
    assert "no-eclipse\tPASS" in capsys.readouterr().out
    assert main(["check", "eclipse.json"]) == 1
    assert "(1,2,3)" in capsys.readouterr().out
    assert main(["check", "broken.json"]) == 2
    assert "line" in capsys.readouterr().err
    assert main(["check", "badfield.json"]) == 2
    assert main(["check", "missing.json"]) == 2


def test_orbit_rotation_row(capsys):
    assert main(["orbit", "two.json", "2:(1,2)"]) == 0
    table = rows(capsys.readouterr().out)
    assert table[0][:4] == ["code", "vertex", "x0", "x1"]
    rot = next(r for r in table if r[1] == "rotation")
    assert float(rot[2]) == pytest.approx(5) and float(rot[3]) == pytest.approx(0, abs=1e-12)


def test_orbit_usage_errors(capsys):
    assert main(["orbit", "eq.json", "3:(1,1,2)"]) == 2
    assert main(["orbit", "eq.json", "2:(1,4)"]) == 2
    assert main(["orbit", "eq.json", "banana"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["orbit", "eq.json"])
    assert exc.value.code == 2


def test_orbit_tol_flag(capsys):
    assert main(["orbit", "eq.json", "4:(1,2,1,3)", "--tol", "1e-12"]) == 0
    table = rows(capsys.readouterr().out)
    assert float(table[1][4]) <= 1e-12


def test_rotset_outputs(tmp_path, capsys):
    out = tmp_path / "r"
    assert main(["rotset", "eq.json", "--max-period", "4", "--out", str(out)]) == 0
    err = capsys.readouterr().err
    assert "hausdorff_to_previous" in err
    verts = rows((out / "vertices.csv").read_text())
    assert verts[0] == ["label", "x0", "x1"] and len(verts) == 1 + 7
    conv = rows((out / "convergence.csv").read_text())
    assert [r[1] for r in conv[1:]] == ["3", "4", "7"]
    assert json.loads((out / "plot.json").read_text())["dimension"] == 2
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "rotset" and man["version"] == __version__
    assert len(man["scene_digest"]) == 64 and man["parameters"]["max_period"] == 4


def test_rotset_max_period_two(capsys):
    assert main(["rotset", "eq.json", "--max-period", "2"]) == 0
    assert len(rows(capsys.readouterr().out)) == 4


def test_rotset_four_dimensions_skips_plot(tmp_path, capsys):
    out = tmp_path / "r4"
    assert main(["rotset", "four.json", "--max-period", "2", "--out", str(out)]) == 0
    assert "plot data skipped" in capsys.readouterr().err
    assert (out / "vertices.csv").exists() and not (out / "plot.json").exists()


def test_example51_verdict(capsys):
    assert main(["example51", "sym.json", "--k-max", "5", "--epsilon", "0.25"]) == 0
    cap = capsys.readouterr()
    assert "two distinct limit points" in cap.err
    table = rows(cap.out)
    assert table[0][:3] == ["k", "n_k", "b_n0"] and len(table) == 6


def test_example51_failures(capsys):
    assert main(["example51", "tight.json", "--epsilon", "0.25"]) == 1
    assert "‖a2−a3‖ > 12ε" in capsys.readouterr().err
    assert main(["example51", "sym.json", "--k-max", "0"]) == 2


def test_oracle_compare(capsys):
    assert main(["oracle-compare", "eq.json", "--max-period", "8"]) == 0
    table = dict(rows(capsys.readouterr().out)[1:])
    assert float(table["hausdorff_cycle_vs_observable_periodic"]) <= 1e-8


def test_lemma_commands(capsys):
    assert main(["lemma-repeat", "eq.json", "2:(1,2)", "--p", "20", "--l", "3"]) == 0
    table = dict(rows(capsys.readouterr().out)[1:])
    assert table["within_budget"] == "True" and table["period"] == "121"
    assert main(["lemma-convex", "eq.json", "2:(1,2)", "3:(1,2,3)", "--weights", "0.25", "0.75", "--eps", "3"]) == 0
    assert dict(rows(capsys.readouterr().out)[1:])["within_budget"] == "True"
    assert main(["lemma-convex", "eq.json", "2:(1,2)", "--weights", "0.5", "0.5", "--eps", "3"]) == 2
    assert main(["lemma-periodize", "eq.json", "3:(1,2,3)", "--n", "40", "--p", "20", "--l", "2"]) == 0
    assert dict(rows(capsys.readouterr().out)[1:])["within_budget"] == "True"
    assert main(["lemma-repeat", "eq.json", "2:(1,2)", "--p", "1", "--l", "1", "--eps", "1"]) == 1
