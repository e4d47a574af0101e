import json
import math

import pytest

from besovcap.cli import main, parse_index_list


def run(tmp_path, name, *args):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def load(path):
    return json.loads(path.read_text())


def test_gen_carpet(tmp_path):
    code, out = run(tmp_path, "gen", "gen", "--space", "carpet", "--level", "3")
    assert code == 0
    assert len(load(out / "cloud.json")["points"]) == 512
    man = load(out / "manifest.json")
    assert man["derived"]["beta"] == pytest.approx(math.log(2) * 2 * 0.5)
    assert man["derived"]["theta_relation_residual"] < 1e-15
    assert man["config"]["space"] == "carpet"


def test_scaling_case_auto(tmp_path):
    code, out = run(tmp_path, "s", "scaling", "--space", "interval", "--level", "9",
                    "--p", "2", "--theta", "0.5", "--case", "auto")
    assert code == 0
    assert load(out / "scaling.json")["case_tag"] == 2
    assert (out / "scaling.csv").read_text().startswith("r,R,case,")


def test_scaling_case_mismatch(tmp_path, capsys):
    code, out = run(tmp_path, "s", "scaling", "--theta", "0.5", "--case", "1")
    assert code == 2
    assert "case" in capsys.readouterr().err
    assert load(out / "manifest.json")["status"].startswith("error")


def test_cap_deterministic(tmp_path):
    args = ("cap", "--p", "2", "--theta", "0.5", "--E", "0:4", "--F", "40:65", "--arena", "both")
    a = run(tmp_path, "a", *args)[1]
    b = run(tmp_path, "b", *args)[1]
    for name in ("cap.json", "minimizer.csv", "minimizer_graph.csv", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_invalid_theta(tmp_path, capsys):
    code, _ = run(tmp_path, "x", "gen", "--theta", "1.2")
    assert code == 2
    assert "theta must lie in (0, 1)" in capsys.readouterr().err


def test_cap_needs_plates(tmp_path):
    assert run(tmp_path, "x", "cap")[0] == 2
    assert run(tmp_path, "y", "cap", "--E", "0:3", "--F", "2:5")[0] == 2


def test_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"level": 3, "p": 3.0, "theta": 0.3}))
    monkeypatch.setenv("BESOVCAP_P", "4")
    code, out = run(tmp_path, "g", "gen", "--config", str(cfg), "--theta", "0.6")
    assert code == 0
    c = load(out / "manifest.json")["config"]
    assert (c["level"], c["p"], c["theta"]) == (3, 4.0, 0.6)


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"lvl": 3}))
    assert run(tmp_path, "g", "gen", "--config", str(cfg))[0] == 2


def test_fill_outputs(tmp_path):
    code, out = run(tmp_path, "f", "fill", "--level", "5")
    assert code == 0
    header = (out / "vertices.csv").read_text().splitlines()[0]
    assert "mu_beta" in header
    assert "slope" in load(out / "codim.json")


def test_qs_levels_and_pairing(tmp_path):
    code, out = run(tmp_path, "q", "qs", "--map", "kink", "--levels", "4,5,6")
    assert code == 0
    v = load(out / "verdict.json")
    assert v["H_hat"] == {"4": 4.0, "5": 5.0, "6": 8.0}
    assert v["verdict"] == "non-QS-trend"
    # explicit files: identity pairing of interval(3) onto itself
    run(tmp_path, "c", "gen", "--level", "3")
    cloud = tmp_path / "c" / "cloud.json"
    pairing = tmp_path / "pairing.csv"
    pairing.write_text("z_index,w_index\n" + "".join(f"{i},{i}\n" for i in range(9)))
    code, out = run(tmp_path, "p", "qs", "--domain", str(cloud), "--codomain", str(cloud),
                    "--pairing", str(pairing))
    assert code == 0
    assert load(out / "verdict.json")["H_hat"] == {"input": 1.0}


def test_loewner_requires_line(tmp_path):
    assert run(tmp_path, "l", "loewner", "--space", "carpet", "--level", "2")[0] == 2


def test_parse_index_list():
    assert list(parse_index_list("0:3, 7", 10)) == [0, 1, 2, 7]
    with pytest.raises(ValueError):
        parse_index_list("12", 10)
