import csv
import json

import numpy as np
import pytest

from cavprobe import cli, preset


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_alpha_circle(tmp_path):
    assert cli.main(["alpha-circle", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "alpha_circle.csv")
    assert len(rows) == 201
    assert [int(r["n"]) for r in rows] == list(range(-100, 101))
    assert max(float(r["residual"]) for r in rows) < 1e-12
    side = json.loads((tmp_path / "alpha_circle.csv.json").read_text())
    assert side["circle_radius"] == pytest.approx(0.05) and side["seed"] == 0
    assert side["params"] == preset("reichel").as_dict()


def test_state_deterministic(tmp_path):
    args = ["state", "--t", "1e-6", "--dt", "1e-8", "--seed", "3", "--param", "J=10"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("state_diagonal.csv", "state_qfunction.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    side = json.loads((tmp_path / "a" / "state_diagonal.csv.json").read_text())
    assert side["seed"] == 3 and side["params"]["big_j"] == 10.0


def test_state_fixed_y(tmp_path):
    assert cli.main(["state", "--t", "1e-6", "--Y", "5e-4", "--out", str(tmp_path)]) == 0
    side = json.loads((tmp_path / "state_diagonal.csv.json").read_text())
    assert side["peak"]["d_over_2"] == pytest.approx(11.5, abs=1.0)
    qside = json.loads((tmp_path / "state_qfunction.csv.json").read_text())
    assert qside["q_integral"] == pytest.approx(1.0, abs=1e-6)


def test_missing_t_names_t(tmp_path, capsys):
    assert cli.main(["state", "--out", str(tmp_path)]) == 1
    assert "'t'" in capsys.readouterr().err
    with pytest.raises(cli.UsageError, match="'t'"):
        cli.load_spec(None, {}, mode="state")


def test_file_then_flag_precedence(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("J: 50\nt: 1.0e-6\nseed: 2\n")
    spec = cli.load_spec(cfg, {"J": 10}, mode="p-of-Y")
    assert spec.params.big_j == 10 and spec.t == 1e-6 and spec.seed == 2
    assert cli.load_spec(cfg, {}, mode="p-of-Y").params.big_j == 50


def test_json_config(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"mode": "np-vs-Y", "t": 1e-6, "big_j": 10, "eta": 0.5}))
    spec = cli.load_spec(cfg)
    assert spec.mode == "np-vs-Y" and spec.params.eta == 0.5


def test_preset_expansion():
    spec = cli.load_spec(None, {"preset": "reichel"}, mode="alpha-circle")
    assert spec.params == preset("reichel")
    spec = cli.load_spec(None, {}, mode="squeezed-scatter")
    assert spec.params == preset("reichel-squeezed")


def test_unit_strings():
    spec = cli.load_spec(None, {"g": "200*MHz", "kappa2": "106*MHz", "epsilon": "0.05j*kappa2"},
                         mode="squeezed-scatter")
    assert spec.params.g == pytest.approx(2 * np.pi * 200e6)
    assert spec.params.epsilon == pytest.approx(0.05j * 2 * np.pi * 106e6)
    with pytest.raises(cli.UsageError):
        cli.load_spec(None, {"g": "3*furlongs"}, mode="alpha-circle")
    with pytest.raises(cli.UsageError):
        cli.load_spec(None, {"eta": "0.5j"}, mode="alpha-circle")


def test_unknown_key_and_parse_error(tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("J: 5\nwavelength: 3\n")
    with pytest.raises(cli.UsageError, match="wavelength"):
        cli.load_spec(cfg, mode="alpha-circle")
    cfg.write_text("J: 5\nt: [1,\n")
    with pytest.raises(cli.UsageError, match="line"):
        cli.load_spec(cfg, mode="alpha-circle")
    assert cli.main(["alpha-circle", "--config", str(tmp_path / "missing.yaml")]) == 1


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["no-such-mode"])
    assert e.value.code == 1
    assert cli.main(["alpha-circle", "--param", "eta=2"]) == 1


def test_numerical_failure_exit_two(tmp_path, monkeypatch):
    def boom(spec):
        raise ArithmeticError("diverged in trajectory 3")

    monkeypatch.setitem(cli.JOBS, "alpha-circle", boom)
    assert cli.main(["alpha-circle", "--out", str(tmp_path)]) == 2


@pytest.mark.parametrize("mode,name", [("purity-vs-Y", "purity_vs_Y.csv"), ("p-of-Y", "p_of_Y.csv"),
                                       ("np-vs-Y", "np_vs_Y.csv")])
def test_curve_modes(tmp_path, mode, name):
    assert cli.main([mode, "--t", "1e-6", "--param", "J=10", "--option", "points=21",
                     "--out", str(tmp_path)]) == 0
    assert len(_rows(tmp_path / name)) == 21


def test_squeezed_scatter_small(tmp_path):
    args = ["squeezed-scatter", "--t", "2e-8", "--param", "J=2", "--trajectories", "2",
            "--option", "series=[coherent, 0.05]", "--seed", "4"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "squeezed_scatter.csv").read_bytes()
    assert a == (tmp_path / "b" / "squeezed_scatter.csv").read_bytes()
    rows = _rows(tmp_path / "a" / "squeezed_scatter.csv")
    assert len(rows) == 4 and {r["seed"] for r in rows} == {"4", "5"}
    side = json.loads((tmp_path / "a" / "squeezed_scatter.csv.json").read_text())
    assert side["series"]["eps=+0.05i*kappa2"]["seed_range"] == [4, 5]


def test_symmetry_check_mode(tmp_path):
    assert cli.main(["symmetry-check", "--param", "J=1", "--trajectories", "2",
                     "--option", "steps=300", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "symmetry_check.csv")
    assert len(rows) == 2 and max(float(r["v_residual"]) for r in rows) < 1e-12


@pytest.mark.slow
def test_oracle_validate(tmp_path):
    assert cli.main(["oracle-validate", "--option", "kappa_t=10", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "oracle_validate.csv")
    assert len(rows) == 4 and all(r["passed"] == "1" for r in rows)
