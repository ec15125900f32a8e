import json

import pytest
import yaml

from spectree.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, RunConfig, main


def write(tmp_path, d, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(d))
    return str(p)


def test_constants_uniform(tmp_path, capsys):
    assert main(["constants", "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "Z0 = 0.5" in out and "zeta0 = 0.25" in out
    rows = dict(line.split(",") for line in (tmp_path / "constants.csv").read_text().splitlines()[1:])
    assert float(rows["Z0"]) == pytest.approx(0.5) and float(rows["p_0"]) == pytest.approx(0.5)
    man = json.loads((tmp_path / "constants.manifest.json").read_text())
    assert man["status"] == "ok" and len(man["config_sha256"]) == 64 and "numpy" in man["versions"]


def test_constants_binary_note(tmp_path, capsys):
    cfg = write(tmp_path, {"family": {"name": "binary"}})
    assert main(["constants", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    assert "Z_N = 0 for even N" in capsys.readouterr().out


@pytest.mark.parametrize("cfg", [{"family": {"weights": [0, 1, 1]}}, {"family": {"name": "nope"}},
                                 {"family": {"weights": [1, 1]}}, {"spectral": {"bogus": 1}}, {"whatever": 3}])
def test_config_errors(tmp_path, cfg, capsys):
    path = write(tmp_path, cfg)
    assert main(["constants", "--config", path, "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "error" in capsys.readouterr().err


def test_zn_catalan(tmp_path):
    cfg = write(tmp_path, {"zn": {"N_max": 10}})
    assert main(["zn", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    lines = (tmp_path / "zn.csv").read_text().splitlines()
    assert lines[0] == "N,Z_N,scaled,ratio"
    assert [row.split(",")[1] for row in lines[1:]] == ["1", "1", "2", "5", "14", "42", "132", "429", "1430",
                                                        "4862"]


def test_config_round_trip(tmp_path):
    cfg = RunConfig(seed=7, spectral={"n_samples": 10})
    again = RunConfig.load(write(tmp_path, cfg.to_dict()))
    assert again == cfg and again.sha256() == cfg.sha256()
    assert RunConfig(seed=7, spectral={"n_samples": 10}, workers=4, out="elsewhere").sha256() == cfg.sha256()
    assert RunConfig(seed=8).sha256() != RunConfig(seed=7).sha256()


def test_spectral_bytes_independent_of_workers(tmp_path):
    cfg = write(tmp_path, {"spectral": {"n_samples": 64}})
    outs = []
    for w in (1, 2):
        d = tmp_path / f"w{w}"
        assert main(["spectral", "--config", cfg, "--workers", str(w), "--out", str(d), "--seed", "5"]) == EXIT_OK
        outs.append(((d / "spectral.csv").read_bytes(), (d / "spectral_fit.csv").read_bytes()))
    assert outs[0] == outs[1]
    header = outs[0][0].decode().splitlines()[0]
    assert header == "x,Q_mean,stderr,bracket_residual,n,censored"
    man = json.loads((tmp_path / "w1" / "spectral.manifest.json").read_text())
    assert man["seed"] == 5 and "d_s" in man["results"]["fit"]


def test_failed_run_is_marked(tmp_path):
    cfg = write(tmp_path, {"spectral": {"n_samples": 8, "x": [0.1, 0.05, 0.02, 0.01]}})
    assert main(["spectral", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CHECK
    man = json.loads((tmp_path / "spectral.manifest.json").read_text())
    assert man["status"] == "failed" and "two decades" in man["error"]
    assert (tmp_path / "spectral.csv").exists()  # partial results stay


def test_validate_subset(tmp_path):
    cfg = write(tmp_path, {"validate": {"checks": ["partition", "series"]}})
    assert main(["validate", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    rows = (tmp_path / "validate.csv").read_text().splitlines()
    assert len(rows) == 3 and all(",true," in r for r in rows[1:])
