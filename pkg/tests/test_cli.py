import csv
import json
import subprocess
import sys

import pytest

from sepwalk.cli import main
from sepwalk.config import ScenarioConfig, parse_config
from sepwalk.errors import ConfigError
from sepwalk.output import skip_comments
from sepwalk.renewal import read_renewals_csv
from sepwalk.estimators import read_scan_csv
from sepwalk.heat import kernel_table
from sepwalk.walker import read_trajectory_csv

MODEL = """\
model.alpha = 0.6
model.beta = 0.8
model.rho = 0.5
model.gamma = 1.0
"""

CONFIGS = {
    "simulate": MODEL + "run.horizon = 100\nrun.replicas = 2\nrun.master_seed = 7\n",
    "scan": MODEL + "run.horizon = 200\nrun.replicas = 3\nexperiment.gammas = 0.5, 2\n",
    "renewal": MODEL.replace("1.0", "0.1") + "run.horizon = 3000\nrun.replicas = 2\n"
               "experiment.cone_slope = 0.1\nexperiment.forward_horizon = 300\n",
    "traps": MODEL + "run.replicas = 4\nexperiment.l = 4, 8\nexperiment.J = 2\n"
             "experiment.points = 20\nexperiment.span = 6\n",
    "kernel-check": MODEL + "experiment.times = 0.5, 2\nexperiment.L = 20\nrun.replicas = 1000\n"
                    "experiment.a_max = 0.3\nexperiment.a_points = 31\n",
    "static": "model.alpha = 0.25\nmodel.beta = 0.99999\nmodel.rho = 0.9\nmodel.gamma = 0\n"
              "experiment.depths = 1, 2, 5, 10\n",
}


def write_cfg(tmp_path, text, name="cfg.txt"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run_cmd(tmp_path, cmd, text, *extra):
    out = tmp_path / "out"
    code = main([cmd, "--config", write_cfg(tmp_path, text), "--out", str(out), *extra])
    dirs = sorted(out.iterdir()) if out.exists() else []
    return code, dirs


def data_header(path):
    with open(path) as fh:
        return next(csv.reader(skip_comments(fh)))


def test_parse_config_basics():
    d = parse_config("# comment\n\nmodel.alpha = 0.3\nrun.horizon=10\n")
    assert d == {"model.alpha": "0.3", "run.horizon": "10"}
    with pytest.raises(ConfigError):
        parse_config("model.alpha 0.3\n")
    with pytest.raises(ConfigError) as e:
        parse_config("a.b = 1\na.b = 2\n")
    assert e.value.key == "a.b"
    with pytest.raises(ConfigError):
        parse_config("a..b = 1\n")


def test_typed_access_names_key():
    cfg = ScenarioConfig.from_text("run.horizon = ten\nmodel.alpha = 2\n")
    with pytest.raises(ConfigError) as e:
        cfg.get_int("run.horizon")
    assert e.value.key == "run.horizon"
    with pytest.raises(ConfigError) as e:
        cfg.get_float("run.missing")
    assert e.value.key == "run.missing"
    with pytest.raises(ConfigError) as e:
        ScenarioConfig.from_text(MODEL.replace("0.6", "1.5")).model_params()
    assert e.value.key == "model.alpha"


@pytest.mark.parametrize("cmd", list(CONFIGS))
def test_smoke_each_command(tmp_path, cmd):
    code, dirs = run_cmd(tmp_path, cmd, CONFIGS[cmd])
    assert code == 0
    assert len(dirs) == 1 and dirs[0].name.startswith(cmd + "-")
    files = {p.name for p in dirs[0].iterdir()}
    assert "run.json" in files
    run = json.loads((dirs[0] / "run.json").read_text())
    assert run["config"]["text"] == CONFIGS[cmd]
    assert any(f.endswith(".png") for f in files)


def test_simulate_outputs(tmp_path):
    code, (d,) = run_cmd(tmp_path, "simulate", CONFIGS["simulate"])
    assert code == 0
    trajs = sorted(d.glob("trajectory_*.csv"))
    assert len(trajs) == 2
    head, xs, bits = read_trajectory_csv(trajs[0])
    assert head["config"]["text"] == CONFIGS["simulate"]
    assert xs.size == 101 and bits.size == 100
    assert data_header(trajs[0]) == ["k", "X_k", "occ_bit"]
    summary = json.loads((d / "summary.json").read_text())
    assert summary["metadata"]["config"]["text"] == CONFIGS["simulate"]
    assert summary["summary"]["n_replicas"] == 2


def test_output_schemas(tmp_path):
    for cmd in ("scan", "renewal", "traps", "kernel-check", "static"):
        sub = tmp_path / cmd
        sub.mkdir()
        code, (d,) = run_cmd(sub, cmd, CONFIGS[cmd])
        assert code == 0
        if cmd == "scan":
            assert data_header(d / "scan.csv") == ["gamma", "v_direct", "v_lo", "v_hi", "v_renewal",
                                                   "sigma2", "n_renewals", "ks_stat"]
            assert [r["gamma"] for r in read_scan_csv(d / "scan.csv")] == [0.5, 2.0]
        elif cmd == "renewal":
            f = d / "renewals_0000.csv"
            assert data_header(f) == ["k", "tau", "X_tau", "dt", "dX", "provisional"]
            assert len(read_renewals_csv(f)) > 0
            diag = json.loads((d / "diagnostics.json").read_text())
            assert len(diag["replicas"]) == 2
        elif cmd == "traps":
            assert data_header(d / "traps_l4.csv") == ["t", "prob", "ci_lo", "ci_hi"]
            assert data_header(d / "first_passage.csv") == ["l", "median_first_passage", "never_good"]
        elif cmd == "kernel-check":
            assert data_header(d / "kernel_t0.5.csv") == ["x", "value"]
            assert data_header(d / "concentration_L20.csv") == ["a", "freq", "c_point", "in_fit"]
        else:
            assert data_header(d / "exit_probs.csv") == ["a", "formula", "oracle", "abs_diff"]


def test_numeric_roundtrip(tmp_path):
    code, (d,) = run_cmd(tmp_path, "kernel-check", MODEL + "experiment.times = 3.7\n")
    assert code == 0
    tab = kernel_table(1.0, 3.7)
    with open(d / "kernel_t3.7.csv") as fh:
        rows = list(csv.DictReader(skip_comments(fh)))
    for r, v in zip(rows, tab.values):
        assert abs(float(r["value"]) - v) <= 1e-12


def test_static_classification(tmp_path):
    code, (d,) = run_cmd(tmp_path, "static", CONFIGS["static"])
    assert code == 0
    out = json.loads((d / "classification.json").read_text())
    assert out["classification"] == "transient-right-subballistic"
    assert out["max_abs_diff"] <= 1e-10


@pytest.mark.parametrize("cmd", ["simulate", "scan", "renewal", "static"])
def test_reruns_byte_identical(tmp_path, cmd):
    cfg = write_cfg(tmp_path, CONFIGS[cmd])
    dirs = []
    for sub in ("a", "b"):
        assert main([cmd, "--config", cfg, "--out", str(tmp_path / sub)]) == 0
        dirs.extend((tmp_path / sub).iterdir())
    a, b = dirs
    names = sorted(p.name for p in a.iterdir() if p.name != "run.json")
    assert names == sorted(p.name for p in b.iterdir() if p.name != "run.json")
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes(), n


def test_seed_override_changes_output(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    _, (a,) = run_cmd(tmp_path / "a", "simulate", CONFIGS["simulate"])
    _, (b,) = run_cmd(tmp_path / "b", "simulate", CONFIGS["simulate"], "--seed", "8")
    ja = json.loads((a / "summary.json").read_text())
    jb = json.loads((b / "summary.json").read_text())
    assert ja["seeds"] != jb["seeds"]
    assert jb["metadata"]["config"]["overrides"] == {"run.master_seed": "8"}


def test_replica_seeds_do_not_depend_on_count(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    _, (a,) = run_cmd(tmp_path / "a", "simulate", CONFIGS["simulate"])
    _, (b,) = run_cmd(tmp_path / "b", "simulate", CONFIGS["simulate"].replace("replicas = 2", "replicas = 3"))
    sa = json.loads((a / "summary.json").read_text())["seeds"]
    sb = json.loads((b / "summary.json").read_text())["seeds"]
    assert sb[:2] == sa
    assert (a / "trajectory_0001.csv").read_text().splitlines()[2:] == \
        (b / "trajectory_0001.csv").read_text().splitlines()[2:]


def test_fresh_directory_per_run(tmp_path):
    run_cmd(tmp_path, "static", CONFIGS["static"])
    _, dirs = run_cmd(tmp_path, "static", CONFIGS["static"])
    assert len(dirs) == 2


def test_replicas_zero_is_invalid(tmp_path, capsys):
    code, dirs = run_cmd(tmp_path, "simulate", CONFIGS["simulate"].replace("replicas = 2", "replicas = 0"))
    assert code == 2 and dirs == []
    assert "run.replicas" in capsys.readouterr().err


def test_missing_key_is_invalid(tmp_path, capsys):
    code, _ = run_cmd(tmp_path, "simulate", CONFIGS["simulate"].replace("run.horizon = 100\n", ""))
    assert code == 2
    assert "run.horizon" in capsys.readouterr().err


def test_invalid_trap_width(tmp_path, capsys):
    code, _ = run_cmd(tmp_path, "traps", CONFIGS["traps"].replace("experiment.J = 2", "experiment.J = 6"))
    assert code == 2
    assert "experiment.J" in capsys.readouterr().err


def test_missing_file_is_invalid(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.txt")]) == 2


def test_runtime_failure_exit_code(tmp_path):
    # a concentration fit window that no frequency reaches fails after validation
    text = MODEL + "experiment.L = 20\nrun.replicas = 1000\nexperiment.a_max = 0.0001\nexperiment.a_points = 2\n"
    code, _ = run_cmd(tmp_path, "kernel-check", text)
    assert code == 3


def test_console_script_usage_error(tmp_path):
    r = subprocess.run([sys.executable, "-m", "sepwalk.cli", "fly", "--config", "x"],
                       capture_output=True, text=True)
    assert r.returncode == 2


def test_console_script_runs(tmp_path):
    cfg = write_cfg(tmp_path, CONFIGS["static"])
    r = subprocess.run([sys.executable, "-m", "sepwalk.cli", "static", "--config", cfg,
                        "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "o").exists()
