import json
import subprocess
import sys

import pytest

from seqcpd.cli import main, read_observations, ParseError

NORMAL_CFG = """\
[detector]
procedure = cusum
family = normal
theta = -0.5
lambda = 0
a = 2.92
"""

MSTAR_CFG = """\
[detector]
procedure = m_star
family = normal
theta = -1, -0.5
lambda = 0
a = 18.5
"""

THAT_CFG = """\
[detector]
procedure = t_hat_star_glr
family = exponential
theta = 0.8, 1.0
lambda = 2, 3
a = 22.5
pair = q0:1
"""


@pytest.fixture
def cfg(tmp_path):
    def write(text, name="det.ini"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return write


def data_section(path):
    return [line for line in open(path) if not line.startswith("#")]


def test_detect_alarm_and_no_alarm(cfg, tmp_path, capsys):
    obs = tmp_path / "obs.txt"
    obs.write_text("# header\n\n1.0\n")
    assert main(["detect", cfg(MSTAR_CFG.replace("18.5", "2")), str(obs)]) == 0
    assert "alarm procedure=m_star n=1" in capsys.readouterr().out
    obs.write_text("-1\n-1\n")
    assert main(["detect", cfg(NORMAL_CFG), str(obs)]) == 3
    obs.write_text("")
    assert main(["detect", cfg(NORMAL_CFG), str(obs)]) == 3


def test_detect_parse_error(cfg, tmp_path, capsys):
    obs = tmp_path / "obs.txt"
    obs.write_text("0.1\nabc\n")
    assert main(["detect", cfg(NORMAL_CFG), str(obs)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_read_observations():
    assert list(read_observations(["1", " # c", "", "2.5 # trailing"])) == [1.0, 2.5]
    with pytest.raises(ParseError):
        list(read_observations(["nan"]))


def test_config_errors(cfg, tmp_path):
    obs = tmp_path / "obs.txt"
    obs.write_text("1\n")
    assert main(["detect", cfg("[detector]\nprocedure = cusum\n"), str(obs)]) == 1
    assert main(["detect", cfg(NORMAL_CFG.replace("cusum", "bogus")), str(obs)]) == 1
    assert main(["detect", str(tmp_path / "missing.ini"), str(obs)]) == 1
    overlap = MSTAR_CFG.replace("theta = -1, -0.5", "theta = -1, 0.5")
    assert main(["detect", cfg(overlap), str(obs)]) == 1


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate"])
    assert exc.value.code == 1


def test_simulate_writes_csv_and_manifest(cfg, tmp_path, capsys):
    out = tmp_path / "sim.csv"
    args = ["simulate", cfg(NORMAL_CFG), "--mode", "delay", "--param", "0", "--reps", "200", "--seed", "5",
            "--out", str(out)]
    assert main(args) == 0
    text = out.read_text().splitlines()
    assert text[0] == "# seqcpd-csv v1"
    assert text[1].startswith("procedure,a,mode,param,mean,stderr")
    manifest = json.loads((tmp_path / "sim.csv.manifest.json").read_text())
    assert manifest["argv"] == args
    assert manifest["seed_scheme"].startswith("PCG64")
    # replaying the manifest reproduces the data section byte for byte
    again = tmp_path / "again.csv"
    assert main(["rerun", str(tmp_path / "sim.csv.manifest.json"), "--out", str(again)]) == 0
    assert data_section(again) == data_section(out)


def test_simulate_single_rep_warns(cfg, capsys):
    assert main(["simulate", cfg(NORMAL_CFG), "--mode", "delay", "--param", "0", "--reps", "1"]) == 0
    cap = capsys.readouterr()
    assert ",NA," in cap.out and "warning" in cap.err


def test_seed_from_environment(cfg, monkeypatch, capsys):
    args = ["simulate", cfg(NORMAL_CFG), "--mode", "delay", "--param", "0", "--reps", "50"]
    monkeypatch.setenv("SEQCPD_SEED", "99")
    main(args)
    first = capsys.readouterr().out
    assert first.strip().endswith(",99")
    main(args + ["--seed", "99"])
    assert capsys.readouterr().out == first


def test_calibrate(cfg, capsys):
    assert main(["calibrate", cfg(NORMAL_CFG), "--mode", "delay", "--target", "0.5", "--at", "0", "--reps", "10"]) == 1
    assert main(["calibrate", cfg(NORMAL_CFG), "--mode", "delay", "--target", "12", "--at", "0",
                 "--reps", "500", "--seed", "3"]) == 0
    assert capsys.readouterr().out.startswith("a=")


def test_pair_commands(tmp_path, capsys):
    out = tmp_path / "pair.csv"
    assert main(["pair", "--family", "exponential", "--theta-range", "0.8,1", "--lambda-range", "2,3",
                 "--q0", "1", "--out", str(out)]) == 0
    rows = [line.split(",") for line in out.read_text().splitlines()[1:]]
    p_at_one = [float(v) for s, t, v in rows if s == "p" and float(t) == 1.0]
    assert p_at_one[0] == pytest.approx(0.193147, abs=1e-6)
    assert "residual=" in capsys.readouterr().err
    # a CSV q can seed a second construction
    assert main(["pair", "--family", "exponential", "--theta-range", "0.8,1", "--lambda-range", "2,3",
                 "--q0", str(out)]) == 0
    capsys.readouterr()
    assert main(["pair", "--family", "normal", "--theta-range=-2,-0.2", "--lambda-range", "0.2,2",
                 "--beta", "1", "--out", str(out)]) == 0
    rows = {(s, float(t)): float(v) for s, t, v in (line.split(",") for line in out.read_text().splitlines()[1:])}
    assert rows[("p", -2.0)] == pytest.approx(4.0)
    assert rows[("q", 2.0)] == pytest.approx(2.0)
    assert main(["pair", "--family", "normal", "--theta-range=-1,0.5", "--lambda-range", "0,3", "--q0", "1"]) == 1


def test_detect_with_pair_config(cfg, tmp_path, capsys):
    obs = tmp_path / "obs.txt"
    obs.write_text("\n".join(["0.01"] * 40))
    assert main(["detect", cfg(THAT_CFG), str(obs)]) == 0
    assert "procedure=t_hat_star_glr" in capsys.readouterr().out


def test_reproduce_small(tmp_path, capsys):
    out = tmp_path / "rep"
    argv = ["reproduce", "table2", "--published-thresholds", "--reps", "20", "--delay-reps", "50", "--seed", "4",
            "--out", str(out)]
    assert main(argv) == 0
    cap = capsys.readouterr()
    assert "warning" in cap.err
    assert "of 16 cells within |z| <= 3" in cap.out
    lines = data_section(out / "table2.csv")
    assert lines[0].startswith("table,column,kind,param,a,threshold_source")
    assert len(lines) == 17
    again = tmp_path / "rep2"
    assert main(["rerun", str(out / "table2.csv.manifest.json"), "--out", str(again)]) == 0
    assert data_section(again / "table2.csv") == lines


def test_module_entry_point_help():
    for sub in ("detect", "simulate", "calibrate", "pair", "reproduce", "rerun"):
        res = subprocess.run([sys.executable, "-m", "seqcpd", sub, "--help"], capture_output=True, text=True)
        assert res.returncode == 0 and "usage" in res.stdout
