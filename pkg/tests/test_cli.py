import csv

import numpy as np
import pytest
import yaml

from oldroyd_cq.cli import main
from oldroyd_cq.cq import sbd_weights


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return str(path)


def test_weights(capsys):
    assert main(["weights", "--generator", "sbd", "--gamma", "0.5", "--tau", "0.1", "-n", "4"]) == 0
    values = [float(line) for line in capsys.readouterr().out.split()]
    assert np.allclose(values, sbd_weights(0.5, 0.1, 4).weights, rtol=1e-15)


def test_solve_with_snapshots(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "s.yaml", dict(alpha=0.5, beta=0.5, case="b", scheme="be",
                                               m=4, N=6, store_every=3))
    snap = tmp_path / "snap.csv"
    assert main(["solve", "--config", cfg, "--snapshots", str(snap)]) == 0
    assert "scheme=be m=4 N=6" in capsys.readouterr().out
    with open(snap) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3 * 9
    assert sorted({int(r["n"]) for r in rows}) == [0, 3, 6]


def test_oracle_grid(capsys):
    assert main(["oracle", "--case", "c", "--t", "0.5", "--grid", "4",
                 "--alpha", "0.25", "--beta", "0.75"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert len(rows) == 25
    peak = [r for r in rows if float(r["x"]) == 0.25 and float(r["y"]) == 0.25][0]
    assert float(peak["value"]) == pytest.approx(0.25, rel=1e-6)


@pytest.mark.parametrize("fmt", ["csv", "md"])
def test_run_writes_report(tmp_path, fmt):
    cfg = write_yaml(tmp_path / "r.yaml", dict(alpha=0.5, beta=0.5, case="a", scheme="sbd",
                                               study="temporal_rate", mesh_list=[8],
                                               n_list=[5, 10], N_ref=40))
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--out", str(out), "--format", fmt]) == 0
    path = out / f"temporal_rate_a_sbd_a0.5_b0.5.{fmt}"
    text = path.read_text()
    assert ("level_param" in text) if fmt == "csv" else ("| N |" in text)


def test_run_to_stdout(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "r.yaml", dict(alpha=0.5, beta=0.5, study="spatial_rate",
                                               mesh_list=[4, 8], n_list=[10], m_ref=16))
    assert main(["run", "--config", cfg]) == 0
    assert capsys.readouterr().out.count("\n") == 3


@pytest.mark.parametrize("data, message", [
    (dict(alpha=1.5, beta=0.5, m=4, N=4), "alpha"),
    (dict(alpha=0.5, beta=0.5, colour=1), "unknown"),
    (dict(beta=0.5), "alpha"),
])
def test_solve_errors(tmp_path, capsys, data, message):
    cfg = write_yaml(tmp_path / "bad.yaml", data)
    assert main(["solve", "--config", cfg]) == 1
    err = capsys.readouterr().err
    assert err.startswith("oldroyd-cq: error:") and message in err


def test_missing_and_malformed_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.yaml")]) == 1
    (tmp_path / "list.yaml").write_text("- 1\n- 2\n")
    assert main(["run", "--config", str(tmp_path / "list.yaml")]) == 1
    assert main(["oracle", "--case", "a", "--t", "0.1", "--grid", "0"]) == 1
    assert capsys.readouterr().err.count("oldroyd-cq: error:") == 3


def test_argument_parsing_errors():
    with pytest.raises(SystemExit):
        main(["table", "--name", "t5"])
    with pytest.raises(SystemExit):
        main([])
