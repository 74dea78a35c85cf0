import json
import os

import numpy as np
import pytest

from tvgm.cli import main
from tvgm.errors import NumericalError


def _write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def simulated(tmp_path, capsys):
    cfg = _write(tmp_path / "sim.json", {"simulate": {"case": 4, "grid": {"nx": 5, "ny": 5,
                                                                         "nt": 4}},
                                         "seed": 3})
    data = str(tmp_path / "d.csv")
    code, out, _ = _run(capsys, "simulate", "--config", cfg, "--output", data)
    assert code == 0 and json.loads(out)["n"] == 100
    return data


def _fit_cfg(tmp_path, data, **extra):
    doc = {"data": data, "model": {"variant": "sep", "fixed": {"a": 10}},
           "partition": {"M_s": 3, "R_s": 1, "M_t": 2, "R_t": 1},
           "optimizer": {"max_iters": 150}}
    doc.update(extra)
    return _write(tmp_path / "fit_cfg.json", doc)


def test_fit_predict_validate_pipeline(tmp_path, capsys, simulated):
    cfg = _fit_cfg(tmp_path, simulated)
    fit_out = str(tmp_path / "fit.json")
    code, _, _ = _run(capsys, "fit", "--config", cfg, "--output", fit_out)
    assert code == 0
    doc = json.loads(open(fit_out).read())
    assert doc["variant"] == "sep" and "objective_value" in doc
    targets = tmp_path / "targets.csv"
    targets.write_text("x,y,t\n0.5,0.5,0.5\n0.1,0.9,0.0\n")
    pred = str(tmp_path / "pred.csv")
    code, _, err = _run(capsys, "predict", "--data", simulated, "--set", f'fit="{fit_out}"',
                        "--targets", str(targets), "--output", pred)
    assert code == 0, err
    lines = open(pred).read().splitlines()
    assert lines[0].startswith("x,y,t,mean,variance,lo_0.5,hi_0.5") and len(lines) == 3
    vdir = str(tmp_path / "val")
    code, out, err = _run(capsys, "validate", "--config", cfg, "--output", vdir,
                          "--set", "split.forecast_horizon=1")
    assert code == 0, err
    scores = json.loads(out)["scores"]
    assert set(scores) == {"interpolation", "forecast"}
    assert os.path.exists(os.path.join(vdir, "score_interpolation.json"))


def test_validate_scoring_mode(tmp_path, capsys):
    pred = tmp_path / "p.csv"
    pred.write_text("x,y,t,mean,variance\n0,0,0,0.0,1.0\n1,0,0,1.0,1.0\n")
    truth = tmp_path / "t.csv"
    truth.write_text("x,y,t,value\n0,0,0,0.5\n1,0,0,0.0\n")
    code, _, err = _run(capsys, "validate", "--set", f'predictions="{pred}"',
                        "--set", f'truths="{truth}"', "--output", str(tmp_path / "o"))
    assert code == 0, err
    rep = json.loads((tmp_path / "o" / "score.json").read_text())
    assert rep["rmse"] == pytest.approx(np.sqrt((0.25 + 1.0) / 2))


def test_trend_subcommand(tmp_path, capsys):
    rng = np.random.default_rng(0)
    rows = ["x,y,t,value"] + [f"{x},{y},{t},{1 + 2 * t + rng.normal(0, 0.01)}"
                              for x, y, t in rng.uniform(size=(80, 3))]
    (tmp_path / "d.csv").write_text("\n".join(rows) + "\n")
    code, _, err = _run(capsys, "trend", "--data", str(tmp_path / "d.csv"),
                        "--output", str(tmp_path / "tr"))
    assert code == 0, err
    doc = json.loads((tmp_path / "tr" / "trend.json").read_text())
    assert doc["coefficients"]["intercept"] == pytest.approx(1.0, abs=0.1)


def test_exit_codes(tmp_path, capsys, simulated, monkeypatch):
    code, _, err = _run(capsys, "nonsense")
    assert code == 1 and json.loads(err)["exit_code"] == 1
    code, _, err = _run(capsys, "fit", "--data", simulated, "--output", str(tmp_path / "f"),
                        "--set", "model.variant=\"bogus\"", "--set", "partition.M_s=0")
    assert code == 1
    viol = json.loads(err)["violations"]
    assert any("model.variant" in v for v in viol) and any("partition" in v for v in viol)
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y,t,value\n0,0,0,abc\n")
    code, _, err = _run(capsys, "fit", "--config", _fit_cfg(tmp_path, str(bad)),
                        "--output", str(tmp_path / "f.json"))
    assert code == 2 and "row 2" in json.loads(err)["message"]
    dup = tmp_path / "dup.csv"
    dup.write_text("x,y,t,value\n0,0,0,1\n0,0,0,2\n")
    code, _, _ = _run(capsys, "fit", "--config", _fit_cfg(tmp_path, str(dup)),
                      "--output", str(tmp_path / "f.json"))
    assert code == 2
    # numerical failures map to exit code 3
    import tvgm.cli as cli

    def boom(cfg):
        raise NumericalError("Cholesky failed after maximal jitter")
    sim = _write(tmp_path / "s.json", {"simulate": {"case": 1}})
    monkeypatch.setitem(cli.COMMANDS, "simulate", boom)
    code, _, err = _run(capsys, "simulate", "--config", sim, "--output", str(tmp_path / "x.csv"))
    assert code == 3 and json.loads(err)["error"] == "NumericalError"


def test_output_may_not_overwrite_input(tmp_path, capsys, simulated):
    cfg = _fit_cfg(tmp_path, simulated)
    code, _, err = _run(capsys, "fit", "--config", cfg, "--output", cfg)
    assert code == 1 and "overwrite" in err


def test_fit_is_deterministic(tmp_path, capsys, simulated):
    cfg = _fit_cfg(tmp_path, simulated)
    outs = []
    for k in range(2):
        path = tmp_path / f"fit{k}.json"
        assert _run(capsys, "fit", "--config", cfg, "--output", str(path))[0] == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_day_of_year_scaling(tmp_path, capsys):
    rows = ["x,y,t,value"] + [f"{x},{y},{d},{np.sin(x + d)}" for d in (1, 183, 365)
                              for x in (0.0, 0.5, 1.0) for y in (0.0, 1.0)]
    (tmp_path / "d.csv").write_text("\n".join(rows) + "\n")
    from tvgm.io import read_dataset, day_of_year_to_t
    data = read_dataset(tmp_path / "d.csv", scale_time=day_of_year_to_t)
    assert np.allclose(np.unique(data.times), [0.0, 0.5, 1.0])
