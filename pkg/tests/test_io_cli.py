import json

import numpy as np
import pytest

from polarshape import cli
from polarshape.io import DataError, RunReport, ingest, write_landmarks
from polarshape.mc import SamplerConfig, sample_landmarks
from polarshape.models import ModelParams, variant_spec
from polarshape.zonal import SeriesConvergenceError

MU = np.array([[2.0, 0.5], [0.4, 1.5]])


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


@pytest.fixture(scope="module")
def groups(tmp_path_factory):
    root = tmp_path_factory.mktemp("groups")
    spec = variant_spec("gaussian", 3, 2)
    paths = []
    for i, mu in enumerate((MU, MU)):
        p = root / f"g{i + 1}.csv"
        write_landmarks(p, sample_landmarks(SamplerConfig(spec, ModelParams(mu, 1.0), 30, seed=40 + i)))
        paths.append(p)
    return paths


def test_ingest_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    mats = [rng.normal(size=(4, 3)) for _ in range(3)]
    path = tmp_path / "x.csv"
    write_landmarks(path, mats, ids=["a", "b", "c"])
    back = ingest(path)
    assert [m.specimen for m in back] == ["a", "b", "c"]
    for m, x in zip(back, mats):
        np.testing.assert_array_equal(m.values, x)


def test_ingest_accepts_any_line_order_and_selects(tmp_path):
    path = _write(tmp_path, "s.csv", "specimen,landmark,x1,x2\n"
                  "A,3,3,0\nA,1,1,0\nA,4,4,1\nA,2,2,5\n")
    [sel] = ingest(path, select_landmarks=[4, 1, 2])
    np.testing.assert_array_equal(sel.values, [[1, 0], [2, 5], [4, 1]])


@pytest.mark.parametrize("text, message", [
    ("", "empty file"),
    ("id,lm,x,y\nA,1,0,0\n", "header"),
    ("specimen,landmark,x1,x2\nA,1,0\n", "ragged K"),
    ("specimen,landmark,x1,x2\nA,1,0,0\nA,1,1,1\nA,2,0,1\n", "repeats landmark 1"),
    ("specimen,landmark,x1,x2\nA,1,0,0\nA,3,1,1\nA,2,0,x\n", "could not convert"),
    ("specimen,landmark,x1,x2\nA,1,0,0\nA,3,1,1\n", r"missing landmark\(s\) \[2\]"),
    ("specimen,landmark,x1,x2\nA,0,0,0\n", "1-based"),
    ("specimen,landmark,x1,x2\nA,1,0,0\nA,2,1,1\n", "at least 3"),
    ("specimen,landmark,x1,x2\n" + "".join(f"A,{i},{i},{i * i}\n" for i in range(1, 5)), "K >= N - 1"),
    ("specimen,landmark,x1,x2\nA,1,0,0\nA,2,1,0\nA,3,0,1\nB,1,0,0\nB,2,1,0\n", "missing landmark"),
])
def test_ingest_errors(tmp_path, text, message):
    with pytest.raises(DataError, match=message):
        ingest(_write(tmp_path, "bad.csv", text))


def test_selection_must_exist(tmp_path):
    path = _write(tmp_path, "s.csv", "specimen,landmark,x1,x2\nA,1,0,0\nA,2,1,0\nA,3,0,1\n")
    with pytest.raises(DataError, match=r"\[7\] not present"):
        ingest(path, select_landmarks=[1, 2, 7])


def test_report_json_roundtrip_and_text():
    rep = RunReport(command="compare", seed=3, series_control={"max_degree": 60},
                    fits=[{"group": "g", "model": "gaussian", "error": "boom"}], notes=["n"])
    back = RunReport.from_json(rep.to_json())
    assert back == rep
    assert "FAILED: boom" in rep.to_text() and "note: n" in rep.to_text()
    assert set(json.loads(rep.to_json())) == {"tool_version", "command", "seed", "series_control", "fits",
                                             "delta_bic", "grades", "best", "lrt", "notes"}


def test_cli_compare_writes_sidecar(groups, tmp_path, capsys):
    out = tmp_path / "r.json"
    code = cli.main(["compare", str(groups[0]), "--model", "gaussian", "--model", "kotz-t2", "--json", str(out)])
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["best"]["g1"] in ("gaussian", "kotz-t2")
    best = rep["best"]["g1"]
    assert rep["delta_bic"]["g1"][best][best] == 0.0
    assert set(rep["grades"]["g1"]) == {"gaussian", "kotz-t2"}
    assert "best model" in capsys.readouterr().out


def test_cli_is_deterministic(groups, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        assert cli.main(["fit", str(groups[0]), "--seed", "5", "--json", str(path)]) == 0
    assert a.read_text() == b.read_text()


def test_cli_report_numbers_are_reproducible(groups, tmp_path):
    from polarshape.inference import Dataset, bic_star, log_likelihood
    from polarshape.zonal import SeriesControl
    out = tmp_path / "r.json"
    assert cli.main(["fit", str(groups[0]), "--model", "kotz-t3", "--json", str(out)]) == 0
    fit = json.loads(out.read_text())["fits"][0]["fit"]
    data = Dataset.from_landmarks(ingest(groups[0]))
    ll = log_likelihood(data, "kotz-t3", np.array(fit["mu_hat"]), fit["sigma2_hat"], SeriesControl())
    assert ll == pytest.approx(fit["loglik"], abs=1e-8)
    assert bic_star(ll, fit["n_p"], data.n) == pytest.approx(fit["bic_star"], abs=1e-8)


def test_cli_test_mean_reports_lrt(groups, tmp_path):
    out = tmp_path / "t.json"
    code = cli.main(["test-mean", str(groups[0]), str(groups[1]), "--model", "gaussian",
                     "--h0-sigma", "pooled", "--json", str(out)])
    assert code == 0
    lrt = json.loads(out.read_text())["lrt"]
    assert lrt["df"] == 4 and lrt["effective_df"] == 3 and lrt["h0_sigma"] == "pooled"
    assert 0.0 <= lrt["p_value"] <= 1.0


def test_fit_failures_are_recorded_and_the_run_continues(groups, monkeypatch):
    real = cli.fit_mle

    def flaky(data, model, **kw):
        if model == "kotz-t3":
            raise SeriesConvergenceError("series did not converge within max_degree=60")
        return real(data, model, **kw)

    monkeypatch.setattr(cli, "fit_mle", flaky)
    rep = cli.run_compare({"g": ingest(groups[0])})
    failed = [f for f in rep.fits if "error" in f]
    assert [f["model"] for f in failed] == ["kotz-t3"]
    assert set(rep.grades["g"]) == {"gaussian", "kotz-t2"}


@pytest.mark.parametrize("argv, code", [
    ([], 1),
    (["fit"], 1),
    (["fit", "x.csv", "--model", "cauchy"], 1),
    (["fit", "missing.csv"], 2),
    (["fit", "x.csv", "--max-degree", "-1"], 1),
    (["density", "--mu", "1,2,3", "--sigma2", "1"], 2),
    (["sample", "--mu", "1,0;0,1", "--sigma2", "-1", "--n", "3", "--out", "o.csv"], 2),
])
def test_exit_codes(argv, code, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert cli.main(argv) == code


def test_numerical_failure_exit_code(groups, capsys):
    assert cli.main(["fit", str(groups[0]), "--max-degree", "2"]) == 3
    assert "raise --max-degree" in capsys.readouterr().err


def test_cli_sample_validate_and_density(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert cli.main(["sample", "--mu", "2,0.5;0.4,1.5", "--sigma2", "1", "--n", "20", "--out", str(out)]) == 0
    assert len(ingest(out)) == 20
    assert cli.main(["density", "--mu", "2,0.5;0.4,1.5", "--sigma2", "1", "--grid", "4"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "theta1,theta2,density" and len(lines) == 17
    assert cli.main(["validate", "--mu", "2,0.5;0.4,1.5", "--sigma2", "1", "--n", "2000"]) == 0
    assert "integral over the angle region = 1.0000" in capsys.readouterr().out
