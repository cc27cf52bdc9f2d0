import csv
import math

import numpy as np
import pytest

from plate_eig import study as study_mod
from plate_eig.cli import main
from plate_eig.errors import InvalidArgumentError, MaxIterationsError
from plate_eig.study import (CSV_HEADER, StudyConfig, emit_csv, emit_plotdata, fit_slope,
                             orders, richardson, run_study, significant_digits_agree,
                             summary_table, trend_symbol)


@pytest.fixture(scope="module")
def small_result():
    return run_study(StudyConfig(domain="lshape", triple="B", method="multi", levels=3, k=3))


def test_trend_symbols():
    assert trend_symbol([1, 2, 3, 4]) == "↗"
    assert trend_symbol([4, 3, 2, 1]) == "↘"
    assert trend_symbol([3, 2, 2.5, 2.7]) == "↘↗"
    assert trend_symbol([1, 2, 1.5]) == "↗↘"
    assert trend_symbol([1, 2, 1, 2]) == "mixed"
    assert trend_symbol([1, 1]) == "-"


def test_orders_skip_sign_changes():
    e = np.array([[16.0, 4.0, 1.0, 0.0], [-1.0, 4.0, 1.0, 0.0]])
    o = orders(e)
    np.testing.assert_allclose(o[0, 1:3], [2.0, 2.0])
    assert math.isnan(o[1, 1]) and o[1, 2] == pytest.approx(2.0)
    assert np.isnan(o[:, 0]).all() and np.isnan(o[:, -1]).all()


def test_richardson_and_slope():
    lam = 10.0 + 3.0 * 0.5 ** (4 * np.arange(4))
    assert richardson(lam[2], lam[3], 4) == pytest.approx(10.0, rel=1e-14)
    h = 0.5 ** np.arange(4)
    assert fit_slope(h, 2 * h ** 2) == pytest.approx(2.0)
    assert fit_slope(h[:1], h[:1]) is None
    assert significant_digits_agree(1294.93, 1294.96) and not significant_digits_agree(1294.9, 1296.0)


def test_config_validation():
    for bad in (dict(levels=0), dict(k=0), dict(domain="disk"), dict(triple="C"),
                dict(method="both"), dict(domain="lshape", n0=3)):
        with pytest.raises(InvalidArgumentError):
            StudyConfig(**bad).validate()


def test_result_shapes(small_result):
    r = small_result
    assert r.complete and r.lambdas.shape == (3, 4)
    assert np.all(r.errors[:, -1] == 0) and np.all(r.u_errors[:, -1] == 0)
    assert r.trends[0] == "↘↗"
    assert np.all(np.diff(r.dofs) > 0)
    assert "trend" in summary_table(r)


def test_csv_contract(tmp_path, small_result):
    p = emit_csv(small_result, tmp_path / "a.csv")
    rows = list(csv.reader(open(p, encoding="utf-8")))
    assert rows[0] == CSV_HEADER
    assert len(rows) - 1 == small_result.k * small_result.n_levels
    assert [int(r[0]) for r in rows[1:]] == sorted(int(r[0]) for r in rows[1:])
    assert float(rows[1][2]) == pytest.approx(small_result.lambdas[0, 0], rel=1e-14)
    assert all(r[7] == "" for r in rows[1:])
    p2 = emit_csv(small_result, tmp_path / "b.csv", timing=True)
    assert all(r[7] != "" for r in list(csv.reader(open(p2, encoding="utf-8")))[1:])


def test_minimal_study_row_count(tmp_path):
    r = run_study(StudyConfig(domain="square", triple="A", levels=1, k=1))
    rows = list(csv.reader(open(emit_csv(r, tmp_path / "m.csv"), encoding="utf-8")))
    assert len(rows) - 1 >= r.config.levels


def test_reruns_are_identical(tmp_path):
    cfg = dict(domain="lshape", triple="A", method="single", levels=2, k=2)
    a = emit_csv(run_study(StudyConfig(**cfg)), tmp_path / "a.csv").read_bytes()
    b = emit_csv(run_study(StudyConfig(**cfg)), tmp_path / "b.csv").read_bytes()
    assert a == b


def test_plotdata(tmp_path, small_result):
    text = emit_plotdata(small_result, tmp_path / "p.dat").read_text()
    blocks = [b for b in text.split("\n\n") if b.strip()]
    assert blocks[0].startswith("# lambda_1 slope")
    assert blocks[-1].startswith("# reference slope 4")
    # reference level (error exactly zero) is left out of the log data
    assert len(blocks[0].splitlines()) - 1 == small_result.n_levels - 1
    assert all(float(line.split()[1]) > 0 for b in blocks for line in b.splitlines()[1:])


def test_plotdata_single_point(tmp_path):
    r = run_study(StudyConfig(domain="lshape", triple="B", levels=1, k=1))
    first = emit_plotdata(r, tmp_path / "p.dat").read_text().split("\n\n")[0]
    assert first.splitlines()[0] == "# lambda_1" and len(first.splitlines()) == 2


def test_partial_results_flushed(tmp_path, monkeypatch):
    real = study_mod.solve_sparse
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 3:
            raise MaxIterationsError("forced", {"converged": 0})
        return real(*args, **kwargs)

    monkeypatch.setattr(study_mod, "solve_sparse", flaky)
    r = run_study(StudyConfig(domain="lshape", triple="B", levels=3, k=2))
    assert r.status == "failed" and "MaxIterationsError" in r.message
    rows = list(csv.reader(open(emit_csv(r, tmp_path / "f.csv"), encoding="utf-8")))
    assert sorted({int(row[1]) for row in rows[1:]}) == [0, 1]


def test_cli_success(tmp_path, capsys):
    code = main(["study", "--domain", "lshape", "--triple", "B", "--method", "multi",
                 "--levels", "2", "--num-eigs", "2", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "lshape_B_multi.csv").exists()
    assert (tmp_path / "lshape_B_multi.lambda.dat").exists()
    assert "ord_lambda" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["study", "--levels", "0"],
    ["study", "--domain", "lshape", "--n0", "3"],
    ["study", "--triple", "C"],
    ["study", "--unknown"],
    [],
])
def test_cli_usage_errors(argv, tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        code = main(argv + ["--out", str(tmp_path)] if argv else argv)
        raise SystemExit(code)
    assert info.value.code == 1


def test_cli_numerical_failure(tmp_path):
    code = main(["study", "--domain", "square", "--n0", "1", "--pattern", "diagonal",
                 "--levels", "1", "--num-eigs", "1", "--out", str(tmp_path)])
    assert code == 2
