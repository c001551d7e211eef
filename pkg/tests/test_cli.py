import json

import numpy as np
import pytest

from selpipe.cli import main
from selpipe.data import GaussianModel, MaskedDataset, load_dataset
from selpipe.graph import Node, PipelineGraph
from selpipe.inference import test_features as infer_features
from selpipe.presets import candidate_grid, option1


def write_fixture_csv(path, seed=5, n=60, d=8):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = rng.standard_normal(n)
    miss = rng.random(n) < 0.05
    header = [f"f{j}" for j in range(d)] + ["y"]
    lines = [",".join(header)]
    for i in range(n):
        cells = [repr(float(v)) for v in X[i]]
        cells.append("NaN" if miss[i] else repr(float(y[i])))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def workdir(tmp_path):
    csv = write_fixture_csv(tmp_path / "data.csv")
    op1 = tmp_path / "op1.json"
    op1.write_text(json.dumps(option1().to_config()), encoding="utf-8")
    cv = tmp_path / "cv.json"
    cv.write_text(json.dumps({
        "candidates": [g.to_config() for g in candidate_grid(8)],
        "folds": 2,
        "seed": 0,
    }), encoding="utf-8")
    return tmp_path


class TestInfer:
    def test_report_matches_engine(self, workdir, capsys):
        out = workdir / "report.json"
        code = main(["infer", "--data", str(workdir / "data.csv"),
                     "--pipeline", str(workdir / "op1.json"),
                     "--sigma", "1.0", "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["schema"] == "1"
        ds = load_dataset(workdir / "data.csv")
        direct = infer_features(option1(), ds, GaussianModel(1.0))
        assert [f["id"] for f in report["features"]] == \
            [r.feature for r in direct]
        for entry, r in zip(report["features"], direct):
            assert entry["p_selective"] == pytest.approx(r.p_selective,
                                                         abs=1e-12)
            assert entry["p_naive"] == pytest.approx(r.p_naive, abs=1e-12)
            assert entry["p_oc"] == pytest.approx(r.p_oc, abs=1e-12)
            assert entry["n_segments"] == r.segments_visited
            assert entry["name"] == f"f{r.feature}"
        assert all(0.0 <= f["p_selective"] <= 1.0
                   for f in report["features"])
        assert report["sigma_used"] == 1.0

    def test_missing_sigma_flags_is_usage_error(self, workdir, capsys):
        code = main(["infer", "--data", str(workdir / "data.csv"),
                     "--pipeline", str(workdir / "op1.json")])
        assert code == 2
        assert "sigma" in capsys.readouterr().err

    def test_empty_selection_reports_no_features(self, tmp_path, capsys):
        csv = write_fixture_csv(tmp_path / "d.csv", seed=9, n=30, d=3)
        graph = PipelineGraph(
            [Node(0, "source"), Node(1, "mvi", "mean"),
             Node(2, "fs", "lasso", 1e6), Node(3, "sink")],
            [(0, 1), (1, 2), (2, 3)],
        )
        cfg = tmp_path / "p.json"
        cfg.write_text(json.dumps(graph.to_config()), encoding="utf-8")
        code = main(["infer", "--data", str(csv), "--pipeline", str(cfg),
                     "--sigma", "1.0"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["features"] == []

    def test_bad_cell_is_data_error(self, tmp_path, workdir, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,y\n1,2\nxx,3\n", encoding="utf-8")
        code = main(["infer", "--data", str(bad),
                     "--pipeline", str(workdir / "op1.json"),
                     "--sigma", "1.0"])
        assert code == 2

    def test_numerical_failure_maps_to_exit_3(self, tmp_path, capsys):
        # n == d makes the variance estimate impossible
        rng = np.random.default_rng(0)
        lines = ["a,b,y"]
        for i in range(2):
            lines.append(",".join([repr(rng.uniform()), repr(rng.uniform()),
                                   repr(rng.uniform())]))
        csv = tmp_path / "tiny.csv"
        csv.write_text("\n".join(lines) + "\n", encoding="utf-8")
        graph = PipelineGraph(
            [Node(0, "source"), Node(1, "mvi", "mean"),
             Node(2, "fs", "marginal", 1), Node(3, "sink")],
            [(0, 1), (1, 2), (2, 3)],
        )
        cfg = tmp_path / "p.json"
        cfg.write_text(json.dumps(graph.to_config()), encoding="utf-8")
        code = main(["infer", "--data", str(csv), "--pipeline", str(cfg),
                     "--estimate-sigma"])
        assert code == 3

    def test_cv_select_only(self, workdir, capsys):
        code = main(["infer", "--data", str(workdir / "data.csv"),
                     "--cv", str(workdir / "cv.json"), "--select-only"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert 0 <= report["selected_pipeline"] < 8
        assert len(report["cv_errors"]) == 8

    def test_cv_inference_end_to_end(self, workdir, capsys):
        out = workdir / "cvreport.json"
        code = main(["infer", "--data", str(workdir / "data.csv"),
                     "--cv", str(workdir / "cv.json"),
                     "--sigma", "1.0", "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert "selected_pipeline" in report
        assert all(0 <= f["p_selective"] <= 1 for f in report["features"])

    def test_target_column_override(self, tmp_path, workdir):
        csv = tmp_path / "t.csv"
        rng = np.random.default_rng(3)
        lines = ["resp,a,b,c,d,e,f,g,h"]
        for i in range(40):
            row = [repr(float(v)) for v in rng.standard_normal(9)]
            lines.append(",".join(row))
        csv.write_text("\n".join(lines) + "\n", encoding="utf-8")
        code = main(["infer", "--data", str(csv),
                     "--pipeline", str(workdir / "op1.json"),
                     "--sigma", "1.0", "--target", "resp",
                     "--out", str(tmp_path / "r.json")])
        assert code == 0


class TestSimulate:
    def test_fixed_seed_reports_are_byte_identical(self, workdir, capsys):
        args = ["simulate", "--mode", "null", "--n", "40", "--d", "5",
                "--trials", "6", "--pipeline", str(workdir / "op1.json"),
                "--seed", "11", "--jobs", "1"]
        out1, out2 = workdir / "r1.json", workdir / "r2.json"
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_jobs_do_not_change_the_report(self, workdir):
        base = ["simulate", "--mode", "null", "--n", "40", "--d", "5",
                "--trials", "6", "--pipeline", str(workdir / "op1.json"),
                "--seed", "11"]
        out1, out2 = workdir / "j1.json", workdir / "j2.json"
        assert main(base + ["--jobs", "1", "--out", str(out1)]) == 0
        assert main(base + ["--jobs", "2", "--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_power_mode_tests_active_features(self, workdir):
        out = workdir / "p.json"
        code = main(["simulate", "--mode", "power", "--n", "50", "--d", "5",
                     "--trials", "5", "--delta", "0.8",
                     "--pipeline", str(workdir / "op1.json"),
                     "--seed", "2", "--jobs", "1", "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["errors"] == []
        for record in report["records"]:
            assert record["feature"] in (0, 1, 2)

    def test_zero_delta_power_equals_null(self, workdir):
        base = ["--n", "40", "--d", "5", "--trials", "5",
                "--pipeline", str(workdir / "op1.json"), "--seed", "6",
                "--jobs", "1"]
        null_out = workdir / "null0.json"
        power_out = workdir / "power0.json"
        assert main(["simulate", "--mode", "null", *base,
                     "--out", str(null_out)]) == 0
        assert main(["simulate", "--mode", "power", "--delta", "0.0", *base,
                     "--out", str(power_out)]) == 0
        null_rep = json.loads(null_out.read_text())
        power_rep = json.loads(power_out.read_text())
        assert power_rep["records"] == null_rep["records"]
        assert power_rep["rejection_rates"] == null_rep["rejection_rates"]

    def test_cv_mode_runs(self, workdir):
        out = workdir / "cv_sim.json"
        code = main(["simulate", "--mode", "null", "--n", "30", "--d", "4",
                     "--trials", "2", "--cv", str(workdir / "cv.json"),
                     "--seed", "3", "--jobs", "1", "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["errors"] == []

    def test_estimated_sigma_mode(self, workdir):
        out = workdir / "est.json"
        code = main(["simulate", "--mode", "null", "--n", "40", "--d", "5",
                     "--trials", "4", "--pipeline", str(workdir / "op1.json"),
                     "--seed", "4", "--jobs", "1", "--estimate-sigma",
                     "--out", str(out)])
        assert code == 0
        assert json.loads(out.read_text())["sigma"] == "estimated"
