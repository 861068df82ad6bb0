import csv
import json

import numpy as np
import pytest

from clusimex.cli import main


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


@pytest.fixture
def cluster_csv(tmp_path):
    rng = np.random.default_rng(0)
    a = rng.normal(loc=(-3.0, 0.0), scale=0.5, size=(60, 2))
    b = rng.normal(loc=(3.0, 0.0), scale=0.5, size=(60, 2))
    path = tmp_path / "points.csv"
    write_rows(path, ["x1", "x2"], np.vstack([a, b]).tolist())
    return path


@pytest.fixture
def labeled_csv(tmp_path):
    rng = np.random.default_rng(1)
    labels = rng.integers(1, 3, 200)
    labels[:2] = [1, 2]
    logits = np.where(labels == 1, -0.5, 0.8)
    y = (rng.random(200) < 1 / (1 + np.exp(-logits))).astype(int)
    y[:4] = [0, 1, 0, 1]
    path = tmp_path / "labeled.csv"
    write_rows(path, ["y", "label"], list(zip(y.tolist(), labels.tolist())))
    return path


@pytest.fixture
def pi_csv(tmp_path):
    path = tmp_path / "pi.csv"
    path.write_text("col_1,col_2\n0.9,0.1\n0.1,0.9\n")
    return path


class TestCluster:
    def test_writes_model_and_labels(self, tmp_path, cluster_csv, capsys):
        out = tmp_path / "out"
        code = main([
            "cluster", "--input", str(cluster_csv), "--output-dir", str(out),
            "--m", "2", "--method", "gmm", "--seed", "1",
        ])
        assert code == 0
        model = json.loads((out / "model.json").read_text())
        assert model["method"] == "gmm"
        assert len(model["weights"]) == 2
        lines = (out / "labels.csv").read_text().strip().splitlines()
        assert lines[0] == "label"
        assert len(lines) == 121
        assert (out / "run_config.txt").read_text().startswith("command = cluster")

    def test_kmeans_method(self, tmp_path, cluster_csv):
        out = tmp_path / "out"
        code = main([
            "cluster", "--input", str(cluster_csv), "--output-dir", str(out),
            "--m", "2", "--method", "kmeans",
        ])
        assert code == 0
        model = json.loads((out / "model.json").read_text())
        assert model["method"] == "kmeans"
        centers = sorted(c[0] for c in model["centroids"])
        assert centers[0] < -2 and centers[1] > 2

    def test_separated_clusters_labeled_consistently(self, tmp_path, cluster_csv):
        out = tmp_path / "out"
        main([
            "cluster", "--input", str(cluster_csv), "--output-dir", str(out),
            "--m", "2",
        ])
        labels = np.loadtxt(out / "labels.csv", skiprows=1, dtype=int)
        assert len(set(labels[:60])) == 1
        assert len(set(labels[60:])) == 1
        assert labels[0] != labels[60]

    def test_missing_input_is_schema_error(self, tmp_path, capsys):
        code = main([
            "cluster", "--input", str(tmp_path / "nope.csv"),
            "--output-dir", str(tmp_path / "out"), "--m", "2",
        ])
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_bad_m_rejected(self, tmp_path, cluster_csv):
        code = main([
            "cluster", "--input", str(cluster_csv),
            "--output-dir", str(tmp_path / "out"), "--m", "0",
        ])
        assert code == 2


class TestCorrect:
    def args(self, labeled_csv, pi_csv, out):
        return [
            "correct", "--input", str(labeled_csv), "--output-dir", str(out),
            "--family", "logistic", "--pi", str(pi_csv), "--B", "5", "--seed", "3",
        ]

    def test_label_and_pi_path(self, tmp_path, labeled_csv, pi_csv):
        out = tmp_path / "out"
        code = main(self.args(labeled_csv, pi_csv, out))
        assert code == 0
        report = (out / "simex_report.txt").read_text()
        assert "corrected" in report
        curve = (out / "simex_curve.csv").read_text().splitlines()
        assert curve[0] == "lambda,coef_index,value"

    def test_deterministic_given_seed(self, tmp_path, labeled_csv, pi_csv):
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(self.args(labeled_csv, pi_csv, out1)) == 0
        assert main(self.args(labeled_csv, pi_csv, out2)) == 0
        assert (out1 / "simex_curve.csv").read_text() == (
            out2 / "simex_curve.csv"
        ).read_text()

    def test_model_path(self, tmp_path, cluster_csv, capsys):
        # cluster first, then correct against the saved model
        cl_out = tmp_path / "cl"
        main([
            "cluster", "--input", str(cluster_csv), "--output-dir", str(cl_out),
            "--m", "2",
        ])
        labels = np.loadtxt(cl_out / "labels.csv", skiprows=1, dtype=int)
        pts = np.loadtxt(cluster_csv, delimiter=",", skiprows=1)
        rng = np.random.default_rng(4)
        y = (rng.random(len(labels)) < np.where(labels == 1, 0.3, 0.7)).astype(int)
        y[:2] = [0, 1]
        data_csv = tmp_path / "with_y.csv"
        write_rows(
            data_csv, ["y", "x1", "x2"],
            [[int(yy), float(a), float(b)] for yy, (a, b) in zip(y, pts)],
        )
        out = tmp_path / "out"
        code = main([
            "correct", "--input", str(data_csv), "--output-dir", str(out),
            "--family", "logistic", "--model", str(cl_out / "model.json"),
            "--n-mc", "2000", "--B", "3",
        ])
        assert code == 0
        assert (out / "simex_report.txt").exists()

    def test_missing_y_column_is_schema_error(self, tmp_path, pi_csv, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("label,x\n1,0.5\n2,0.7\n")
        code = main([
            "correct", "--input", str(bad), "--output-dir", str(tmp_path / "out"),
            "--family", "logistic", "--pi", str(pi_csv),
        ])
        assert code == 2
        assert "requires a column named 'y'" in capsys.readouterr().err

    def test_no_model_no_pi_is_schema_error(self, tmp_path, labeled_csv):
        code = main([
            "correct", "--input", str(labeled_csv),
            "--output-dir", str(tmp_path / "out"), "--family", "logistic",
        ])
        assert code == 2

    def test_separated_data_is_numerical_failure(self, tmp_path, pi_csv, capsys):
        sep = tmp_path / "sep.csv"
        rows = [[0, 1]] * 20 + [[1, 2]] * 20
        write_rows(sep, ["y", "label"], rows)
        code = main([
            "correct", "--input", str(sep), "--output-dir", str(tmp_path / "out"),
            "--family", "logistic", "--pi", str(pi_csv), "--B", "3",
        ])
        assert code == 3
        assert "numerical failure" in capsys.readouterr().err

    def test_malformed_csv_row_is_schema_error(self, tmp_path, pi_csv, capsys):
        bad = tmp_path / "ragged.csv"
        bad.write_text("y,label\n0,1\n1\n")
        code = main([
            "correct", "--input", str(bad), "--output-dir", str(tmp_path / "out"),
            "--family", "logistic", "--pi", str(pi_csv),
        ])
        assert code == 2
        assert "row 3" in capsys.readouterr().err


class TestBootstrap:
    def test_smoke(self, tmp_path):
        rng = np.random.default_rng(6)
        x = np.concatenate([rng.normal(-2, 1, 50), rng.normal(2, 1, 50)])
        y = (rng.random(100) < np.where(x < 0, 0.3, 0.7)).astype(int)
        y[:2] = [0, 1]
        data = tmp_path / "boot.csv"
        write_rows(data, ["y", "x"], list(zip(y.tolist(), x.tolist())))
        out = tmp_path / "out"
        code = main([
            "bootstrap", "--input", str(data), "--output-dir", str(out),
            "--m", "2", "--family", "logistic", "--n-boot", "6", "--B", "3",
            "--seed", "2",
        ])
        assert code == 0
        summary = (out / "bootstrap_summary.csv").read_text().splitlines()
        assert summary[0].startswith("coef,point_mean")
        reps = (out / "bootstrap_replicates.csv").read_text().splitlines()
        assert reps[0] == "coef_1,coef_2"


class TestBench:
    def test_custom_scenario_file(self, tmp_path):
        cfg = tmp_path / "scenario.cfg"
        cfg.write_text("kind = cox\nn = 150\nmisclass_rate = 0.2\n")
        out = tmp_path / "out"
        code = main([
            "bench", "--scenario", str(cfg), "--output-dir", str(out),
            "--replications", "4", "--B", "3", "--threads", "1",
        ])
        assert code == 0
        lines = (out / "metrics.csv").read_text().strip().splitlines()
        assert lines[0].startswith("scenario_id,method")
        # true, naive, simex for the single coefficient
        assert len(lines) == 4
        assert "coverage" in (out / "metrics.txt").read_text()

    def test_unknown_scenario_is_schema_error(self, tmp_path, capsys):
        code = main([
            "bench", "--scenario", "no_such_table",
            "--output-dir", str(tmp_path / "out"), "--replications", "2",
        ])
        assert code == 2
        assert "unknown scenario" in capsys.readouterr().err

    def test_bundled_scenario_names_resolve(self, tmp_path):
        from clusimex.cli import BUNDLED_SCENARIOS, load_scenario_text
        from clusimex.simbench import parse_scenario_config

        for name in BUNDLED_SCENARIOS:
            scenarios = parse_scenario_config(load_scenario_text(name))
            assert len(scenarios) >= 1


class TestUsage:
    def test_no_subcommand_is_usage_error(self, capsys):
        assert main([]) == 2

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
