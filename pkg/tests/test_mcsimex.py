import numpy as np
import pytest

from clusimex.mcsimex import (
    SimexConfig,
    bootstrap_simex,
    extrapolate,
    fit_extrapolant,
    jackknife_variance,
    run_mcsimex,
    simulate_labels,
    write_bootstrap_csv,
    write_simex_report,
)
from clusimex.misclass import MisclassMatrix, PowerExistenceError
from clusimex.mixture import EmConfig, GmmParams, sample_gmm
from clusimex.regress import Outcome


def flip_matrix(eps):
    return MisclassMatrix([[1 - eps, eps], [eps, 1 - eps]])


def binary_dataset(n=400, seed=0):
    rng = np.random.default_rng(seed)
    labels = rng.integers(1, 3, n)
    labels[:2] = [1, 2]
    logits = np.where(labels == 1, -0.5, 1.0)
    y = (rng.random(n) < 1 / (1 + np.exp(-logits))).astype(float)
    y[:4] = [0, 1, 0, 1]
    return Outcome.binary(y), labels


class TestSimexConfig:
    def test_rejects_nonpositive_lambda(self):
        with pytest.raises(ValueError):
            SimexConfig(lambda_grid=(0.0, 1.0))

    def test_rejects_unsorted_grid(self):
        with pytest.raises(ValueError):
            SimexConfig(lambda_grid=(1.0, 0.5))

    def test_rejects_unknown_extrapolant(self):
        with pytest.raises(ValueError):
            SimexConfig(extrapolant="cubic")


class TestSimulateLabels:
    def test_identity_is_noop(self):
        labels = np.array([1, 2, 1, 2, 2])
        out = simulate_labels(labels, MisclassMatrix.identity(2), rng=0)
        assert np.array_equal(out, labels)

    def test_certain_flip(self):
        pi = MisclassMatrix([[0.0, 1.0], [1.0, 0.0]])
        labels = np.array([1, 1, 2, 2])
        out = simulate_labels(labels, pi, rng=0)
        assert np.array_equal(out, [2, 2, 1, 1])

    def test_flip_frequency(self):
        rng = np.random.default_rng(1)
        labels = np.ones(100_000, dtype=int)
        out = simulate_labels(labels, flip_matrix(0.3), rng=rng)
        frac = np.mean(out == 2)
        assert abs(frac - 0.3) < 4 * np.sqrt(0.3 * 0.7 / len(labels))

    def test_deterministic_given_seed(self):
        labels = np.tile([1, 2], 50)
        a = simulate_labels(labels, flip_matrix(0.2), rng=42)
        b = simulate_labels(labels, flip_matrix(0.2), rng=42)
        assert np.array_equal(a, b)

    def test_rejects_out_of_range_labels(self):
        with pytest.raises(ValueError):
            simulate_labels([0, 1], flip_matrix(0.2), rng=0)


class TestExtrapolant:
    def test_quadratic_recovers_planted_polynomial(self):
        lams = np.array([0.0, 0.5, 1.0, 1.5, 2.0])
        vals = 1.2 - 0.7 * lams + 0.3 * lams**2
        ext = fit_extrapolant(lams, vals, "quadratic")
        assert np.allclose(ext.gamma, [1.2, -0.7, 0.3], atol=1e-10)
        assert extrapolate(ext.gamma, "quadratic", -1.0) == pytest.approx(
            1.2 + 0.7 + 0.3, abs=1e-10
        )

    def test_linear_recovers_planted_line(self):
        lams = np.array([0.0, 1.0, 2.0])
        vals = 0.4 + 0.9 * lams
        ext = fit_extrapolant(lams, vals, "linear")
        assert np.allclose(ext.gamma, [0.4, 0.9], atol=1e-12)

    def test_loglinear_recovers_planted_curve(self):
        lams = np.array([0.0, 0.5, 1.0, 1.5, 2.0])
        vals = 0.3 + np.exp(0.2 - 0.8 * lams)
        ext = fit_extrapolant(lams, vals, "loglinear")
        assert ext.kind == "loglinear"
        assert not ext.fell_back
        at = extrapolate(ext.gamma, "loglinear", -1.0)
        assert at == pytest.approx(0.3 + np.exp(1.0), abs=1e-6)

    @pytest.mark.filterwarnings("ignore::scipy.optimize.OptimizeWarning")
    def test_loglinear_falls_back_on_hopeless_data(self):
        # oscillating values admit no monotone exponential fit
        lams = np.array([0.0, 0.5, 1.0, 1.5, 2.0])
        vals = np.array([0.0, 1.0, 0.0, 1.0, 0.0])
        ext = fit_extrapolant(lams, vals, "loglinear")
        if ext.fell_back:
            assert ext.kind == "quadratic"

    def test_rejects_duplicate_lambdas(self):
        with pytest.raises(ValueError):
            fit_extrapolant([0.0, 1.0, 1.0], [0.0, 1.0, 2.0], "quadratic")

    def test_rejects_too_few_points(self):
        with pytest.raises(ValueError):
            fit_extrapolant([0.0, 1.0], [0.0, 1.0], "quadratic")


class TestRunMcsimex:
    def test_identity_pi_returns_naive_logistic(self):
        outcome, labels = binary_dataset()
        fit = run_mcsimex(
            outcome, labels, 2, MisclassMatrix.identity(2), "logistic",
            SimexConfig(B=5),
        )
        # every replicate reproduces the observed labels, so the trajectory
        # is flat and the extrapolation returns the naive fit
        assert np.allclose(fit.corrected, fit.naive.coefficients, atol=1e-10)
        assert np.all(fit.n_dropped == 0)

    def test_identity_pi_returns_naive_cox(self):
        rng = np.random.default_rng(3)
        labels = rng.integers(1, 3, 200)
        labels[:2] = [1, 2]
        time = rng.exponential(scale=np.where(labels == 1, 1.0, 0.5))
        time = np.maximum(time, 1e-6)
        event = np.ones(200)
        outcome = Outcome.survival(time, event)
        fit = run_mcsimex(
            outcome, labels, 2, MisclassMatrix.identity(2), "cox", SimexConfig(B=5)
        )
        assert np.allclose(fit.corrected, fit.naive.coefficients, atol=1e-10)

    def test_deterministic_given_seed(self):
        outcome, labels = binary_dataset()
        cfg = SimexConfig(B=8, seed=11)
        a = run_mcsimex(outcome, labels, 2, flip_matrix(0.15), "logistic", cfg)
        b = run_mcsimex(outcome, labels, 2, flip_matrix(0.15), "logistic", cfg)
        assert np.array_equal(a.per_lambda, b.per_lambda)
        assert np.array_equal(a.corrected, b.corrected)

    def test_correction_moves_away_from_naive(self):
        # under real misclassification the corrected slope should exceed
        # the attenuated naive slope in magnitude
        rng = np.random.default_rng(8)
        n = 2000
        true = rng.integers(1, 3, n)
        logits = np.where(true == 1, -1.0, 1.0)
        y = (rng.random(n) < 1 / (1 + np.exp(-logits))).astype(float)
        observed = simulate_labels(true, flip_matrix(0.2), rng=rng)
        observed[:2] = [1, 2]
        y[:4] = [0, 1, 0, 1]
        fit = run_mcsimex(
            Outcome.binary(y), observed, 2, flip_matrix(0.2), "logistic",
            SimexConfig(B=30, seed=4),
        )
        assert abs(fit.corrected[1]) > abs(fit.naive.coefficients[1])

    def test_invalid_pi_rejected_up_front(self):
        outcome, labels = binary_dataset()
        with pytest.raises(PowerExistenceError):
            run_mcsimex(outcome, labels, 2, flip_matrix(0.8), "logistic")

    def test_curve_starts_at_naive(self):
        outcome, labels = binary_dataset()
        fit = run_mcsimex(
            outcome, labels, 2, flip_matrix(0.1), "logistic", SimexConfig(B=3)
        )
        lam0, coefs0 = fit.curve[0]
        assert lam0 == 0.0
        assert np.array_equal(coefs0, fit.naive.coefficients)
        assert len(fit.curve) == 1 + len(fit.config.lambda_grid)


class TestJackknifeVariance:
    def test_identity_pi_gives_naive_variance(self):
        outcome, labels = binary_dataset()
        fit = run_mcsimex(
            outcome, labels, 2, MisclassMatrix.identity(2), "logistic",
            SimexConfig(B=5),
        )
        assert fit.variance_method == "jackknife"
        assert np.allclose(fit.variance, np.diag(fit.naive.covariance), atol=1e-10)

    def test_variance_nonnegative(self):
        outcome, labels = binary_dataset()
        fit = run_mcsimex(
            outcome, labels, 2, flip_matrix(0.2), "logistic", SimexConfig(B=20)
        )
        assert np.all(fit.variance >= 0)
        assert np.array_equal(jackknife_variance(fit), fit.variance)

    def test_no_variance_for_single_replicate(self):
        outcome, labels = binary_dataset()
        fit = run_mcsimex(
            outcome, labels, 2, flip_matrix(0.1), "logistic", SimexConfig(B=1)
        )
        assert fit.variance is None
        assert fit.variance_method is None


class TestBootstrapSimex:
    def make_data(self, n=150, seed=5):
        params = GmmParams(
            weights=[0.5, 0.5],
            means=[[-2.0], [2.0]],
            covariances=[np.eye(1), np.eye(1)],
        )
        rng = np.random.default_rng(seed)
        sample = sample_gmm(params, n, rng)
        logits = np.where(sample.labels == 1, -1.0, 1.0)
        y = (rng.random(n) < 1 / (1 + np.exp(-logits))).astype(float)
        y[:4] = [0, 1, 0, 1]
        return Outcome.binary(y), sample.data

    def test_smoke_and_shapes(self):
        outcome, data = self.make_data()
        result = bootstrap_simex(
            outcome,
            data,
            2,
            "logistic",
            SimexConfig(B=5),
            n_boot=12,
            seed=3,
            em_config=EmConfig(structure="shared", restarts=1, tol=1e-6),
        )
        assert result.replicates.shape[1] == 2
        assert result.replicates.shape[0] == 12 - result.n_failed
        assert np.all(result.ci_lower <= result.point_median)
        assert np.all(result.point_median <= result.ci_upper)

    def test_deterministic_given_seed(self):
        outcome, data = self.make_data()
        kwargs = dict(
            config=SimexConfig(B=4),
            n_boot=6,
            seed=9,
            em_config=EmConfig(structure="shared", restarts=1, tol=1e-6),
        )
        a = bootstrap_simex(outcome, data, 2, "logistic", **kwargs)
        b = bootstrap_simex(outcome, data, 2, "logistic", **kwargs)
        assert np.array_equal(a.replicates, b.replicates)


class TestReports:
    def test_simex_report_files(self, tmp_path):
        outcome, labels = binary_dataset()
        fit = run_mcsimex(
            outcome, labels, 2, flip_matrix(0.1), "logistic", SimexConfig(B=3)
        )
        report = tmp_path / "report.txt"
        curve = tmp_path / "curve.csv"
        write_simex_report(fit, report, curve)
        text = report.read_text()
        assert "corrected" in text
        lines = curve.read_text().strip().splitlines()
        assert lines[0] == "lambda,coef_index,value"
        assert len(lines) == 1 + 2 * (1 + len(fit.config.lambda_grid))

    def test_bootstrap_csv_files(self, tmp_path):
        outcome, data = TestBootstrapSimex().make_data()
        result = bootstrap_simex(
            outcome,
            data,
            2,
            "logistic",
            SimexConfig(B=3),
            n_boot=5,
            seed=1,
            em_config=EmConfig(structure="shared", restarts=1, tol=1e-6),
        )
        reps = tmp_path / "reps.csv"
        summary = tmp_path / "summary.csv"
        write_bootstrap_csv(result, reps, summary)
        rep_lines = reps.read_text().strip().splitlines()
        assert rep_lines[0] == "coef_1,coef_2"
        assert len(rep_lines) == 1 + len(result.replicates)
        sum_lines = summary.read_text().strip().splitlines()
        assert sum_lines[0].startswith("coef,point_mean")
        assert len(sum_lines) == 3
