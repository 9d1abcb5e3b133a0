import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from nlfavar.errors import AlignmentError, OriginError, ParameterError
from nlfavar.evalx import (
    CELL_CLASSES, PERIODS, ForecastRun, ModelSpec, combine_reports, crps, expanding_forecast, rmse,
    stratify_report,
)
from nlfavar.reduce import ReducerSpec


def crps_pairwise(x, y):
    x = np.asarray(x, float)
    return np.mean(np.abs(x - y)) - np.abs(x[:, None] - x[None, :]).sum() / (2 * len(x) ** 2)


def normal_crps_oracle():
    """E_y CRPS(N(0,1), y) for y ~ N(0,1) by nested quadrature of the threshold integral."""
    def score(y):
        lower = integrate.quad(lambda x: stats.norm.cdf(x) ** 2, -np.inf, y)[0]
        upper = integrate.quad(lambda x: stats.norm.sf(x) ** 2, y, np.inf)[0]
        return lower + upper
    return integrate.quad(lambda y: score(y) * stats.norm.pdf(y), -np.inf, np.inf)[0]


class TestMetrics:
    def test_perfect(self):
        assert crps([1.5, 1.5, 1.5], 1.5) == 0.0

    def test_singleton(self):
        assert crps([2.0], -1.25) == 3.25

    def test_two_point(self):
        assert crps([0.0, 2.0], 1.0) == 0.5

    def test_empty(self):
        with pytest.raises(ParameterError):
            crps([], 0.0)
        with pytest.raises(ParameterError):
            rmse([])

    def test_rmse_examples(self):
        assert rmse([0, 0, 0]) == 0.0
        assert rmse([3, 4]) == np.sqrt(12.5)
        assert rmse([-2.5]) == 2.5

    def test_vectorized_matches_pairwise(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((37, 4))
        y = rng.standard_normal(4)
        expected = [crps_pairwise(x[:, j], y[j]) for j in range(4)]
        assert np.allclose(crps(x, y), expected, atol=1e-13)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=30), st.floats(-100, 100),
           st.floats(-50, 50), st.floats(0.01, 20))
    def test_properties(self, xs, y, shift, scale):
        x = np.array(xs)
        c = crps(x, y)
        assert c >= 0 and c <= np.mean(np.abs(x - y)) + 1e-9
        assert c == pytest.approx(crps_pairwise(x, y), abs=1e-9)
        assert crps(x + shift, y + shift) == pytest.approx(c, abs=1e-8)
        assert crps(scale * x, scale * y) == pytest.approx(scale * c, rel=1e-9, abs=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30))
    def test_rmse_bound(self, e):
        assert rmse(e) >= abs(np.mean(e)) - 1e-9


LINEAR = ModelSpec("linear", ReducerSpec("pca", q=2), p=2, S=100, burn=100, draws=200)


class TestExpanding:
    def test_single_origin(self):
        X = np.random.default_rng(0).standard_normal((60, 5))
        run = expanding_forecast(X, LINEAR, holdout=1)
        assert run.targets.tolist() == [59] and run.point.shape == (1, 5)
        assert np.array_equal(run.realized, X[[59]])

    def test_determinism_and_draws(self):
        X = np.random.default_rng(1).standard_normal((60, 4))
        a = expanding_forecast(X, LINEAR, 4, refit_every=2, seed=3, keep_draws=True)
        b = expanding_forecast(X, LINEAR, 4, refit_every=2, seed=3, keep_draws=True)
        assert np.array_equal(a.draws, b.draws) and np.array_equal(a.crps, b.crps)
        assert a.draws.shape == (4, 200, 4)
        assert np.allclose(a.point, a.draws.mean(axis=1))

    def test_no_lookahead(self):
        X = np.random.default_rng(2).standard_normal((60, 4))
        Y = X.copy()
        Y[-1] += 100.0
        a = expanding_forecast(X, LINEAR, 3, seed=1)
        b = expanding_forecast(Y, LINEAR, 3, seed=1)
        assert np.array_equal(a.point, b.point)
        assert not np.array_equal(a.crps[-1], b.crps[-1])

    def test_bad_arguments(self):
        X = np.random.default_rng(3).standard_normal((30, 3))
        with pytest.raises(ParameterError):
            expanding_forecast(X, LINEAR, 30)
        with pytest.raises(ParameterError):
            expanding_forecast(X, LINEAR, 3, refit_every=0)

    def test_origin_attached(self):
        X = np.random.default_rng(4).standard_normal((40, 3))
        with pytest.raises(OriginError) as info:
            expanding_forecast(X, LINEAR, 25)  # first fit has 15 rows, too few for the BVAR
        assert info.value.origin == 15

    def test_white_noise_calibration(self):
        oracle = normal_crps_oracle()
        assert oracle == pytest.approx(1 / np.sqrt(np.pi), rel=1e-6)
        X = np.random.default_rng(5).standard_normal((160, 10))
        model = ModelSpec("linear", ReducerSpec("pca", q=3), p=2, S=200, burn=200, draws=500)
        run = expanding_forecast(X, model, 60, refit_every=5, seed=0)
        assert run.crps.mean() == pytest.approx(oracle, rel=0.15)


def synthetic_run(name, errors, scores, targets=None):
    errors = np.asarray(errors, float)
    targets = np.arange(errors.shape[0]) if targets is None else targets
    realized = np.zeros_like(errors)
    return ForecastRun(name, targets, realized, errors, np.asarray(scores, float))


class TestStratify:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.e = rng.standard_normal((30, 4))
        self.c = np.abs(rng.standard_normal((30, 4)))
        self.crisis = np.zeros(30, bool)
        self.crisis[[3, 9, 20]] = True
        self.classes = np.array(["heavily_affected", "affected", "not_affected", "affected"])

    def test_self_ratio(self):
        runs = {"linear": synthetic_run("linear", self.e, self.c), "ae": synthetic_run("ae", self.e, self.c)}
        rep = stratify_report(runs, "linear", self.crisis, self.classes)
        for period in PERIODS:
            for cls in CELL_CLASSES:
                assert rep.cell("ae", period, cls) == 1.0 and rep.cell("ae", period, cls, "crps") == 1.0

    def test_doubled_baseline(self):
        runs = {"linear": synthetic_run("linear", 2 * self.e, 2 * self.c), "ae": synthetic_run("ae", self.e, self.c)}
        rep = stratify_report(runs, "linear", self.crisis, self.classes)
        assert rep.cell("ae", "tranquil") == pytest.approx(0.5, abs=1e-15)
        assert rep.cell("ae", "crisis", "affected", "crps") == pytest.approx(0.5, abs=1e-15)

    def test_empty_cell(self):
        runs = {"linear": synthetic_run("linear", self.e, self.c)}
        rep = stratify_report(runs, "linear", np.zeros(30, bool), self.classes)
        assert rep.cell("linear", "crisis") is None
        assert rep.absolute["linear"][("crisis", "overall")] is None
        assert rep.cell("linear", "tranquil") == 1.0

    def test_partition_recombines(self):
        runs = {"linear": synthetic_run("linear", self.e, self.c)}
        rep = stratify_report(runs, "linear", self.crisis, self.classes)
        ab = rep.absolute["linear"]
        total = sum(ab[(p, "overall")]["rmse"] ** 2 * ab[(p, "overall")]["n"] for p in PERIODS)
        assert total / self.e.size == pytest.approx(np.mean(self.e**2), abs=1e-10)
        for p in PERIODS:
            parts = [ab[(p, c)] for c in CELL_CLASSES[1:] if ab[(p, c)]]
            mse = sum(c["rmse"] ** 2 * c["n"] for c in parts) / sum(c["n"] for c in parts)
            assert mse == pytest.approx(ab[(p, "overall")]["rmse"] ** 2, abs=1e-10)

    def test_alignment(self):
        runs = {"linear": synthetic_run("linear", self.e, self.c),
                "ae": synthetic_run("ae", self.e, self.c, targets=np.arange(1, 31))}
        with pytest.raises(AlignmentError):
            stratify_report(runs, "linear", self.crisis, self.classes)
        with pytest.raises(ParameterError):
            stratify_report(runs, "lle", self.crisis, self.classes)

    def test_origins_increasing(self):
        with pytest.raises(ParameterError):
            synthetic_run("x", self.e[:2], self.c[:2], targets=np.array([3, 3]))

    def test_outputs(self, tmp_path):
        runs = {"linear": synthetic_run("linear", self.e, self.c), "ae": synthetic_run("ae", self.e, self.c)}
        rep = stratify_report(runs, "linear", self.crisis, self.classes)
        rep.to_csv(tmp_path / "r.csv")
        rep.to_json(tmp_path / "r.json")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert len(lines) == 1 + 2 * 2 * 4
        cells = json.loads((tmp_path / "r.json").read_text())["cells"]
        assert len(cells) == 16 and cells[0]["model"] == "linear"


class TestCombine:
    def test_mean_and_pooled(self):
        rng = np.random.default_rng(1)
        classes = np.array(["affected"] * 3)
        reports = []
        for r in range(3):
            e = rng.standard_normal((10, 3))
            c = np.abs(e)
            crisis = np.zeros(10, bool)
            if r:
                crisis[r] = True
            runs = {"linear": synthetic_run("linear", e, c), "ae": synthetic_run("ae", 0.5 * e, 0.5 * c)}
            reports.append(stratify_report(runs, "linear", crisis, classes))
        comb = combine_reports(reports)
        assert comb.value("ae", "tranquil") == pytest.approx(0.5)
        assert comb.value("ae", "crisis", kind="pooled") == pytest.approx(0.5)
        assert comb.present["ae"][("crisis", "overall")] == 2
        assert comb.present["ae"][("tranquil", "overall")] == 3
        assert comb.value("ae", "crisis", "heavily_affected") is None

    def test_empty(self):
        with pytest.raises(ParameterError):
            combine_reports([])
