import json
import math

import numpy as np
import pytest

from pfr.errors import ConfigError
from pfr.experiments import (
    ERROR_CURVE_COLUMNS,
    ExperimentConfig,
    apply_overrides,
    l2_error,
    load_config,
    mean_table,
    run_diagnostics,
    run_error_curve,
    run_recovery_check,
    worker_count,
    write_table,
)
from pfr.filters import FilterSpec
from pfr.groundtruth import linear_truth, benchmark_truth, truth_l2_norm_sq

SMALL = {
    "grid": {"t_start": 0.0, "t_end": 2 * math.pi, "n_points": 512},
    "n_range": [1, 6],
    "seeds": [1, 2],
    "n_mc": 200,
}


def small_cfg(**extra):
    return ExperimentConfig.from_dict({**SMALL, **extra})


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig().validate()
        assert cfg.grid.n_points == 2048
        assert [f.lam for f in cfg.filters] == [1e-1, 1e-3, 1e-9]
        assert all(f.iterations == 4 for f in cfg.filters)
        assert cfg.seeds == tuple(range(1, 11)) and cfg.n_range == (1, 40)

    def test_dict_round_trip(self):
        cfg = small_cfg(noise={"kind": "gaussian", "sigma_sq": 1e-3}, p=1)
        assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    def test_empty_seeds(self):
        with pytest.raises(ConfigError) as err:
            small_cfg(seeds=[])
        assert err.value.fields == ["seeds"]

    def test_lists_every_bad_field(self):
        with pytest.raises(ConfigError) as err:
            small_cfg(n_range=[5, 2], delta=2.0, path="qr")
        assert err.value.fields == ["delta", "n_range", "path"]

    def test_unparsable_fields(self):
        with pytest.raises(ConfigError) as err:
            small_cfg(p="two", noise={"kind": "cauchy"})
        assert err.value.fields == ["noise", "p"]

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as err:
            small_cfg(lamda=[1.0])
        assert err.value.fields == ["lamda"]

    def test_lambdas_and_q(self):
        cfg = small_cfg(lambdas=[0.5, 0.01], q=2)
        assert cfg.filters == (FilterSpec.iterated(0.5, 2), FilterSpec.iterated(0.01, 2))

    def test_truth_names(self):
        assert small_cfg(truth="linear").truth == linear_truth(1)
        assert small_cfg(truth="quadratic").truth == benchmark_truth()

    def test_load_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps(SMALL))
        assert load_config(path) == small_cfg()
        assert load_config(None) == ExperimentConfig()

    def test_load_bad_json(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{\n  \"p\": 2,\n")
        with pytest.raises(ConfigError, match="line"):
            load_config(path)


class TestOverrides:
    def test_lambda_replaces_ladder(self):
        cfg = apply_overrides(ExperimentConfig(), lam=1e-5, q=3)
        assert cfg.filters == (FilterSpec.iterated(1e-5, 3),)
        assert cfg.q == 3

    def test_scalars(self, tmp_path):
        cfg = apply_overrides(ExperimentConfig(), n_max=12, seed=7, p=1, out=str(tmp_path), timing=True)
        assert cfg.n_range == (1, 12) and cfg.seeds == (7,) and cfg.p == 1
        assert cfg.out_dir == str(tmp_path) and cfg.timing

    def test_invalid(self):
        with pytest.raises(ConfigError):
            apply_overrides(ExperimentConfig(), lam=-1.0)
        with pytest.raises(ConfigError):
            apply_overrides(ExperimentConfig(), n_max=0)

    def test_threads_env(self, monkeypatch):
        monkeypatch.setenv("PFR_THREADS", "3")
        assert worker_count() == 3
        monkeypatch.setenv("PFR_THREADS", "many")
        with pytest.raises(ConfigError):
            worker_count()
        monkeypatch.delenv("PFR_THREADS")
        assert worker_count() >= 1


@pytest.fixture(scope="module")
def rows():
    return run_error_curve(small_cfg())


class TestErrorCurve:
    def test_shape_and_keys(self, rows):
        cfg = small_cfg()
        assert len(rows) == len(cfg.seeds) * len(cfg.n_values) * len(cfg.filters)
        assert len({(r["seed"], r["N"], r["lambda"]) for r in rows}) == len(rows)
        assert all(tuple(r) == ERROR_CURVE_COLUMNS for r in rows)
        assert all(r["wall_ms"] == 0.0 for r in rows)
        assert all(math.isfinite(r["l2_error"]) and r["excess_risk"] >= 0 for r in rows)

    def test_single_n(self):
        rows = run_error_curve(small_cfg(n_range=[1, 1]))
        assert len(rows) == 2 * 3
        assert {r["N"] for r in rows} == {1}

    def test_matches_manual_fit(self, rows):
        from pfr.simulate import make_dataset
        from pfr.solver import fit_spectral

        cfg = small_cfg()
        ds = make_dataset(cfg.process, cfg.truth, cfg.noise, 6, seed=2)
        m = fit_spectral(ds.curves[:4], ds.responses[:4], cfg.filters[1], 2).model
        row = next(r for r in rows if r["seed"] == 2 and r["N"] == 4 and r["lambda"] == 1e-3)
        assert row["l2_error"] == l2_error(m, cfg.truth)

    def test_csv_deterministic_across_threads(self, tmp_path, monkeypatch, rows):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_table(a, rows, ERROR_CURVE_COLUMNS)
        monkeypatch.setenv("PFR_THREADS", "1")
        write_table(b, run_error_curve(small_cfg()), ERROR_CURVE_COLUMNS)
        assert a.read_bytes() == b.read_bytes()
        header = a.read_text().splitlines()[0]
        assert header == "seed,N,lambda,q,p,l2_error,excess_risk,wall_ms"

    def test_iterated_path_agrees(self, rows):
        lu = run_error_curve(small_cfg(path="iterated", error_method="tensor"))
        for a, b in zip(rows, lu):
            assert a["l2_error"] == pytest.approx(b["l2_error"], rel=1e-6, abs=1e-9)

    def test_timing(self):
        rows = run_error_curve(small_cfg(n_range=[3, 3], seeds=[1], timing=True))
        assert all(r["wall_ms"] > 0 for r in rows)

    def test_mean_table(self, rows):
        means = mean_table(rows)
        assert len(means) == 6 * 3
        assert all(m["n_seeds"] == 2 for m in means)
        one = next(m for m in means if m["N"] == 5 and m["lambda"] == 1e-1)
        vals = [r["l2_error"] for r in rows if r["N"] == 5 and r["lambda"] == 1e-1]
        assert one["mean_l2_error"] == pytest.approx(np.mean(vals), rel=1e-15)

    def test_linear_model_error_includes_tail(self):
        from pfr.simulate import make_dataset
        from pfr.solver import fit_spectral

        cfg = small_cfg()
        ds = make_dataset(cfg.process, cfg.truth, cfg.noise, 3, seed=1)
        m = fit_spectral(ds.curves, ds.responses, FilterSpec.tikhonov(1.0), 1).model
        assert l2_error(m, benchmark_truth()) ** 2 >= truth_l2_norm_sq(benchmark_truth(), 2)


@pytest.fixture(scope="module")
def report():
    return run_recovery_check(ExperimentConfig(n_range=(5, 30), seeds=(1,), n_mc=500))


class TestRecovery:
    def test_structure(self, report):
        assert report["u1_target"] == [1.0, 1.0, 0.0, 0.0, 0.0, 1.0]
        assert report["u2_diag_target"] == [0.0, 1.0, 0.0, 0.0, 0.0]
        seed = report["seeds"][0]
        assert [r["N"] for r in seed["rows"]] == list(range(5, 31))
        assert len(seed["rows"][0]["u1"]) == 6 and len(seed["rows"][0]["u2_diag"]) == 5

    def test_small_n_fails(self, report):
        assert not report["seeds"][0]["rows"][0]["passed"]

    def test_recovers_by_thirty(self, report):
        seed = report["seeds"][0]
        assert seed["first_passing_N"] is not None and seed["first_passing_N"] <= 30
        assert seed["rows"][-1]["passed"]
        assert abs(seed["rows"][-1]["b0"] - 2.0) < 1e-4

    def test_linear_comparison_present(self, report):
        lc = report["seeds"][0]["linear_comparison"]
        assert lc["N"] == 30 and lc["factor"] == 10.0
        assert lc["excess_risk_p1"] > lc["excess_risk_p2"]

    def test_requires_quadratic(self):
        with pytest.raises(ConfigError):
            run_recovery_check(ExperimentConfig(p=1))


class TestDiagnosticsRun:
    def test_report(self):
        rep = run_diagnostics(small_cfg(n_range=[1, 40]))
        for seed in rep["seeds"]:
            dims = [l["eff_dim"] for l in seed["ladder"]]
            assert np.all(np.diff(dims) > 0)  # ladder runs from large to small lambda
            assert seed["n_lambda_star"] >= 0.5
            assert len(seed["spectrum"]) == 40
            assert all(l["upsilon"] >= 1 and l["xi"] >= 2 for l in seed["ladder"])
