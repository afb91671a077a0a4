import json
from dataclasses import fields, replace

import numpy as np
import pytest

from smm.bench import (
    DEEPC_LAMBDA_G,
    EXPERIMENTS,
    ExperimentConfig,
    aggregate,
    default_config,
    generate_data,
    run_experiment,
    run_records,
    stream_rng,
)
from smm.lti import g1


def type7(x, p):
    """Hyndman-Fan type 7 quantile, written out by hand."""
    x = sorted(x)
    h = (len(x) - 1) * p
    lo = int(np.floor(h))
    hi = min(lo + 1, len(x) - 1)
    return x[lo] + (h - lo) * (x[hi] - x[lo])


class TestSeeding:
    def test_streams_deterministic_and_distinct(self):
        a = stream_rng(3, "data-input").standard_normal(5)
        np.testing.assert_array_equal(a, stream_rng(3, "data-input").standard_normal(5))
        assert not np.array_equal(a, stream_rng(3, "data-noise").standard_normal(5))
        assert not np.array_equal(a, stream_rng(4, "data-input").standard_normal(5))

    def test_noise_stream_independent_of_variance(self):
        _, y1, y0, _ = generate_data(g1(), 30, 0.01, 7)
        _, y2, _, _ = generate_data(g1(), 30, 0.04, 7)
        np.testing.assert_allclose(y2 - y0, 2 * (y1 - y0), rtol=1e-12, atol=1e-15)

    def test_known_past(self):
        u, _, _, past = generate_data(g1(), 30, 0.0, 1, n_past=10)
        u_full = stream_rng(1, "data-input").standard_normal(130)
        np.testing.assert_array_equal(past, u_full[90:100])
        np.testing.assert_array_equal(u, u_full[100:])


class TestConfig:
    def test_fig5_defaults(self):
        c = default_config("fig5")
        assert (c.runs, c.steps, c.N, c.L0, c.Lp) == (100, 60, 200, 4, 11)
        assert c.noise_pairs() == [(1.0, 1.0)]
        assert (c.Q, c.R, c.lambda_y) == (1.0, 1.0, 1000.0)
        np.testing.assert_allclose(c.lambda_g, np.logspace(1, 3, 9))

    def test_identification_defaults(self):
        c = default_config("fig3")
        assert (c.N, c.L0, c.Lp, c.sigma2, c.runs) == (50, 4, 11, [0.01], 100)

    def test_fig8_sweep(self):
        assert default_config("fig8").N_list == [100, 200, 400, 800, 1600]

    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig("fig9")
        with pytest.raises(ValueError):
            ExperimentConfig("fig5", runs=0)
        with pytest.raises(ValueError):
            ExperimentConfig("fig6b", sigma2=[])
        with pytest.raises(ValueError):
            ExperimentConfig("fig6b", sigma2=[0.1, 1.0], sigma_p2=[0.1]).noise_pairs()

    def test_hash_changes_with_every_field(self):
        base = default_config("fig6b")
        changed = {
            "experiment": "fig7", "system": "g2", "N": 201, "L0": 3, "Lp": 10, "sigma2": [0.5],
            "sigma_p2": [0.2], "N_list": [10], "runs": 7, "seed": 9, "known_past": False, "steps": 61,
            "Q": 2.0, "R": 3.0, "lambda_g": [1.0], "lambda_y": 10.0, "compress": False,
            "alpha_grid": [1.0], "beta_grid": [0.7],
        }
        for f in fields(ExperimentConfig):
            if f.name in ("out", "workers"):
                assert replace(base, **{f.name: {"out": "elsewhere", "workers": 4}[f.name]}).hash() == base.hash()
                continue
            assert replace(base, **{f.name: changed[f.name]}).hash() != base.hash(), f.name

    def test_json_mirrors_fields(self, tmp_path):
        cfg = default_config("fig6b", runs=3)
        p = tmp_path / "c.json"
        from dataclasses import asdict

        p.write_text(json.dumps(asdict(cfg)))
        assert ExperimentConfig.from_json(p) == cfg
        assert ExperimentConfig.from_json(p, seed=5).seed == 5

    def test_json_unknown_field(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"experiment": "fig5", "bogus": 1}))
        with pytest.raises(ValueError, match="bogus"):
            ExperimentConfig.from_json(p)

    def test_ids(self):
        assert EXPERIMENTS == ("fig1a", "fig1b", "fig2", "fig3", "fig4", "fig5", "fig6a", "fig6b", "fig7", "fig8")
        assert len(DEEPC_LAMBDA_G) == 9


class TestAggregate:
    def test_single_record(self):
        row = aggregate([{"k": "a", "v": 2.5}], ("k",), ("v",))[0]
        assert row["v_median"] == row["v_mean"] == row["v_q1"] == row["v_q3"] == 2.5
        assert row["v_std"] == 0.0 and row["count"] == 1

    def test_quartile_convention(self):
        recs = [{"k": 0, "v": v} for v in (1, 2, 3, 4)]
        row = aggregate(recs, ("k",), ("v",))[0]
        assert row["v_median"] == 2.5
        assert row["v_q1"] == type7([1, 2, 3, 4], 0.25) == 1.75
        assert row["v_q3"] == type7([1, 2, 3, 4], 0.75) == 3.25
        assert row["v_std"] == pytest.approx(np.sqrt(5 / 3))

    def test_order_independent(self, rng):
        recs = [{"g": int(g), "v": float(v)} for g, v in zip(rng.integers(0, 3, 40), rng.standard_normal(40))]
        a = aggregate(recs, ("g",), ("v",))
        b = aggregate([recs[i] for i in rng.permutation(40)], ("g",), ("v",))
        assert a == b
        assert [r["g"] for r in a] == sorted(r["g"] for r in a)

    def test_empty(self):
        with pytest.raises(ValueError):
            aggregate([], ("k",), ("v",))


class TestRunExperiment:
    def test_fig1a_noise_free(self):
        rep = run_experiment(default_config("fig1a"))
        err = lambda m: np.max(np.abs(rep.column("h", method=m) - rep.column("h_true", method=m)))  # noqa: E731
        assert err("SMM") < 1e-6
        assert err("LS") > 0.01

    def test_byte_identical_reports(self, tmp_path):
        cfg = default_config("fig5", runs=2, steps=8, lambda_g=[10.0, 100.0])
        a = run_experiment(replace(cfg, out=str(tmp_path / "a"))).write()
        b = run_experiment(replace(cfg, out=str(tmp_path / "b"))).write()
        for name in ("runs.csv", "summary.csv", "meta.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_run_in_isolation(self):
        cfg = default_config("fig3", runs=3)
        full = run_experiment(cfg).records
        assert [r for r in full if r["run"] == 2] == run_records(cfg, 2)

    def test_workers_do_not_change_results(self):
        cfg = default_config("fig1b", runs=4)
        assert run_experiment(cfg).records == run_experiment(replace(cfg, workers=2)).records

    def test_summary_recomputable(self):
        rep = run_experiment(default_config("fig3", runs=5))
        for row in rep.summary:
            w = rep.column("W", example=row["example"], method=row["method"])
            assert row["W_median"] == np.median(w)
            assert row["W_mean"] == pytest.approx(np.mean(w))

    def test_partial_failures_recorded(self):
        rep = run_experiment(default_config("fig1b", runs=2, N=10))
        assert rep.records == [] and set(rep.meta["failed_runs"]) == {"0", "1"}

    def test_output_layout(self, tmp_path):
        rep = run_experiment(default_config("fig7", runs=1, steps=5, sigma2=[0.1], lambda_g=[10.0, 1000.0], out=str(tmp_path)))
        d = rep.write()
        assert d == tmp_path / "fig7"
        assert {p.name for p in d.iterdir()} == {"runs.csv", "summary.csv", "meta.json"}
        meta = json.loads((d / "meta.json").read_text())
        assert meta["config_hash"] == rep.config.hash() and meta["seed"] == 0
        header = (d / "runs.csv").read_text().splitlines()[0].split(",")
        assert "best_lambda_g" in header and "log10_best_lambda_g" in header

    def test_fig8_records(self):
        rep = run_experiment(default_config("fig8", runs=1, steps=3, N_list=[100, 200]))
        comp = [r for r in rep.records if r["compressed"] == 1]
        raw = [r for r in rep.records if r["compressed"] == 0]
        assert all(r["decision_dim"] == 30 for r in comp)
        assert [r["decision_dim"] for r in raw] == [100 - 14, 200 - 14]

    def test_fig4_trajectories(self):
        rep = run_experiment(default_config("fig4", runs=1, steps=6, lambda_g=[100.0]))
        assert {r["controller"] for r in rep.records} == {"mpc", "subpc", "deepc", "smmpc"}
        assert len(rep.column("y0", controller="mpc")) == 6
