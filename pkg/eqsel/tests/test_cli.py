import pandas as pd
import pytest
import yaml
from numpy.testing import assert_allclose

from eqsel import cli, experiments
from eqsel.config import ExperimentConfig, GameConfig
from eqsel.exceptions import PreconditionError
from eqsel.experiments import (
    aggregate_frequencies,
    cmd_analyze,
    cmd_list,
    cmd_run,
    cmd_validate,
    resolve_config_path,
    run_random_batch,
    tracked_series,
    worker_count,
)
from eqsel.games import builtin_game
from eqsel.record import RunRecord
from eqsel.tests.datafiles import BUNDLED_DOCUMENTS


def _config(**kwargs):
    data = {
        "name": "small",
        "game": "treasure_dig",
        "rule": {"rule": "log_linear"},
        "epsilon": 0.1,
        "iterations": 20,
        "n_runs": 3,
        "seed": 8,
        "stride": 5,
        "outputs": ["csv", "svg", "summary"],
    }
    data.update(kwargs)
    return ExperimentConfig.model_validate(data)


@pytest.fixture
def serial(monkeypatch):
    monkeypatch.setenv("EQSEL_THREADS", "1")


class TestWorkers(object):
    def test_capped_by_runs(self, monkeypatch):
        monkeypatch.setenv("EQSEL_THREADS", "8")
        assert worker_count(3) == 3
        assert worker_count(20) == 8

    def test_default_cpu_count(self, monkeypatch):
        monkeypatch.delenv("EQSEL_THREADS", raising=False)
        assert 1 <= worker_count(2) <= 2

    @pytest.mark.parametrize("raw", ["0", "many"])
    def test_invalid(self, monkeypatch, raw):
        monkeypatch.setenv("EQSEL_THREADS", raw)
        with pytest.raises(ValueError, match="EQSEL_THREADS"):
            worker_count(4)


class TestAggregate(object):
    def test_median_and_band(self):
        frames = [
            pd.DataFrame({"t": [1, 1], "series": ["a", "b"],
                          "frequency": [0.0, 1.0]}),
            pd.DataFrame({"t": [1, 1], "series": ["a", "b"],
                          "frequency": [1.0, 1.0]}),
        ]
        out = aggregate_frequencies(frames)
        assert list(out.columns) == ["t", "series", "median", "q20", "q80"]
        assert_allclose(out["median"], [0.5, 1.0])
        assert_allclose(out["q20"], [0.2, 1.0])
        assert_allclose(out["q80"], [0.8, 1.0])

    def test_series_filter_and_quantiles(self):
        frame = pd.DataFrame({"t": [2, 2], "series": ["a", "b"],
                              "frequency": [0.25, 0.5]})
        out = aggregate_frequencies([frame], ["b"], quantiles=(0.1, 0.9))
        assert out["series"].tolist() == ["b"]
        assert "q10" in out.columns

    def test_empty(self):
        with pytest.raises(ValueError, match="no run frames"):
            aggregate_frequencies([])


class TestTrackedSeries(object):
    def test_default(self, treasure):
        assert tracked_series(_config(), treasure) == [
            (0, 0, 0), (0, 0, 1), (0, 0, 2), (0, 0, 3),
        ]

    def test_explicit(self, treasure):
        config = _config(figure={"series": [
            {"h": 1, "state": "B", "action": [1, 1]}
        ]})
        assert tracked_series(config, treasure) == [(1, 3, 3)]

    def test_bad_state(self, treasure):
        config = _config(figure={"series": [
            {"h": 0, "state": "init", "action": [0, 0]},
            {"h": 0, "state": "Z", "action": [0, 0]},
        ]})
        with pytest.raises(ValueError, match="figure.series\\[1\\]"):
            tracked_series(config, treasure)


class TestRun(object):
    def test_artifacts(self, outdir, serial):
        summary = cmd_run(_config(), outdir)
        assert sorted(p.name for p in (outdir / "runs").iterdir()) == [
            "run_000.csv", "run_001.csv", "run_002.csv",
        ]
        for name in ["frequency.csv", "aggregate.csv", "figure.svg",
                     "summary.yaml"]:
            assert (outdir / name).exists()
        freq = pd.read_csv(outdir / "frequency.csv")
        assert list(freq.columns) == ["run", "t", "series", "frequency"]
        assert sorted(freq["run"].unique()) == [0, 1, 2]
        assert sorted(freq["t"].unique()) == [5, 10, 15, 20]
        runs = pd.read_csv(outdir / "runs" / "run_000.csv")
        assert list(runs.columns) == [
            "t", "h", "state", "action_tuple", "hidden_desc",
        ]
        assert len(summary["seeds"]) == 3
        assert set(summary["final_median"]) == {
            "h0:init:0,0", "h0:init:0,1", "h0:init:1,0", "h0:init:1,1",
        }
        on_disk = yaml.safe_load((outdir / "summary.yaml").read_text())
        assert on_disk["seeds"] == summary["seeds"]

    def test_byte_identical(self, tmp_path, serial):
        cmd_run(_config(), tmp_path / "a")
        cmd_run(_config(), tmp_path / "b")
        for name in ["frequency.csv", "aggregate.csv", "figure.svg",
                     "runs/run_002.csv"]:
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_pool_matches_serial(self, tmp_path, monkeypatch):
        monkeypatch.setenv("EQSEL_THREADS", "1")
        cmd_run(_config(outputs=["csv"]), tmp_path / "serial")
        monkeypatch.setenv("EQSEL_THREADS", "2")
        cmd_run(_config(outputs=["csv"]), tmp_path / "pool")
        assert (tmp_path / "serial" / "frequency.csv").read_bytes() == (
            tmp_path / "pool" / "frequency.csv"
        ).read_bytes()
        assert not (tmp_path / "pool" / "summary.yaml").exists()

    def test_zarr_records(self, outdir, serial):
        summary = cmd_run(_config(outputs=["zarr"]), outdir)
        assert sorted(p.name for p in (outdir / "runs").iterdir()) == [
            "run_000.zarr", "run_001.zarr", "run_002.zarr",
        ]
        record = RunRecord.read_zarr(str(outdir / "runs" / "run_001.zarr"))
        assert record.metadata["seed"] == summary["seeds"][1]
        assert [snap.t for snap in record.snapshots] == [0, 5, 10, 15, 20]
        assert (
            record.summary()["final_frequencies"] == summary["runs"][1]
        )
        assert not (outdir / "frequency.csv").exists()

    def test_epsilon_list(self, outdir, serial):
        summaries = cmd_run(
            _config(epsilon=[0.2, 0.1], n_runs=1, outputs=["summary"]), outdir
        )
        assert sorted(summaries) == [0.1, 0.2]
        assert (outdir / "eps_0.2" / "summary.yaml").exists()
        assert (outdir / "eps_0.1" / "summary.yaml").exists()

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_sampled(self, outdir, serial):
        summary = cmd_run(
            _config(algorithm="sampled", rule={"rule": "marden_mood"},
                    outputs=["csv"]),
            outdir,
        )
        assert summary["algorithm"] == "sampled"
        runs = pd.read_csv(outdir / "runs" / "run_001.csv")
        assert runs["hidden_desc"].str.contains(",").all()


class TestAnalyze(object):
    def _analysis(self, **analysis):
        return _config(epsilon=[1e-2, 1e-3, 1e-4], iterations=0,
                       analysis=analysis)

    def test_exact_and_sse(self, outdir):
        report = cmd_analyze(self._analysis(exact_pi_eps=True, sse=True),
                             outdir)
        frame = pd.read_csv(outdir / "exact_pi_eps.csv")
        assert list(frame.columns) == [
            "eps", "h", "state", "action_tuple", "probability",
        ]
        assert len(frame) == 3 * 2 * 4 * 4
        sse = pd.read_csv(outdir / "sse.csv")
        assert sse.set_index("state").loc["init", "sse"] == "1,1"
        assert (outdir / "gamma_h1_sB.csv").exists()
        assert report["sse"]["h1:A"] == ["0,0"]
        assert report["exact_pi_eps"]["h0:init"]["1,1"] > 0.9
        assert (outdir / "analysis.yaml").exists()

    def test_corollaries(self, outdir):
        report = cmd_analyze(
            self._analysis(corollaries=["c3_potential_max"]), outdir
        )
        assert report["corollaries"]["c3_potential_max"]["verdict"] == "equal"
        assert report["sweep"]["flagged"] == []

    def test_precondition_failed(self, outdir, monkeypatch):
        def refuse(*args, **kwargs):
            raise PreconditionError("not a Markov potential game")

        monkeypatch.setattr(experiments, "validate_sg_corollary", refuse)
        report = cmd_analyze(
            self._analysis(corollaries=["c3_potential_max"]), outdir
        )
        verdict = report["corollaries"]["c3_potential_max"]
        assert verdict["verdict"] == "precondition_failed"
        assert verdict["notes"] == ["not a Markov potential game"]

    def test_random_batch(self):
        config = _config(
            analysis={"random_batch": {"kind": "potential", "count": 4,
                                       "seed": 3}}
        )
        result = run_random_batch(config.analysis.random_batch, config.rule)
        assert result["which"] == "potential_max"
        assert result["count"] == 4
        assert result["pass_rate"] == pytest.approx(1.0)

    def test_random_batch_mapping(self):
        config = _config(
            rule={"rule": "pradelski_young"},
            analysis={"random_batch": {"kind": "interdependent",
                                       "count": 1}},
        )
        result = run_random_batch(config.analysis.random_batch, config.rule)
        assert result["which"] == "pareto_ne"


class TestListValidate(object):
    def test_list(self):
        listing = cmd_list()
        assert listing["games"] == ["treasure_dig", "stag_hunt",
                                    "stag_hunt_table"]
        assert listing["rules"] == ["log_linear", "marden_mood",
                                    "pradelski_young"]
        assert "treasure_fig1" in listing["bundled_experiments"]
        assert listing["bundled_games"] == ["treasure_game"]

    @pytest.mark.parametrize("path", BUNDLED_DOCUMENTS)
    def test_bundled_documents_valid(self, path):
        assert cmd_validate(path) == []

    def test_invalid_game_values(self, tmp_path, treasure):
        data = GameConfig.from_game(treasure).model_dump(mode="json")
        data["rho"] = {"init": 0.5}
        path = tmp_path / "bad.yaml"
        path.write_text(yaml.safe_dump(data))
        problems = cmd_validate(path)
        assert len(problems) == 1
        assert problems[0].startswith("rho")

    def test_resolve(self):
        assert resolve_config_path("treasure_fig1").name == "treasure_fig1.yaml"
        with pytest.raises(ValueError, match="no config file"):
            resolve_config_path("nowhere")


class TestMain(object):
    def test_list(self, capsys):
        assert cli.main(["list"]) == 0
        assert "treasure_dig" in capsys.readouterr().out

    def test_validate(self, capsys):
        assert cli.main(["validate", "--config", "treasure_fig1"]) == 0
        assert "treasure_fig1: ok" in capsys.readouterr().out

    def test_run(self, tmp_path, serial):
        out = tmp_path / "fig1"
        code = cli.main([
            "-q", "run", "--config", "treasure_fig1", "--out", str(out),
            "--runs", "2", "--iters", "10", "--epsilon", "0.1",
            "--format", "csv",
        ])
        assert code == 0
        assert (out / "frequency.csv").exists()
        assert (out / "summary.yaml").exists()
        assert not (out / "figure.svg").exists()
        summary = yaml.safe_load((out / "summary.yaml").read_text())
        assert summary["eps"] == pytest.approx(0.1)
        assert len(summary["seeds"]) == 2

    def test_run_zarr_format(self, tmp_path, serial):
        out = tmp_path / "stored"
        code = cli.main([
            "-q", "run", "--config", "treasure_fig1", "--out", str(out),
            "--runs", "1", "--iters", "4", "--epsilon", "0.1",
            "--format", "zarr",
        ])
        assert code == 0
        record = RunRecord.read_zarr(str(out / "runs" / "run_000.zarr"))
        assert record.metadata["rule"] == "log_linear"
        assert (out / "summary.yaml").exists()

    def test_analyze(self, tmp_path):
        code = cli.main([
            "-q", "analyze", "--config", "treasure_analyze", "--out",
            str(tmp_path), "--epsilon", "0.01,0.001",
        ])
        assert code == 0
        report = yaml.safe_load((tmp_path / "analysis.yaml").read_text())
        assert report["eps"] == [0.01, 0.001]

    def test_bad_epsilon(self, tmp_path):
        code = cli.main([
            "run", "--config", "treasure_fig1", "--out", str(tmp_path),
            "--epsilon", "0",
        ])
        assert code == 1

    def test_unknown_config(self, tmp_path):
        code = cli.main([
            "run", "--config", "nowhere", "--out", str(tmp_path),
        ])
        assert code == 1

    def test_invalid_game_document(self, tmp_path, capsys):
        data = GameConfig.from_game(builtin_game("stag_hunt")).model_dump(
            mode="json"
        )
        data["rho"] = {"init": 0.5}
        path = tmp_path / "bad.yaml"
        path.write_text(yaml.safe_dump(data))
        assert cli.main(["validate", "--config", str(path)]) == 1
        assert "rho" in capsys.readouterr().out

    @pytest.mark.parametrize(
        "argv",
        [
            [],
            ["run"],
            ["run", "--config", "treasure_fig1", "--out", "x", "--rule",
             "fictitious_play"],
            ["run", "--config", "treasure_fig1", "--out", "x", "--epsilon",
             "small"],
        ],
    )
    def test_usage_errors(self, argv):
        with pytest.raises(SystemExit) as err:
            cli.main(argv)
        assert err.value.code == 2
