import json

import pytest

from dflgap import __version__, harness
from dflgap.cli import main
from dflgap.errors import ConfigError, IoFailure
from dflgap.harness import ResultsRow, SweepConfig
from dflgap.learners import TrainConfig
from dflgap.synthetic import DistConfig

TINY = """
rho_values = [0.0, 1.0]
seeds = [0, 1]
samples = 30
test_count = 10

[dist]
n = 3
m = 4

[train]
iterations = 4
"""


def tiny_config(**kw):
    base = dict(
        rho_values=(0.0, 1.0),
        seeds=(0, 1),
        samples=30,
        test_count=10,
        dist=DistConfig(n=3, m=4),
        train=TrainConfig(iterations=4),
    )
    return SweepConfig(**{**base, **kw})


def some_rows():
    return [
        ResultsRow(-0.2, 0, "two_stage", 1234.56789012345, 0.0),
        ResultsRow(-0.2, 0, "opt", -1e-7, 0.0),
        ResultsRow(0.6, 3, "end_to_end", 3.0, 1.5),
    ]


class TestSweepConfig:
    def test_defaults(self):
        cfg = SweepConfig()
        assert len(cfg.rho_values) == 11 and cfg.rho_values[0] == -1.0 and cfg.rho_values[-1] == 1.0
        assert 0.0 in cfg.rho_values and 0.8 in cfg.rho_values
        assert cfg.seeds == tuple(range(10))
        assert (cfg.samples, cfg.test_count) == (1000, 200)
        assert cfg.n_cells == 110

    def test_fast_profile(self):
        cfg = harness.fast_profile()
        assert cfg.rho_values == (-1.0, -0.5, 0.0, 0.5, 1.0)
        assert len(cfg.seeds) == 3 and cfg.train.iterations == 200

    def test_invalid(self):
        with pytest.raises(ValueError):
            SweepConfig(test_count=1000)
        with pytest.raises(ValueError):
            SweepConfig(rho_values=(2.0,))

    def test_parse(self):
        assert harness.parse_config(TINY) == tiny_config()

    @pytest.mark.parametrize(
        "text",
        ["bogus = 1", "[dist]\nnn = 3", "[train]\nlearning_rate = 0.1", "samples = 10\ntest_count = 10", "rho_values = [", "dist = 3"],
    )
    def test_config_errors(self, text):
        with pytest.raises(ConfigError):
            harness.parse_config(text)


class TestEmit:
    def test_csv_schema(self, tmp_path):
        path = harness.emit(some_rows(), "csv", tmp_path / "r.csv")
        raw = path.read_bytes()
        assert b"\r" not in raw
        lines = raw.decode().splitlines()
        assert lines[0] == "rho,seed,method,test_loss,train_seconds"
        assert lines[1] == "-0.2,0,two_stage,1234.56789,0"
        assert lines[2] == "-0.2,0,opt,-1e-07,0"

    def test_round_trip(self, tmp_path):
        text = harness.to_csv(some_rows())
        via_json = harness.from_json(harness.to_json(harness.from_csv(text)))
        assert harness.to_csv(via_json) == text

    def test_plotdata_constant(self):
        rows = [ResultsRow(0.5, s, "opt", 7.25) for s in range(10)]
        assert harness.plot_rows(rows) == [(0.5, "opt", 7.25, 7.25, 7.25)]

    def test_nearest_rank(self):
        values = list(range(1, 11))
        assert harness.nearest_rank(values, 10) == 1.0
        assert harness.nearest_rank(values, 90) == 9.0
        assert harness.nearest_rank([5.0, 1.0, 3.0], 50) == 3.0

    def test_plotdata_header(self, tmp_path):
        path = harness.emit(some_rows(), "plotdata", tmp_path / "p.csv")
        assert path.read_text().splitlines()[0] == "rho,method,mean,p10,p90"

    def test_empty_table(self, tmp_path):
        with pytest.raises(ValueError):
            harness.emit([], "csv", tmp_path / "r.csv")

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(IoFailure):
            harness.emit(some_rows(), "csv", blocker / "sub" / "r.csv")


class TestSweep:
    def test_rows_sorted_and_complete(self):
        cfg = tiny_config()
        result = harness.run_rho_sweep(cfg)
        assert len(result.rows) == 2 * 2 * 3
        assert list(result.rows) == sorted(result.rows, key=ResultsRow.key)
        assert not result.failures
        for cell in result.cells:
            assert cell.final_loss <= cell.initial_loss + 1e-9 * abs(cell.initial_loss)

    def test_deterministic_bytes(self, tmp_path):
        cfg = tiny_config()
        a = harness.emit(harness.run_rho_sweep(cfg).rows, "csv", tmp_path / "a.csv")
        b = harness.emit(harness.run_rho_sweep(cfg).rows, "csv", tmp_path / "b.csv")
        assert a.read_bytes() == b.read_bytes()

    def test_cell_in_isolation(self):
        cfg = tiny_config()
        rows = harness.run_rho_sweep(cfg).rows
        cell = harness.run_cell(cfg, 1, 1)
        assert set(cell.rows) <= set(rows)

    def test_failed_cell_is_recorded(self, monkeypatch):
        real = harness.fit_end_to_end

        def flaky(train, inst, cfg, seed):
            if seed[1] == 1:
                raise ValueError("boom")
            return real(train, inst, cfg, seed=seed)

        monkeypatch.setattr(harness, "fit_end_to_end", flaky)
        result = harness.run_rho_sweep(tiny_config())
        assert len(result.failures) == 2
        assert all(c.rho == 1.0 and "boom" in c.error for c in result.failures)
        assert len(result.rows) == 2 * 3

    def test_timing_flag(self):
        cfg = tiny_config(rho_values=(0.5,), seeds=(0,), timing=True)
        rows = harness.run_rho_sweep(cfg).rows
        assert any(r.train_seconds > 0 for r in rows)


class TestGapSuite:
    def test_defaults(self):
        items = {i.name: i for i in harness.run_gap_suite()}
        assert all(i.error is None for i in items.values())
        for d in (1, 10, 50):
            r = items[f"product_gap_d{d}"].report
            assert r["ratio_ts_over_e2e"] == pytest.approx(1 + d * 4.99**2, rel=1e-9)
        assert items["prop1"].report["grid"]["min_loss"] == pytest.approx(1.55)
        assert items["poc_flow"].report["poc"] == pytest.approx(7 / 6, rel=1e-15)

    def test_item_failure_recorded(self):
        items = harness.run_gap_suite({"product": {"d": [0, 2]}, "nonlinear": {"gammas": ["nope"]}})
        errors = {i.name: i.error for i in items}
        assert errors["product_gap_d0"] and errors["nonlinear_gap_nope"]
        assert errors["product_gap_d2"] is None

    def test_unknown_section(self):
        with pytest.raises(ConfigError):
            harness.run_gap_suite({"extra": {}})


class TestGradcheck:
    def test_passes(self):
        rep = harness.gradcheck(trials=5, tol=1e-4, seed=3)
        assert rep.passed and len(rep.errors) == 5


class TestCli:
    def test_version(self, capsys):
        assert main(["version"]) == 0
        assert capsys.readouterr().out.strip() == __version__

    def test_sweep(self, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text(TINY)
        code = main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o"), "--format", "csv", "--format", "json"])
        assert code == 0
        text = (tmp_path / "o" / "results.csv").read_text()
        assert len(harness.from_csv(text)) == 12
        # JSON keeps full precision; rendered at 9 digits it is the CSV
        assert harness.to_csv(harness.from_json((tmp_path / "o" / "results.json").read_text())) == text

    def test_config_error_exit(self, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text("unknown_key = 1\n")
        assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path)]) == 1
        assert main(["sweep", "--config", str(tmp_path / "missing.toml"), "--out", str(tmp_path)]) == 1

    def test_bad_arguments_exit(self):
        with pytest.raises(SystemExit) as exc:
            main(["sweep"])
        assert exc.value.code == 1

    def test_partial_failure_exit(self, tmp_path, monkeypatch):
        cfg = tmp_path / "c.toml"
        cfg.write_text(TINY)
        real = harness.run_cell

        def flaky(cfg, i, j):
            cell = real(cfg, i, j)
            return cell if i == 0 else harness.CellResult(i, j, cfg.rho_values[i], cfg.seeds[j], error="x")

        monkeypatch.setattr(harness, "run_cell", flaky)
        assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        failures = json.loads((tmp_path / "o" / "failures.json").read_text())
        assert len(failures) == 2

    def test_gaps(self, tmp_path, capsys):
        assert main(["gaps", "--out", str(tmp_path)]) == 0
        items = json.loads((tmp_path / "gaps.json").read_text())
        assert {i["name"] for i in items} >= {"prop1", "poc_flow", "product_gap_d50"}

    def test_poc_with_params(self, tmp_path, capsys):
        params = tmp_path / "p.toml"
        params.write_text("scenarios = [[1, 1, 1], [0, 0, 0]]\nprobs = [0.5, 0.5]\nc1 = [0, 1, 2, 3]\nc2 = [0, 3, 6, 9]\n")
        assert main(["poc", "--kind", "flow", "--params", str(params)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["poc"] == pytest.approx(7 / 6)
        assert report["constructive_marginals"] == [1.0, 1.0, 1.0]

    def test_poc_missing_param(self, tmp_path):
        params = tmp_path / "p.toml"
        params.write_text("scenarios = [[1]]\nprobs = [1.0]\n")
        assert main(["poc", "--kind", "setcover", "--params", str(params)]) == 1

    def test_gradcheck(self, capsys):
        assert main(["gradcheck", "--trials", "3"]) == 0
        assert "pass" in capsys.readouterr().out
