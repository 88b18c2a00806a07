import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from app.errors import ConfigNotFound, ConfigTypeError, ParseError, UnknownKey
from app.harness.runner import results_path, write_results
from app.main import EXIT_MODULE_ERROR, EXIT_OK, EXIT_USAGE, cli
from app.models.result import Condition, LeakageCategory, RemaskStrategy, RunResult
from app.taskgen.corpus import read_corpus
from app.utils.config import config_from_dict, config_hash, load_config, parse_override, save_config
from app.utils.export import read_csv
from app.utils.helpers import code_version
from app.utils.report import BUDGET_ROWS, write_meta

SMALL_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "small.json"


@pytest.fixture(autouse=True)
def in_tmp_dir(tmp_path, monkeypatch):
    """Run every CLI test from an empty directory so logs and default paths stay local."""
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def runner():
    return CliRunner()


def write_condition(output_dir, condition, flags, family="chain"):
    results = [RunResult(problem_id=f"p{i}", condition=condition.id, completion="#### 4" if ok else "",
                         answer=4 if ok else None, correct=ok, leakage=LeakageCategory.NO_LEAK,
                         family=family)
               for i, ok in enumerate(flags)]
    path = write_results(results, results_path(output_dir, condition))
    write_meta(path, condition, "abc", code_version(), len(results))


class TestConfig:
    """Tests for loading and validating experiment configs."""

    def test_defaults(self):
        config = load_config()
        assert config.sampler.steps == 64
        assert config.sampler.remask_strategy == RemaskStrategy.LOW_CONFIDENCE
        assert config.grid.budgets == [100]
        assert len(config.config_hash) == 16

    def test_unknown_key_reports_path(self):
        with pytest.raises(UnknownKey) as excinfo:
            config_from_dict({"sampler": {"stepz": 3}})
        assert excinfo.value.key_path == "sampler.stepz"

    def test_wrong_type_reports_path(self):
        with pytest.raises(ConfigTypeError) as excinfo:
            config_from_dict({"training": {"epochs": "many"}})
        assert excinfo.value.key_path == "training.epochs"

    def test_invalid_value(self):
        with pytest.raises(ConfigTypeError):
            config_from_dict({"sampler": {"steps": 1000, "gen_len": 8}})

    def test_overrides(self):
        config = config_from_dict({}, ["training.epochs=5", "grid.budgets=[25, 50]", "endpoint.model=local"])
        assert config.training.epochs == 5
        assert config.grid.budgets == [25, 50]
        assert config.endpoint.model == "local"
        assert config.config_hash != load_config().config_hash

    def test_parse_override(self):
        assert parse_override("a.b=3") == ("a.b", 3)
        assert parse_override("a=runs/x") == ("a", "runs/x")
        with pytest.raises(ValueError):
            parse_override("novalue")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigNotFound):
            load_config(tmp_path / "missing.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{\n  \"seed\": \n")
        with pytest.raises(ParseError):
            load_config(path)

    def test_save_and_reload(self, tmp_path):
        config = config_from_dict({}, ["grid.seeds=[1, 2]", "sampler.remask_strategy=random"])
        path = save_config(config, tmp_path / "cfg" / "exp.json")
        assert "config_hash" not in json.loads(path.read_text())
        assert load_config(path) == config

    def test_hash_ignores_hash_field(self):
        config = load_config()
        before = config_hash(config)
        config.config_hash = "something else"
        assert config_hash(config) == before

    def test_shipped_configs_load(self):
        config = load_config(SMALL_CONFIG)
        assert config.grid.seeds == [42, 123]
        assert config.model.layers == 2


class TestExitCodes:
    """Tests for the CLI exit-code contract."""

    def test_version(self, runner):
        result = runner.invoke(cli, ["--version"])
        assert result.exit_code == EXIT_OK

    def test_missing_config_is_a_usage_error(self, runner):
        result = runner.invoke(cli, ["--config", "missing.json", "gen-data"])
        assert result.exit_code == EXIT_USAGE
        assert "config_not_found" in result.output

    def test_bad_override_syntax(self, runner):
        result = runner.invoke(cli, ["--set", "novalue", "report"])
        assert result.exit_code == EXIT_USAGE

    def test_unknown_command(self, runner):
        result = runner.invoke(cli, ["fly"])
        assert result.exit_code == EXIT_USAGE

    def test_module_error(self, runner):
        result = runner.invoke(cli, ["--set", "sampler.stepz=3", "gen-data"])
        assert result.exit_code == EXIT_MODULE_ERROR
        assert "unknown_key" in result.output

    def test_missing_corpus(self, runner):
        result = runner.invoke(cli, ["--set", "data.test_path=nowhere.jsonl", "plan"])
        assert result.exit_code != EXIT_OK


class TestCommands:
    """Tests for individual commands over small inputs."""

    def test_gen_data(self, runner, tmp_path):
        result = runner.invoke(cli, [
            "--set", "data.train_problems=60", "--set", "data.test_problems=4",
            "--set", "data.train_difficulties=[2]", "--set", "data.test_difficulties=[3]",
            "--set", 'data.test_families=["chain"]',
            "gen-data"])
        assert result.exit_code == EXIT_OK, result.output
        train = read_corpus(tmp_path / "data" / "train.jsonl")
        test = read_corpus(tmp_path / "data" / "test.jsonl")
        assert train and 0 < len(test) <= 4
        assert not {p.id for p in train} & {p.id for p in test}

    def test_plan_cache_ignores_sampler_seed(self, runner, tmp_path):
        data = ["--set", "data.train_problems=20", "--set", "data.test_problems=4",
                "--set", 'data.test_families=["chain"]']
        assert runner.invoke(cli, data + ["gen-data"]).exit_code == EXIT_OK
        grid = ["--set", "grid.budgets=[25,100]", "--set", 'grid.formats=["hybrid","outline"]',
                "--set", 'grid.ablations=["none","shuffled","random_tokens","perturbed_numbers"]']
        for seed, workers in ((1, 1), (99, 4)):
            result = runner.invoke(cli, data + grid + [
                "--set", f"sampler.seed={seed}", "--set", f"grid.seeds=[{seed}]",
                "--set", f"workers={workers}", "--set", f"plan_cache=plans-{seed}.jsonl", "plan"])
            assert result.exit_code == EXIT_OK, result.output
        first = (tmp_path / "plans-1.jsonl").read_bytes()
        assert first
        assert first == (tmp_path / "plans-99.jsonl").read_bytes()

    def test_report_over_results(self, runner, tmp_path):
        out = tmp_path / "runs"
        for seed in (42, 123):
            bare = Condition(gen_len=64, steps=64, seed=seed)
            planned = Condition(gen_len=64, steps=64, seed=seed, planner_id="oracle-frontier",
                                format="hybrid", budget=25)
            write_condition(out, bare, [True, False, False, False])
            write_condition(out, planned, [True, True, False, True])

        result = runner.invoke(cli, ["--set", f"output_dir={out}", "report"])
        assert result.exit_code == EXIT_OK, result.output

        rows = read_csv(out / "report" / "budget_curve.csv")
        assert [int(r["budget"]) for r in rows] == list(BUDGET_ROWS)
        by_budget = {int(r["budget"]): r for r in rows}
        assert float(by_budget[0]["accuracy"]) == pytest.approx(0.25)
        assert float(by_budget[25]["lift"]) == pytest.approx(50.0)
        assert by_budget[50]["accuracy"] == "n/a"

        report = (out / "report" / "report.md").read_text()
        assert "## Plan budget" in report
        assert "## Across seeds" in report
        assert (out / "report" / "budget_curve.svg").exists()
        assert (out / "report" / "multiseed.csv").exists()

    def test_report_is_reproducible(self, runner, tmp_path):
        out = tmp_path / "runs"
        write_condition(out, Condition(gen_len=64, steps=64, seed=42), [True, False])
        args = ["--set", f"output_dir={out}", "report"]
        assert runner.invoke(cli, args).exit_code == EXIT_OK
        first = (out / "report" / "budget_curve.svg").read_bytes()
        assert runner.invoke(cli, args).exit_code == EXIT_OK
        assert (out / "report" / "budget_curve.svg").read_bytes() == first


@pytest.mark.slow
class TestPipeline:
    """End-to-end run of the command pipeline on a tiny configuration."""

    def test_gen_train_plan_run_stats_report(self, runner, tmp_path):
        base = ["--config", str(SMALL_CONFIG),
                "--set", "data.train_problems=16", "--set", "data.test_problems=2",
                "--set", "training.epochs=1", "--set", "training.eval_examples=2",
                "--set", "grid.budgets=[25]", "--set", 'grid.ablations=["none"]',
                "--set", "grid.seeds=[42]", "--set", "grid.controls=[]",
                "--set", "grid.steps=[8]", "--set", "workers=1"]

        for args in (["gen-data"], ["train"], ["plan", "--limit", "2"],
                     ["run", "--limit", "2", "--save-traces"], ["stats", "--resamples", "200"], ["report"]):
            result = runner.invoke(cli, base + args)
            assert result.exit_code == EXIT_OK, (args, result.output)

        out = tmp_path / "runs" / "small"
        assert (out / "model.npz").exists()
        assert (out / "loss_curve.csv").exists()
        assert (out / "stats" / "stats.json").exists()
        assert (out / "report" / "report.md").exists()
        metas = sorted(p.name for p in (out / "results").glob("*.meta.json"))
        assert metas == ["bare-g32-t8-low_confidence-s42.meta.json",
                         "oracle-frontier-hybrid-b25-none-g32-t8-low_confidence-s42.meta.json"]
