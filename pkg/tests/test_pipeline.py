import csv
import json
import shutil

import pytest

from polarpipe.cli import main
from polarpipe.pipeline import (
    STAGES, ConfigError, Pipeline, RunConfig, StageError, derive_seed, stages_for,
)

FAST_MCMC = {
    "h1": {"chains": 4, "iterations": 400, "warmup": 200},
    "h2": {"chains": 2, "iterations": 200, "warmup": 100},
    "h3": {"chains": 2, "iterations": 200, "warmup": 100},
}


def make_config(fixture_dir, tmp_path, name="config.json", **changes):
    data = json.loads((fixture_dir / "config.json").read_text())
    data["inputs"] = {k: str(fixture_dir / v) for k, v in data["inputs"].items()}
    data["mcmc"] = FAST_MCMC
    data["network"] = {"iterations": 80}
    data["output_dir"] = str(tmp_path / "out")
    for key, value in changes.items():
        if value is None:
            data.pop(key, None)
        else:
            data[key] = value
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


@pytest.fixture(scope="module")
def full_run(fixture_dir, tmp_path_factory):
    tmp = tmp_path_factory.mktemp("run")
    cfg = RunConfig.from_file(make_config(fixture_dir, tmp))
    manifest = Pipeline(cfg).run()
    return cfg, manifest


def test_full_run_completes(full_run):
    cfg, manifest = full_run
    assert [s.name for s in manifest.stages] == list(STAGES)
    assert all(s.status == "completed" for s in manifest.stages)
    report = cfg.output_dir / "report"
    for name in ("fig1_tweets_by_date.csv", "table1.json", "fig2_partisan_counts.csv", "table2.json",
                 "table3.json", "fig4_ratio_draws.csv", "table4.json", "fig5_party_probability_draws.csv",
                 "network_homogeneity.json", "index.json"):
        assert (report / name).exists(), name
    written = json.loads((cfg.output_dir / "manifest.json").read_text())
    assert set(written["input_hashes"]) == {"politicians", "tweets", "rollcalls", "ches", "gold"}
    assert "table2" in written["schema_versions"]


def test_report_contents(full_run):
    cfg, _ = full_run
    report = cfg.output_dir / "report"
    table2 = json.loads((report / "table2.json").read_text())
    assert set(table2["groupings"]) == {"party", "bloc"}
    with open(report / "fig2_partisan_counts.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["grouping"] for r in rows} == {"party", "bloc"}
    table1 = json.loads((report / "table1.json").read_text())
    assert [r["model"] for r in table1["rows"]] == ["lexicon"]
    assert table1["rows"][0]["f1"] > 0.6
    table4 = json.loads((report / "table4.json").read_text())
    assert set(table4["models"]) == {"party_CHES", "party_RollCall", "bloc_CHES", "bloc_RollCall"}
    assert set(table4["models"]["party_CHES"]["party_probability"]) == {"V", "S", "MP", "C", "L", "KD", "M", "SD"}
    table3 = json.loads((report / "table3.json").read_text())
    assert set(table3["models"]) == {"party_likes", "party_retweets", "bloc_likes", "bloc_retweets"}


def test_rerun_is_cached(full_run):
    cfg, first = full_run
    again = Pipeline(cfg).run()
    assert all(s.status == "cached" for s in again.stages)
    assert again.output_hashes() == first.output_hashes()


def test_stage_isolation(full_run):
    cfg, first = full_run
    (cfg.output_dir / ".cache" / "h2.json").unlink()
    again = Pipeline(cfg).run()
    status = {s.name: s.status for s in again.stages}
    assert status["h2"] == "completed" and status["h1"] == "cached"
    assert again.output_hashes() == first.output_hashes()


def test_ches_only_without_rollcalls(fixture_dir, tmp_path):
    path = make_config(fixture_dir, tmp_path, ideology_sources=["CHES"], right_anchor=None)
    data = json.loads(path.read_text())
    data["inputs"]["rollcalls"] = str(tmp_path / "nope.csv")
    path.write_text(json.dumps(data))
    cfg = RunConfig.from_file(path, grouping="party")
    Pipeline(cfg).run("h3")
    with open(cfg.output_dir / "ideology" / "ideology.csv", newline="") as fh:
        sources = {r["source"] for r in csv.DictReader(fh)}
    assert sources == {"CHES"}
    assert sorted(p.name for p in (cfg.output_dir / "h3").glob("*_summary.json")) == ["party_CHES_summary.json"]


def test_partial_report(fixture_dir, tmp_path):
    cfg = RunConfig.from_file(make_config(fixture_dir, tmp_path))
    p = Pipeline(cfg)
    p.run("h1")
    p.run("report")
    report = cfg.output_dir / "report"
    assert (report / "table2.json").exists()
    assert not (report / "table3.json").exists() and not (report / "table4.json").exists()
    index = json.loads((report / "index.json").read_text())
    assert index["stages"] == ["classify", "h1", "ingest", "label"]


def test_report_without_outputs(fixture_dir, tmp_path):
    cfg = RunConfig.from_file(make_config(fixture_dir, tmp_path))
    with pytest.raises(StageError, match="report"):
        Pipeline(cfg).run("report")
    manifest = json.loads((cfg.output_dir / "manifest.json").read_text())
    assert manifest["stages"][-1]["status"] == "failed"


def test_stage_failure_writes_manifest(fixture_dir, tmp_path):
    broken = tmp_path / "tweets.jsonl"
    shutil.copyfile(fixture_dir / "tweets.jsonl", broken)
    with open(broken, "a") as fh:
        fh.write("{broken\n")
    path = make_config(fixture_dir, tmp_path)
    data = json.loads(path.read_text())
    data["inputs"]["tweets"] = str(broken)
    path.write_text(json.dumps(data))
    with pytest.raises(StageError) as info:
        Pipeline(RunConfig.from_file(path)).run("label")
    assert info.value.stage == "ingest"
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert [s["status"] for s in manifest["stages"]] == ["failed"]
    assert "malformed JSON" in manifest["stages"][0]["error"]


@pytest.mark.parametrize("changes, message", [
    ({"seed": None}, "seed is required"),
    ({"seed": -1}, "non-negative"),
    ({"groupings": ["family"]}, "groupings"),
    ({"ideology_sources": ["GPT_Party"]}, "rating_model"),
    ({"right_anchor": None}, "right_anchor"),
    ({"mcmc": {"h2": {"iterations": 10, "warmup": 10}}}, "mcmc.h2"),
])
def test_config_errors(fixture_dir, tmp_path, changes, message):
    with pytest.raises(ConfigError, match=message):
        RunConfig.from_file(make_config(fixture_dir, tmp_path, **changes))


def test_missing_input_path(fixture_dir, tmp_path):
    path = make_config(fixture_dir, tmp_path)
    data = json.loads(path.read_text())
    data["inputs"]["ches"] = str(tmp_path / "missing.csv")
    path.write_text(json.dumps(data))
    with pytest.raises(ConfigError, match="inputs.ches"):
        RunConfig.from_file(path)


def test_stage_graph():
    assert stages_for("h3") == ["ingest", "classify", "ideology", "label", "h3"]
    assert stages_for("report") == ["report"]
    with pytest.raises(ValueError):
        stages_for("plot")


def test_derive_seed_stable():
    assert derive_seed(1, "h2", "party") == derive_seed(1, "h2", "party")
    assert len({derive_seed(1, "h2", "party"), derive_seed(1, "h2", "bloc"), derive_seed(2, "h2", "party")}) == 3


def test_cli_exit_codes(fixture_dir, tmp_path, capsys):
    assert main(["ingest", "--config", str(tmp_path / "absent.json")]) == 2
    assert "config error" in capsys.readouterr().err
    path = make_config(fixture_dir, tmp_path)
    assert main(["report", "--config", str(path)]) == 3
    assert main(["ingest", "--config", str(path), "--out", str(tmp_path / "other")]) == 0
    assert (tmp_path / "other" / "ingest" / "summary.json").exists()
    with pytest.raises(SystemExit):
        main(["ingest", "--config", str(path), "--seed", "-3"])


def test_cli_grouping_override_and_evaluate(fixture_dir, tmp_path, capsys):
    path = make_config(fixture_dir, tmp_path)
    assert main(["label", "--config", str(path), "--grouping", "bloc"]) == 0
    assert sorted(p.name for p in (tmp_path / "out" / "label").glob("pairs_*.csv")) == ["pairs_bloc.csv"]
    capsys.readouterr()
    assert main(["evaluate", "--config", str(path)]) == 0
    out = capsys.readouterr().out
    assert "BalAcc" in out and "lexicon" in out


def test_cli_fixture(tmp_path, capsys):
    assert main(["fixture", str(tmp_path / "fx"), "--tweets", "50"]) == 0
    assert (tmp_path / "fx" / "config.json").exists()
    RunConfig.from_file(tmp_path / "fx" / "config.json")
