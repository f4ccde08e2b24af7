from __future__ import annotations

import json
import logging
from pathlib import Path

import pandas as pd
import pytest

from app import cli
from app.schemas import SynthConfig
from app.services import features, synthgen

SAMPLES = Path(__file__).resolve().parents[1] / "data" / "samples"
SMALL_SYNTH = ["--games", "2", "--teams", "2", "--players-per-team", "5", "--plays-per-game", "6", "--seed", "3"]


@pytest.fixture(autouse=True)
def _reset_logging():
    yield
    root = logging.getLogger("threept")
    for h in list(root.handlers):
        root.removeHandler(h)
    root.propagate = True


def _error(capsys) -> dict:
    lines = [ln for ln in capsys.readouterr().err.splitlines() if ln.startswith("{")]
    return json.loads(lines[-1])


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    assert cli.main(["synth", "--out", str(root), *SMALL_SYNTH]) == 0
    return root


def _features(data: Path, out: Path) -> int:
    return cli.main(
        ["features", "--data", str(data), "--out", str(out), "--sides-from-manifest", str(data / "manifest.json"), "--log-level", "WARNING"]
    )


def test_synth_features_verify(synth_dir, tmp_path):
    assert (synth_dir / "manifest.json").exists()
    assert _features(synth_dir, tmp_path) == 0
    table = features.read_feature_table(tmp_path / "features.csv")
    assert len(table) == 12
    summary = json.loads((tmp_path / "ingest_summary.json").read_text(encoding="utf-8"))
    assert summary["plays_emitted"] == 12 and summary["plays_dropped"] == 0
    assert (tmp_path / "games_index.csv").exists()
    assert cli.main(["verify", "--data", str(synth_dir), "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "verify_report.json").read_text(encoding="utf-8"))
    assert report["passed"] is True


def test_features_rerun_is_byte_identical(synth_dir, tmp_path):
    assert _features(synth_dir, tmp_path / "a") == 0
    assert _features(synth_dir, tmp_path / "b") == 0
    assert (tmp_path / "a" / "features.csv").read_bytes() == (tmp_path / "b" / "features.csv").read_bytes()


def test_verify_fails_with_exit_one(synth_dir, tmp_path):
    assert _features(synth_dir, tmp_path) == 0
    config = tmp_path / "strict.toml"
    config.write_text("[verify]\ntolerances = { ndd_median = 0.0 }\n", encoding="utf-8")
    assert cli.main(["verify", "--data", str(synth_dir), "--out", str(tmp_path), "--config", str(config)]) == 1


def test_importance_on_planted_table(tmp_path):
    assert cli.main(["synth", "--out", str(tmp_path), "--planted-rows", "200", "--seed", "5"]) == 0
    config = tmp_path / "small.toml"
    config.write_text("[forest]\nn_trees = 20\n\n[boruta]\nmax_runs = 10\nn_repeats = 5\n", encoding="utf-8")
    argv = ["importance", "--table", str(tmp_path / "planted.csv"), "--out", str(tmp_path), "--config", str(config), "--deterministic"]
    assert cli.main(argv) == 0
    decisions = pd.read_csv(tmp_path / "boruta_decisions.csv")
    assert "ndd_median" in set(decisions["feature"])
    summary = json.loads((tmp_path / "boruta_summary.json").read_text(encoding="utf-8"))
    assert 1 <= summary["runs"] <= 10
    svg = (tmp_path / "boruta_importance.svg").read_text(encoding="utf-8")
    assert "shadow_max" in svg and "<!--" not in svg


def test_playermodel_outputs(tmp_path):
    plan = synthgen.plan_season(SynthConfig(n_games=12, n_teams=4, n_players_per_team=6, plays_per_game=30, seed=5))
    table = synthgen.manifest_feature_table(plan)
    features.write_feature_table(table, tmp_path / "features.csv")
    pd.DataFrame(plan.games_index(), columns=["player_id", "game_id"]).to_csv(tmp_path / "games_index.csv", index=False)
    synthgen.bios_frame(plan).to_csv(tmp_path / "bios.csv", index=False)
    config = tmp_path / "pm.toml"
    config.write_text("[gbm]\nn_iters = 20\nlearning_rate = 0.2\n", encoding="utf-8")
    argv = ["playermodel", "--out", str(tmp_path), "--bios", str(tmp_path / "bios.csv"), "--min-attempts", "5", "--config", str(config)]
    assert cli.main(argv) == 0
    scores = pd.read_csv(tmp_path / "player_scores.csv")
    assert scores["propensity"].iloc[0] == scores["propensity"].max()
    assert scores["name"].str.startswith("Player ").all()
    metrics = pd.read_csv(tmp_path / "player_metrics.csv")
    assert list(metrics.columns) == ["player_id", "rmse", "r2"]
    for name in ("r2_hist.svg", "rmse_hist.svg", "propensity.svg", "top_positive_deviation.csv", "gbm_importance.csv"):
        assert (tmp_path / name).exists()


def test_sample_has_no_usable_play(tmp_path, capsys):
    argv = [
        "features",
        "--tracking", str(SAMPLES / "sample_tracking.json"),
        "--pbp", str(SAMPLES / "sample_playbyplay.csv"),
        "--bios", str(SAMPLES / "sample_bios.csv"),
        "--out", str(tmp_path),
    ]
    assert cli.main(argv) == 2
    err = _error(capsys)
    assert err["error"] == "feature_error"
    assert "no three-point events" in err["message"]


def test_ingest_sample_summary(tmp_path):
    argv = ["ingest", "--tracking", str(SAMPLES / "sample_tracking.json"), "--pbp", str(SAMPLES / "sample_playbyplay.csv"), "--out", str(tmp_path)]
    assert cli.main(argv) == 0
    summary = json.loads((tmp_path / "ingest_summary.json").read_text(encoding="utf-8"))
    assert summary["games"] == 1 and summary["moments"] == 1
    assert summary["three_point_events"] == 1 and summary["plays_emitted"] == 0


def test_bad_toml_is_a_config_error(tmp_path, capsys):
    config = tmp_path / "bad.toml"
    config.write_text("[[[", encoding="utf-8")
    assert cli.main(["synth", "--out", str(tmp_path), "--config", str(config)]) == 2
    assert _error(capsys)["error"] == "config_error"


def test_unknown_section_and_bad_value(tmp_path, capsys):
    config = tmp_path / "c.toml"
    config.write_text("[oops]\nx = 1\n", encoding="utf-8")
    assert cli.main(["synth", "--out", str(tmp_path), "--config", str(config)]) == 2
    assert "unknown config section" in _error(capsys)["message"]
    config.write_text("[synth]\njitter_ft = 3.0\n", encoding="utf-8")
    assert cli.main(["synth", "--out", str(tmp_path), "--config", str(config)]) == 2
    assert _error(capsys)["error"] == "config_error"


def test_cli_flags_override_toml(tmp_path):
    config = tmp_path / "c.toml"
    config.write_text("[synth]\nn_games = 9\n\n[forest]\nn_trees = 7\n\n[gbm]\nn_iters = 4\n", encoding="utf-8")
    args = cli.build_parser().parse_args(["synth", "--config", str(config), "--games", "3", "--seed", "11", "--threads", "2"])
    cfg = cli.build_run_config(args)
    assert cfg.synth.n_games == 3
    assert cfg.synth.seed == 11 and cfg.synth.n_jobs == 2
    assert cfg.boruta.forest.n_trees == 7 and cfg.boruta.forest.n_jobs == 2
    assert cfg.player_model.gbm.n_iters == 4 and cfg.player_model.gbm.seed == 11


def test_seed_must_fit_in_64_bits():
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["synth", "--seed", str(2**64)])


def test_text_feature_column_exits_two(tmp_path, capsys):
    table = pd.DataFrame({"ndd_median": [1.0, 2.0, 3.0, 4.0], "team": ["a", "b", "a", "b"], "made": [0, 1, 0, 1]})
    table.to_csv(tmp_path / "t.csv", index=False)
    argv = ["importance", "--table", str(tmp_path / "t.csv"), "--out", str(tmp_path), "--trees", "5"]
    assert cli.main(argv) == 2
    err = _error(capsys)
    assert err["error"] == "feature_error"
    assert "team" in err["message"]


@pytest.mark.parametrize("exc", [ValueError("bad value"), KeyError("shooter_id"), OSError("disk full")])
def test_unexpected_errors_keep_the_exit_contract(tmp_path, capsys, monkeypatch, exc):
    def boom(args, cfg):
        raise exc

    monkeypatch.setitem(cli.COMMANDS, "ingest", boom)
    assert cli.main(["ingest", "--out", str(tmp_path)]) == 2
    err = _error(capsys)
    assert err["error"] == "input_error"
    assert type(exc).__name__ in err["message"]


@pytest.mark.slow
def test_pipeline_outputs_match_across_thread_counts(tmp_path):
    data = tmp_path / "data"
    season = ["--games", "12", "--teams", "4", "--players-per-team", "6", "--plays-per-game", "30", "--seed", "5"]
    assert cli.main(["synth", "--out", str(data), *season]) == 0
    config = tmp_path / "small.toml"
    config.write_text("[forest]\nn_trees = 20\n\n[boruta]\nmax_runs = 10\nn_repeats = 5\n\n[gbm]\nn_iters = 30\n", encoding="utf-8")
    outs = {}
    for threads in ("1", "8"):
        out = tmp_path / f"t{threads}"
        common = ["--out", str(out), "--seed", "5", "--threads", threads, "--config", str(config), "--deterministic"]
        assert cli.main(["features", "--data", str(data), "--sides-from-manifest", str(data / "manifest.json"), *common]) == 0
        assert cli.main(["importance", *common]) == 0
        assert cli.main(["playermodel", "--data", str(data), "--min-attempts", "5", *common]) == 0
        outs[threads] = out
    names = [
        "features.csv",
        "boruta_decisions.csv",
        "boruta_distribution.csv",
        "boruta_importance.svg",
        "player_scores.csv",
        "player_metrics.csv",
        "gbm_importance.csv",
    ]
    for name in names:
        assert (outs["1"] / name).read_bytes() == (outs["8"] / name).read_bytes(), name
