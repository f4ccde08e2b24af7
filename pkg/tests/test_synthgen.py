from __future__ import annotations

import math

import numpy as np
import pandas as pd
import pytest

from app.errors import SynthError, VerificationError
from app.schemas import MakeModel, SynthConfig, VerifyTolerances
from app.services import features, ingest, synthgen


@pytest.fixture(scope="module")
def pipeline_table(small_season):
    manifest = synthgen.load_manifest(small_season.manifest)
    season = ingest.load_season(
        small_season.tracking_dir,
        small_season.playbyplay,
        small_season.bios,
        sides_override=synthgen.sides_from_manifest(manifest),
    )
    plays = [p for g in season.games for p in ingest.segment_three_point_plays(g, stats=season.stats)]
    table = features.assemble_dataset(plays, season.bios, stats=season.stats)
    return table, season, manifest


def test_files_and_counts(small_season):
    assert len(list(small_season.tracking_dir.glob("*.json"))) == 4
    pbp = pd.read_csv(small_season.playbyplay, dtype={"GAME_ID": str})
    assert int(pbp["EVENTMSGTYPE"].isin([1, 2]).sum()) == 48
    assert set(pbp.loc[pbp["EVENTMSGTYPE"] == 4, "EVENTNUM"] - 1) <= set(pbp["EVENTNUM"])
    manifest = synthgen.load_manifest(small_season.manifest)
    assert manifest["expected_plays"] == len(manifest["plays"]) == 48
    assert sum(p["attempts"] for p in manifest["players"]) == 48
    bios = pd.read_csv(small_season.bios)
    assert len(bios) == 4 * 6


def test_ids_follow_team_and_roster_slots():
    plan = synthgen.plan_season(SynthConfig(n_games=2, n_teams=3, n_players_per_team=5, plays_per_game=4, seed=1))
    assert sorted(plan.players) == [101, 102, 103, 104, 105, 201, 202, 203, 204, 205, 301, 302, 303, 304, 305]
    assert {p.team_id for p in plan.players.values()} == {10, 20, 30}
    for game in plan.games:
        assert [p.event_id for p in game.plays] == [1, 3, 5, 7]
        for team, ids in game.lineups.items():
            assert len(ids) == 5 and all(plan.players[i].team_id == team for i in ids)


def test_same_seed_same_bytes(tmp_path):
    cfg = SynthConfig(n_games=2, n_teams=2, n_players_per_team=5, plays_per_game=6, seed=3)
    a = synthgen.generate_season(cfg, tmp_path / "a")
    b = synthgen.generate_season(cfg.model_copy(update={"n_jobs": 2}), tmp_path / "b")
    for name in ("playbyplay.csv", "bios.csv"):
        assert (a.root / name).read_bytes() == (b.root / name).read_bytes()
    for path in sorted(a.tracking_dir.glob("*.json")):
        assert path.read_bytes() == (b.tracking_dir / path.name).read_bytes()
    ma, mb = synthgen.load_manifest(a.manifest), synthgen.load_manifest(b.manifest)
    assert ma["plays"] == mb["plays"] and ma["players"] == mb["players"]


def test_pipeline_recovers_the_manifest(pipeline_table):
    table, season, manifest = pipeline_table
    assert ingest.plays_dropped(season.stats) == 0
    assert len(table) == manifest["expected_plays"]
    report = synthgen.verify_manifest(table, manifest)
    assert report.reconciliation["passed"], report.reconciliation
    assert report.passed, report.features


def test_zero_tolerance_fails(pipeline_table):
    table, _, manifest = pipeline_table
    report = synthgen.verify_manifest(table, manifest, VerifyTolerances(tolerances={"ndd_median": 0.0}))
    assert not report.passed
    assert not report.features["ndd_median"]["passed"]
    assert report.reconciliation["passed"]


def test_manifest_from_another_seed_fails_reconciliation(pipeline_table):
    table, _, _ = pipeline_table
    other = synthgen.plan_season(SynthConfig(n_games=4, n_teams=4, n_players_per_team=6, plays_per_game=12, seed=8))
    report = synthgen.verify_manifest(table, synthgen.build_manifest(other))
    assert not report.passed
    assert not report.reconciliation["passed"]


def test_missing_plays_are_reported(pipeline_table):
    table, _, manifest = pipeline_table
    report = synthgen.verify_manifest(table.iloc[1:], manifest)
    assert report.reconciliation["missing_count"] == 1
    assert not report.passed


def test_unknown_play_is_an_error(pipeline_table):
    table, _, manifest = pipeline_table
    bad = table.copy()
    bad.loc[bad.index[0], "event_id"] = 9999
    with pytest.raises(VerificationError, match="not in manifest"):
        synthgen.verify_manifest(bad, manifest)


def test_flat_make_model_makes_half_the_shots():
    cfg = SynthConfig(
        n_games=10,
        n_teams=4,
        plays_per_game=40,
        make_model=MakeModel(intercept=0.0, weights={}),
        skill_sd=0.0,
        seed=21,
    )
    plan = synthgen.plan_season(cfg)
    plays = [p for _, p in plan.plays()]
    assert all(p.p_make == 0.5 for p in plays)
    rate = sum(p.made for p in plays) / len(plays)
    assert abs(rate - 0.5) <= 3 * math.sqrt(0.25 / len(plays))


def test_manifest_features_match_ground_truth_table():
    plan = synthgen.plan_season(SynthConfig(n_games=2, n_teams=2, n_players_per_team=5, plays_per_game=10, seed=4))
    manifest = synthgen.build_manifest(plan)
    table = synthgen.manifest_feature_table(plan)
    report = synthgen.verify_manifest(table, manifest, VerifyTolerances(tolerances={"ndd_median": 0.0, "shot_dist": 0.0}))
    assert report.passed


def test_unknown_player_overrides_rejected():
    with pytest.raises(SynthError, match="unknown players"):
        synthgen.plan_season(SynthConfig(n_teams=2, skill_overrides={999: 1.0}))
    with pytest.raises(SynthError, match="both suppressed and boosted"):
        synthgen.plan_season(SynthConfig(n_teams=2, usage_suppression={101: 0.5}, usage_boost={101: 2.0}))


def test_planted_table():
    table = synthgen.generate_planted_table(n_rows=300, seed=2, n_noise=3)
    assert list(table.columns) == ["ndd_median", "off_hull_area_mean", "noise_1", "noise_2", "noise_3", "made"]
    assert set(table["made"].unique()) <= {0, 1}
    # planted weight on ndd_median is negative
    close = table.loc[table["ndd_median"] < 4.0, "made"].mean()
    open_ = table.loc[table["ndd_median"] > 7.0, "made"].mean()
    assert open_ < close
    with pytest.raises(SynthError):
        synthgen.generate_planted_table(weights={"ball_path_len": 1.0})


def test_manifest_schema_check(tmp_path):
    path = tmp_path / "m.json"
    path.write_text('{"schema": "other", "schema_version": 1}', encoding="utf-8")
    with pytest.raises(VerificationError, match="unsupported manifest"):
        synthgen.load_manifest(path)
    with pytest.raises(VerificationError, match="cannot read manifest"):
        synthgen.load_manifest(tmp_path / "absent.json")


def test_allocate_attempts_is_proportional():
    assert synthgen.allocate_attempts(20, np.array([1.0, 1.0, 1.0, 1.0, 1.0])).tolist() == [4, 4, 4, 4, 4]
    assert synthgen.allocate_attempts(10, np.array([3.0, 1.0, 1.0])).tolist() == [6, 2, 2]
    # remainders 0.5 each; ties go to the lower index
    assert synthgen.allocate_attempts(3, np.array([1.0, 1.0])).tolist() == [2, 1]
    assert synthgen.allocate_attempts(0, np.array([1.0, 2.0])).tolist() == [0, 0]


def test_shot_counts_follow_attempt_weight():
    cfg = SynthConfig(n_games=6, n_teams=2, plays_per_game=20, usage_overrides={101: 1.0}, usage_boost={101: 2.0}, seed=9)
    plan = synthgen.plan_season(cfg)
    for game in plan.games:
        for team, ids in game.lineups.items():
            weights = np.asarray([plan.players[p].attempt_weight for p in ids])
            expected = synthgen.allocate_attempts(10, weights)
            taken = [sum(1 for p in game.plays if p.shooter_id == pid) for pid in ids]
            assert taken == expected.tolist()


def test_planted_players_start_every_game():
    cfg = SynthConfig(n_games=12, n_teams=3, skill_overrides={101: 0.8}, usage_suppression={203: 0.7}, seed=2)
    plan = synthgen.plan_season(cfg)
    for game in plan.games:
        for team, ids in game.lineups.items():
            assert (101 in ids) == (team == 10)
            assert (203 in ids) == (team == 20)


def test_rosters_cover_every_usage_stratum():
    plan = synthgen.plan_season(SynthConfig(n_games=1, n_teams=3, n_players_per_team=8, plays_per_game=2, seed=4))
    for team in (10, 20, 30):
        usage = sorted(p.usage for p in plan.players.values() if p.team_id == team)
        assert [math.floor(u * 8) for u in usage] == list(range(8))


def test_usage_override_is_kept_and_drives_drift():
    plan = synthgen.plan_season(SynthConfig(n_games=4, n_teams=2, usage_overrides={101: 0.0, 102: 1.0}, seed=6))
    assert plan.players[101].usage == 0.0 and plan.players[102].usage == 1.0
    drift = {pid: [p.r_move for _, p in plan.plays() if p.shooter_id == pid] for pid in (101, 102)}
    assert max(drift[101]) <= 4.5
    assert min(drift[102]) >= 9.5


def test_too_many_planted_players_on_a_team():
    with pytest.raises(SynthError, match="more than 5 planted"):
        synthgen.plan_season(SynthConfig(n_teams=2, skill_overrides={100 + k: 0.5 for k in range(1, 7)}))


def test_schedule_spreads_games_evenly():
    plan = synthgen.plan_season(SynthConfig(n_games=15, n_teams=6, plays_per_game=1, seed=0))
    games = [(g.home_team_id, g.away_team_id) for g in plan.games]
    # five rounds of three games: every team plays five times
    played = {t: sum(t in g for g in games) for t in (10, 20, 30, 40, 50, 60)}
    assert set(played.values()) == {5}
    assert len(set(map(frozenset, games))) == 15
