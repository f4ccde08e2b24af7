from __future__ import annotations

import pytest
from pydantic import ValidationError

from app.schemas import (
    MAKE_MODEL_FEATURES,
    BorutaConfig,
    MakeModel,
    RunConfig,
    SegmentConfig,
    SynthConfig,
)


def test_defaults():
    cfg = RunConfig(command="features")
    assert cfg.segment == SegmentConfig()
    assert cfg.segment.window_s == 5.0 and cfg.segment.release_radius_ft == 2.5
    assert cfg.boruta.forest.n_trees == 200
    assert cfg.boruta.alpha == 0.01
    assert cfg.player_model.test_fraction == 0.2


def test_configs_are_frozen_and_closed():
    cfg = SegmentConfig()
    with pytest.raises(ValidationError):
        cfg.window_s = 3.0
    with pytest.raises(ValidationError):
        SegmentConfig(window=3.0)


def test_make_model_fills_missing_weights():
    model = MakeModel(weights={"ndd_median": 0.5})
    assert tuple(model.weights) == MAKE_MODEL_FEATURES
    assert model.weights["ball_path_len"] == 0.0
    with pytest.raises(ValidationError, match="unknown make-model features"):
        MakeModel(weights={"height": 1.0})


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n_players_per_team": 4},
        {"jitter_ft": 0.6},
        {"usage_suppression": {101: 0.0}},
        {"usage_boost": {101: 0.5}},
        {"usage_overrides": {101: 1.2}},
        {"seed": 2**64},
    ],
)
def test_synth_config_bounds(kwargs):
    with pytest.raises(ValidationError):
        SynthConfig(**kwargs)


def test_boruta_needs_ten_runs():
    with pytest.raises(ValidationError):
        BorutaConfig(max_runs=9)
