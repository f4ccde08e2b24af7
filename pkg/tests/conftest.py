from __future__ import annotations

import logging

import pytest

from app.schemas import SynthConfig
from app.services import synthgen


@pytest.fixture(autouse=True)
def _quiet_logs(caplog):
    caplog.set_level(logging.WARNING, logger="threept")


@pytest.fixture(scope="module")
def small_season(tmp_path_factory):
    """Rendered 4-game season on disk; shared read-only by a test module."""
    cfg = SynthConfig(n_games=4, n_teams=4, n_players_per_team=6, plays_per_game=12, seed=7)
    root = tmp_path_factory.mktemp("season")
    return synthgen.generate_season(cfg, root)
