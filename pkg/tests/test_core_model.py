from __future__ import annotations

from dataclasses import replace

import pytest

from app.errors import JoinError
from app.services.core_model import (
    DEFAULT_COURT,
    CourtSpec,
    EventType,
    GameMeta,
    PlayEvent,
    PlayerBio,
    PlayerPosition,
    Position,
    attacking_basket,
    clamp_moment,
    infer_attacking_sides,
    validate_moment,
)
from tests import factories as f

GAME = GameMeta(game_id="g1", team_ids=(10, 20), first_half_right={10: True, 20: False})


def test_valid_moment_has_no_violations():
    assert validate_moment(f.moment(0, f.held_ball(0))) == []


def test_moment_with_nine_players():
    m = f.moment(0, f.held_ball(0))
    m = replace(m, players=m.players[:9])
    assert validate_moment(m) == ["player count 9 != 10"]


def test_moment_out_of_bounds_before_clamping():
    m = f.moment(0, f.held_ball(0))
    moved = (replace(m.players[0], x=100.0), *m.players[1:])
    assert validate_moment(replace(m, players=moved)) == ["x out of bounds"]


def test_team_split_violation():
    m = f.moment(0, f.held_ball(0))
    swapped = (replace(m.players[0], team_id=20), *m.players[1:])
    assert validate_moment(replace(m, players=swapped)) == ["team split 4/6 != 5/5"]


def test_validate_moment_is_pure():
    m = f.moment(0, (47.0, 25.0, -1.0))
    assert validate_moment(m) == validate_moment(m) == ["z below floor"]


def test_clamp_snaps_small_excursions_and_rejects_large_ones():
    m = f.moment(0, (94.8, 25.0, 4.0))
    clamped = clamp_moment(m)
    assert clamped is not None and clamped.ball == (94.0, 25.0, 4.0)
    assert validate_moment(clamped) == []
    assert clamp_moment(f.moment(0, (97.0, 25.0, 4.0))) is None
    untouched = f.moment(0, f.held_ball(0))
    assert clamp_moment(untouched) is untouched


def test_attacking_basket_swaps_once_at_halftime():
    assert attacking_basket(10, 1, GAME) == (88.75, 25.0)
    assert attacking_basket(10, 2, GAME) == (88.75, 25.0)
    assert attacking_basket(10, 3, GAME) == (5.25, 25.0)
    assert attacking_basket(10, 5, GAME) == (5.25, 25.0)
    assert attacking_basket(20, 1, GAME) == (5.25, 25.0)


def test_attacking_basket_unknown_team():
    with pytest.raises(JoinError):
        attacking_basket(99, 1, GAME)


def test_infer_sides_uses_first_period_majority():
    shots = [(10, 1, 80.0), (10, 1, 85.0), (10, 1, 20.0), (20, 1, 10.0)]
    meta = infer_attacking_sides("g1", (10, 20), shots)
    assert meta.first_half_right == {10: True, 20: False}


def test_infer_sides_falls_back_to_second_half_mirrored():
    # team 10 only shoots in period 3 on the left, i.e. it attacked right in the first half
    meta = infer_attacking_sides("g1", (10, 20), [(10, 3, 10.0)])
    assert meta.first_half_right == {10: True, 20: False}


def test_infer_sides_without_shots_puts_home_right():
    meta = infer_attacking_sides("g1", (10, 20), [])
    assert meta.first_half_right == {10: True, 20: False}
    assert meta.sides_source == "inferred"


def test_infer_sides_same_side_votes_keep_the_stronger_team():
    shots = [(10, 1, 20.0), (20, 1, 80.0), (20, 1, 85.0), (20, 1, 87.0), (10, 1, 70.0), (10, 1, 75.0)]
    # team 10 leans right by 1, team 20 right by 3
    meta = infer_attacking_sides("g1", (10, 20), shots)
    assert meta.first_half_right == {10: False, 20: True}
    tie = infer_attacking_sides("g1", (10, 20), [(10, 1, 80.0), (20, 1, 80.0)])
    assert tie.first_half_right == {10: True, 20: False}


@pytest.mark.parametrize("x10", [10.0, 80.0, None])
@pytest.mark.parametrize("x20", [10.0, 80.0, None])
@pytest.mark.parametrize("period", [1, 3])
def test_infer_sides_always_opposite(x10, x20, period):
    shots = [(t, period, x) for t, x in ((10, x10), (20, x20)) if x is not None]
    meta = infer_attacking_sides("g1", (10, 20), shots)
    assert meta.first_half_right[10] != meta.first_half_right[20]


def test_event_type_codes():
    assert EventType.from_code(1) is EventType.MADE_SHOT
    assert EventType.from_code(2) is EventType.MISSED_SHOT
    assert EventType.from_code(6) is EventType.OTHER


def test_three_flag_needs_a_shot_with_shooter():
    with pytest.raises(ValueError):
        PlayEvent("g1", 1, EventType.OTHER, True, 101, 10, 1, 700.0, "3PT foul")
    with pytest.raises(ValueError):
        PlayEvent("g1", 1, EventType.MADE_SHOT, True, None, 10, 1, 700.0, "3PT Jump Shot")


@pytest.mark.parametrize("raw, expected", [("G", Position.G), ("G-F", Position.G), ("f-c", Position.F), ("Center", Position.C)])
def test_position_listing_collapses_to_first_letter(raw, expected):
    assert Position.from_listing(raw) is expected


def test_bio_bounds():
    with pytest.raises(ValueError):
        PlayerBio(1, "Tall", 300.0, 90.0, 1.0, Position.C)
    with pytest.raises(ValueError):
        PlayerBio(1, "Rookie", 200.0, 90.0, -1.0, Position.C)


def test_court_must_be_symmetric():
    with pytest.raises(ValueError):
        CourtSpec(basket_right=(88.0, 25.0))
    assert DEFAULT_COURT.rim_height == 10.0


def test_three_point_play_invariants():
    frames = f.window(10)
    with pytest.raises(ValueError):
        f.play(frames, release_index=10)
    with pytest.raises(ValueError):
        f.play(tuple(reversed(frames)))
    missing = frames[:-1] + (
        replace(frames[-1], players=tuple(p if p.player_id != f.SHOOTER else PlayerPosition(10, 106, p.x, p.y) for p in frames[-1].players)),
    )
    with pytest.raises(ValueError):
        f.play(missing)
    long = f.window(130)
    with pytest.raises(ValueError):
        f.play(long)
    ok = f.play(f.window(126))
    assert ok.duration_s == pytest.approx(5.0)
