"""Scripted moments and plays for unit tests.

Offense is team 10 (players 101-105, shooter 101), defense team 20 (201-205), attacking
the right basket. Frames are 40 ms apart.
"""
from __future__ import annotations

import json
from collections.abc import Callable, Sequence
from pathlib import Path

from app.services.core_model import (
    DEFAULT_COURT,
    Moment,
    PlayerBio,
    PlayerPosition,
    Point,
    Position,
    ThreePointPlay,
)

OFFENSE = 10
DEFENSE = 20
OFFENSE_IDS = (101, 102, 103, 104, 105)
DEFENSE_IDS = (201, 202, 203, 204, 205)
SHOOTER = 101
BASKET = DEFAULT_COURT.basket_right
START_MS = 1_446_000_000_000
FRAME_MS = 40

# shooter 23.75 ft straight out from the right basket
SHOOTER_SPOT: Point = (65.0, 25.0)
TEAMMATE_SPOTS: tuple[Point, ...] = ((70.0, 10.0), (70.0, 40.0), (80.0, 5.0), (80.0, 45.0))
# nearest defender 6 ft from the shooter, the rest far away
DEFENDER_SPOTS: tuple[Point, ...] = ((71.0, 25.0), (75.0, 12.0), (75.0, 38.0), (84.0, 8.0), (84.0, 42.0))

PositionsFn = Callable[[int], Sequence[Point]]
BallFn = Callable[[int], tuple[float, float, float]]


def moment(
    k: int,
    ball: tuple[float, float, float],
    offense: Sequence[Point] = (SHOOTER_SPOT, *TEAMMATE_SPOTS),
    defense: Sequence[Point] = DEFENDER_SPOTS,
    *,
    period: int = 1,
    game_clock_s: float = 700.0,
    shot_clock_s: float | None = 12.0,
    offense_ids: Sequence[int] = OFFENSE_IDS,
) -> Moment:
    players = tuple(PlayerPosition(OFFENSE, pid, x, y) for pid, (x, y) in zip(offense_ids, offense)) + tuple(
        PlayerPosition(DEFENSE, pid, x, y) for pid, (x, y) in zip(DEFENSE_IDS, defense)
    )
    return Moment(
        period=period,
        wall_clock_ms=START_MS + k * FRAME_MS,
        game_clock_s=round(game_clock_s - k * FRAME_MS / 1000.0, 3),
        shot_clock_s=None if shot_clock_s is None else round(shot_clock_s - k * FRAME_MS / 1000.0, 3),
        ball=ball,
        players=players,
    )


def held_ball(k: int) -> tuple[float, float, float]:
    return (SHOOTER_SPOT[0], SHOOTER_SPOT[1], 5.0)


def window(
    n_frames: int = 51,
    ball: BallFn = held_ball,
    offense: PositionsFn | None = None,
    defense: PositionsFn | None = None,
    **kwargs,
) -> tuple[Moment, ...]:
    return tuple(
        moment(
            k,
            ball(k),
            offense(k) if offense else (SHOOTER_SPOT, *TEAMMATE_SPOTS),
            defense(k) if defense else DEFENDER_SPOTS,
            **kwargs,
        )
        for k in range(n_frames)
    )


def play(
    frames: Sequence[Moment] | None = None,
    *,
    made: bool = True,
    game_id: str = "0021500001",
    event_id: int = 1,
    release_index: int | None = None,
) -> ThreePointPlay:
    frames = tuple(frames) if frames is not None else window()
    return ThreePointPlay(
        game_id=game_id,
        event_id=event_id,
        shooter_id=SHOOTER,
        shooter_team_id=OFFENSE,
        made=made,
        release_index=len(frames) - 1 if release_index is None else release_index,
        window=frames,
        attacking_basket=BASKET,
    )


def bio(player_id: int, height: float = 200.0, weight: float = 100.0, exp: float = 5.0, pos: Position = Position.G) -> PlayerBio:
    return PlayerBio(
        player_id=player_id,
        name=f"Player {player_id}",
        height_cm=height,
        weight_kg=weight,
        experience_yr=exp,
        position=pos,
    )


def all_bios() -> dict[int, PlayerBio]:
    return {pid: bio(pid) for pid in (*OFFENSE_IDS, *DEFENSE_IDS)}


def tracking_doc(game_id: str, events: dict[int, Sequence[Moment]]) -> dict:
    out = []
    for event_id, moments in events.items():
        rows = []
        for m in moments:
            entries = [[-1, -1, *m.ball]]
            entries.extend([p.team_id, p.player_id, p.x, p.y, 0.0] for p in m.players)
            rows.append([m.period, m.wall_clock_ms, m.game_clock_s, m.shot_clock_s, None, entries])
        out.append({"eventId": event_id, "moments": rows})
    return {"gameid": game_id, "events": out}


def write_json(path: Path, doc: dict) -> Path:
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def shot_ball(release_k: int, rise_frames: int = 10) -> BallFn:
    """Ball held by the shooter until `release_k`, then climbing 1.5 ft per frame toward the basket."""

    def f(k: int) -> tuple[float, float, float]:
        if k <= release_k:
            return (SHOOTER_SPOT[0], SHOOTER_SPOT[1], 5.0 + 4.0 * k / max(release_k, 1))
        t = k - release_k
        x = SHOOTER_SPOT[0] + (BASKET[0] - SHOOTER_SPOT[0]) * min(t / rise_frames, 1.0)
        return (x, SHOOTER_SPOT[1], 9.0 + 1.5 * t)

    return f


PBP_HEADER = "GAME_ID,EVENTNUM,EVENTMSGTYPE,PERIOD,GAME_CLOCK_S,TEAM_ID,PLAYER1_ID,DESCRIPTION\n"


def pbp_row(game_id: str, event_id: int, code: int, desc: str, *, team: int = OFFENSE, player: int = SHOOTER, period: int = 1) -> str:
    return f"{game_id},{event_id},{code},{period},700.0,{team},{player},{desc}\n"
