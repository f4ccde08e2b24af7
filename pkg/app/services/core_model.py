"""Domain types shared by every pipeline stage, plus court geometry and validation.

Coordinates are feet on the standard 94 x 50 court; x runs baseline to baseline,
y sideline to sideline. Only the ball carries a height (z).
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum

from app.errors import JoinError
from app.logging_utils import get_logger, kv

logger = get_logger("core_model")

Point = tuple[float, float]

PLAYERS_PER_MOMENT = 10
PLAYERS_PER_TEAM = 5


@dataclass(frozen=True, slots=True)
class CourtSpec:
    length: float = 94.0
    width: float = 50.0
    basket_left: Point = (5.25, 25.0)
    basket_right: Point = (88.75, 25.0)
    rim_height: float = 10.0
    arc_radius: float = 23.75
    corner_distance: float = 22.0
    corner_zone_depth: float = 14.0

    def __post_init__(self) -> None:
        scalars = (
            self.length,
            self.width,
            self.rim_height,
            self.arc_radius,
            self.corner_distance,
            self.corner_zone_depth,
            *self.basket_left,
            *self.basket_right,
        )
        if any(v <= 0 for v in scalars):
            raise ValueError("court dimensions must be strictly positive")
        mid = self.length / 2.0
        if not math.isclose(mid - self.basket_left[0], self.basket_right[0] - mid, abs_tol=1e-9):
            raise ValueError("baskets must be symmetric about the court midline")
        if not math.isclose(self.basket_left[1], self.basket_right[1], abs_tol=1e-9):
            raise ValueError("baskets must share the same y coordinate")


DEFAULT_COURT = CourtSpec()


@dataclass(frozen=True, slots=True)
class PlayerPosition:
    team_id: int
    player_id: int
    x: float
    y: float


@dataclass(frozen=True, slots=True)
class Moment:
    period: int
    wall_clock_ms: int
    game_clock_s: float
    shot_clock_s: float | None
    ball: tuple[float, float, float]
    players: tuple[PlayerPosition, ...]

    def position_of(self, player_id: int) -> Point | None:
        for p in self.players:
            if p.player_id == player_id:
                return (p.x, p.y)
        return None

    def team_positions(self, team_id: int) -> list[Point]:
        return [(p.x, p.y) for p in self.players if p.team_id == team_id]

    def opponents_of(self, team_id: int) -> list[PlayerPosition]:
        return [p for p in self.players if p.team_id != team_id]


class EventType(str, Enum):
    MADE_SHOT = "MadeShot"
    MISSED_SHOT = "MissedShot"
    OTHER = "Other"

    @classmethod
    def from_code(cls, code: int) -> "EventType":
        if code == 1:
            return cls.MADE_SHOT
        if code == 2:
            return cls.MISSED_SHOT
        return cls.OTHER

    @property
    def is_shot(self) -> bool:
        return self in (EventType.MADE_SHOT, EventType.MISSED_SHOT)


@dataclass(frozen=True, slots=True)
class PlayEvent:
    game_id: str
    event_id: int
    event_type: EventType
    is_three: bool
    shooter_id: int | None
    team_id: int | None
    period: int
    game_clock_s: float
    description: str

    def __post_init__(self) -> None:
        if self.is_three and (not self.event_type.is_shot or self.shooter_id is None):
            raise ValueError(
                f"event {self.game_id}/{self.event_id}: three-point flag requires a shot with a shooter"
            )


class Position(str, Enum):
    G = "G"
    F = "F"
    C = "C"

    @classmethod
    def from_listing(cls, raw: str) -> "Position":
        # "G-F", "F-C", "Guard" ... collapse to the first letter
        token = raw.strip().upper()[:1]
        try:
            return cls(token)
        except ValueError:
            raise ValueError(f"unknown position listing: {raw!r}") from None


HEIGHT_RANGE_CM = (150.0, 240.0)
WEIGHT_RANGE_KG = (50.0, 180.0)


@dataclass(frozen=True, slots=True)
class PlayerBio:
    player_id: int
    name: str
    height_cm: float
    weight_kg: float
    experience_yr: float
    position: Position

    def __post_init__(self) -> None:
        if not HEIGHT_RANGE_CM[0] <= self.height_cm <= HEIGHT_RANGE_CM[1]:
            raise ValueError(f"height_cm {self.height_cm} outside {HEIGHT_RANGE_CM}")
        if not WEIGHT_RANGE_KG[0] <= self.weight_kg <= WEIGHT_RANGE_KG[1]:
            raise ValueError(f"weight_kg {self.weight_kg} outside {WEIGHT_RANGE_KG}")
        if self.experience_yr < 0:
            raise ValueError(f"experience_yr {self.experience_yr} is negative")


# one frame at 25 Hz
FRAME_MS = 40
MAX_WINDOW_MS = 5000 + FRAME_MS


@dataclass(frozen=True, slots=True)
class ThreePointPlay:
    game_id: str
    event_id: int
    shooter_id: int
    shooter_team_id: int
    made: bool
    release_index: int
    window: tuple[Moment, ...]
    attacking_basket: Point

    def __post_init__(self) -> None:
        if not self.window:
            raise ValueError("play window is empty")
        if not 0 <= self.release_index < len(self.window):
            raise ValueError(f"release_index {self.release_index} outside window of {len(self.window)}")
        clocks = [m.wall_clock_ms for m in self.window]
        if any(b <= a for a, b in zip(clocks, clocks[1:])):
            raise ValueError("window wall clock is not strictly increasing")
        if clocks[-1] - clocks[0] > MAX_WINDOW_MS:
            raise ValueError(f"window spans {clocks[-1] - clocks[0]} ms")
        if any(m.position_of(self.shooter_id) is None for m in self.window):
            raise ValueError(f"shooter {self.shooter_id} missing from window")

    @property
    def release(self) -> Moment:
        return self.window[self.release_index]

    @property
    def duration_s(self) -> float:
        return (self.window[-1].wall_clock_ms - self.window[0].wall_clock_ms) / 1000.0


@dataclass(frozen=True)
class GameMeta:
    """Per-game team metadata. `first_half_right` maps team_id -> attacks the right basket in H1."""

    game_id: str
    team_ids: tuple[int, int]
    first_half_right: dict[int, bool] = field(default_factory=dict)
    sides_source: str = "inferred"


def validate_moment(m: Moment, court: CourtSpec = DEFAULT_COURT) -> list[str]:
    violations: list[str] = []
    n = len(m.players)
    if n != PLAYERS_PER_MOMENT:
        violations.append(f"player count {n} != {PLAYERS_PER_MOMENT}")
    else:
        per_team = Counter(p.team_id for p in m.players)
        if len(per_team) != 2 or any(c != PLAYERS_PER_TEAM for c in per_team.values()):
            split = "/".join(str(per_team[t]) for t in sorted(per_team))
            violations.append(f"team split {split} != 5/5")

    xs = [p.x for p in m.players] + [m.ball[0]]
    ys = [p.y for p in m.players] + [m.ball[1]]
    if any(not 0.0 <= x <= court.length for x in xs):
        violations.append("x out of bounds")
    if any(not 0.0 <= y <= court.width for y in ys):
        violations.append("y out of bounds")
    if m.ball[2] < 0.0:
        violations.append("z below floor")
    return violations


def _clamp(v: float, hi: float, tolerance: float) -> float | None:
    if v < -tolerance or v > hi + tolerance:
        return None
    return min(max(v, 0.0), hi)


def clamp_moment(m: Moment, court: CourtSpec = DEFAULT_COURT, tolerance_ft: float = 2.0) -> Moment | None:
    """Snap coordinates up to `tolerance_ft` outside the court onto the boundary.

    Returns None when any coordinate lies further out (the moment is invalid).
    """
    players: list[PlayerPosition] = []
    for p in m.players:
        x = _clamp(p.x, court.length, tolerance_ft)
        y = _clamp(p.y, court.width, tolerance_ft)
        if x is None or y is None:
            return None
        players.append(p if (x, y) == (p.x, p.y) else replace(p, x=x, y=y))
    bx = _clamp(m.ball[0], court.length, tolerance_ft)
    by = _clamp(m.ball[1], court.width, tolerance_ft)
    if bx is None or by is None:
        return None
    bz = m.ball[2]
    if bz < -tolerance_ft:
        return None
    ball = (bx, by, max(bz, 0.0))
    if ball == m.ball and all(a is b for a, b in zip(players, m.players)):
        return m
    return replace(m, ball=ball, players=tuple(players))


def attacking_basket(team_id: int, period: int, game: GameMeta, court: CourtSpec = DEFAULT_COURT) -> Point:
    if team_id not in game.first_half_right:
        raise JoinError(f"team {team_id} is not part of game {game.game_id}")
    right = game.first_half_right[team_id]
    # sides swap once at halftime; overtime keeps second-half sides
    if period >= 3:
        right = not right
    return court.basket_right if right else court.basket_left


def infer_attacking_sides(
    game_id: str,
    team_ids: tuple[int, int],
    shot_locations: list[tuple[int, int, float]],
    court: CourtSpec = DEFAULT_COURT,
) -> GameMeta:
    """Majority rule over shot locations `(team_id, period, shooter_x)`.

    Period-1 shots decide first; all periods (second-half x mirrored) are the
    fallback, then the opposite of the other team, then home attacks right. The two
    teams always attack opposite baskets: if both votes pick the same side, the team
    with the larger margin keeps it (home on a tie).
    """
    mid = court.length / 2.0

    def vote(team: int, periods: set[int] | None) -> int:
        right = left = 0
        for t, period, x in shot_locations:
            if t != team or (periods is not None and period not in periods):
                continue
            on_right = x > mid
            if period >= 3:
                on_right = not on_right
            if on_right:
                right += 1
            else:
                left += 1
        return right - left

    margins: dict[int, int] = {}
    for team in team_ids:
        margin = vote(team, {1})
        margins[team] = margin if margin != 0 else vote(team, None)
    sides: dict[int, bool | None] = {t: None if m == 0 else m > 0 for t, m in margins.items()}

    home, away = team_ids
    if sides[home] is not None and sides[home] == sides[away]:
        loser = away if abs(margins[home]) >= abs(margins[away]) else home
        logger.warning(kv(step="infer_sides", game_id=game_id, reason="same_side_votes", overridden=loser))
        sides[loser] = None
    if sides[home] is None and sides[away] is None:
        sides[home] = True
    if sides[home] is None:
        sides[home] = not sides[away]
    if sides[away] is None:
        sides[away] = not sides[home]
    return GameMeta(game_id=game_id, team_ids=team_ids, first_half_right={k: bool(v) for k, v in sides.items()})
