"""Tracking / play-by-play / bio parsers, the event join, and three-point play segmentation.

File formats are documented in DATA_SCHEMA_SPEC.md. Problems that only affect a
single row or moment are counted in `IngestStats` and skipped; problems that make a
whole file unreadable raise `IngestError` with a location.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import pandas as pd
from joblib import Parallel, delayed

from app.errors import IngestError, JoinError, ReleaseNotFoundError
from app.logging_utils import get_logger, kv
from app.schemas import SegmentConfig
from app.services.core_model import (
    DEFAULT_COURT,
    PLAYERS_PER_MOMENT,
    CourtSpec,
    EventType,
    GameMeta,
    Moment,
    PlayerBio,
    PlayerPosition,
    PlayEvent,
    Position,
    ThreePointPlay,
    attacking_basket,
    clamp_moment,
    infer_attacking_sides,
    validate_moment,
)

logger = get_logger("ingest")

PBP_COLUMNS = (
    "GAME_ID",
    "EVENTNUM",
    "EVENTMSGTYPE",
    "PERIOD",
    "GAME_CLOCK_S",
    "TEAM_ID",
    "PLAYER1_ID",
    "DESCRIPTION",
)
BIO_COLUMNS = ("PLAYER_ID", "NAME", "HEIGHT_CM", "WEIGHT_KG", "EXPERIENCE_YR", "POSITION")
THREE_TOKEN = "3PT"
BALL_ID = -1
NOMINAL_FRAME_RATE_HZ = 25.0


@dataclass
class IngestStats:
    warnings: Counter = field(default_factory=Counter)
    counts: Counter = field(default_factory=Counter)

    def warn(self, reason: str, where: str = "") -> None:
        if self.warnings[reason] == 0:
            logger.warning(kv(reason=reason, at=where or "-"))
        else:
            logger.debug(kv(reason=reason, at=where or "-"))
        self.warnings[reason] += 1

    def merge(self, other: "IngestStats") -> "IngestStats":
        self.warnings.update(other.warnings)
        self.counts.update(other.counts)
        return self

    def as_dict(self) -> dict[str, Any]:
        return {
            "counts": dict(sorted(self.counts.items())),
            "warnings": dict(sorted(self.warnings.items())),
            "total_warnings": int(sum(self.warnings.values())),
        }


@dataclass(frozen=True)
class GameBundle:
    game_id: str
    moments_by_event: dict[int, tuple[Moment, ...]]
    events: tuple[PlayEvent, ...] = ()
    meta: GameMeta | None = None
    rosters: dict[int, frozenset[int]] = field(default_factory=dict)
    frame_rate_hz: float = NOMINAL_FRAME_RATE_HZ

    @property
    def moment_count(self) -> int:
        return sum(len(v) for v in self.moments_by_event.values())

    def players(self) -> set[int]:
        out: set[int] = set()
        for roster in self.rosters.values():
            out |= roster
        return out


# ---------------------------------------------------------------------------
# tracking files
# ---------------------------------------------------------------------------


def _expect(cond: bool, message: str, path: str, location: str) -> None:
    if not cond:
        raise IngestError(message, path=path, location=location)


def _num(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _load_json(path: Path) -> Any:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IngestError(f"cannot read tracking file: {e}", path=str(path)) from e
    return _decode(text, str(path))


def _decode(text: str, path: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise IngestError(
            f"malformed JSON: {e.msg}",
            path=path,
            location=f"line {e.lineno} col {e.colno} offset {e.pos}",
        ) from e


def _read_moment(raw: Any, path: str, where: str) -> tuple[int, int, float, float | None, list[list[Any]]]:
    _expect(isinstance(raw, list) and len(raw) == 6, "moment must be a 6-element array", path, where)
    period, wall, game_clock, shot_clock, _unused, entries = raw
    _expect(isinstance(period, int) and period >= 1, "period must be a positive integer", path, where)
    _expect(isinstance(wall, int), "wall clock must be integer milliseconds", path, where)
    _expect(_num(game_clock), "game clock must be numeric", path, where)
    _expect(shot_clock is None or _num(shot_clock), "shot clock must be numeric or null", path, where)
    _expect(isinstance(entries, list) and len(entries) >= 1, "moment has no position entries", path, where)
    for k, e in enumerate(entries):
        _expect(
            isinstance(e, list) and len(e) == 5 and all(_num(v) for v in e),
            "position entry must be [team_id, player_id, x, y, z]",
            path,
            f"{where}[5][{k}]",
        )
    _expect(entries[0][0] == BALL_ID and entries[0][1] == BALL_ID, "first entry must be the ball", path, where)
    return period, wall, float(game_clock), None if shot_clock is None else float(shot_clock), entries


def parse_tracking_file(
    path: str | Path,
    court: CourtSpec = DEFAULT_COURT,
    config: SegmentConfig | None = None,
    stats: IngestStats | None = None,
) -> GameBundle:
    path = Path(path)
    cfg = config or SegmentConfig()
    stats = stats if stats is not None else IngestStats()
    payload = _load_json(path)
    p = str(path)
    _expect(isinstance(payload, dict), "top level must be an object", p, "$")
    game_id = payload.get("gameid")
    _expect(isinstance(game_id, str) and bool(game_id), "gameid must be a non-empty string", p, "$.gameid")
    events = payload.get("events")
    _expect(isinstance(events, list), "events must be an array", p, "$.events")

    moments_by_event: dict[int, tuple[Moment, ...]] = {}
    for i, ev in enumerate(events):
        where = f"$.events[{i}]"
        _expect(isinstance(ev, dict), "event must be an object", p, where)
        event_id = ev.get("eventId")
        _expect(isinstance(event_id, int), "eventId must be an integer", p, f"{where}.eventId")
        raw_moments = ev.get("moments")
        _expect(isinstance(raw_moments, list), "moments must be an array", p, f"{where}.moments")
        kept: list[Moment] = []
        for j, raw in enumerate(raw_moments):
            mwhere = f"{where}.moments[{j}]"
            period, wall, game_clock, shot_clock, entries = _read_moment(raw, p, mwhere)
            stats.counts["moments_read"] += 1
            ball = entries[0]
            players = tuple(
                PlayerPosition(team_id=int(e[0]), player_id=int(e[1]), x=float(e[2]), y=float(e[3]))
                for e in entries[1:]
            )
            m = Moment(
                period=period,
                wall_clock_ms=wall,
                game_clock_s=game_clock,
                shot_clock_s=shot_clock,
                ball=(float(ball[2]), float(ball[3]), float(ball[4])),
                players=players,
            )
            if len(players) != PLAYERS_PER_MOMENT:
                stats.warn("moment_player_count", f"{p}:{mwhere}")
                continue
            violations = validate_moment(m, court)
            if any(v.startswith("team split") for v in violations):
                stats.warn("moment_team_split", f"{p}:{mwhere}")
                continue
            if violations:
                clamped = clamp_moment(m, court, cfg.clamp_tolerance_ft)
                if clamped is None:
                    stats.warn("moment_out_of_bounds", f"{p}:{mwhere}")
                    continue
                stats.counts["moments_clamped"] += 1
                m = clamped
            kept.append(m)
        if event_id in moments_by_event:
            stats.warn("tracking_duplicate_event", f"{p}:{where}")
            kept = list(moments_by_event[event_id]) + kept
        moments_by_event[event_id] = tuple(kept)
        stats.counts["moments_valid"] += len(kept)

    stats.counts["tracking_files"] += 1
    logger.info(kv(step="parse_tracking", game_id=game_id, events=len(moments_by_event), path=p))
    return GameBundle(game_id=game_id, moments_by_event=moments_by_event)


def _canonical_entry(e: list[Any], is_ball: bool) -> list[Any]:
    z = float(e[4]) if is_ball else 0.0
    return [int(e[0]), int(e[1]), float(e[2]), float(e[3]), z]


def canonicalize_tracking(text: str) -> str:
    """Normalize a tracking document: fixed key order, shortest float repr, player z = 0.0."""
    payload = _decode(text, "<text>")
    events = []
    for ev in payload.get("events", []):
        moments = []
        for raw in ev.get("moments", []):
            period, wall, game_clock, shot_clock, _unused, entries = raw
            moments.append(
                [
                    int(period),
                    int(wall),
                    float(game_clock),
                    None if shot_clock is None else float(shot_clock),
                    None,
                    [_canonical_entry(e, k == 0) for k, e in enumerate(entries)],
                ]
            )
        events.append({"eventId": int(ev["eventId"]), "moments": moments})
    return json.dumps({"gameid": str(payload["gameid"]), "events": events}, separators=(",", ":"))


def serialize_tracking(bundle: GameBundle) -> str:
    events = []
    for event_id, moments in bundle.moments_by_event.items():
        rows = []
        for m in moments:
            entries = [[BALL_ID, BALL_ID, float(m.ball[0]), float(m.ball[1]), float(m.ball[2])]]
            entries.extend([p.team_id, p.player_id, float(p.x), float(p.y), 0.0] for p in m.players)
            rows.append([m.period, m.wall_clock_ms, float(m.game_clock_s), m.shot_clock_s, None, entries])
        events.append({"eventId": event_id, "moments": rows})
    return json.dumps({"gameid": bundle.game_id, "events": events}, separators=(",", ":"))


# ---------------------------------------------------------------------------
# CSV files
# ---------------------------------------------------------------------------


def _read_csv(path: Path, required: tuple[str, ...]) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise IngestError(f"cannot read CSV: {e}", path=str(path)) from e
    for col in required:
        if col not in df.columns:
            raise IngestError(f"missing required column {col}", path=str(path))
    return df


def _opt_int(raw: str) -> int | None:
    raw = raw.strip()
    if not raw:
        return None
    return int(float(raw))


def parse_playbyplay(path: str | Path, stats: IngestStats | None = None) -> list[PlayEvent]:
    path = Path(path)
    stats = stats if stats is not None else IngestStats()
    df = _read_csv(path, PBP_COLUMNS)
    events: list[PlayEvent] = []
    for i, row in enumerate(df.to_dict(orient="records")):
        line = i + 2  # header is line 1
        try:
            event_type = EventType.from_code(int(row["EVENTMSGTYPE"]))
            description = str(row["DESCRIPTION"])
            shooter = _opt_int(row["PLAYER1_ID"])
            game_clock = float(row["GAME_CLOCK_S"])
            if not math.isfinite(game_clock):
                raise ValueError("non-finite game clock")
            ev = PlayEvent(
                game_id=str(row["GAME_ID"]).strip(),
                event_id=int(row["EVENTNUM"]),
                event_type=event_type,
                is_three=event_type.is_shot and THREE_TOKEN in description,
                shooter_id=shooter,
                team_id=_opt_int(row["TEAM_ID"]),
                period=int(row["PERIOD"]),
                game_clock_s=game_clock,
                description=description,
            )
        except (ValueError, TypeError):
            stats.warn("pbp_unparseable_row", f"{path}:{line}")
            continue
        events.append(ev)
    stats.counts["pbp_rows"] += len(events)
    logger.info(kv(step="parse_playbyplay", rows=len(events), path=path))
    return events


def parse_player_bio(path: str | Path, stats: IngestStats | None = None) -> list[PlayerBio]:
    path = Path(path)
    stats = stats if stats is not None else IngestStats()
    df = _read_csv(path, BIO_COLUMNS)
    by_id: dict[int, PlayerBio] = {}
    for i, row in enumerate(df.to_dict(orient="records")):
        line = i + 2
        try:
            pid = int(row["PLAYER_ID"])
            height = float(row["HEIGHT_CM"])
            weight = float(row["WEIGHT_KG"])
            exp = float(row["EXPERIENCE_YR"])
            position = Position.from_listing(str(row["POSITION"]))
        except (ValueError, TypeError):
            stats.warn("bio_unparseable_row", f"{path}:{line}")
            continue
        try:
            bio = PlayerBio(
                player_id=pid,
                name=str(row["NAME"]).strip(),
                height_cm=height,
                weight_kg=weight,
                experience_yr=exp,
                position=position,
            )
        except ValueError:
            stats.warn("bio_out_of_range", f"{path}:{line}")
            continue
        if pid in by_id:
            stats.warn("bio_duplicate", f"{path}:{line}")
        by_id[pid] = bio
    stats.counts["bio_rows"] += len(by_id)
    return list(by_id.values())


# ---------------------------------------------------------------------------
# join
# ---------------------------------------------------------------------------


def _rosters(moments_by_event: dict[int, tuple[Moment, ...]], game_id: str) -> tuple[dict[int, frozenset[int]], tuple[int, ...]]:
    teams: dict[int, set[int]] = {}
    order: list[int] = []
    owner: dict[int, int] = {}
    for moments in moments_by_event.values():
        for m in moments:
            for p in m.players:
                if p.team_id not in teams:
                    teams[p.team_id] = set()
                    order.append(p.team_id)
                prev = owner.setdefault(p.player_id, p.team_id)
                if prev != p.team_id:
                    raise JoinError(f"player {p.player_id} appears for teams {prev} and {p.team_id} in game {game_id}")
                teams[p.team_id].add(p.player_id)
    return {t: frozenset(v) for t, v in teams.items()}, tuple(order)


def _shot_locations(bundle: GameBundle, events: list[PlayEvent]) -> list[tuple[int, int, float]]:
    out: list[tuple[int, int, float]] = []
    for ev in events:
        if not ev.event_type.is_shot or ev.shooter_id is None or ev.team_id is None:
            continue
        for m in reversed(bundle.moments_by_event.get(ev.event_id, ())):
            pos = m.position_of(ev.shooter_id)
            if pos is not None:
                out.append((ev.team_id, ev.period, pos[0]))
                break
    return out


def join_game(
    bundle: GameBundle,
    events: list[PlayEvent],
    stats: IngestStats | None = None,
    sides_override: dict[int, bool] | None = None,
    court: CourtSpec = DEFAULT_COURT,
) -> GameBundle:
    """Attach this game's play-by-play, rosters and attacking sides to a tracking bundle.

    `sides_override` maps team_id -> attacks the right basket in the first half.
    """
    stats = stats if stats is not None else IngestStats()
    game_events = sorted((e for e in events if e.game_id == bundle.game_id), key=lambda e: e.event_id)
    known = {e.event_id for e in game_events}

    moments_by_event: dict[int, tuple[Moment, ...]] = {}
    for event_id, moments in bundle.moments_by_event.items():
        if event_id not in known:
            stats.warn("tracking_orphan_event", f"{bundle.game_id}:{event_id}")
            continue
        moments_by_event[event_id] = moments

    rosters, order = _rosters(moments_by_event, bundle.game_id)
    if len(order) < 2:
        for e in game_events:
            if e.team_id is not None and e.team_id not in order:
                order = (*order, e.team_id)
    meta: GameMeta | None = None
    if len(order) > 2:
        raise JoinError(f"game {bundle.game_id} has {len(order)} teams")
    if len(order) == 2:
        team_ids = (order[0], order[1])
        if sides_override and all(t in sides_override for t in team_ids):
            meta = GameMeta(
                game_id=bundle.game_id,
                team_ids=team_ids,
                first_half_right={t: bool(sides_override[t]) for t in team_ids},
                sides_source="manifest",
            )
        else:
            joined = replace(bundle, moments_by_event=moments_by_event)
            meta = infer_attacking_sides(bundle.game_id, team_ids, _shot_locations(joined, game_events), court)

    stats.counts["games_joined"] += 1
    return replace(bundle, moments_by_event=moments_by_event, events=tuple(game_events), meta=meta, rosters=rosters)


# ---------------------------------------------------------------------------
# release detection and segmentation
# ---------------------------------------------------------------------------


def detect_release(
    moments: tuple[Moment, ...] | list[Moment],
    shooter_id: int,
    court: CourtSpec = DEFAULT_COURT,
    radius_ft: float = 2.5,
    rim_height_ft: float | None = None,
) -> int:
    rim = court.rim_height if rim_height_ft is None else rim_height_ft
    near: list[int] = []
    for i, m in enumerate(moments):
        pos = m.position_of(shooter_id)
        if pos is not None and math.hypot(m.ball[0] - pos[0], m.ball[1] - pos[1]) <= radius_ft:
            near.append(i)
    if not near:
        raise ReleaseNotFoundError(f"ball never within {radius_ft} ft of shooter {shooter_id}")

    # first upward rim crossing that has a shooter touch before it
    above = [m.ball[2] > rim for m in moments]
    for c in range(len(moments)):
        if above[c] and (c == 0 or not above[c - 1]):
            before = [i for i in near if i < c]
            if before:
                return before[-1]
    if any(above):
        # ball only above the rim before the shooter ever held it
        raise ReleaseNotFoundError(f"no rim crossing after shooter {shooter_id} touched the ball")
    zs = [m.ball[2] for m in moments]
    return zs.index(max(zs))


def _dedupe_clock(moments: tuple[Moment, ...]) -> list[Moment]:
    out: list[Moment] = []
    for m in moments:
        if out and m.wall_clock_ms <= out[-1].wall_clock_ms:
            continue
        out.append(m)
    return out


def segment_three_point_plays(
    bundle: GameBundle,
    court: CourtSpec = DEFAULT_COURT,
    config: SegmentConfig | None = None,
    stats: IngestStats | None = None,
) -> list[ThreePointPlay]:
    cfg = config or SegmentConfig()
    stats = stats if stats is not None else IngestStats()
    window_ms = round(cfg.window_s * 1000)
    min_ms = round(cfg.min_window_s * 1000)
    plays: list[ThreePointPlay] = []

    for ev in bundle.events:
        if not ev.is_three:
            continue
        stats.counts["three_point_events"] += 1
        where = f"{bundle.game_id}:{ev.event_id}"
        shooter = int(ev.shooter_id)  # guaranteed by PlayEvent
        moments = _dedupe_clock(bundle.moments_by_event.get(ev.event_id, ()))
        if not moments:
            stats.warn("play_dropped_no_tracking", where)
            continue
        if all(m.position_of(shooter) is None for m in moments):
            stats.warn("play_dropped_shooter_absent", where)
            continue
        try:
            r = detect_release(moments, shooter, court, cfg.release_radius_ft, cfg.rim_height_ft)
        except ReleaseNotFoundError:
            stats.warn("play_dropped_release_not_found", where)
            continue

        release_ms = moments[r].wall_clock_ms
        start = r
        while start > 0 and moments[start - 1].wall_clock_ms >= release_ms - window_ms:
            start -= 1
        window = moments[start : r + 1]

        if any(m.period != window[-1].period for m in window) or any(
            b.game_clock_s > a.game_clock_s + 1e-6 for a, b in zip(window, window[1:])
        ):
            stats.warn("play_dropped_clock_reset", where)
            continue
        # keep the trailing run in which the shooter is tracked
        k = len(window)
        while k > 0 and window[k - 1].position_of(shooter) is not None:
            k -= 1
        window = window[k:]
        if not window or release_ms - window[0].wall_clock_ms < min_ms:
            stats.warn("play_dropped_short_window", where)
            continue

        team_id = ev.team_id
        if team_id is None or (bundle.rosters and shooter not in bundle.rosters.get(team_id, frozenset())):
            team_id = next(p.team_id for p in window[-1].players if p.player_id == shooter)
        if bundle.meta is None:
            stats.warn("play_dropped_no_game_meta", where)
            continue
        try:
            basket = attacking_basket(team_id, ev.period, bundle.meta, court)
        except JoinError:
            stats.warn("play_dropped_unknown_team", where)
            continue

        plays.append(
            ThreePointPlay(
                game_id=bundle.game_id,
                event_id=ev.event_id,
                shooter_id=shooter,
                shooter_team_id=team_id,
                made=ev.event_type is EventType.MADE_SHOT,
                release_index=len(window) - 1,
                window=tuple(window),
                attacking_basket=basket,
            )
        )
        stats.counts["plays_emitted"] += 1
    return plays


def plays_dropped(stats: IngestStats) -> int:
    return int(sum(v for k, v in stats.warnings.items() if k.startswith("play_dropped_")))


# ---------------------------------------------------------------------------
# season loading
# ---------------------------------------------------------------------------


@dataclass
class Season:
    games: list[GameBundle]
    bios: dict[int, PlayerBio]
    stats: IngestStats

    def games_index(self) -> list[tuple[int, str]]:
        return games_index(self.games)


def games_index(bundles: list[GameBundle]) -> list[tuple[int, str]]:
    """(player_id, game_id) for every player that appears in a game's tracking."""
    rows = {(pid, b.game_id) for b in bundles for pid in b.players()}
    return sorted(rows)


def _parse_one(path: Path, court: CourtSpec, cfg: SegmentConfig) -> tuple[GameBundle, IngestStats]:
    stats = IngestStats()
    return parse_tracking_file(path, court, cfg, stats), stats


def parse_tracking_dir(
    tracking_dir: str | Path,
    court: CourtSpec = DEFAULT_COURT,
    config: SegmentConfig | None = None,
    stats: IngestStats | None = None,
    n_jobs: int = 1,
) -> list[GameBundle]:
    cfg = config or SegmentConfig()
    stats = stats if stats is not None else IngestStats()
    root = Path(tracking_dir)
    files = [root] if root.is_file() else sorted(root.glob("*.json"))
    if not files:
        raise IngestError("no tracking files found", path=str(tracking_dir))
    results = Parallel(n_jobs=n_jobs)(delayed(_parse_one)(f, court, cfg) for f in files)
    bundles = []
    for bundle, s in results:
        stats.merge(s)
        bundles.append(bundle)
    return bundles


def load_season(
    tracking_dir: str | Path,
    pbp_path: str | Path | None = None,
    bios_path: str | Path | None = None,
    sides_override: dict[str, dict[int, bool]] | None = None,
    court: CourtSpec = DEFAULT_COURT,
    config: SegmentConfig | None = None,
    n_jobs: int = 1,
) -> Season:
    stats = IngestStats()
    bundles = parse_tracking_dir(tracking_dir, court, config, stats, n_jobs)
    events = parse_playbyplay(pbp_path, stats) if pbp_path else []
    bios = {b.player_id: b for b in parse_player_bio(bios_path, stats)} if bios_path else {}
    sides_override = sides_override or {}
    joined = [join_game(b, events, stats, sides_override.get(b.game_id), court) for b in bundles]
    logger.info(kv(step="load_season", games=len(joined), events=len(events), bios=len(bios)))
    return Season(games=joined, bios=bios, stats=stats)
