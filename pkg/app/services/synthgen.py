"""Synthetic seasons with a ground-truth manifest.

Each three-point play is scripted at 25 Hz around its release frame:

* the shooter starts at a slot on the arc, drifts straight out to the release spot
  and stands still for the last second before release;
* teammates stand at the other four slots; every defender sits between their man
  and the basket, the shooter's defender at a scripted gap whose median over the
  window is exactly the planted value;
* the ball moves among teammates in straight passes, ends with the shooter, rises
  to just under rim height at release and crosses the rim on the next frame.

Each team's shots in a game are split among its five players in proportion to
their attempt weight. Players with an override always start. A shooter's drift
length grows with their latent usage, so the features carry the attempt rate a
player would have without suppression or boost.

Ground-truth features come from the noise-free frames. Rendered files add a smooth,
bounded positional wobble per player and per ball.
"""
from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from app.errors import SynthError, VerificationError
from app.logging_utils import get_logger, kv
from app.schemas import MAKE_MODEL_FEATURES, MakeModel, SynthConfig, VerifyTolerances
from app.services.core_model import (
    DEFAULT_COURT,
    CourtSpec,
    GameMeta,
    Moment,
    PlayerBio,
    PlayerPosition,
    Point,
    Position,
    ThreePointPlay,
    attacking_basket,
)
from app.services.features import (
    MODEL_FEATURES,
    FeatureVector,
    encode_shooters,
    extract_features,
    feature_frame,
)
from app.services.ingest import BALL_ID, PBP_COLUMNS, BIO_COLUMNS
from app.services.reports import atomic_write_json, atomic_write_text, write_csv

logger = get_logger("synthgen")

MANIFEST_SCHEMA = "threept-synth-manifest"
MANIFEST_VERSION = 1

FRAME_S = 0.04
FRAME_MS = 40
RELEASE_FRAME = 150
POST_RELEASE_FRAMES = 30
N_FRAMES = RELEASE_FRAME + POST_RELEASE_FRAMES + 1
# the ingest window [release - 5 s, release] spans these frames
WINDOW_START = RELEASE_FRAME - 125
STOP_FRAME = RELEASE_FRAME - 25
SHOOTER_CATCH_FRAME = 110
PASS_FRAMES = 15
HOLD_FRAMES = 10
RISE_FRAME = 140

SLOT_ANGLES_DEG = (-72.0, -36.0, 0.0, 36.0, 72.0)
GAP_WOBBLE_FT = 0.75
GAP_PERIOD_FRAMES = 42
DEFENDER_OFFSET_FT = 3.5
HELD_Z = 3.0
RELEASE_Z = 9.6
LAUNCH_VZ = 20.0
GRAVITY_HALF = 16.0
FLIGHT_S = 1.0
COURT_MARGIN_FT = 0.5
EVENT_SPACING_MS = 60_000
SEASON_START_MS = 1_446_000_000_000
PERIOD_S = 720.0
POSITIONS = (Position.G, Position.G, Position.F, Position.F, Position.C, Position.G, Position.F, Position.C)
HEIGHT_MEAN_CM = {Position.G: 191.0, Position.F: 203.0, Position.C: 211.0}


@dataclass(frozen=True)
class SynthPlayer:
    player_id: int
    team_id: int
    name: str
    position: Position
    height_cm: float
    weight_kg: float
    experience_yr: float
    skill: float
    usage: float
    suppression: float = 1.0
    boost: float = 1.0

    @property
    def usage_rate(self) -> float:
        """Attempt weight implied by the latent usage, before suppression or boost."""
        return 0.5 + 1.5 * self.usage

    @property
    def attempt_weight(self) -> float:
        return self.usage_rate * self.suppression * self.boost

    def bio(self) -> PlayerBio:
        return PlayerBio(
            player_id=self.player_id,
            name=self.name,
            height_cm=self.height_cm,
            weight_kg=self.weight_kg,
            experience_yr=self.experience_yr,
            position=self.position,
        )


@dataclass(frozen=True)
class PlayPlan:
    event_id: int
    period: int
    shooter_id: int
    team_id: int
    basket: Point
    slot: int
    slot_angles: tuple[float, ...]
    r_release: float
    r_move: float
    teammate_radii: tuple[float, ...]
    gap: float
    holders: tuple[int, ...]
    shot_clock_release: float
    game_clock_release: float
    wall_release_ms: int
    rebounder_id: int
    truth: FeatureVector | None = None
    p_make: float = 0.0
    made: bool = False


@dataclass(frozen=True)
class GamePlan:
    index: int
    game_id: str
    home_team_id: int
    away_team_id: int
    first_half_right: dict[int, bool]
    lineups: dict[int, tuple[int, ...]]
    plays: tuple[PlayPlan, ...]

    @property
    def meta(self) -> GameMeta:
        return GameMeta(
            game_id=self.game_id,
            team_ids=(self.home_team_id, self.away_team_id),
            first_half_right=dict(self.first_half_right),
            sides_source="manifest",
        )


@dataclass
class SeasonPlan:
    config: SynthConfig
    players: dict[int, SynthPlayer]
    games: list[GamePlan] = field(default_factory=list)

    def bios(self) -> dict[int, PlayerBio]:
        return {pid: p.bio() for pid, p in self.players.items()}

    def games_index(self) -> list[tuple[int, str]]:
        return sorted((pid, g.game_id) for g in self.games for ids in g.lineups.values() for pid in ids)

    def plays(self) -> list[tuple[GamePlan, PlayPlan]]:
        return [(g, p) for g in self.games for p in g.plays]


@dataclass(frozen=True)
class SeasonFiles:
    root: Path
    tracking_dir: Path
    playbyplay: Path
    bios: Path
    manifest: Path
    plan: SeasonPlan


# ---------------------------------------------------------------------------
# planning
# ---------------------------------------------------------------------------


def _sigmoid(v: float) -> float:
    return 1.0 / (1.0 + math.exp(-v))


def make_logit(model: MakeModel, features: dict[str, float]) -> float:
    return model.intercept + sum(w * features[k] for k, w in model.weights.items())


def _validate(cfg: SynthConfig) -> None:
    if cfg.n_players_per_team > 99:
        raise SynthError("n_players_per_team must be <= 99 so player ids stay unique")
    known = {100 * (t + 1) + k + 1 for t in range(cfg.n_teams) for k in range(cfg.n_players_per_team)}
    for label, table in (
        ("skill_overrides", cfg.skill_overrides),
        ("usage_overrides", cfg.usage_overrides),
        ("usage_suppression", cfg.usage_suppression),
        ("usage_boost", cfg.usage_boost),
    ):
        unknown = sorted(set(table) - known)
        if unknown:
            raise SynthError(f"{label} references unknown players {unknown}")
    both = sorted(set(cfg.usage_suppression) & set(cfg.usage_boost))
    if both:
        raise SynthError(f"players both suppressed and boosted: {both}")
    crowded = sorted(t for t in range(cfg.n_teams) if sum(1 for p in planted_ids(cfg) if p // 100 == t + 1) > 5)
    if crowded:
        raise SynthError(f"more than 5 planted players on team(s) {[10 * (t + 1) for t in crowded]}")


def planted_ids(cfg: SynthConfig) -> set[int]:
    """Players with any override; they start every game their team plays."""
    return set(cfg.skill_overrides) | set(cfg.usage_overrides) | set(cfg.usage_suppression) | set(cfg.usage_boost)


def _make_players(cfg: SynthConfig, rng: np.random.Generator) -> dict[int, SynthPlayer]:
    players: dict[int, SynthPlayer] = {}
    n = cfg.n_players_per_team
    for t in range(cfg.n_teams):
        team_id = 10 * (t + 1)
        # one usage per stratum of [0, 1] so every roster has the same usage spread
        strata = rng.permutation(n)
        for k in range(n):
            pid = 100 * (t + 1) + k + 1
            pos = POSITIONS[k % len(POSITIONS)]
            height = float(np.clip(rng.normal(HEIGHT_MEAN_CM[pos], 5.0), 160.0, 230.0))
            weight = float(np.clip(0.9 * height - 85.0 + rng.normal(0.0, 6.0), 60.0, 160.0))
            skill = float(rng.normal(0.0, cfg.skill_sd)) if cfg.skill_sd > 0 else 0.0
            usage = float(cfg.usage_overrides.get(pid, (strata[k] + rng.uniform(0.0, 1.0)) / n))
            players[pid] = SynthPlayer(
                player_id=pid,
                team_id=team_id,
                name=f"Player {pid}",
                position=pos,
                height_cm=round(height, 1),
                weight_kg=round(weight, 1),
                experience_yr=float(rng.integers(0, 16)),
                skill=float(cfg.skill_overrides.get(pid, skill)),
                usage=usage,
                suppression=float(cfg.usage_suppression.get(pid, 1.0)),
                boost=float(cfg.usage_boost.get(pid, 1.0)),
            )
    return players


def _schedule(cfg: SynthConfig) -> list[tuple[int, int]]:
    """Round robin by the circle method, so every team has played k games after k rounds."""
    teams: list[int | None] = [10 * (t + 1) for t in range(cfg.n_teams)]
    if len(teams) % 2:
        teams.append(None)
    pairs: list[tuple[int, int]] = []
    for _ in range(len(teams) - 1):
        half = len(teams) // 2
        for a, b in zip(teams[:half], reversed(teams[half:])):
            if a is not None and b is not None:
                pairs.append((a, b))
        teams = [teams[0], teams[-1], *teams[1:-1]]
    out = []
    for g in range(cfg.n_games):
        home, away = pairs[g % len(pairs)]
        if (g // len(pairs)) % 2:
            home, away = away, home
        out.append((home, away))
    return out


def _holders(rng: np.random.Generator, shooter: int, teammates: list[int]) -> tuple[int, ...]:
    n_passes = int(rng.integers(0, 4))
    chain: list[int] = []
    prev = shooter
    for _ in range(n_passes):
        options = [p for p in teammates if p != prev]
        prev = int(rng.choice(options))
        chain.append(prev)
    # the first holder starts with the ball; the shooter always ends with it
    return (*chain, shooter)


def allocate_attempts(n_plays: int, weights: np.ndarray) -> np.ndarray:
    """Largest-remainder split of `n_plays` in proportion to `weights`; ties go to the lower index."""
    quota = n_plays * weights / weights.sum()
    counts = np.floor(quota).astype(int)
    rest = n_plays - int(counts.sum())
    order = np.lexsort((np.arange(len(weights)), -(quota - counts)))
    counts[order[:rest]] += 1
    return counts


def _shooter_sequence(
    n_plays: int,
    on_court: Sequence[int],
    players: dict[int, SynthPlayer],
    rng: np.random.Generator,
) -> list[int]:
    counts = allocate_attempts(n_plays, np.asarray([players[p].attempt_weight for p in on_court]))
    sequence = np.repeat(np.asarray(on_court), counts)
    return [int(p) for p in rng.permutation(sequence)]


def _plan_plays(
    cfg: SynthConfig,
    game_index: int,
    home: int,
    away: int,
    meta: GameMeta,
    lineups: dict[int, tuple[int, ...]],
    players: dict[int, SynthPlayer],
    rng: np.random.Generator,
    court: CourtSpec,
) -> list[PlayPlan]:
    n = cfg.plays_per_game
    periods = [1 + (j * 4) // n for j in range(n)]
    per_period = {p: periods.count(p) for p in set(periods)}
    # each team shoots on alternate plays, home first
    shooters = {
        home: _shooter_sequence((n + 1) // 2, lineups[home], players, rng),
        away: _shooter_sequence(n // 2, lineups[away], players, rng),
    }
    seen: dict[int, int] = {}
    plans: list[PlayPlan] = []
    for j in range(n):
        period = periods[j]
        i_p = seen.get(period, 0)
        seen[period] = i_p + 1
        team = home if j % 2 == 0 else away
        defense = away if team == home else home
        shooter = shooters[team][j // 2]
        teammates = [p for p in lineups[team] if p != shooter]

        slot = int(rng.integers(0, 5))
        angles = tuple(a + float(rng.uniform(-3.0, 3.0)) for a in SLOT_ANGLES_DEG)
        # drift length tracks the latent usage, before any suppression or boost
        u = players[shooter].usage
        r_move = float(np.clip(4.0 + 6.0 * u + rng.uniform(-0.5, 0.5), 4.0, 10.0))
        spacing = float(rng.uniform(0.0, 1.0))
        radii = tuple(15.0 + 10.0 * spacing + float(rng.uniform(-1.0, 1.0)) for _ in range(4))
        gc_r = PERIOD_S - 10.0 - (i_p + 0.5) * (PERIOD_S - 30.0) / per_period[period] + float(rng.uniform(-2.0, 2.0))
        plans.append(
            PlayPlan(
                event_id=2 * j + 1,
                period=period,
                shooter_id=shooter,
                team_id=team,
                basket=attacking_basket(team, period, meta, court),
                slot=slot,
                slot_angles=angles,
                r_release=float(rng.uniform(24.0, 25.5)),
                r_move=r_move,
                teammate_radii=radii,
                gap=float(rng.uniform(2.0, 7.0)),
                holders=_holders(rng, shooter, teammates),
                shot_clock_release=round(float(rng.uniform(1.0, 18.0)), 2),
                game_clock_release=round(gc_r, 2),
                wall_release_ms=SEASON_START_MS + game_index * 86_400_000 + j * EVENT_SPACING_MS + RELEASE_FRAME * FRAME_MS,
                rebounder_id=int(rng.choice(lineups[defense])),
            )
        )
    return plans


def _polar(basket: Point, r: float, angle_deg: float, court: CourtSpec) -> np.ndarray:
    out_x = -1.0 if basket[0] > court.length / 2.0 else 1.0
    a = math.radians(angle_deg)
    x = basket[0] + out_x * r * math.cos(a)
    y = basket[1] + r * math.sin(a)
    return np.array(
        [
            min(max(x, COURT_MARGIN_FT), court.length - COURT_MARGIN_FT),
            min(max(y, COURT_MARGIN_FT), court.width - COURT_MARGIN_FT),
        ]
    )


def _toward(src: np.ndarray, dst: Point, dist: float) -> np.ndarray:
    d = np.asarray(dst) - src
    norm = float(np.hypot(d[0], d[1]))
    if norm == 0.0:
        return src.copy()
    return src + d / norm * dist


def _tracks(game: GamePlan, play: PlayPlan, court: CourtSpec) -> tuple[dict[int, np.ndarray], np.ndarray]:
    """Noise-free (N_FRAMES, 2) XY per player and (N_FRAMES, 3) ball XYZ."""
    offense = list(game.lineups[play.team_id])
    defense_team = game.away_team_id if play.team_id == game.home_team_id else game.home_team_id
    defense = list(game.lineups[defense_team])
    shooter = play.shooter_id
    teammates = [p for p in offense if p != shooter]
    frames = np.arange(N_FRAMES)

    xy: dict[int, np.ndarray] = {}
    release_spot = _polar(play.basket, play.r_release, play.slot_angles[play.slot], court)
    start_spot = _polar(play.basket, play.r_release - play.r_move, play.slot_angles[play.slot], court)
    frac = np.clip((frames - WINDOW_START) / (STOP_FRAME - WINDOW_START), 0.0, 1.0)[:, None]
    xy[shooter] = start_spot + frac * (release_spot - start_spot)
    other_slots = [s for s in range(5) if s != play.slot]
    for mate, slot, r in zip(teammates, other_slots, play.teammate_radii):
        xy[mate] = np.tile(_polar(play.basket, r, play.slot_angles[slot], court), (N_FRAMES, 1))

    # defenders pair with offensive players in lineup order
    gap = play.gap + GAP_WOBBLE_FT * np.sin(2.0 * math.pi * (frames - WINDOW_START) / GAP_PERIOD_FRAMES)
    for man, defender in zip(offense, defense):
        if man == shooter:
            xy[defender] = np.vstack([_toward(xy[man][k], play.basket, gap[k]) for k in frames])
        else:
            xy[defender] = np.tile(_toward(xy[man][0], play.basket, DEFENDER_OFFSET_FT), (N_FRAMES, 1))

    ball = np.zeros((N_FRAMES, 3))
    catches = [SHOOTER_CATCH_FRAME - (PASS_FRAMES + HOLD_FRAMES) * i for i in range(len(play.holders) - 1, -1, -1)]
    catches[0] = 0
    for h, holder in enumerate(play.holders):
        start = catches[h]
        end = catches[h + 1] - PASS_FRAMES if h + 1 < len(play.holders) else RELEASE_FRAME + 1
        ball[start:end, :2] = xy[holder][start:end]
        ball[start:end, 2] = HELD_Z
        if h + 1 < len(play.holders):
            receiver = play.holders[h + 1]
            a = xy[holder][end]
            b = xy[receiver][catches[h + 1]]
            for k in range(end, catches[h + 1]):
                t = (k - end) / PASS_FRAMES
                ball[k, :2] = a + t * (b - a)
                ball[k, 2] = HELD_Z + 1.0
    rise = np.arange(RISE_FRAME, RELEASE_FRAME + 1)
    ball[rise, 2] = HELD_Z + (RELEASE_Z - HELD_Z) * (rise - RISE_FRAME) / (RELEASE_FRAME - RISE_FRAME)
    for k in range(RELEASE_FRAME + 1, N_FRAMES):
        t = (k - RELEASE_FRAME) * FRAME_S
        ball[k, :2] = release_spot + (np.asarray(play.basket) - release_spot) * min(t / FLIGHT_S, 1.0)
        ball[k, 2] = RELEASE_Z + LAUNCH_VZ * t - GRAVITY_HALF * t * t
    return xy, ball


def _clocks(play: PlayPlan, k: int) -> tuple[int, float, float | None]:
    dt = (RELEASE_FRAME - k) * FRAME_S
    wall = play.wall_release_ms - (RELEASE_FRAME - k) * FRAME_MS
    shot_clock = max(0.0, round(play.shot_clock_release + dt, 2))
    return wall, round(play.game_clock_release + dt, 2), shot_clock


def _moments(
    game: GamePlan,
    play: PlayPlan,
    xy: dict[int, np.ndarray],
    ball: np.ndarray,
    decimals: int | None = None,
) -> list[Moment]:
    order = [(game.home_team_id, p) for p in game.lineups[game.home_team_id]] + [
        (game.away_team_id, p) for p in game.lineups[game.away_team_id]
    ]

    def r(v: float) -> float:
        return float(round(v, decimals)) if decimals is not None else float(v)

    out = []
    for k in range(N_FRAMES):
        wall, gc, sc = _clocks(play, k)
        out.append(
            Moment(
                period=play.period,
                wall_clock_ms=wall,
                game_clock_s=gc,
                shot_clock_s=sc,
                ball=(r(ball[k, 0]), r(ball[k, 1]), r(ball[k, 2])),
                players=tuple(PlayerPosition(t, p, r(xy[p][k, 0]), r(xy[p][k, 1])) for t, p in order),
            )
        )
    return out


def _truth(game: GamePlan, play: PlayPlan, bios: dict[int, PlayerBio], court: CourtSpec) -> FeatureVector:
    xy, ball = _tracks(game, play, court)
    moments = _moments(game, play, xy, ball)
    clean = ThreePointPlay(
        game_id=game.game_id,
        event_id=play.event_id,
        shooter_id=play.shooter_id,
        shooter_team_id=play.team_id,
        made=False,
        release_index=RELEASE_FRAME - WINDOW_START,
        window=tuple(moments[WINDOW_START : RELEASE_FRAME + 1]),
        attacking_basket=play.basket,
    )
    return extract_features(clean, bios, court)


def _plan_game(
    cfg: SynthConfig,
    g: int,
    home: int,
    away: int,
    players: dict[int, SynthPlayer],
    court: CourtSpec,
) -> GamePlan:
    rng = np.random.default_rng([cfg.seed, 1, g])
    roster = {t: sorted(p for p, pl in players.items() if pl.team_id == t) for t in (home, away)}
    starters = planted_ids(cfg)
    lineups: dict[int, tuple[int, ...]] = {}
    for t in (home, away):
        fixed = [p for p in roster[t] if p in starters]
        bench = [p for p in roster[t] if p not in starters]
        picked = rng.choice(bench, size=5 - len(fixed), replace=False) if len(fixed) < 5 else []
        lineups[t] = tuple(sorted([*fixed, *(int(p) for p in picked)]))
    home_right = bool(rng.random() < 0.5)
    game_id = f"00215{g + 1:05d}"
    first_half_right = {home: home_right, away: not home_right}
    meta = GameMeta(game_id=game_id, team_ids=(home, away), first_half_right=first_half_right)
    plans = _plan_plays(cfg, g, home, away, meta, lineups, players, rng, court)
    game = GamePlan(
        index=g,
        game_id=game_id,
        home_team_id=home,
        away_team_id=away,
        first_half_right=first_half_right,
        lineups=lineups,
        plays=tuple(plans),
    )
    bios = {pid: players[pid].bio() for ids in lineups.values() for pid in ids}
    resolved = []
    for play in plans:
        truth = _truth(game, play, bios, court)
        values = {k: float(getattr(truth, k)) for k in MAKE_MODEL_FEATURES}
        p = _sigmoid(make_logit(cfg.make_model, values) + players[play.shooter_id].skill)
        made = bool(rng.random() < p)
        truth = replace(truth, made=made)
        resolved.append(replace(play, truth=truth, p_make=p, made=made))
    return replace(game, plays=tuple(resolved))


def plan_season(config: SynthConfig, court: CourtSpec = DEFAULT_COURT) -> SeasonPlan:
    """Players, schedule, play scripts, ground-truth features and outcomes; no files."""
    _validate(config)
    players = _make_players(config, np.random.default_rng([config.seed, 0]))
    games = Parallel(n_jobs=config.n_jobs, prefer="threads")(
        delayed(_plan_game)(config, g, home, away, players, court) for g, (home, away) in enumerate(_schedule(config))
    )
    plan = SeasonPlan(config=config, players=players, games=list(games))
    logger.info(kv(step="plan_season", games=len(plan.games), plays=len(plan.plays()), players=len(players)))
    return plan


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def _wobble(rng: np.random.Generator, amplitude: float) -> np.ndarray:
    frames = np.arange(N_FRAMES)
    period = rng.uniform(60.0, 100.0, size=2)
    phase = rng.uniform(0.0, 2.0 * math.pi, size=2)
    return amplitude * np.sin(2.0 * math.pi * frames[:, None] / period[None, :] + phase[None, :])


def render_game(game: GamePlan, config: SynthConfig, court: CourtSpec = DEFAULT_COURT) -> dict[str, Any]:
    """Tracking document for one game, with a smooth bounded wobble of at most `jitter_ft` per axis."""
    rng = np.random.default_rng([config.seed, 2, game.index])
    events = []
    for play in game.plays:
        xy, ball = _tracks(game, play, court)
        if config.jitter_ft > 0:
            xy = {p: v + _wobble(rng, config.jitter_ft) for p, v in xy.items()}
            ball = ball.copy()
            ball[:, :2] += _wobble(rng, config.jitter_ft)
        moments = _moments(game, play, xy, ball, decimals=3)
        rows = []
        for m in moments:
            entries = [[BALL_ID, BALL_ID, m.ball[0], m.ball[1], m.ball[2]]]
            entries.extend([p.team_id, p.player_id, p.x, p.y, 0.0] for p in m.players)
            rows.append([m.period, m.wall_clock_ms, m.game_clock_s, m.shot_clock_s, None, entries])
        events.append({"eventId": play.event_id, "moments": rows})
    return {"gameid": game.game_id, "events": events}


def playbyplay_frame(plan: SeasonPlan) -> pd.DataFrame:
    rows = []
    for game, play in plan.plays():
        name = plan.players[play.shooter_id].name
        dist = round(play.truth.shot_dist) if play.truth is not None else 24
        desc = f"{name} {dist}' 3PT Jump Shot"
        rows.append(
            (
                game.game_id,
                play.event_id,
                1 if play.made else 2,
                play.period,
                f"{play.game_clock_release:.2f}",
                play.team_id,
                play.shooter_id,
                desc if play.made else f"MISS {desc}",
            )
        )
        if not play.made:
            reb = plan.players[play.rebounder_id]
            rows.append(
                (
                    game.game_id,
                    play.event_id + 1,
                    4,
                    play.period,
                    f"{max(play.game_clock_release - 1.5, 0.0):.2f}",
                    reb.team_id,
                    reb.player_id,
                    f"{reb.name} REBOUND",
                )
            )
    return pd.DataFrame(rows, columns=list(PBP_COLUMNS))


def bios_frame(plan: SeasonPlan) -> pd.DataFrame:
    rows = [
        (p.player_id, p.name, p.height_cm, p.weight_kg, int(p.experience_yr), p.position.value)
        for p in sorted(plan.players.values(), key=lambda p: p.player_id)
    ]
    return pd.DataFrame(rows, columns=list(BIO_COLUMNS))


def build_manifest(plan: SeasonPlan) -> dict[str, Any]:
    cfg = plan.config
    informative = [k for k, w in cfg.make_model.weights.items() if w != 0.0]
    attempts: dict[int, int] = {}
    makes: dict[int, int] = {}
    for _, play in plan.plays():
        attempts[play.shooter_id] = attempts.get(play.shooter_id, 0) + 1
        makes[play.shooter_id] = makes.get(play.shooter_id, 0) + int(play.made)
    games_played: dict[int, int] = {}
    for pid, _ in plan.games_index():
        games_played[pid] = games_played.get(pid, 0) + 1
    return {
        "schema": MANIFEST_SCHEMA,
        "schema_version": MANIFEST_VERSION,
        "seed": cfg.seed,
        "config": cfg.model_dump(mode="json"),
        "informative_features": informative,
        "noise_features": [c for c in MODEL_FEATURES if c not in informative and c != "shooter_enc"],
        "expected_plays": len(plan.plays()),
        "expected_drops": 0,
        "players": [
            {
                "player_id": p.player_id,
                "team_id": p.team_id,
                "name": p.name,
                "position": p.position.value,
                "skill": p.skill,
                "usage": p.usage,
                "usage_rate": p.usage_rate,
                "suppression": p.suppression,
                "boost": p.boost,
                "games_played": games_played.get(p.player_id, 0),
                "attempts": attempts.get(p.player_id, 0),
                "makes": makes.get(p.player_id, 0),
            }
            for p in sorted(plan.players.values(), key=lambda p: p.player_id)
        ],
        "games": [
            {
                "game_id": g.game_id,
                "home_team_id": g.home_team_id,
                "away_team_id": g.away_team_id,
                "first_half_right": {str(t): v for t, v in g.first_half_right.items()},
                "lineups": {str(t): list(ids) for t, ids in g.lineups.items()},
                "tracking_file": f"tracking/{g.game_id}.json",
            }
            for g in plan.games
        ],
        "plays": [
            {
                "game_id": g.game_id,
                "event_id": p.event_id,
                "shooter_id": p.shooter_id,
                "team_id": p.team_id,
                "period": p.period,
                "gap_ft": p.gap,
                "p_make": p.p_make,
                "made": p.made,
                "features": {k: v for k, v in p.truth.row().items() if k in MODEL_FEATURES and k != "shooter_enc"},
            }
            for g, p in plan.plays()
        ],
    }


def generate_season(config: SynthConfig, out_dir: str | Path, court: CourtSpec = DEFAULT_COURT) -> SeasonFiles:
    root = Path(out_dir)
    tracking_dir = root / "tracking"
    plan = plan_season(config, court)
    docs = Parallel(n_jobs=config.n_jobs, prefer="threads")(delayed(render_game)(g, config, court) for g in plan.games)
    for game, doc in zip(plan.games, docs):
        atomic_write_text(tracking_dir / f"{game.game_id}.json", json.dumps(doc, separators=(",", ":")))
    files = SeasonFiles(
        root=root,
        tracking_dir=tracking_dir,
        playbyplay=write_csv(playbyplay_frame(plan), root / "playbyplay.csv", float_format="%.2f"),
        bios=write_csv(bios_frame(plan), root / "bios.csv", float_format="%.1f"),
        manifest=atomic_write_json(root / "manifest.json", build_manifest(plan)),
        plan=plan,
    )
    logger.info(kv(step="generate_season", games=len(plan.games), plays=len(plan.plays()), out=root))
    return files


def manifest_feature_table(plan: SeasonPlan, folds: int = 5, smoothing: float = 10.0) -> pd.DataFrame:
    """FeatureTable built from ground truth, for player-model runs that skip rendering."""
    vectors = [p.truth for _, p in plan.plays() if p.truth is not None]
    return feature_frame(encode_shooters(vectors, folds, smoothing))


def sides_from_manifest(manifest: dict[str, Any]) -> dict[str, dict[int, bool]]:
    return {g["game_id"]: {int(t): bool(v) for t, v in g["first_half_right"].items()} for g in manifest["games"]}


def load_manifest(path: str | Path) -> dict[str, Any]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise VerificationError(f"cannot read manifest {path}: {e}") from e
    if doc.get("schema") != MANIFEST_SCHEMA or doc.get("schema_version") != MANIFEST_VERSION:
        raise VerificationError(f"unsupported manifest {doc.get('schema')} v{doc.get('schema_version')}")
    return doc


# ---------------------------------------------------------------------------
# planted-signal tables
# ---------------------------------------------------------------------------


PLANTED_WEIGHTS = {"ndd_median": -0.35, "off_hull_area_mean": 0.002}


def generate_planted_table(
    n_rows: int = 2000,
    seed: int = 0,
    intercept: float = 1.2,
    weights: dict[str, float] | None = None,
    n_noise: int = 6,
) -> pd.DataFrame:
    """Play-level table with made ~ logistic(intercept + weights . x) plus `n_noise` pure-noise columns."""
    if n_rows < 2:
        raise SynthError("need at least 2 rows")
    w = dict(PLANTED_WEIGHTS if weights is None else weights)
    unknown = sorted(set(w) - set(PLANTED_WEIGHTS))
    if unknown:
        raise SynthError(f"planted weights only cover {sorted(PLANTED_WEIGHTS)}, got {unknown}")
    rng = np.random.default_rng([seed, 3])
    cols = {
        "ndd_median": rng.uniform(1.0, 10.0, n_rows),
        "off_hull_area_mean": rng.uniform(300.0, 1200.0, n_rows),
    }
    for i in range(n_noise):
        cols[f"noise_{i + 1}"] = rng.normal(0.0, 1.0, n_rows)
    logit = intercept + sum(coef * cols[k] for k, coef in w.items())
    p = 1.0 / (1.0 + np.exp(-logit))
    df = pd.DataFrame(cols)
    df["made"] = (rng.random(n_rows) < p).astype(int)
    return df


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------


@dataclass
class VerificationReport:
    passed: bool
    features: dict[str, dict[str, float | bool]]
    reconciliation: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {"passed": self.passed, "features": self.features, "reconciliation": self.reconciliation}


def verify_manifest(
    table: pd.DataFrame,
    manifest: dict[str, Any],
    tolerances: VerifyTolerances | None = None,
) -> VerificationReport:
    tol = tolerances or VerifyTolerances()
    truth = {(str(p["game_id"]), int(p["event_id"])): p for p in manifest["plays"]}
    keys = list(zip(table["game_id"].astype(str), table["event_id"].astype(int)))
    unknown = [k for k in keys if k not in truth]
    if unknown:
        raise VerificationError(f"{len(unknown)} play(s) not in manifest, first {unknown[0][0]}/{unknown[0][1]}")

    shooter_mismatch = []
    made_mismatch = []
    errors: dict[str, list[float]] = {f: [] for f in tol.tolerances}
    for (gid, eid), row in zip(keys, table.to_dict(orient="records")):
        t = truth[(gid, eid)]
        if int(row["shooter_id"]) != int(t["shooter_id"]):
            shooter_mismatch.append(f"{gid}/{eid}")
        if bool(int(row["made"])) != bool(t["made"]):
            made_mismatch.append(f"{gid}/{eid}")
        for f in tol.tolerances:
            if f in t["features"] and f in row:
                errors[f].append(abs(float(row[f]) - float(t["features"][f])))

    expected = int(manifest["expected_plays"]) - int(manifest.get("expected_drops", 0))
    observed = len(keys)
    missing = sorted(f"{g}/{e}" for g, e in set(truth) - set(keys))
    recon_ok = observed == expected and not shooter_mismatch and not made_mismatch
    features: dict[str, dict[str, float | bool]] = {}
    for f, errs in errors.items():
        arr = np.asarray(errs, dtype=float)
        q = float(np.quantile(arr, tol.quantile)) if arr.size else float("nan")
        features[f] = {
            "quantile_error": q,
            "max_error": float(arr.max()) if arr.size else float("nan"),
            "tolerance": tol.tolerances[f],
            "passed": bool(arr.size) and q <= tol.tolerances[f],
        }
    passed = recon_ok and all(v["passed"] for v in features.values())
    report = VerificationReport(
        passed=passed,
        features=features,
        reconciliation={
            "passed": recon_ok,
            "expected": expected,
            "observed": observed,
            "missing": missing[:20],
            "missing_count": len(missing),
            "shooter_mismatch": len(shooter_mismatch),
            "made_mismatch": len(made_mismatch),
        },
    )
    logger.info(kv(step="verify", passed=passed, expected=expected, observed=observed))
    return report
