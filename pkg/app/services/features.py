"""Per-play feature vectors and the FeatureTable CSV contract.

One row per three-point play: defender distance over the pre-release window, team
spacing (hull areas), ball movement, shot timing and location, the shooter/defender
physical matchup, and an out-of-fold encoding of the shooter's make rate.
"""
from __future__ import annotations

import hashlib
import math
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from app.errors import FeatureError
from app.logging_utils import get_logger, kv
from app.schemas import FeatureConfig
from app.services.core_model import DEFAULT_COURT, CourtSpec, Moment, PlayerBio, ThreePointPlay
from app.services.geometry import distance, hull_area, nearest_opponent, path_length
from app.services.ingest import IngestStats
from app.services.reports import atomic_write_text

logger = get_logger("features")

ID_COLUMNS = ("game_id", "event_id", "shooter_id")
FEATURE_COLUMNS = (
    "ndd_median",
    "ndd_min",
    "ndd_mean",
    "ndd_release",
    "off_hull_area_mean",
    "def_hull_area_mean",
    "ball_path_len",
    "ball_mean_speed",
    "touch_changes",
    "shooter_path_len",
    "shot_clock_release",
    "game_clock_release",
    "period",
    "shot_dist",
    "corner_flag",
    "height_diff_cm",
    "weight_diff_kg",
    "exp_diff_yr",
    "pos_match",
    "shooter_enc",
    "made",
)
MODEL_FEATURES = tuple(c for c in FEATURE_COLUMNS if c != "made")
INT_COLUMNS = ("event_id", "shooter_id", "touch_changes", "period", "corner_flag", "pos_match", "made")
TABLE_COLUMNS = ID_COLUMNS + FEATURE_COLUMNS

SHOT_CLOCK_RESET_S = 24.0
MIN_THREE_DIST_FT = 20.0
# allowance for tracking jitter on the arc
THREE_DIST_SLACK_FT = 1.0


@dataclass(frozen=True)
class FeatureVector:
    game_id: str
    event_id: int
    shooter_id: int
    ndd_median: float
    ndd_min: float
    ndd_mean: float
    ndd_release: float
    off_hull_area_mean: float
    def_hull_area_mean: float
    ball_path_len: float
    ball_mean_speed: float
    touch_changes: int
    shooter_path_len: float
    shot_clock_release: float
    game_clock_release: float
    period: int
    shot_dist: float
    corner_flag: int
    height_diff_cm: float
    weight_diff_kg: float
    exp_diff_yr: float
    pos_match: int
    shooter_enc: float
    made: bool
    matchup_imputed: bool = False

    def row(self) -> dict[str, object]:
        d = asdict(self)
        d.pop("matchup_imputed")
        d["made"] = int(self.made)
        return d


def _defender_distances(window: Sequence[Moment], shooter_id: int, team_id: int) -> np.ndarray:
    out = np.empty(len(window))
    for i, m in enumerate(window):
        shooter = m.position_of(shooter_id)
        opponents = [(p.x, p.y) for p in m.opponents_of(team_id)]
        _, out[i] = nearest_opponent(shooter, opponents)
    return out


def count_touch_changes(window: Sequence[Moment], team_id: int, hysteresis_ft: float = 1.5) -> int:
    """Changes of the offensive player nearest the ball; a challenger must be closer by `hysteresis_ft`."""
    holder: int | None = None
    changes = 0
    for m in window:
        offense = sorted((p for p in m.players if p.team_id == team_id), key=lambda p: p.player_id)
        dist = {p.player_id: math.hypot(m.ball[0] - p.x, m.ball[1] - p.y) for p in offense}
        nearest = min(dist, key=lambda pid: (dist[pid], pid))
        if holder is None or holder not in dist:
            holder = nearest
            continue
        if nearest != holder and dist[nearest] + hysteresis_ft < dist[holder]:
            holder = nearest
            changes += 1
    return changes


def _is_corner(x: float, basket_x: float, court: CourtSpec) -> bool:
    if basket_x > court.length / 2.0:
        return x >= court.length - court.corner_zone_depth
    return x <= court.corner_zone_depth


def extract_features(
    play: ThreePointPlay,
    bios: Mapping[int, PlayerBio],
    court: CourtSpec = DEFAULT_COURT,
    config: FeatureConfig | None = None,
    stats: IngestStats | None = None,
) -> FeatureVector:
    cfg = config or FeatureConfig()
    window = play.window
    if len(window) < 2:
        raise FeatureError(f"play {play.game_id}/{play.event_id}: window has {len(window)} frame(s)")
    team = play.shooter_team_id
    release = play.release

    ndd = _defender_distances(window, play.shooter_id, team)
    ball_xy = np.asarray([m.ball[:2] for m in window])
    shooter_xy = np.asarray([m.position_of(play.shooter_id) for m in window])
    ball_len = path_length(ball_xy)
    duration = play.duration_s

    shooter_at = release.position_of(play.shooter_id)
    shot_dist = distance(shooter_at, play.attacking_basket)
    if shot_dist < MIN_THREE_DIST_FT - THREE_DIST_SLACK_FT:
        raise FeatureError(f"play {play.game_id}/{play.event_id}: shot distance {shot_dist:.2f} ft inside the arc")

    defenders = release.opponents_of(team)
    d_idx, _ = nearest_opponent(shooter_at, [(p.x, p.y) for p in defenders])
    defender_id = defenders[d_idx].player_id
    sb, db = bios.get(play.shooter_id), bios.get(defender_id)
    imputed = sb is None or db is None
    if imputed:
        if stats is not None:
            stats.warn("bio_missing", f"{play.game_id}:{play.event_id}")
        height = weight = exp = 0.0
        pos_match = 0
    else:
        height = sb.height_cm - db.height_cm
        weight = sb.weight_kg - db.weight_kg
        exp = sb.experience_yr - db.experience_yr
        pos_match = int(sb.position is db.position)

    return FeatureVector(
        game_id=play.game_id,
        event_id=play.event_id,
        shooter_id=play.shooter_id,
        ndd_median=float(np.median(ndd)),
        ndd_min=float(ndd.min()),
        ndd_mean=float(ndd.mean()),
        ndd_release=float(ndd[play.release_index]),
        off_hull_area_mean=float(np.mean([hull_area(m.team_positions(team)) for m in window])),
        def_hull_area_mean=float(np.mean([hull_area([(p.x, p.y) for p in m.opponents_of(team)]) for m in window])),
        ball_path_len=ball_len,
        ball_mean_speed=ball_len / duration if duration > 0 else 0.0,
        touch_changes=count_touch_changes(window, team, cfg.touch_hysteresis_ft),
        shooter_path_len=path_length(shooter_xy),
        shot_clock_release=SHOT_CLOCK_RESET_S if release.shot_clock_s is None else float(release.shot_clock_s),
        game_clock_release=float(release.game_clock_s),
        period=int(release.period),
        shot_dist=shot_dist,
        corner_flag=int(_is_corner(shooter_at[0], play.attacking_basket[0], court)),
        height_diff_cm=height,
        weight_diff_kg=weight,
        exp_diff_yr=exp,
        pos_match=pos_match,
        shooter_enc=float("nan"),
        made=play.made,
        matchup_imputed=imputed,
    )


def fold_of(game_id: str, event_id: int, folds: int) -> int:
    digest = hashlib.sha1(f"{game_id}:{event_id}".encode("utf-8")).hexdigest()
    return int(digest, 16) % folds


def encode_shooters(vectors: Sequence[FeatureVector], folds: int = 5, smoothing: float = 10.0) -> list[FeatureVector]:
    """Fill shooter_enc with the shooter's smoothed make rate computed outside the row's fold.

    shooter_enc = (makes_excl + m * overall_rate) / (attempts_excl + m), where the excluded
    counts leave out the row's own fold and overall_rate is the make rate of the whole
    table. A shooter with no attempts outside the fold gets the overall rate.
    """
    if folds < 2:
        raise FeatureError("folds must be >= 2")
    if not vectors:
        return []
    fold = np.asarray([fold_of(v.game_id, v.event_id, folds) for v in vectors])
    shooters = np.asarray([v.shooter_id for v in vectors])
    made = np.asarray([float(v.made) for v in vectors])
    overall = float(made.mean())

    out: list[tuple[int, FeatureVector]] = []
    for k_fold in range(folds):
        rows = np.flatnonzero(fold == k_fold)
        if rows.size == 0:
            continue
        outside = fold != k_fold
        for i in rows:
            mine = outside & (shooters == shooters[i])
            attempts = float(mine.sum())
            makes = float(made[mine].sum())
            if attempts == 0:
                enc = overall
            else:
                enc = (makes + smoothing * overall) / (attempts + smoothing)
            out.append((i, replace(vectors[i], shooter_enc=enc)))
    out.sort(key=lambda t: t[0])
    return [v for _, v in out]


def _safe_extract(play, bios, court, cfg) -> tuple[FeatureVector | None, str, list[str]]:
    local = IngestStats()
    try:
        vec = extract_features(play, bios, court, cfg, local)
    except (FeatureError, ValueError) as e:
        return None, str(e), []
    return vec, "", list(local.warnings.elements())


def assemble_dataset(
    plays: Sequence[ThreePointPlay],
    bios: Mapping[int, PlayerBio],
    config: FeatureConfig | None = None,
    court: CourtSpec = DEFAULT_COURT,
    stats: IngestStats | None = None,
    n_jobs: int = 1,
) -> pd.DataFrame:
    cfg = config or FeatureConfig()
    stats = stats if stats is not None else IngestStats()
    if not plays:
        raise FeatureError("empty dataset")
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_safe_extract)(p, bios, court, cfg) for p in plays
    )
    vectors: list[FeatureVector] = []
    for play, (vec, err, warned) in zip(plays, results):
        where = f"{play.game_id}:{play.event_id}"
        for reason in warned:
            stats.warn(reason, where)
        if vec is None:
            stats.warn("feature_failed", f"{where} {err}")
            continue
        vectors.append(vec)
    if not vectors:
        raise FeatureError("empty dataset")
    encoded = encode_shooters(vectors, cfg.folds, cfg.smoothing)
    stats.counts["feature_rows"] += len(encoded)
    logger.info(kv(step="assemble_dataset", plays=len(plays), rows=len(encoded)))
    return feature_frame(encoded)


def feature_frame(vectors: Sequence[FeatureVector]) -> pd.DataFrame:
    df = pd.DataFrame([v.row() for v in vectors], columns=list(TABLE_COLUMNS))
    for c in INT_COLUMNS:
        df[c] = df[c].astype("int64")
    df["game_id"] = df["game_id"].astype(str)
    return df


def write_feature_table(df: pd.DataFrame, path: str | Path) -> Path:
    missing = [c for c in TABLE_COLUMNS if c not in df.columns]
    if missing:
        raise FeatureError(f"feature table missing column {missing[0]}")
    text = df.loc[:, list(TABLE_COLUMNS)].to_csv(index=False, float_format="%.6f", lineterminator="\n")
    return atomic_write_text(path, text)


def read_feature_table(path: str | Path) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, dtype={"game_id": str})
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FeatureError(f"cannot read feature table {path}: {e}") from e
    missing = [c for c in TABLE_COLUMNS if c not in df.columns]
    if missing:
        raise FeatureError(f"feature table {path} missing column {missing[0]}")
    if df.empty:
        raise FeatureError("empty dataset")
    return df
