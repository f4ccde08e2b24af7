"""Player-level attempt-rate model: per-player aggregates, leave-one-out GBM scoring,
deviation (actual minus predicted 3PA per game) and propensity (deviation * 3P%^3).
"""
from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from app.errors import GbmError, PlayerModelError
from app.logging_utils import get_logger, kv
from app.schemas import GbmConfig, PlayerModelConfig
from app.services.features import FEATURE_COLUMNS
from app.services.gbm import GbmModel, rmse_r2, train_gbm

logger = get_logger("player_model")

AGGREGATE_FEATURES = tuple(c for c in FEATURE_COLUMNS if c not in ("made", "shooter_enc"))
PREDICTORS = (*AGGREGATE_FEATURES, "three_pct")
MIN_AGGREGATES = 10
MIN_TRAIN = 5

SCORE_COLUMNS = (
    "player_id",
    "name",
    "attempts",
    "three_pct",
    "actual_3pa_pg",
    "predicted_3pa_pg",
    "deviation",
    "propensity",
    "model_rmse",
    "model_r2",
)


@dataclass(frozen=True)
class PlayerAggregate:
    player_id: int
    name: str
    games_played: int
    attempts_total: int
    makes_total: int
    actual_3pa_per_game: float
    three_pct: float
    feature_means: dict[str, float] = field(default_factory=dict)

    def predictors(self) -> dict[str, float]:
        return {**{k: self.feature_means[k] for k in AGGREGATE_FEATURES}, "three_pct": self.three_pct}


@dataclass(frozen=True)
class PlayerScore:
    player_id: int
    name: str
    attempts: int
    three_pct: float
    actual_3pa_per_game: float
    predicted_3pa_per_game: float
    deviation: float
    propensity: float
    model_rmse_on_holdout: float
    model_r2_on_holdout: float
    split: str = "train"


@dataclass(frozen=True)
class LooModel:
    """Provenance of one fitted model: who it scores and which players it was trained on."""

    scored: tuple[int, ...]
    trained_on: tuple[int, ...]
    rmse: float
    r2: float
    loo: bool = True


@dataclass
class LooResult:
    scores: list[PlayerScore]
    models: list[LooModel]
    full_model: GbmModel | None = None

    def loo_models(self) -> list[LooModel]:
        return [m for m in self.models if m.loo]


def deviation(actual_3pa: float, predicted_3pa: float) -> float:
    return actual_3pa - predicted_3pa


def propensity(dev: float, three_pct: float) -> float:
    if not 0.0 <= three_pct <= 1.0:
        raise PlayerModelError(f"three_pct {three_pct} outside [0, 1]")
    return dev * three_pct**3


def aggregate_players(
    table: pd.DataFrame,
    games_index: Iterable[tuple[int, str]],
    min_attempts: int = 20,
    names: Mapping[int, str] | None = None,
) -> list[PlayerAggregate]:
    if table.empty:
        raise PlayerModelError("empty feature table")
    names = names or {}
    games: dict[int, set[str]] = {}
    for pid, gid in games_index:
        games.setdefault(int(pid), set()).add(str(gid))

    out: list[PlayerAggregate] = []
    skipped = 0
    for pid, rows in table.groupby("shooter_id", sort=True):
        pid = int(pid)
        attempts = len(rows)
        if attempts < min_attempts:
            skipped += 1
            logger.debug(kv(step="aggregate", player_id=pid, attempts=attempts, skipped="below_min_attempts"))
            continue
        played = games.get(pid)
        if not played:
            # shooter missing from the index; fall back to the games they shot in
            played = set(rows["game_id"].astype(str))
            logger.warning(kv(step="aggregate", player_id=pid, reason="not_in_games_index"))
        makes = int(rows["made"].astype(int).sum())
        out.append(
            PlayerAggregate(
                player_id=pid,
                name=names.get(pid, str(pid)),
                games_played=len(played),
                attempts_total=attempts,
                makes_total=makes,
                actual_3pa_per_game=attempts / len(played),
                three_pct=makes / attempts,
                feature_means={c: float(rows[c].astype(float).mean()) for c in AGGREGATE_FEATURES},
            )
        )
    logger.info(kv(step="aggregate", players=len(out), below_min_attempts=skipped, min_attempts=min_attempts))
    return out


def predictor_frame(aggregates: Sequence[PlayerAggregate]) -> pd.DataFrame:
    return pd.DataFrame([a.predictors() for a in aggregates], columns=list(PREDICTORS))


def split_train_test(
    aggregates: Sequence[PlayerAggregate],
    test_fraction: float = 0.2,
    seed: int = 0,
) -> tuple[list[PlayerAggregate], list[PlayerAggregate]]:
    if len(aggregates) < MIN_AGGREGATES:
        raise PlayerModelError(f"need at least {MIN_AGGREGATES} players, got {len(aggregates)}")
    if not 0.0 < test_fraction < 1.0:
        raise PlayerModelError(f"test_fraction {test_fraction} outside (0, 1)")
    ordered = sorted(aggregates, key=lambda a: a.player_id)
    perm = np.random.default_rng(seed).permutation(len(ordered))
    n_test = min(max(1, round(len(ordered) * test_fraction)), len(ordered) - 1)
    test = sorted((ordered[i] for i in perm[:n_test]), key=lambda a: a.player_id)
    train = sorted((ordered[i] for i in perm[n_test:]), key=lambda a: a.player_id)
    return train, test


def _fit(players: Sequence[PlayerAggregate], config: GbmConfig, scored: int | None) -> GbmModel:
    try:
        return train_gbm(predictor_frame(players), [a.actual_3pa_per_game for a in players], config)
    except GbmError as e:
        who = "full train set" if scored is None else f"player {scored}"
        raise PlayerModelError(f"gbm failed for {who}: {e}") from e


def _score(
    player: PlayerAggregate,
    predicted: float,
    rmse: float,
    r2: float,
    split: str,
) -> PlayerScore:
    dev = deviation(player.actual_3pa_per_game, predicted)
    return PlayerScore(
        player_id=player.player_id,
        name=player.name,
        attempts=player.attempts_total,
        three_pct=player.three_pct,
        actual_3pa_per_game=player.actual_3pa_per_game,
        predicted_3pa_per_game=predicted,
        deviation=dev,
        propensity=propensity(dev, player.three_pct),
        model_rmse_on_holdout=rmse,
        model_r2_on_holdout=r2,
        split=split,
    )


def _loo_one(
    i: int,
    train: Sequence[PlayerAggregate],
    holdout_X: pd.DataFrame,
    holdout_y: np.ndarray,
    config: GbmConfig,
) -> tuple[PlayerScore, LooModel]:
    target = train[i]
    rest = [a for j, a in enumerate(train) if j != i]
    model = _fit(rest, config, target.player_id)
    trained_on = tuple(a.player_id for a in rest)
    if target.player_id in trained_on:
        raise PlayerModelError(f"player {target.player_id} leaked into its own model")
    rmse, r2 = rmse_r2(holdout_y, model.predict_matrix(holdout_X))
    predicted = float(model.predict_matrix(predictor_frame([target]))[0])
    return (
        _score(target, predicted, rmse, r2, "train"),
        LooModel(scored=(target.player_id,), trained_on=trained_on, rmse=rmse, r2=r2),
    )


def loo_harness(
    train: Sequence[PlayerAggregate],
    holdout: Sequence[PlayerAggregate],
    config: GbmConfig | None = None,
    n_jobs: int = 1,
) -> LooResult:
    """One GBM per train player fit without that player; holdout players use the full-train model."""
    cfg = config or GbmConfig()
    if len(train) < MIN_TRAIN:
        raise PlayerModelError(f"need at least {MIN_TRAIN} train players, got {len(train)}")
    if not holdout:
        raise PlayerModelError("empty holdout set")
    overlap = {a.player_id for a in train} & {a.player_id for a in holdout}
    if overlap:
        raise PlayerModelError(f"players in both train and holdout: {sorted(overlap)}")
    train = sorted(train, key=lambda a: a.player_id)
    holdout = sorted(holdout, key=lambda a: a.player_id)
    hX = predictor_frame(holdout)
    hy = np.asarray([a.actual_3pa_per_game for a in holdout])

    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_loo_one)(i, train, hX, hy, cfg) for i in range(len(train))
    )
    scores = [s for s, _ in results]
    models = [m for _, m in results]

    full = _fit(train, cfg, None)
    preds = full.predict_matrix(hX)
    rmse, r2 = rmse_r2(hy, preds)
    scores.extend(_score(a, float(p), rmse, r2, "holdout") for a, p in zip(holdout, preds))
    models.append(
        LooModel(
            scored=tuple(a.player_id for a in holdout),
            trained_on=tuple(a.player_id for a in train),
            rmse=rmse,
            r2=r2,
            loo=False,
        )
    )
    r2s = np.asarray([m.r2 for m in models if m.loo])
    finite = r2s[np.isfinite(r2s)]
    logger.info(
        kv(
            step="loo_harness",
            train=len(train),
            holdout=len(holdout),
            r2_mean=f"{finite.mean():.4f}" if finite.size else "nan",
            r2_sd=f"{finite.std(ddof=1):.4f}" if finite.size > 1 else "nan",
        )
    )
    return LooResult(scores=sorted(scores, key=lambda s: s.player_id), models=models, full_model=full)


@dataclass(frozen=True)
class Ranking:
    ordered: list[PlayerScore]
    top_positive: list[PlayerScore]
    top_negative: list[PlayerScore]
    top_propensity: list[PlayerScore]
    bottom_propensity: list[PlayerScore]


def rank_players(scores: Sequence[PlayerScore], top_k: int = 10) -> Ranking:
    if not scores:
        raise PlayerModelError("no scores to rank")
    ordered = sorted(scores, key=lambda s: (-s.propensity, s.player_id))
    return Ranking(
        ordered=ordered,
        top_positive=sorted((s for s in scores if s.deviation > 0), key=lambda s: (-s.deviation, s.player_id))[:top_k],
        top_negative=sorted((s for s in scores if s.deviation < 0), key=lambda s: (s.deviation, s.player_id))[:top_k],
        top_propensity=ordered[:top_k],
        bottom_propensity=sorted(scores, key=lambda s: (s.propensity, s.player_id))[:top_k],
    )


def scores_frame(scores: Sequence[PlayerScore]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            (
                s.player_id,
                s.name,
                s.attempts,
                s.three_pct,
                s.actual_3pa_per_game,
                s.predicted_3pa_per_game,
                s.deviation,
                s.propensity,
                s.model_rmse_on_holdout,
                s.model_r2_on_holdout,
            )
            for s in scores
        ],
        columns=list(SCORE_COLUMNS),
    )


def metrics_frame(result: LooResult) -> pd.DataFrame:
    rows = [(m.scored[0], m.rmse, m.r2) for m in result.loo_models()]
    return pd.DataFrame(rows, columns=["player_id", "rmse", "r2"])


def run_player_model(
    table: pd.DataFrame,
    games_index: Iterable[tuple[int, str]],
    config: PlayerModelConfig | None = None,
    names: Mapping[int, str] | None = None,
) -> tuple[list[PlayerAggregate], LooResult, Ranking]:
    cfg = config or PlayerModelConfig()
    aggregates = aggregate_players(table, games_index, cfg.min_attempts, names)
    train, holdout = split_train_test(aggregates, cfg.test_fraction, cfg.seed)
    result = loo_harness(train, holdout, cfg.gbm, cfg.n_jobs)
    ranking = rank_players(result.scores, cfg.top_k)
    if any(not math.isfinite(s.deviation) for s in result.scores):
        raise PlayerModelError("non-finite deviation")
    return aggregates, result, ranking
