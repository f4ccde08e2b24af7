"""Command-line entry point: `python -m app.cli <subcommand> [options]`.

Exit codes: 0 success, 1 verification failed, 2 pipeline error (one JSON line on stderr).
"""
from __future__ import annotations

import argparse
import json
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

import pandas as pd
from pydantic import ValidationError

from app.config import settings
from app.errors import ConfigError, FeatureError, InputError, PipelineError
from app.logging_utils import configure_logging, get_logger, kv
from app.schemas import RunConfig
from app.services import boruta, features, ingest, player_model, reports, synthgen

logger = get_logger("cli")

CONFIG_SECTIONS = ("segment", "features", "forest", "boruta", "gbm", "player_model", "synth", "verify")
ID_COLUMNS = set(features.ID_COLUMNS)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _load_toml(path: str | None) -> dict[str, Any]:
    if not path:
        return {}
    try:
        with open(path, "rb") as f:
            doc = tomllib.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"invalid TOML in {path}: {e}") from e
    unknown = sorted(set(doc) - set(CONFIG_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
    return doc


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """defaults < TOML file < CLI flags; the seed and thread count are pushed into every module."""
    doc = _load_toml(args.config)
    section = {name: dict(doc.get(name, {})) for name in CONFIG_SECTIONS}
    seed, threads = args.seed, args.threads

    segment = {
        "rim_height_ft": settings.rim_height_ft,
        "release_radius_ft": settings.release_radius_ft,
        "window_s": settings.window_s,
        "min_window_s": settings.min_window_s,
        **section["segment"],
    }
    if getattr(args, "rim_height", None) is not None:
        segment["rim_height_ft"] = args.rim_height
    if getattr(args, "release_radius", None) is not None:
        segment["release_radius_ft"] = args.release_radius

    boruta_cfg = section["boruta"]
    forest = {**boruta_cfg.pop("forest", {}), **section["forest"], "n_jobs": threads}
    if getattr(args, "trees", None) is not None:
        forest["n_trees"] = args.trees
    boruta_cfg = {**boruta_cfg, "seed": seed, "forest": forest}
    if getattr(args, "max_runs", None) is not None:
        boruta_cfg["max_runs"] = args.max_runs

    pm = section["player_model"]
    gbm = {**pm.pop("gbm", {}), **section["gbm"], "seed": seed}
    pm = {"min_attempts": settings.min_attempts, **pm, "seed": seed, "n_jobs": threads, "gbm": gbm}
    if getattr(args, "min_attempts", None) is not None:
        pm["min_attempts"] = args.min_attempts

    synth = {**section["synth"], "seed": seed, "n_jobs": threads}
    for flag, key in (("games", "n_games"), ("plays_per_game", "plays_per_game"), ("teams", "n_teams"), ("players_per_team", "n_players_per_team"), ("jitter", "jitter_ft")):
        value = getattr(args, flag, None)
        if value is not None:
            synth[key] = value

    try:
        return RunConfig(
            command=args.command,
            seed=seed,
            out_dir=args.out,
            threads=threads,
            deterministic=args.deterministic,
            log_level=args.log_level,
            segment=segment,
            features=section["features"],
            boruta=boruta_cfg,
            player_model=pm,
            synth=synth,
            verify=section["verify"],
        )
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e.errors()[0]['loc']} {e.errors()[0]['msg']}") from e


# ---------------------------------------------------------------------------
# input resolution
# ---------------------------------------------------------------------------


def _optional(path: Path) -> Path | None:
    return path if path.exists() else None


def _inputs(args: argparse.Namespace) -> tuple[Path, Path | None, Path | None]:
    data = Path(args.data)
    tracking = Path(args.tracking) if args.tracking else data / "tracking"
    pbp = Path(args.pbp) if args.pbp else _optional(data / "playbyplay.csv")
    bios = Path(args.bios) if args.bios else _optional(data / "bios.csv")
    return tracking, pbp, bios


def _sides(args: argparse.Namespace) -> dict[str, dict[int, bool]] | None:
    if not getattr(args, "sides_from_manifest", None):
        return None
    return synthgen.sides_from_manifest(synthgen.load_manifest(args.sides_from_manifest))


def _load(args: argparse.Namespace, cfg: RunConfig) -> tuple[ingest.Season, list]:
    tracking, pbp, bios = _inputs(args)
    season = ingest.load_season(
        tracking,
        pbp,
        bios,
        sides_override=_sides(args),
        config=cfg.segment,
        n_jobs=cfg.threads,
    )
    plays = [
        p
        for game in season.games
        for p in ingest.segment_three_point_plays(game, config=cfg.segment, stats=season.stats)
    ]
    return season, plays


def _summary(season: ingest.Season, plays: list) -> dict[str, Any]:
    stats = season.stats
    return {
        "games": len(season.games),
        "moments": sum(g.moment_count for g in season.games),
        "events": sum(len(g.events) for g in season.games),
        "bios": len(season.bios),
        "three_point_events": int(stats.counts["three_point_events"]),
        "plays_emitted": len(plays),
        "plays_dropped": ingest.plays_dropped(stats),
        **stats.as_dict(),
    }


def _write_games_index(season: ingest.Season, out: Path) -> Path:
    df = pd.DataFrame(season.games_index(), columns=["player_id", "game_id"])
    return reports.write_csv(df, out / "games_index.csv")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    if args.planted_rows:
        table = synthgen.generate_planted_table(
            n_rows=args.planted_rows,
            seed=cfg.seed,
            n_noise=cfg.synth.noise_features,
        )
        path = reports.write_csv(table, out / "planted.csv")
        logger.info(kv(step="synth", planted_rows=len(table), out=path))
        return 0
    files = synthgen.generate_season(cfg.synth, out)
    logger.info(kv(step="synth", games=len(files.plan.games), manifest=files.manifest))
    return 0


def cmd_ingest(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    season, plays = _load(args, cfg)
    summary = _summary(season, plays)
    reports.atomic_write_json(out / "ingest_summary.json", summary)
    _write_games_index(season, out)
    logger.info(kv(step="ingest", games=summary["games"], plays=summary["plays_emitted"], warnings=summary["total_warnings"]))
    return 0


def cmd_features(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    season, plays = _load(args, cfg)
    if not plays:
        raise FeatureError("no three-point events with sufficient window")
    table = features.assemble_dataset(plays, season.bios, cfg.features, stats=season.stats, n_jobs=cfg.threads)
    path = features.write_feature_table(table, out / "features.csv")
    reports.atomic_write_json(out / "ingest_summary.json", _summary(season, plays))
    _write_games_index(season, out)
    logger.info(kv(step="features", rows=len(table), out=path))
    return 0


def _feature_columns(table: pd.DataFrame, target: str, requested: str | None) -> list[str]:
    if requested:
        cols = [c.strip() for c in requested.split(",") if c.strip()]
    elif all(c in table.columns for c in features.MODEL_FEATURES):
        cols = list(features.MODEL_FEATURES)
    else:
        cols = [c for c in table.columns if c != target and c not in ID_COLUMNS]
    text = [c for c in cols if c in table.columns and not pd.api.types.is_numeric_dtype(table[c])]
    if text:
        raise FeatureError(f"feature column {text[0]} is not numeric")
    return cols


def cmd_importance(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    table_path = Path(args.table) if args.table else out / "features.csv"
    try:
        table = pd.read_csv(table_path, dtype={"game_id": str})
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FeatureError(f"cannot read feature table {table_path}: {e}") from e
    cols = _feature_columns(table, args.target, args.features)
    report = boruta.run_boruta(table, args.target, cfg.boruta, features=cols)

    reports.write_csv(boruta.decisions_frame(report), out / "boruta_decisions.csv")
    reports.write_csv(boruta.importance_distribution_export(report), out / "boruta_distribution.csv")
    order = sorted(report.features, key=lambda f: (report.median_z(f), f))
    groups = [
        (f"{f} [{report.decisions[f].value[0]}]", report.z_samples[f], reports.DECISION_COLORS[report.decisions[f].value])
        for f in order
    ]
    shadows = [
        ("shadow_min", report.shadow_min),
        ("shadow_mean", report.shadow_mean),
        ("shadow_max", report.shadow_max),
    ]
    groups = [(name, s, reports.DECISION_COLORS["shadow"]) for name, s in shadows] + groups
    reports.atomic_write_text(
        out / "boruta_importance.svg",
        reports.box_plot_svg(groups, "Boruta importance (z) by feature", deterministic=cfg.deterministic),
    )
    reports.atomic_write_json(
        out / "boruta_summary.json",
        {
            "runs": report.runs,
            "confirmed": report.with_decision(boruta.Decision.CONFIRMED),
            "rejected": report.with_decision(boruta.Decision.REJECTED),
            "tentative": report.with_decision(boruta.Decision.TENTATIVE),
            "rough_fix_confirmed": sorted(report.rough_fix),
            "decided_at": report.decided_at,
        },
    )
    return 0


def _names(path: Path | None) -> dict[int, str]:
    if path is None:
        return {}
    return {b.player_id: b.name for b in ingest.parse_player_bio(path)}


def _deviation_chart(rows: Sequence[player_model.PlayerScore], title: str, deterministic: bool) -> str:
    return reports.bar_chart_svg(
        [r.name for r in rows],
        [r.deviation for r in rows],
        [r.three_pct for r in rows],
        title,
        deterministic=deterministic,
    )


def cmd_playermodel(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    table = features.read_feature_table(Path(args.table) if args.table else out / "features.csv")
    gi_path = Path(args.games_index) if args.games_index else out / "games_index.csv"
    try:
        gi = pd.read_csv(gi_path, dtype={"game_id": str})
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FeatureError(f"cannot read games index {gi_path}: {e}") from e
    bios_path = Path(args.bios) if args.bios else _optional(Path(args.data) / "bios.csv")
    _, result, ranking = player_model.run_player_model(
        table,
        zip(gi["player_id"].astype(int), gi["game_id"].astype(str)),
        cfg.player_model,
        names=_names(bios_path),
    )

    reports.write_csv(player_model.scores_frame(ranking.ordered), out / "player_scores.csv")
    metrics = player_model.metrics_frame(result)
    reports.write_csv(metrics, out / "player_metrics.csv")
    reports.write_csv(player_model.scores_frame(ranking.top_positive), out / "top_positive_deviation.csv")
    reports.write_csv(player_model.scores_frame(ranking.top_negative), out / "top_negative_deviation.csv")
    reports.write_csv(player_model.scores_frame(ranking.top_propensity), out / "propensity_top.csv")
    reports.write_csv(player_model.scores_frame(ranking.bottom_propensity), out / "propensity_bottom.csv")
    if result.full_model is not None:
        imp = pd.DataFrame(sorted(result.full_model.feature_importance().items(), key=lambda kv_: (-kv_[1], kv_[0])), columns=["feature", "gain"])
        reports.write_csv(imp, out / "gbm_importance.csv")

    det = cfg.deterministic
    reports.atomic_write_text(out / "r2_hist.svg", reports.histogram_svg(metrics["r2"], "Holdout R^2 across player models", "R^2", deterministic=det))
    reports.atomic_write_text(out / "rmse_hist.svg", reports.histogram_svg(metrics["rmse"], "Holdout RMSE across player models", "RMSE", deterministic=det))
    reports.atomic_write_text(out / "top_positive_deviation.svg", _deviation_chart(ranking.top_positive, "Top positive deviators", det))
    reports.atomic_write_text(out / "top_negative_deviation.svg", _deviation_chart(ranking.top_negative, "Top negative deviators", det))
    reports.atomic_write_text(
        out / "propensity.svg",
        reports.bar_chart_svg(
            [s.name for s in ranking.ordered],
            [s.propensity for s in ranking.ordered],
            [s.three_pct for s in ranking.ordered],
            "Three-point propensity",
            deterministic=det,
        ),
    )
    logger.info(kv(step="playermodel", players=len(ranking.ordered), loo_models=len(result.loo_models())))
    return 0


def cmd_verify(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    table = features.read_feature_table(Path(args.table) if args.table else out / "features.csv")
    manifest = synthgen.load_manifest(args.manifest or Path(args.data) / "manifest.json")
    report = synthgen.verify_manifest(table, manifest, cfg.verify)
    reports.atomic_write_json(out / "verify_report.json", report.to_dict())
    if not report.passed:
        failed = [f for f, v in report.features.items() if not v["passed"]]
        logger.error(kv(step="verify", passed=False, failed_features=",".join(failed) or "-", reconciliation=report.reconciliation["passed"]))
        return 1
    return 0


COMMANDS: dict[str, Callable[[argparse.Namespace, RunConfig], int]] = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "features": cmd_features,
    "importance": cmd_importance,
    "playermodel": cmd_playermodel,
    "verify": cmd_verify,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _u64(raw: str) -> int:
    v = int(raw)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_u64, default=settings.seed, help="Master seed for every random stream")
    common.add_argument("--out", default=settings.out_dir, help="Output directory")
    common.add_argument("--threads", type=int, default=settings.threads, help="Worker threads")
    common.add_argument("--deterministic", action="store_true", help="Omit timestamps from SVG output")
    common.add_argument("--log-level", default=settings.log_level, choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--config", default=None, help="TOML config file with module sections")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", default=settings.data_dir, help="Season directory (tracking/, playbyplay.csv, bios.csv)")
    data.add_argument("--tracking", default=None, help="Tracking file or directory (default <data>/tracking)")
    data.add_argument("--pbp", default=None, help="Play-by-play CSV (default <data>/playbyplay.csv)")
    data.add_argument("--bios", default=None, help="Player bio CSV (default <data>/bios.csv)")
    data.add_argument("--sides-from-manifest", default=None, help="Take attacking sides from a synth manifest")
    data.add_argument("--rim-height", type=float, default=None)
    data.add_argument("--release-radius", type=float, default=None)

    parser = argparse.ArgumentParser(prog="threept", description="Three-point tracking analytics pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="Generate a synthetic season")
    p.add_argument("--games", type=int, default=None)
    p.add_argument("--plays-per-game", type=int, default=None)
    p.add_argument("--teams", type=int, default=None)
    p.add_argument("--players-per-team", type=int, default=None)
    p.add_argument("--jitter", type=float, default=None)
    p.add_argument("--planted-rows", type=int, default=0, help="Write a planted-signal play table instead of a season")

    sub.add_parser("ingest", parents=[common, data], help="Parse, join and segment a season")
    sub.add_parser("features", parents=[common, data], help="Build the per-play feature table")

    p = sub.add_parser("importance", parents=[common], help="Boruta feature selection")
    p.add_argument("--table", default=None, help="Feature table CSV (default <out>/features.csv)")
    p.add_argument("--target", default="made")
    p.add_argument("--features", default=None, help="Comma-separated feature columns")
    p.add_argument("--trees", type=int, default=None)
    p.add_argument("--max-runs", type=int, default=None)

    p = sub.add_parser("playermodel", parents=[common], help="Leave-one-out player model and rankings")
    p.add_argument("--table", default=None)
    p.add_argument("--games-index", default=None)
    p.add_argument("--data", default=settings.data_dir)
    p.add_argument("--bios", default=None)
    p.add_argument("--min-attempts", type=int, default=None)

    p = sub.add_parser("verify", parents=[common], help="Compare a feature table with a synth manifest")
    p.add_argument("--table", default=None)
    p.add_argument("--data", default=settings.data_dir)
    p.add_argument("--manifest", default=None)
    return parser


def _dispatch(args: argparse.Namespace) -> int:
    cfg = build_run_config(args)
    logger.info(kv(step="start", command=cfg.command, seed=cfg.seed, threads=cfg.threads, out=cfg.out_dir))
    try:
        return COMMANDS[cfg.command](args, cfg)
    except (ValueError, KeyError, OSError) as e:
        raise InputError(f"{type(e).__name__}: {e}") from e


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return _dispatch(args)
    except PipelineError as e:
        logger.error(kv(step=args.command, error=e.code))
        print(json.dumps({"error": e.code, "message": str(e)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
