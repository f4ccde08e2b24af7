"""All-relevant feature selection with shuffled shadow features over the random forest."""
from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd
from scipy.stats import binom

from app.errors import BorutaError
from app.logging_utils import get_logger, kv
from app.schemas import BorutaConfig
from app.services.forest import permutation_importance, train_forest

logger = get_logger("boruta")

SHADOW_PREFIX = "shadow_"
SHADOW_AGGREGATES = ("shadow_min", "shadow_mean", "shadow_max")


class Decision(str, Enum):
    CONFIRMED = "Confirmed"
    REJECTED = "Rejected"
    TENTATIVE = "Tentative"


@dataclass
class ImportanceReport:
    features: tuple[str, ...]
    decisions: dict[str, Decision]
    hits: dict[str, int]
    runs_participated: dict[str, int]
    z_samples: dict[str, list[float]]
    shadow_max: list[float] = field(default_factory=list)
    shadow_mean: list[float] = field(default_factory=list)
    shadow_min: list[float] = field(default_factory=list)
    decided_at: dict[str, int] = field(default_factory=dict)
    # tentative features whose median z beats the median shadow max
    rough_fix: set[str] = field(default_factory=set)

    @property
    def runs(self) -> int:
        return len(self.shadow_max)

    def with_decision(self, decision: Decision) -> list[str]:
        return [f for f in self.features if self.decisions[f] is decision]

    def median_z(self, feature: str) -> float:
        z = np.asarray(self.z_samples[feature], dtype=float)
        return float(np.nanmedian(z)) if np.isfinite(z).any() else float("nan")


def minimum_decision_runs(alpha: float, n_features: int) -> int:
    """Fewest runs after which an all-hit feature can pass the Bonferroni-corrected test."""
    if not 0 < alpha < 1 or n_features < 1:
        raise BorutaError("alpha must be in (0, 1) and n_features >= 1")
    # all-hit p value after r runs is 0.5**r
    return max(1, math.ceil(math.log2(n_features / alpha) - 1e-12))


def z_scores(mean: np.ndarray, sd: np.ndarray, n_trees: int) -> np.ndarray:
    se = sd / math.sqrt(n_trees)
    out = np.zeros_like(mean, dtype=float)
    ok = sd > 0
    out[ok] = mean[ok] / se[ok]
    return out


def _shadow_frame(live: pd.DataFrame, rng: np.random.Generator) -> pd.DataFrame:
    cols = {}
    for name in live.columns:
        src = live[name].to_numpy(dtype=float)
        shuffled = rng.permutation(src)
        if not np.array_equal(np.sort(shuffled), np.sort(src)):
            raise BorutaError(f"shadow of {name} is not a permutation of its source")
        cols[SHADOW_PREFIX + name] = shuffled
    return pd.DataFrame(cols, index=live.index)


def decide(hits: int, runs: int, n_tentative: int, alpha: float) -> Decision:
    """Binomial test of the hit count against p = 0.5.

    Each side (confirm on many hits, reject on few) is held to alpha / n_tentative,
    the Bonferroni correction of the original Boruta and of boruta_py without two_step.
    A feature can pass at most one side, so the family-wise error per run stays below
    2 * alpha.
    """
    threshold = alpha / n_tentative
    if binom.sf(hits - 1, runs, 0.5) <= threshold:
        return Decision.CONFIRMED
    if binom.cdf(hits, runs, 0.5) <= threshold:
        return Decision.REJECTED
    return Decision.TENTATIVE


def run_boruta(
    table: pd.DataFrame,
    target: str,
    config: BorutaConfig | None = None,
    features: Sequence[str] | None = None,
) -> ImportanceReport:
    cfg = config or BorutaConfig()
    feats = tuple(features) if features is not None else tuple(c for c in table.columns if c != target)
    if len(feats) < 2:
        raise BorutaError("need at least 2 features")
    missing = [c for c in (*feats, target) if c not in table.columns]
    if missing:
        raise BorutaError(f"missing column {missing[0]}")
    if table[target].nunique() < 2:
        raise BorutaError("degenerate target")

    report = ImportanceReport(
        features=feats,
        decisions={f: Decision.TENTATIVE for f in feats},
        hits={f: 0 for f in feats},
        runs_participated={f: 0 for f in feats},
        z_samples={f: [] for f in feats},
    )
    n_trees = cfg.forest.n_trees

    for run in range(1, cfg.max_runs + 1):
        live = [f for f in feats if report.decisions[f] is not Decision.REJECTED]
        tentative = [f for f in live if report.decisions[f] is Decision.TENTATIVE]
        if not live or (not tentative and report.runs >= cfg.n_repeats):
            break

        rng = np.random.default_rng([cfg.seed, run])
        shadows = _shadow_frame(table[live], rng)
        work = pd.concat([table[live], shadows, table[[target]]], axis=1)
        forest_seed = int(np.random.SeedSequence([cfg.seed, run, 1]).generate_state(1, dtype=np.uint64)[0])
        forest_cfg = cfg.forest.model_copy(update={"seed": forest_seed})
        columns = [*live, *shadows.columns]
        forest = train_forest(work, target, forest_cfg, features=columns)
        imp = permutation_importance(forest, work, target)
        z = z_scores(imp.mean, imp.sd, n_trees)

        z_live = z[: len(live)]
        z_shadow = z[len(live) :]
        mzsa = float(z_shadow.max())
        report.shadow_max.append(mzsa)
        report.shadow_mean.append(float(z_shadow.mean()))
        report.shadow_min.append(float(z_shadow.min()))

        by_name = dict(zip(live, z_live))
        for f in feats:
            if f in by_name:
                report.z_samples[f].append(float(by_name[f]))
                report.runs_participated[f] += 1
                if by_name[f] > mzsa:
                    report.hits[f] += 1
            else:
                report.z_samples[f].append(float("nan"))

        for f in tentative:
            d = decide(report.hits[f], report.runs_participated[f], len(tentative), cfg.alpha)
            if d is not Decision.TENTATIVE:
                report.decisions[f] = d
                report.decided_at[f] = run

        logger.debug(
            kv(
                run=run,
                live=len(live),
                confirmed=len(report.with_decision(Decision.CONFIRMED)),
                rejected=len(report.with_decision(Decision.REJECTED)),
                shadow_max=f"{mzsa:.3f}",
            )
        )

    if report.runs == 0:
        raise BorutaError("no runs")
    shadow_median = float(np.median(report.shadow_max))
    report.rough_fix = {
        f for f in report.with_decision(Decision.TENTATIVE) if report.median_z(f) > shadow_median
    }
    logger.info(
        kv(
            step="boruta",
            runs=report.runs,
            confirmed=len(report.with_decision(Decision.CONFIRMED)),
            rejected=len(report.with_decision(Decision.REJECTED)),
            tentative=len(report.with_decision(Decision.TENTATIVE)),
        )
    )
    return report


def importance_distribution_export(report: ImportanceReport) -> pd.DataFrame:
    """Long format `feature, run, z` (runs numbered from 1), shadow aggregates as pseudo-features."""
    if report.runs == 0:
        raise BorutaError("no runs")
    rows: list[tuple[str, int, float]] = []
    for f in report.features:
        rows.extend((f, i + 1, z) for i, z in enumerate(report.z_samples[f]))
    for name, samples in zip(SHADOW_AGGREGATES, (report.shadow_min, report.shadow_mean, report.shadow_max)):
        rows.extend((name, i + 1, z) for i, z in enumerate(samples))
    return pd.DataFrame(rows, columns=["feature", "run", "z"])


def decisions_frame(report: ImportanceReport) -> pd.DataFrame:
    return pd.DataFrame(
        [
            (f, report.decisions[f].value, report.hits[f], report.runs_participated[f], report.median_z(f))
            for f in report.features
        ],
        columns=["feature", "decision", "hits", "runs", "median_z"],
    )
