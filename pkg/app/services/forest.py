"""Random forest classifier: bootstrap gini trees, out-of-bag scoring, permutation importance.

Every tree draws from its own stream `default_rng([seed, tree_index])` and permutation
importance from `default_rng([seed, tree_index, 1])`, so results do not depend on how
trees are spread over workers.
"""
from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from app.errors import ForestError
from app.logging_utils import get_logger, kv
from app.schemas import ForestConfig
from app.services.tree import Tree, build_tree

logger = get_logger("forest")

FOREST_FORMAT = "threept-forest"
FOREST_VERSION = 1


@dataclass
class Forest:
    trees: list[Tree]
    oob: list[np.ndarray]
    columns: tuple[str, ...]
    config: ForestConfig
    mtry: int
    n_rows: int

    def _matrix(self, rows: pd.DataFrame | np.ndarray) -> np.ndarray:
        if isinstance(rows, pd.DataFrame):
            missing = [c for c in self.columns if c not in rows.columns]
            if missing:
                raise ForestError(f"missing column {missing[0]}")
            return rows.loc[:, list(self.columns)].to_numpy(dtype=float)
        X = np.asarray(rows, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.columns):
            raise ForestError(f"expected {len(self.columns)} columns, got shape {X.shape}")
        return X

    def tree_outputs(self, X: np.ndarray) -> np.ndarray:
        """(n_trees, n_rows) leaf positive-class fractions."""
        return np.vstack([t.predict(X) for t in self.trees])

    def predict_proba_matrix(self, rows: pd.DataFrame | np.ndarray) -> np.ndarray:
        return self.tree_outputs(self._matrix(rows)).mean(axis=0)

    def predict_proba(self, row: Mapping[str, float]) -> float:
        for c in self.columns:
            if c not in row:
                raise ForestError(f"missing column {c}")
        x = np.asarray([[float(row[c]) for c in self.columns]])
        return float(self.tree_outputs(x).mean())

    def oob_fraction(self) -> float:
        return float(np.mean([len(o) for o in self.oob]) / self.n_rows)


@dataclass(frozen=True)
class ImportanceResult:
    columns: tuple[str, ...]
    per_tree: np.ndarray  # (n_trees, n_features)
    mean: np.ndarray
    sd: np.ndarray

    def as_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"feature": self.columns, "importance": self.mean, "sd": self.sd})


def _xy(table: pd.DataFrame, target: str, features: Sequence[str] | None) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    if target not in table.columns:
        raise ForestError(f"missing column {target}")
    columns = tuple(features) if features is not None else tuple(c for c in table.columns if c != target)
    missing = [c for c in columns if c not in table.columns]
    if missing:
        raise ForestError(f"missing column {missing[0]}")
    if not columns:
        raise ForestError("no feature columns")
    X = table.loc[:, list(columns)].to_numpy(dtype=float)
    y = table[target].to_numpy(dtype=float)
    if not np.isfinite(X).all():
        bad = [c for c, ok in zip(columns, np.isfinite(X).all(axis=0)) if not ok]
        raise ForestError(f"non-finite values in column {bad[0]}")
    return X, y, columns


def resolve_mtry(config: ForestConfig, p: int) -> int:
    mtry = config.mtry if config.mtry is not None else max(1, math.isqrt(p))
    if not 1 <= mtry <= p:
        raise ForestError(f"mtry {mtry} outside [1, {p}]")
    return mtry


def _grow(X: np.ndarray, y: np.ndarray, config: ForestConfig, mtry: int, t: int) -> tuple[Tree, np.ndarray]:
    n = X.shape[0]
    rng = np.random.default_rng([config.seed, t])
    boot = rng.integers(0, n, size=n)
    in_bag = np.zeros(n, dtype=bool)
    in_bag[boot] = True
    tree = build_tree(
        X[boot],
        y[boot],
        criterion="gini",
        min_leaf=config.min_leaf,
        max_depth=config.max_depth,
        mtry=mtry,
        rng=rng,
    )
    return tree, np.flatnonzero(~in_bag)


def _chunks(n: int, k: int) -> list[range]:
    k = max(1, min(k, n))
    bounds = np.linspace(0, n, k + 1).astype(int)
    return [range(int(a), int(b)) for a, b in zip(bounds, bounds[1:]) if b > a]


def _grow_chunk(X, y, config, mtry, ts: range) -> list[tuple[Tree, np.ndarray]]:
    return [_grow(X, y, config, mtry, t) for t in ts]


def train_forest(
    table: pd.DataFrame,
    target: str,
    config: ForestConfig | None = None,
    features: Sequence[str] | None = None,
) -> Forest:
    cfg = config or ForestConfig()
    X, y, columns = _xy(table, target, features)
    if X.shape[0] < 2:
        raise ForestError("need at least 2 rows")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ForestError(f"target {target} must be 0/1")
    if y.min() == y.max():
        raise ForestError("degenerate target")
    mtry = resolve_mtry(cfg, X.shape[1])

    parts = Parallel(n_jobs=cfg.n_jobs, prefer="threads")(
        delayed(_grow_chunk)(X, y, cfg, mtry, ts) for ts in _chunks(cfg.n_trees, cfg.n_jobs)
    )
    grown = [item for part in parts for item in part]
    forest = Forest(
        trees=[t for t, _ in grown],
        oob=[o for _, o in grown],
        columns=columns,
        config=cfg,
        mtry=mtry,
        n_rows=X.shape[0],
    )
    logger.debug(kv(step="train_forest", trees=cfg.n_trees, rows=X.shape[0], features=len(columns), mtry=mtry))
    return forest


def oob_score(forest: Forest, table: pd.DataFrame, target: str) -> float:
    """Accuracy of the out-of-bag majority vote over rows that are out of bag for at least one tree."""
    X, y, _ = _xy(table, target, forest.columns)
    total = np.zeros(X.shape[0])
    count = np.zeros(X.shape[0])
    for tree, oob in zip(forest.trees, forest.oob):
        if len(oob):
            total[oob] += tree.predict(X[oob])
            count[oob] += 1
    seen = count > 0
    if not seen.any():
        raise ForestError("no out-of-bag rows")
    pred = (total[seen] / count[seen]) > 0.5
    return float(np.mean(pred == (y[seen] > 0.5)))


def _tree_importance(tree: Tree, oob: np.ndarray, X: np.ndarray, y: np.ndarray, seed: int, t: int) -> np.ndarray:
    p = X.shape[1]
    out = np.zeros(p)
    if len(oob) == 0:
        return out
    Xo = X[oob]
    yo = y[oob] > 0.5
    base = float(np.mean((tree.predict(Xo) > 0.5) != yo))
    rng = np.random.default_rng([seed, t, 1])
    # features the tree never splits on keep exactly 0
    for j in sorted(tree.used_features()):
        Xp = Xo.copy()
        Xp[:, j] = rng.permutation(Xp[:, j])
        out[j] = float(np.mean((tree.predict(Xp) > 0.5) != yo)) - base
    return out


def _importance_chunk(forest: Forest, X, y, seed: int, ts: range) -> list[np.ndarray]:
    return [_tree_importance(forest.trees[t], forest.oob[t], X, y, seed, t) for t in ts]


def permutation_importance(
    forest: Forest,
    table: pd.DataFrame,
    target: str,
    seed: int | None = None,
) -> ImportanceResult:
    """Per-tree OOB error increase when one column is shuffled within the tree's OOB rows."""
    X, y, columns = _xy(table, target, forest.columns)
    if X.shape[0] != forest.n_rows:
        raise ForestError(f"table has {X.shape[0]} rows, forest was trained on {forest.n_rows}")
    s = forest.config.seed if seed is None else seed
    n_jobs = forest.config.n_jobs
    parts = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_importance_chunk)(forest, X, y, s, ts) for ts in _chunks(len(forest.trees), n_jobs)
    )
    per_tree = np.vstack([row for part in parts for row in part])
    mean = per_tree.mean(axis=0)
    sd = per_tree.std(axis=0, ddof=1) if per_tree.shape[0] > 1 else np.zeros(per_tree.shape[1])
    return ImportanceResult(columns=columns, per_tree=per_tree, mean=mean, sd=sd)


def forest_to_dict(forest: Forest) -> dict[str, Any]:
    return {
        "format": FOREST_FORMAT,
        "version": FOREST_VERSION,
        "config": forest.config.model_dump(),
        "columns": list(forest.columns),
        "mtry": forest.mtry,
        "n_rows": forest.n_rows,
        "trees": [{**t.to_dict(), "oob": o.tolist()} for t, o in zip(forest.trees, forest.oob)],
    }


def forest_from_dict(doc: dict[str, Any]) -> Forest:
    if doc.get("format") != FOREST_FORMAT or doc.get("version") != FOREST_VERSION:
        raise ForestError(f"unsupported forest document {doc.get('format')} v{doc.get('version')}")
    return Forest(
        trees=[Tree.from_dict(t) for t in doc["trees"]],
        oob=[np.asarray(t["oob"], dtype=np.int64) for t in doc["trees"]],
        columns=tuple(doc["columns"]),
        config=ForestConfig(**doc["config"]),
        mtry=int(doc["mtry"]),
        n_rows=int(doc["n_rows"]),
    )
