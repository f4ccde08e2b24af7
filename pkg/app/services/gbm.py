from __future__ import annotations

import math
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd

from app.errors import GbmError
from app.logging_utils import get_logger, kv
from app.schemas import GbmConfig
from app.services.tree import Tree, build_tree

logger = get_logger("gbm")

GBM_FORMAT = "threept-gbm"
GBM_VERSION = 1
# relative slack when checking the full-sample loss never goes up
LOSS_SLACK = 1e-9


@dataclass
class GbmModel:
    """Squared-error boosting: prediction = base + learning_rate * sum of tree leaf values."""

    base: float
    trees: list[Tree]
    columns: tuple[str, ...]
    config: GbmConfig
    loss_trace: list[float] = field(default_factory=list)

    def _matrix(self, rows: pd.DataFrame | np.ndarray) -> np.ndarray:
        if isinstance(rows, pd.DataFrame):
            missing = [c for c in self.columns if c not in rows.columns]
            if missing:
                raise GbmError(f"missing column {missing[0]}")
            return rows.loc[:, list(self.columns)].to_numpy(dtype=float)
        X = np.asarray(rows, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.columns):
            raise GbmError(f"expected {len(self.columns)} columns, got shape {X.shape}")
        return X

    def predict_matrix(self, rows: pd.DataFrame | np.ndarray) -> np.ndarray:
        X = self._matrix(rows)
        out = np.full(X.shape[0], self.base)
        for tree in self.trees:
            out += self.config.learning_rate * tree.predict(X)
        return out

    def predict(self, row: Mapping[str, float]) -> float:
        for c in self.columns:
            if c not in row:
                raise GbmError(f"missing column {c}")
        x = np.asarray([[float(row[c]) for c in self.columns]])
        return float(self.predict_matrix(x)[0])

    def staged_predict(self, rows: pd.DataFrame | np.ndarray) -> Iterator[np.ndarray]:
        """Predictions after 0, 1, ..., len(trees) trees."""
        X = self._matrix(rows)
        out = np.full(X.shape[0], self.base)
        yield out.copy()
        for tree in self.trees:
            out += self.config.learning_rate * tree.predict(X)
            yield out.copy()

    def feature_importance(self) -> dict[str, float]:
        total = np.zeros(len(self.columns))
        for tree in self.trees:
            internal = tree.feature >= 0
            np.add.at(total, tree.feature[internal], tree.gain[internal])
        s = total.sum()
        if s > 0:
            total = total / s
        return dict(zip(self.columns, (float(v) for v in total)))


def train_gbm(
    rows: pd.DataFrame,
    target: Sequence[float] | np.ndarray | pd.Series,
    config: GbmConfig | None = None,
) -> GbmModel:
    cfg = config or GbmConfig()
    if len(rows) == 0:
        raise GbmError("empty input")
    X = rows.to_numpy(dtype=float)
    y = np.asarray(target, dtype=float)
    if y.shape[0] != X.shape[0]:
        raise GbmError(f"{X.shape[0]} rows but {y.shape[0]} targets")
    if X.shape[0] < 2:
        raise GbmError("need at least 2 rows")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise GbmError("non-finite values in training data")

    n = X.shape[0]
    base = float(y.mean())
    F = np.full(n, base)
    trees: list[Tree] = []
    losses: list[float] = []
    prev = float(np.mean((y - F) ** 2))
    m = max(1, min(n, round(cfg.subsample * n)))
    for t in range(cfg.n_iters):
        if m < n:
            rng = np.random.default_rng([cfg.seed, t])
            idx = np.sort(rng.choice(n, size=m, replace=False))
        else:
            idx = np.arange(n)
        residual = y - F
        tree = build_tree(
            X[idx],
            residual[idx],
            criterion="variance",
            min_leaf=cfg.min_leaf,
            max_depth=cfg.max_depth,
        )
        F = F + cfg.learning_rate * tree.predict(X)
        loss = float(np.mean((y - F) ** 2))
        if m == n and loss > prev + LOSS_SLACK * max(1.0, prev):
            raise GbmError(f"training loss increased at iteration {t}: {prev:.6g} -> {loss:.6g}")
        trees.append(tree)
        losses.append(loss)
        prev = loss

    logger.debug(kv(step="train_gbm", rows=n, iters=len(trees), final_loss=f"{prev:.6g}"))
    return GbmModel(base=base, trees=trees, columns=tuple(str(c) for c in rows.columns), config=cfg, loss_trace=losses)


def rmse_r2(y_true: Sequence[float] | np.ndarray, y_pred: Sequence[float] | np.ndarray) -> tuple[float, float]:
    yt = np.asarray(y_true, dtype=float)
    yp = np.asarray(y_pred, dtype=float)
    if yt.shape != yp.shape:
        raise GbmError(f"length mismatch: {yt.shape[0]} vs {yp.shape[0]}")
    if yt.size == 0:
        raise GbmError("empty input")
    sse = float(np.sum((yt - yp) ** 2))
    sst = float(np.sum((yt - yt.mean()) ** 2))
    rmse = math.sqrt(sse / yt.size)
    if sst == 0.0:
        return rmse, 1.0 if sse == 0.0 else float("-inf")
    return rmse, 1.0 - sse / sst


def gbm_to_dict(model: GbmModel) -> dict[str, Any]:
    return {
        "format": GBM_FORMAT,
        "version": GBM_VERSION,
        "config": model.config.model_dump(),
        "columns": list(model.columns),
        "base": model.base,
        "trees": [t.to_dict() for t in model.trees],
        "loss_trace": model.loss_trace,
    }


def gbm_from_dict(doc: dict[str, Any]) -> GbmModel:
    if doc.get("format") != GBM_FORMAT or doc.get("version") != GBM_VERSION:
        raise GbmError(f"unsupported gbm document {doc.get('format')} v{doc.get('version')}")
    return GbmModel(
        base=float(doc["base"]),
        trees=[Tree.from_dict(t) for t in doc["trees"]],
        columns=tuple(doc["columns"]),
        config=GbmConfig(**doc["config"]),
        loss_trace=[float(v) for v in doc.get("loss_trace", [])],
    )
