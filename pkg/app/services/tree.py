"""Axis-aligned binary CART shared by the forest (gini) and the boosting model (variance).

Trees are stored as flat node arrays in preorder. Internal nodes send `x <= threshold`
left. Split search is vectorised over the candidate columns of a node: each column is
sorted once and impurity of every cut position comes from cumulative sums.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Literal

import numpy as np

Criterion = Literal["gini", "variance"]

LEAF = -1
# gains at or below this are treated as no improvement
MIN_GAIN = 1e-12


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    # impurity decrease weighted by node size; 0 at leaves
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature == LEAF

    def used_features(self) -> set[int]:
        return {int(f) for f in self.feature[self.feature != LEAF]}

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for node in range(self.n_nodes):
            if self.feature[node] != LEAF:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of `X`."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            rows = np.flatnonzero(active)
            nd = node[rows]
            go_left = X[rows, self.feature[nd]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] != LEAF
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Tree":
        feature = np.asarray(d["feature"], dtype=np.int64)
        return cls(
            feature=feature,
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=float),
            n_samples=np.asarray(d["n_samples"], dtype=np.int64),
            gain=np.zeros(feature.shape[0], dtype=float),
        )


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    gain: float


def _impurity(y: np.ndarray, criterion: Criterion) -> float:
    if criterion == "gini":
        p = float(y.mean())
        return 2.0 * p * (1.0 - p)
    return float(y.var())


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    columns: np.ndarray,
    criterion: Criterion,
    min_leaf: int,
) -> Split | None:
    """Best cut over `columns` (ascending) for the rows in X, y.

    Ties resolve to the lowest column, then the lowest threshold.
    """
    n = y.shape[0]
    if n < 2 * min_leaf:
        return None
    Xc = X[:, columns]
    order = np.argsort(Xc, axis=0, kind="stable")
    xs = np.take_along_axis(Xc, order, axis=0)
    ys = y[order]

    n_left = np.arange(1, n, dtype=float)[:, None]
    n_right = n - n_left
    cs = np.cumsum(ys, axis=0)[:-1]
    total = float(y.sum())
    if criterion == "gini":
        pl = cs / n_left
        pr = (total - cs) / n_right
        child = (n_left * 2.0 * pl * (1.0 - pl) + n_right * 2.0 * pr * (1.0 - pr)) / n
    else:
        cs2 = np.cumsum(ys * ys, axis=0)[:-1]
        total2 = float((y * y).sum())
        sse_left = cs2 - cs * cs / n_left
        sse_right = (total2 - cs2) - (total - cs) ** 2 / n_right
        child = (sse_left + sse_right) / n
    gain = _impurity(y, criterion) - child

    valid = xs[:-1] < xs[1:]
    valid &= (n_left >= min_leaf) & (n_right >= min_leaf)
    gain = np.where(valid, gain, -np.inf)

    pos = np.argmax(gain, axis=0)  # first max -> lowest threshold
    col_gain = gain[pos, np.arange(len(columns))]
    k = int(np.argmax(col_gain))  # first max -> lowest column
    g = float(col_gain[k])
    if not np.isfinite(g) or g <= MIN_GAIN:
        return None
    i = int(pos[k])
    lo, hi = float(xs[i, k]), float(xs[i + 1, k])
    thr = (lo + hi) / 2.0
    if thr >= hi:
        # adjacent floats: the midpoint rounds up onto hi
        thr = lo
    return Split(feature=int(columns[k]), threshold=thr, gain=g * n)


def build_tree(
    X: np.ndarray,
    y: np.ndarray,
    *,
    criterion: Criterion = "gini",
    min_leaf: int = 1,
    max_depth: int | None = None,
    mtry: int | None = None,
    rng: np.random.Generator | None = None,
) -> Tree:
    """Grow one tree depth-first. With `mtry`, each node draws that many columns without replacement."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n == 0:
        raise ValueError("cannot grow a tree on zero rows")
    if mtry is not None and not 1 <= mtry <= p:
        raise ValueError(f"mtry {mtry} outside [1, {p}]")
    if mtry is not None and mtry < p and rng is None:
        raise ValueError("column sampling needs an rng")
    all_columns = np.arange(p)

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []
    n_samples: list[int] = []
    gain: list[float] = []

    stack: list[tuple[np.ndarray, int, int, bool]] = [(np.arange(n), 0, -1, True)]
    while stack:
        idx, depth, parent, is_left = stack.pop()
        node = len(feature)
        if parent >= 0:
            if is_left:
                left[parent] = node
            else:
                right[parent] = node
        yn = y[idx]
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(yn.mean()))
        n_samples.append(int(idx.shape[0]))
        gain.append(0.0)

        if max_depth is not None and depth >= max_depth:
            continue
        if mtry is None or mtry >= p:
            columns = all_columns
        else:
            columns = np.sort(rng.choice(p, size=mtry, replace=False))
        split = best_split(X[idx], yn, columns, criterion, min_leaf)
        if split is None:
            continue
        feature[node] = split.feature
        threshold[node] = split.threshold
        gain[node] = split.gain
        goes_left = X[idx, split.feature] <= split.threshold
        # right pushed first so the left subtree is numbered first (preorder)
        stack.append((idx[~goes_left], depth + 1, node, False))
        stack.append((idx[goes_left], depth + 1, node, True))

    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=float),
        n_samples=np.asarray(n_samples, dtype=np.int64),
        gain=np.asarray(gain, dtype=float),
    )
