"""Boosted-tree surrogate over knob-value features.

Fits gradient-boosted regression trees (squared error) on measured fitness and
scores configurations cheaply, standing in for hardware measurements during
search. Fitting is fully deterministic: training rows are sorted canonically
before any arithmetic, and split ties break to the lowest feature index, then
the smallest threshold, so a model serializes to identical bytes regardless of
row order or platform.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError
from .space import Configuration, DesignSpace, knob_values, validate_config


@dataclass(frozen=True)
class BoostParams:
    rounds: int = 50
    depth: int = 4
    learning_rate: float = 0.3

    def validate(self) -> None:
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError(f"learning_rate must be in (0, 1], got {self.learning_rate}")


@dataclass(frozen=True)
class TrainingSet:
    """Feature matrix plus fitness targets; rows must be finite with fitness >= 0."""

    features: np.ndarray  # (m, n) float64
    targets: np.ndarray  # (m,) float64

    def __post_init__(self) -> None:
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.targets, dtype=np.float64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise DimensionMismatchError(f"features {X.shape} and targets {y.shape} do not align")
        if not np.all(np.isfinite(X)):
            raise ValueError("features contain non-finite entries")
        if not np.all(np.isfinite(y)) or np.any(y < 0):
            raise ValueError("fitness targets must be finite and >= 0")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)

    @classmethod
    def from_pairs(cls, rows: list[tuple[np.ndarray, float]]) -> "TrainingSet":
        if not rows:
            raise ValueError("training set needs at least one row")
        X = np.array([r[0] for r in rows], dtype=np.float64)
        y = np.array([r[1] for r in rows], dtype=np.float64)
        return cls(features=X, targets=y)

    def __len__(self) -> int:
        return int(self.targets.shape[0])


@dataclass(frozen=True)
class Tree:
    """One regression tree in flat-array form; node 0 is the root.

    feature[i] == -1 marks a leaf, whose prediction is value[i]. Internal
    nodes route rows with x[feature] <= threshold to child_left.
    """

    feature: np.ndarray  # (nodes,) int32, -1 for leaves
    threshold: np.ndarray  # (nodes,) float64
    child_left: np.ndarray  # (nodes,) int32
    child_right: np.ndarray  # (nodes,) int32
    value: np.ndarray  # (nodes,) float64, leaf payouts (shrinkage folded in)

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0], dtype=np.float64)
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if rows.size == 0:
                continue
            f = int(self.feature[node])
            if f < 0:
                out[rows] = self.value[node]
                continue
            goes_left = X[rows, f] <= self.threshold[node]
            stack.append((int(self.child_left[node]), rows[goes_left]))
            stack.append((int(self.child_right[node]), rows[~goes_left]))
        return out

    def to_dict(self) -> dict:
        def node(i: int) -> dict:
            if self.feature[i] < 0:
                return {"value": float(self.value[i])}
            return {
                "feature": int(self.feature[i]),
                "threshold": float(self.threshold[i]),
                "left": node(int(self.child_left[i])),
                "right": node(int(self.child_right[i])),
            }

        return node(0)

    @classmethod
    def from_dict(cls, obj: dict) -> "Tree":
        feature: list[int] = []
        threshold: list[float] = []
        left: list[int] = []
        right: list[int] = []
        value: list[float] = []

        def build(node: dict) -> int:
            idx = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            if "value" in node:
                value[idx] = float(node["value"])
            else:
                feature[idx] = int(node["feature"])
                threshold[idx] = float(node["threshold"])
                left[idx] = build(node["left"])
                right[idx] = build(node["right"])
            return idx

        build(obj)
        return cls(
            feature=np.array(feature, dtype=np.int32),
            threshold=np.array(threshold, dtype=np.float64),
            child_left=np.array(left, dtype=np.int32),
            child_right=np.array(right, dtype=np.int32),
            value=np.array(value, dtype=np.float64),
        )


@dataclass(frozen=True)
class CostModel:
    trees: tuple[Tree, ...]
    base_score: float
    feature_count: int

    @classmethod
    def sentinel(cls, feature_count: int, base_score: float = 0.0) -> "CostModel":
        """Untrained model: predicts base_score everywhere."""
        return cls(trees=(), base_score=base_score, feature_count=feature_count)

    def _packed(self) -> tuple[np.ndarray, ...]:
        """All trees stacked into flat arrays so one predict call walks every
        tree at once; built lazily and cached on the instance (not a field)."""
        packed = self.__dict__.get("_packed_arrays")
        if packed is None:
            width = max(t.feature.size for t in self.trees)
            count = len(self.trees)
            feature = np.full((count, width), -1, dtype=np.int64)
            threshold = np.zeros((count, width), dtype=np.float64)
            left = np.zeros((count, width), dtype=np.int64)
            right = np.zeros((count, width), dtype=np.int64)
            value = np.zeros((count, width), dtype=np.float64)
            for i, t in enumerate(self.trees):
                k = t.feature.size
                feature[i, :k] = t.feature
                threshold[i, :k] = t.threshold
                left[i, :k] = t.child_left
                right[i, :k] = t.child_right
                value[i, :k] = t.value
            offsets = (np.arange(count, dtype=np.int64) * width)[:, None]
            packed = (feature.ravel(), threshold.ravel(), left.ravel(), right.ravel(), value.ravel(), offsets)
            object.__setattr__(self, "_packed_arrays", packed)
        return packed

    def predict_features(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.feature_count:
            raise DimensionMismatchError(f"feature matrix {X.shape} does not match feature_count {self.feature_count}")
        out = np.full(X.shape[0], self.base_score, dtype=np.float64)
        if not self.trees or X.shape[0] == 0:
            return out
        feature, threshold, left, right, value, offsets = self._packed()
        rows = np.arange(X.shape[0])[None, :]
        node = np.zeros((offsets.shape[0], X.shape[0]), dtype=np.int64)
        while True:
            idx = node + offsets
            f = feature[idx]
            active = f >= 0
            if not active.any():
                break
            xv = X[rows, np.where(active, f, 0)]
            nxt = np.where(xv <= threshold[idx], left[idx], right[idx])
            node = np.where(active, nxt, node)
        out += value[node + offsets].sum(axis=0)
        return out

    def to_json(self) -> str:
        obj = {
            "base_score": self.base_score,
            "feature_count": self.feature_count,
            "trees": [t.to_dict() for t in self.trees],
        }
        return json.dumps(obj, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CostModel":
        obj = json.loads(text)
        return cls(
            trees=tuple(Tree.from_dict(t) for t in obj["trees"]),
            base_score=float(obj["base_score"]),
            feature_count=int(obj["feature_count"]),
        )


def featurize(space: DesignSpace, config: Configuration) -> np.ndarray:
    """log2(1 + value) per knob, over the actual selected values (not indices)."""
    values = knob_values(space, config)
    if any(v < 0 for v in values):
        raise ValueError("featurize requires non-negative knob values")
    return np.log2(1.0 + np.array(values, dtype=np.float64))


def feature_table(space: DesignSpace) -> tuple[np.ndarray, np.ndarray]:
    """Per-knob feature lookup: (n_knobs, max_cardinality) table plus the
    count of negative settings at the head of each knob (strictly increasing
    values put all negatives in a prefix). Cells beyond a knob's cardinality
    are padding and must never be indexed."""
    cards = space.cardinalities
    table = np.zeros((space.n_knobs, max(cards)), dtype=np.float64)
    neg_prefix = np.zeros(space.n_knobs, dtype=np.int64)
    for j, knob in enumerate(space.knobs):
        vals = np.array(knob.values, dtype=np.float64)
        neg_prefix[j] = int((vals < 0).sum())
        with np.errstate(invalid="ignore", divide="ignore"):
            table[j, : vals.size] = np.log2(1.0 + vals)
    return table, neg_prefix


def featurize_batch(space: DesignSpace, configs: list[Configuration]) -> np.ndarray:
    if not configs:
        return np.empty((0, space.n_knobs), dtype=np.float64)
    n = space.n_knobs
    rows = []
    for c in configs:
        if len(c.indices) != n:
            validate_config(space, c)
        rows.append(c.indices)
    idx = np.array(rows, dtype=np.int64)
    over = idx >= np.array(space.cardinalities, dtype=np.int64)
    if over.any():
        validate_config(space, configs[int(np.nonzero(over.any(axis=1))[0][0])])
    table, neg_prefix = feature_table(space)
    if (idx < neg_prefix).any():
        raise ValueError("featurize requires non-negative knob values")
    return table[np.arange(n), idx]


@dataclass
class _Builder:
    """Accumulates one tree's nodes during recursive growth."""

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    child_left: list[int] = field(default_factory=list)
    child_right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)

    def add(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.child_left.append(-1)
        self.child_right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def finish(self) -> Tree:
        return Tree(
            feature=np.array(self.feature, dtype=np.int32),
            threshold=np.array(self.threshold, dtype=np.float64),
            child_left=np.array(self.child_left, dtype=np.int32),
            child_right=np.array(self.child_right, dtype=np.int32),
            value=np.array(self.value, dtype=np.float64),
        )


def _best_split(X: np.ndarray, resid: np.ndarray, orders: list[np.ndarray]) -> tuple[int, float] | None:
    """Exact greedy squared-error split; ties: lowest feature, then smallest threshold.

    `orders` holds this node's row ids pre-sorted per feature (stable, so ties
    keep canonical row order). Zero-gain splits are allowed (any split never
    increases SSE when children predict their means), which matters for
    parity-like targets where the root split alone shows no gain.
    """
    if not orders:
        return None
    m = orders[0].size
    best: tuple[float, int, float] | None = None  # (gain, feature, threshold)
    for j, order in enumerate(orders):
        xs = X[order, j]
        rs = resid[order]
        boundaries = np.nonzero(xs[:-1] != xs[1:])[0]
        if boundaries.size == 0:
            continue
        csum = np.cumsum(rs)
        csq = np.cumsum(rs * rs)
        total = csum[-1]
        total_sq = csq[-1]
        left_n = boundaries + 1
        right_n = m - left_n
        left_sum = csum[boundaries]
        left_sq = csq[boundaries]
        sse_left = left_sq - left_sum * left_sum / left_n
        sse_right = (total_sq - left_sq) - (total - left_sum) ** 2 / right_n
        parent_sse = total_sq - total * total / m
        gains = parent_sse - sse_left - sse_right
        pick = int(np.argmax(gains))  # first max = smallest threshold on ties
        gain = float(gains[pick])
        threshold = float((xs[boundaries[pick]] + xs[boundaries[pick] + 1]) / 2.0)
        if best is None or gain > best[0]:
            best = (gain, j, threshold)
    if best is None:
        return None
    return best[1], best[2]


def _grow(
    builder: _Builder,
    X: np.ndarray,
    resid: np.ndarray,
    rows: np.ndarray,
    orders: list[np.ndarray],
    depth: int,
    max_depth: int,
    shrink: float,
) -> int:
    """Recursive node growth over row-id views of the fixed training matrix.

    `rows` keeps canonical order so float reductions match a subarray build;
    `orders` are partitioned (not re-sorted) on the way down.
    """
    node = builder.add()
    r = resid[rows]
    mean = float(r.mean())
    sse = float(((r - mean) ** 2).sum())
    split = _best_split(X, resid, orders) if depth < max_depth and sse > 0.0 else None
    if split is None:
        builder.value[node] = shrink * mean
        return node
    j, t = split
    left_rows = rows[X[rows, j] <= t]
    in_left = np.zeros(X.shape[0], dtype=bool)
    in_left[left_rows] = True
    left_orders = [o[in_left[o]] for o in orders]
    right_orders = [o[~in_left[o]] for o in orders]
    builder.feature[node] = j
    builder.threshold[node] = t
    builder.child_left[node] = _grow(
        builder, X, resid, left_rows, left_orders, depth + 1, max_depth, shrink
    )
    builder.child_right[node] = _grow(
        builder, X, resid, rows[~in_left[rows]], right_orders, depth + 1, max_depth, shrink
    )
    return node


def fit(training: TrainingSet, params: BoostParams = BoostParams(), seed: int = 0) -> CostModel:
    """Gradient boosting under squared error; base score is the target mean.

    `seed` is accepted for interface stability; with exact greedy splits and
    no subsampling the procedure consumes no randomness.
    """
    params.validate()
    if len(training) == 0:
        raise ValueError("training set is empty")
    # Canonical row order makes every reduction independent of caller row order.
    order = np.lexsort(np.vstack([training.targets, training.features.T[::-1]]))
    X = training.features[order]
    y = training.targets[order]

    base = float(y.mean())
    pred = np.full(y.shape, base, dtype=np.float64)
    all_rows = np.arange(X.shape[0], dtype=np.int64)
    root_orders = [np.argsort(X[:, j], kind="stable") for j in range(X.shape[1])]
    trees: list[Tree] = []
    for _ in range(params.rounds):
        resid = y - pred
        builder = _Builder()
        _grow(builder, X, resid, all_rows, root_orders, 0, params.depth, params.learning_rate)
        tree = builder.finish()
        pred += tree.predict(X)
        trees.append(tree)
    return CostModel(trees=tuple(trees), base_score=base, feature_count=X.shape[1])


def predict(model: CostModel, space: DesignSpace, configs: list[Configuration]) -> np.ndarray:
    """Surrogate fitness per configuration, in input order."""
    if model.feature_count != space.n_knobs:
        raise DimensionMismatchError(
            f"model expects {model.feature_count} features, space {space.name!r} has {space.n_knobs} knobs"
        )
    if not configs:
        return np.empty(0, dtype=np.float64)
    return model.predict_features(featurize_batch(space, configs))


def training_rmse(model: CostModel, training: TrainingSet) -> float:
    err = model.predict_features(training.features) - training.targets
    return math.sqrt(float(np.mean(err * err)))
