"""Gradient-boosted regression trees for squared error, grown with exact greedy splits.

Each round fits a tree to the gradients ``pred - y`` (hessian 1) using the
Newton leaf value ``-G / (H + lambda)`` and the split gain

    0.5 * (G_L^2 / (H_L + lambda) + G_R^2 / (H_R + lambda) - G^2 / (H + lambda)) - gamma

Candidate thresholds are midpoints between consecutive distinct feature values;
rows go left iff ``x < threshold``. Trees grow level by level and ties are
resolved towards the lower feature index, then the lower threshold, so the
model only depends on the multiset of training rows.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from rrvqa.errors import ConfigurationError, DataError, EmptyInputError, ModelFormatError
from rrvqa.fusion import FUSED_NAMES

FORMAT_VERSION = 1


@dataclass(frozen=True)
class GbtParams:
    """Booster settings. The defaults are a tuned configuration for the fused 8-feature input."""

    n_estimators: int = 95
    max_depth: int = 8
    learning_rate: float = 0.072
    subsample: float = 0.999
    colsample_bytree: float = 0.852
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if int(self.n_estimators) != self.n_estimators or self.n_estimators < 1:
            raise ConfigurationError(f"n_estimators must be an integer >= 1, got {self.n_estimators}")
        if int(self.max_depth) != self.max_depth or self.max_depth < 0:
            raise ConfigurationError(f"max_depth must be an integer >= 0, got {self.max_depth}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigurationError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if not 0.0 < self.subsample <= 1.0:
            raise ConfigurationError(f"subsample must be in (0, 1], got {self.subsample}")
        if not 0.0 < self.colsample_bytree <= 1.0:
            raise ConfigurationError(
                f"colsample_bytree must be in (0, 1], got {self.colsample_bytree}")
        if self.reg_lambda < 0 or self.gamma < 0 or self.min_child_weight < 0:
            raise ConfigurationError("lambda, gamma and min_child_weight must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("reg_lambda")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GbtParams":
        d = dict(d)
        if "lambda" in d:
            d["reg_lambda"] = d.pop("lambda")
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        for name in ("n_estimators", "max_depth", "seed"):
            if name in d:
                d[name] = int(d[name])
        return cls(**d)


@dataclass(frozen=True)
class TrainingSet:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64).ravel()
        if X.ndim != 2:
            raise DataError(f"features must be a 2-D array, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DataError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        bad = ~(np.isfinite(X).all(axis=1) & np.isfinite(y))
        if bad.any():
            raise DataError(f"row {int(np.argmax(bad))} has a non-finite feature or label")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.y.shape[0]

    def subset(self, idx) -> "TrainingSet":
        return TrainingSet(self.X[idx], self.y[idx])


@dataclass(frozen=True)
class Tree:
    """Array-of-nodes tree rooted at node 0. Leaves have ``feature == -1``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Index of the leaf each row of ``X`` lands in."""
        idx = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            f = self.feature[idx]
            active = np.nonzero(f >= 0)[0]
            if active.size == 0:
                return idx
            node = idx[active]
            go_left = X[active, f[active]] < self.threshold[node]
            idx[active] = np.where(go_left, self.left[node], self.right[node])

    def leaf_values(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def to_nodes(self) -> List[dict]:
        nodes = []
        for i in range(self.n_nodes):
            if self.feature[i] < 0:
                nodes.append({"leaf": float(self.value[i])})
            else:
                nodes.append({
                    "feature": int(self.feature[i]),
                    "threshold": float(self.threshold[i]),
                    "left": int(self.left[i]),
                    "right": int(self.right[i]),
                    "gain": float(self.gain[i]),
                })
        return nodes


@dataclass(frozen=True)
class GbtModel:
    base_score: float
    learning_rate: float
    trees: Tuple[Tree, ...]
    feature_names: Tuple[str, ...] = FUSED_NAMES
    train_rmse: Tuple[float, ...] = field(default=(), compare=False)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


class _TreeBuilder:
    def __init__(self, X, g, h, params: GbtParams, features: np.ndarray):
        self.X, self.g, self.h = X, g, h
        self.lam = float(params.reg_lambda)
        self.gamma = float(params.gamma)
        self.mcw = float(params.min_child_weight)
        self.max_depth = int(params.max_depth)
        self.features = features
        self.feature: List[int] = []
        self.threshold: List[float] = []
        self.left: List[int] = []
        self.right: List[int] = []
        self.gain: List[float] = []
        self.rows: List[np.ndarray] = []

    def _new_node(self, rows: np.ndarray) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.gain.append(0.0)
        self.rows.append(rows)
        return len(self.feature) - 1

    def build(self, rows: np.ndarray) -> Tree:
        frontier = [self._new_node(rows)]
        depth = 0
        while frontier and depth < self.max_depth:
            candidates = [n for n in frontier if self.rows[n].size >= 2]
            splits = self._best_splits(candidates) if candidates else {}
            next_frontier = []
            for nid in frontier:
                if nid not in splits:
                    continue
                f, thr, gain = splits[nid]
                r = self.rows[nid]
                go_left = self.X[r, f] < thr
                left = self._new_node(r[go_left])
                right = self._new_node(r[~go_left])
                self.feature[nid] = f
                self.threshold[nid] = thr
                self.left[nid] = left
                self.right[nid] = right
                self.gain[nid] = gain
                next_frontier += [left, right]
            frontier = next_frontier
            depth += 1
        value = np.zeros(len(self.feature))
        for nid, r in enumerate(self.rows):
            if self.feature[nid] < 0:
                G = math.fsum(self.g[r])
                H = math.fsum(self.h[r])
                value[nid] = -G / (H + self.lam) if H + self.lam > 0 else 0.0
        return Tree(
            np.array(self.feature, dtype=np.int64),
            np.array(self.threshold, dtype=np.float64),
            np.array(self.left, dtype=np.int64),
            np.array(self.right, dtype=np.int64),
            value,
            np.array(self.gain, dtype=np.float64),
        )

    def _exact_gain(self, rows: np.ndarray, f: int, thr: float, G: float, H: float) -> float:
        # correctly rounded sums make the gain a function of the partition alone
        go_left = self.X[rows, f] < thr
        lam = self.lam
        GL, HL = math.fsum(self.g[rows[go_left]]), math.fsum(self.h[rows[go_left]])
        GR, HR = math.fsum(self.g[rows[~go_left]]), math.fsum(self.h[rows[~go_left]])
        parent = G * G / (H + lam) if H + lam > 0 else 0.0
        return 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent) - self.gamma

    def _best_splits(self, nodes: Sequence[int]) -> Dict[int, Tuple[int, float, float]]:
        lam, mcw = self.lam, self.mcw
        rows = np.concatenate([self.rows[n] for n in nodes])
        seg = np.repeat(np.arange(len(nodes)), [self.rows[n].size for n in nodes])
        G = np.array([math.fsum(self.g[self.rows[n]]) for n in nodes])
        H = np.array([math.fsum(self.h[self.rows[n]]) for n in nodes])
        with np.errstate(divide="ignore", invalid="ignore"):
            parent_score = np.where(H + lam > 0, G * G / (H + lam), 0.0)
        gv, hv = self.g[rows], self.h[rows]
        # (segment, approximate gain, feature, threshold) for every valid cut
        found: List[Tuple[np.ndarray, np.ndarray, int, np.ndarray]] = []
        for f in self.features:
            xv = self.X[rows, f]
            order = np.lexsort((hv, gv, xv, seg))
            xs, gs, hs, ss = xv[order], gv[order], hv[order], seg[order]
            cg, ch = np.cumsum(gs), np.cumsum(hs)
            starts = np.flatnonzero(np.r_[True, ss[1:] != ss[:-1]])
            g_off = np.r_[0.0, cg][starts][ss]
            h_off = np.r_[0.0, ch][starts][ss]
            GL = cg - g_off
            HL = ch - h_off
            GR = G[ss] - GL
            HR = H[ss] - HL
            nxt = np.r_[xs[1:], np.inf]
            same = np.r_[ss[1:] == ss[:-1], False]
            valid = same & (xs < nxt) & (HL >= mcw) & (HR >= mcw)
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam)
                              - parent_score[ss]) - self.gamma
                thr = (xs + nxt) / 2.0
            keep = np.flatnonzero(valid & np.isfinite(gain) & (gain > 0))
            lo, hi, t = xs[keep], nxt[keep], thr[keep]
            t = np.where((lo < t) & (t <= hi), t, hi)
            found.append((ss[keep], gain[keep], int(f), t))
        out = {}
        if not found:
            return out
        all_seg = np.concatenate([c[0] for c in found])
        all_gain = np.concatenate([c[1] for c in found])
        all_feat = np.concatenate([np.full(c[0].size, c[2]) for c in found])
        all_thr = np.concatenate([c[3] for c in found])
        for s in np.unique(all_seg):
            mine = np.flatnonzero(all_seg == s)
            top = all_gain[mine].max()
            node_rows = self.rows[nodes[s]]
            # every term of the gain is bounded by sum(g^2) of the node, so cumulative-sum
            # drift stays far below this; rescore the near-best cuts exactly
            tol = 1e-9 * float(np.dot(self.g[node_rows], self.g[node_rows]))
            close = mine[all_gain[mine] >= top - tol]
            best = None
            for i in close:
                f, t = int(all_feat[i]), float(all_thr[i])
                exact = self._exact_gain(node_rows, f, t, G[s], H[s])
                key = (-exact, f, t)
                if exact > 0 and (best is None or key < best[0]):
                    best = (key, f, t, exact)
            if best is not None:
                out[nodes[s]] = (best[1], best[2], best[3])
        return out


def _round_rng(seed: int, round_index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, round_index])


def train(data: TrainingSet, params: Optional[GbtParams] = None,
          feature_names: Sequence[str] = FUSED_NAMES) -> GbtModel:
    params = params or GbtParams()
    if len(data) == 0:
        raise EmptyInputError("cannot train on an empty data set")
    X, y = data.X, data.y
    n, p = X.shape
    if p != len(feature_names):
        raise DataError(f"{p} feature columns but {len(feature_names)} feature names")
    base = math.fsum(y) / n
    lr = float(params.learning_rate)
    n_cols = min(p, max(1, math.ceil(params.colsample_bytree * p)))
    n_rows = min(n, max(1, int(math.floor(params.subsample * n + 0.5))))
    hess = np.ones(n)
    leaf_sum = np.zeros(n)
    pred = np.full(n, base)
    trees = []
    history = []
    for t in range(params.n_estimators):
        rng = _round_rng(params.seed, t)
        cols = np.sort(rng.choice(p, size=n_cols, replace=False))
        rows = np.sort(rng.choice(n, size=n_rows, replace=False))
        grad = pred - y
        tree = _TreeBuilder(X, grad, hess, params, cols).build(rows)
        trees.append(tree)
        leaf_sum += tree.leaf_values(X)
        pred = base + lr * leaf_sum
        history.append(math.sqrt(float(np.mean((pred - y) ** 2))))
    return GbtModel(base, lr, tuple(trees), tuple(feature_names), tuple(history))


def predict_batch(model: GbtModel, Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[None, :]
    if Z.shape[1] != model.n_features:
        raise DataError(f"expected {model.n_features} features per row, got {Z.shape[1]}")
    total = np.zeros(Z.shape[0])
    for tree in model.trees:
        total += tree.leaf_values(Z)
    return model.base_score + model.learning_rate * total


def predict(model: GbtModel, z) -> float:
    return float(predict_batch(model, np.asarray(z, dtype=np.float64)[None, :])[0])


def gain_importance(model: GbtModel) -> np.ndarray:
    """Share of total split gain per feature; all zeros for a model without splits."""
    total = np.zeros(model.n_features)
    for tree in model.trees:
        internal = tree.feature >= 0
        np.add.at(total, tree.feature[internal], tree.gain[internal])
    s = total.sum()
    return total / s if s > 0 else total


def importance_ranking(model: GbtModel) -> List[Tuple[str, float]]:
    """(feature, gain share) sorted by descending share, feature order breaking ties."""
    shares = gain_importance(model)
    order = sorted(range(len(shares)), key=lambda i: (-shares[i], i))
    return [(model.feature_names[i], float(shares[i])) for i in order]


def permutation_importance(model: GbtModel, data: TrainingSet, seed: int = 0,
                           n_repeats: int = 5) -> np.ndarray:
    """Mean RMSE increase when one feature column is shuffled."""
    rng = np.random.default_rng(seed)
    base = predict_batch(model, data.X)
    ref = math.sqrt(float(np.mean((base - data.y) ** 2)))
    out = np.zeros(data.X.shape[1])
    for j in range(data.X.shape[1]):
        deltas = []
        for _ in range(n_repeats):
            Xp = data.X.copy()
            Xp[:, j] = rng.permutation(Xp[:, j])
            pred = predict_batch(model, Xp)
            deltas.append(math.sqrt(float(np.mean((pred - data.y) ** 2))) - ref)
        out[j] = float(np.mean(deltas))
    return out


def model_to_dict(model: GbtModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "base_score": float(model.base_score),
        "learning_rate": float(model.learning_rate),
        "feature_names": list(model.feature_names),
        "trees": [{"nodes": t.to_nodes()} for t in model.trees],
    }


def dumps_model(model: GbtModel) -> str:
    # float repr round-trips exactly, so leaf values survive save/load bit for bit
    return json.dumps(model_to_dict(model), separators=(",", ":")) + "\n"


def save_model(model: GbtModel, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps_model(model))


def _number(value, where: str, finite: bool = True) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelFormatError(f"{where}: expected a number, got {type(value).__name__}")
    if finite and not math.isfinite(value):
        raise ModelFormatError(f"{where}: value must be finite")
    return float(value)


def _index(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ModelFormatError(f"{where}: expected an integer, got {value!r}")
    return value


def _tree_from_nodes(nodes, n_features: int, where: str) -> Tree:
    if not isinstance(nodes, list) or not nodes:
        raise ModelFormatError(f"{where}: expected a non-empty list of nodes")
    n = len(nodes)
    feature = np.full(n, -1, dtype=np.int64)
    threshold = np.zeros(n)
    left = np.full(n, -1, dtype=np.int64)
    right = np.full(n, -1, dtype=np.int64)
    value = np.zeros(n)
    gain = np.zeros(n)
    parents = np.zeros(n, dtype=np.int64)
    for i, node in enumerate(nodes):
        at = f"{where}[{i}]"
        if not isinstance(node, dict):
            raise ModelFormatError(f"{at}: expected an object")
        if "leaf" in node:
            if set(node) != {"leaf"}:
                raise ModelFormatError(f"{at}: leaf node has extra keys {sorted(set(node) - {'leaf'})}")
            value[i] = _number(node["leaf"], f"{at}.leaf")
            continue
        missing = {"feature", "threshold", "left", "right"} - set(node)
        if missing:
            raise ModelFormatError(f"{at}: split node is missing {sorted(missing)}")
        extra = set(node) - {"feature", "threshold", "left", "right", "gain"}
        if extra:
            raise ModelFormatError(f"{at}: unknown keys {sorted(extra)}")
        f = _index(node["feature"], f"{at}.feature")
        if not 0 <= f < n_features:
            raise ModelFormatError(f"{at}.feature: index {f} outside [0, {n_features})")
        feature[i] = f
        threshold[i] = _number(node["threshold"], f"{at}.threshold")
        gain[i] = _number(node.get("gain", 0.0), f"{at}.gain")
        for key, arr in (("left", left), ("right", right)):
            c = _index(node[key], f"{at}.{key}")
            if not 0 < c < n:
                raise ModelFormatError(f"{at}.{key}: child index {c} out of range [1, {n})")
            arr[i] = c
            parents[c] += 1
    if left.size and np.any((feature >= 0) & (left == right)):
        i = int(np.flatnonzero((feature >= 0) & (left == right))[0])
        raise ModelFormatError(f"{where}[{i}]: left and right children are the same node")
    for i in range(1, n):
        if parents[i] != 1:
            raise ModelFormatError(f"{where}[{i}]: node has {parents[i]} parents, expected 1")
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    while stack:
        i = stack.pop()
        if seen[i]:
            raise ModelFormatError(f"{where}[{i}]: cycle detected")
        seen[i] = True
        if feature[i] >= 0:
            stack += [int(left[i]), int(right[i])]
    if not seen.all():
        i = int(np.flatnonzero(~seen)[0])
        raise ModelFormatError(f"{where}[{i}]: node is not reachable from the root")
    return Tree(feature, threshold, left, right, value, gain)


def model_from_dict(obj) -> GbtModel:
    if not isinstance(obj, dict):
        raise ModelFormatError("$: expected a JSON object")
    for key in ("format_version", "base_score", "learning_rate", "feature_names", "trees"):
        if key not in obj:
            raise ModelFormatError(f"$.{key}: missing")
    if obj["format_version"] != FORMAT_VERSION:
        raise ModelFormatError(f"$.format_version: unsupported version {obj['format_version']!r}")
    base = _number(obj["base_score"], "$.base_score")
    lr = _number(obj["learning_rate"], "$.learning_rate")
    names = obj["feature_names"]
    if not isinstance(names, list) or not names or not all(isinstance(s, str) for s in names):
        raise ModelFormatError("$.feature_names: expected a non-empty list of strings")
    trees_obj = obj["trees"]
    if not isinstance(trees_obj, list):
        raise ModelFormatError("$.trees: expected a list")
    trees = []
    for t, tree in enumerate(trees_obj):
        if not isinstance(tree, dict) or "nodes" not in tree:
            raise ModelFormatError(f"$.trees[{t}]: expected an object with 'nodes'")
        trees.append(_tree_from_nodes(tree["nodes"], len(names), f"$.trees[{t}].nodes"))
    return GbtModel(base, lr, tuple(trees), tuple(names))


def loads_model(text: str) -> GbtModel:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"$: invalid JSON ({exc})") from exc
    return model_from_dict(obj)


def load_model(path) -> GbtModel:
    with open(path) as fh:
        return loads_model(fh.read())


def with_learning_rate(model: GbtModel, learning_rate: float) -> GbtModel:
    return replace(model, learning_rate=float(learning_rate))
