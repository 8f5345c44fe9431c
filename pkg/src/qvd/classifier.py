"""Random-forest classification of empirical density spectra.

Binary forest built from scratch: bootstrap resamples, Gini-impurity splits
over sqrt(d) randomly drawn features per node, leaves holding class-1
fractions. Trees are flat integer/float arrays so models serialize to plain
JSON. Training canonicalizes the sample order first and derives all
randomness from (seed, tree index), making the fit independent of the order
samples arrive in.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class LabeledSample:
    """Normalized empirical histogram plus its class label (0 or 1)."""

    features: np.ndarray
    label: int

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 1 or np.any(feats < 0):
            raise ValueError("features must be a nonnegative vector")
        total = feats.sum()
        if total != 0 and abs(total - 1.0) > 1e-9:
            raise ValueError("features must sum to 1 (or be all zero)")
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 8
    min_split: int = 2
    features_per_split: int | str = "sqrt"   # "sqrt" or an explicit count

    def resolve_features(self, n_features: int) -> int:
        if self.features_per_split == "sqrt":
            return max(1, int(np.sqrt(n_features)))
        k = int(self.features_per_split)
        if not (1 <= k <= n_features):
            raise ValueError("features_per_split outside [1, n_features]")
        return k


@dataclass
class Tree:
    """Flat binary tree: node i splits on feature[i] at threshold[i]; leaves
    have children -1 and carry the class-1 fraction in value[i]."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(x.shape[0], dtype=np.int64)
        active = self.left[node] >= 0
        while np.any(active):
            idx = np.flatnonzero(active)
            n = node[idx]
            go_left = x[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active = self.left[node] >= 0
        return self.value[node]


@dataclass
class ForestModel:
    n_trees: int
    max_depth: int
    min_split: int
    features_per_split: int
    seed: int
    n_features: int
    trees: list[Tree]

    def to_json(self) -> str:
        payload = {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_split": self.min_split,
            "features_per_split": self.features_per_split,
            "seed": self.seed,
            "n_features": self.n_features,
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "value": t.value.tolist(),
                }
                for t in self.trees
            ],
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ForestModel":
        d = json.loads(text)
        trees = [
            Tree(
                feature=np.asarray(t["feature"], dtype=np.int64),
                threshold=np.asarray(t["threshold"], dtype=np.float64),
                left=np.asarray(t["left"], dtype=np.int64),
                right=np.asarray(t["right"], dtype=np.int64),
                value=np.asarray(t["value"], dtype=np.float64),
            )
            for t in d["trees"]
        ]
        return cls(n_trees=d["n_trees"], max_depth=d["max_depth"],
                   min_split=d["min_split"], features_per_split=d["features_per_split"],
                   seed=d["seed"], n_features=d["n_features"], trees=trees)


@dataclass(frozen=True)
class ClassMetrics:
    f1: float
    auc: float
    f1_scores: tuple[float, ...]
    auc_scores: tuple[float, ...]
    f1_std: float
    auc_std: float


def _best_split(x: np.ndarray, y: np.ndarray, feat_order: np.ndarray, k: int):
    """Lowest weighted-Gini split over >= k candidate features.

    Features are inspected in the given random order; if the first k are all
    constant within the node, inspection continues until a valid split turns
    up or the features are exhausted.
    """
    best = None
    for start in range(0, len(feat_order), k):
        cand = _best_split_among(x, y, feat_order[start:start + k])
        if cand is not None and (best is None or cand[0] < best[0]):
            best = cand
        if best is not None:
            break
    return best


def _best_split_among(x: np.ndarray, y: np.ndarray, feats: np.ndarray):
    n = y.shape[0]
    xs = x[:, feats]
    order = np.argsort(xs, axis=0, kind="stable")
    sorted_vals = np.take_along_axis(xs, order, axis=0)
    sorted_pos = np.cumsum(y[order], axis=0)           # positives in the left part

    best = None
    total_pos = sorted_pos[-1, 0] if n else 0
    for col in range(feats.shape[0]):
        vals = sorted_vals[:, col]
        boundaries = np.flatnonzero(vals[1:] > vals[:-1])   # split after index b
        if boundaries.size == 0:
            continue
        n_left = boundaries + 1
        n_right = n - n_left
        pos_left = sorted_pos[boundaries, col]
        pos_right = total_pos - pos_left
        p_l = pos_left / n_left
        p_r = pos_right / n_right
        gini = (n_left * 2 * p_l * (1 - p_l) + n_right * 2 * p_r * (1 - p_r)) / n
        i = int(np.argmin(gini))
        if best is None or gini[i] < best[0]:
            thr = 0.5 * (vals[boundaries[i]] + vals[boundaries[i] + 1])
            best = (float(gini[i]), int(feats[col]), float(thr))
    return best


def _grow_tree(x: np.ndarray, y: np.ndarray, cfg: ForestConfig,
               rng: np.random.Generator) -> Tree:
    k = cfg.resolve_features(x.shape[1])
    feature, threshold, left, right, value = [], [], [], [], []

    def add_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    stack = [(add_node(), np.arange(x.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        ys = y[idx]
        frac = float(ys.mean())
        value[node] = frac
        if depth >= cfg.max_depth or idx.size < cfg.min_split or frac in (0.0, 1.0):
            continue
        split = _best_split(x[idx], ys, rng.permutation(x.shape[1]), k)
        if split is None:
            continue
        _, f, thr = split
        mask = x[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        l_id, r_id = add_node(), add_node()
        left[node], right[node] = l_id, r_id
        stack.append((l_id, idx[mask], depth + 1))
        stack.append((r_id, idx[~mask], depth + 1))

    return Tree(feature=np.asarray(feature, dtype=np.int64),
                threshold=np.asarray(threshold, dtype=np.float64),
                left=np.asarray(left, dtype=np.int64),
                right=np.asarray(right, dtype=np.int64),
                value=np.asarray(value, dtype=np.float64))


def _as_matrix(samples) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray([s.features for s in samples], dtype=np.float64)
    y = np.asarray([s.label for s in samples], dtype=np.int64)
    return x, y


def train_forest(samples, cfg: ForestConfig, seed: int) -> ForestModel:
    """Fit bootstrap trees; deterministic in seed and independent of sample order."""
    if len(samples) < 2:
        raise ValueError("need at least 2 samples")
    x, y = _as_matrix(samples)
    if len(np.unique(y)) < 2:
        raise ValueError("both classes must be present in the training data")
    # canonical ordering removes any dependence on input order
    order = np.lexsort(np.vstack([y[None, :], x.T[::-1]]))
    x, y = x[order], y[order]
    n = x.shape[0]
    trees = []
    for t in range(cfg.n_trees):
        rng = np.random.default_rng([int(seed), t])
        boot = rng.integers(0, n, size=n)
        trees.append(_grow_tree(x[boot], y[boot], cfg, rng))
    return ForestModel(n_trees=cfg.n_trees, max_depth=cfg.max_depth,
                       min_split=cfg.min_split,
                       features_per_split=cfg.resolve_features(x.shape[1]),
                       seed=int(seed), n_features=x.shape[1], trees=trees)


def predict_proba(model: ForestModel, features):
    """Mean leaf class-1 fraction across trees; scalar in, scalar out."""
    arr = np.asarray(features, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {arr.shape[1]}")
    score = np.zeros(arr.shape[0])
    for tree in model.trees:
        score += tree.predict(arr)
    score /= len(model.trees)
    return float(score[0]) if single else score


def f1_score(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """F1 of the positive class; 0 when the positive class never appears."""
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def auc_score(y_true: np.ndarray, scores: np.ndarray) -> float:
    """Mann-Whitney rank AUC; ties share average rank."""
    y_true = np.asarray(y_true)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(np.sum(y_true == 1))
    n_neg = int(np.sum(y_true == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.shape[0])
    sorted_scores = scores[order]
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = float(np.sum(ranks[y_true == 1]))
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def stratified_folds(labels: np.ndarray, k_folds: int, seed) -> list[np.ndarray]:
    """Round-robin assignment of shuffled per-class indices to k folds."""
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k_folds)]
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < k_folds:
            raise ValueError(f"class {cls} has fewer members than folds")
        rng.shuffle(idx)
        for i, sample in enumerate(idx):
            folds[i % k_folds].append(int(sample))
    return [np.asarray(sorted(f)) for f in folds]


def evaluate_cv(samples, k_folds: int, cfg: ForestConfig, seed) -> ClassMetrics:
    """Stratified k-fold cross-validation: per-fold F1 (threshold 0.5) and AUC."""
    if k_folds < 2:
        raise ValueError("k_folds must be >= 2")
    x, y = _as_matrix(samples)
    folds = stratified_folds(y, k_folds, seed)
    f1s, aucs = [], []
    for fold_id, test_idx in enumerate(folds):
        is_test = np.zeros(len(samples), dtype=bool)
        is_test[test_idx] = True
        train = [samples[i] for i in np.flatnonzero(~is_test)]
        model = train_forest(train, cfg, seed=_mix_seed(seed, fold_id))
        scores = predict_proba(model, x[test_idx])
        preds = (scores >= 0.5).astype(np.int64)
        f1s.append(f1_score(y[test_idx], preds))
        aucs.append(auc_score(y[test_idx], scores))
    return ClassMetrics(
        f1=float(np.mean(f1s)), auc=float(np.mean(aucs)),
        f1_scores=tuple(f1s), auc_scores=tuple(aucs),
        f1_std=float(np.std(f1s)), auc_std=float(np.std(aucs)),
    )


def samples_from_distributions(dists) -> list[LabeledSample]:
    """Normalized-histogram features from labeled empirical distributions."""
    out = []
    for d in dists:
        if d.label is None:
            raise ValueError("distribution has no class label")
        out.append(LabeledSample(features=d.normalized(), label=d.label))
    return out


def shots_sweep(non_vortical_rep, vortical_rep, shot_list, budget: int,
                cfg: ForestConfig, seed, k_folds: int = 5):
    """Classification metrics per shot count under a fixed measurement budget.

    Every shots value consumes the full budget: budget/shots empirical
    distributions are drawn per class, so each sweep point sees the same
    number of measurements.
    """
    from .parqvd import sample_empirical

    rows = []
    for shots in shot_list:
        if budget % shots:
            raise ValueError(f"budget {budget} is not divisible by {shots} shots")
        n_repeats = budget // shots
        nv = sample_empirical(non_vortical_rep, shots, n_repeats, seed=[_mix_seed(seed, shots), 0])
        v = sample_empirical(vortical_rep, shots, n_repeats, seed=[_mix_seed(seed, shots), 1])
        samples = samples_from_distributions(nv + v)
        metrics = evaluate_cv(samples, k_folds, cfg, seed=_mix_seed(seed, shots))
        rows.append((shots, metrics))
    return rows


def _mix_seed(seed, salt: int) -> int:
    if isinstance(seed, (list, tuple)):
        mixed = 0
        for part in seed:
            mixed = mixed * 1_000_003 + int(part)
        seed = mixed
    return int(seed) * 1_000_003 + int(salt)


def write_metrics_csv(rows, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["shots", "f1_mean", "f1_std", "auc_mean", "auc_std"])
        for shots, m in rows:
            writer.writerow([shots, m.f1, m.f1_std, m.auc, m.auc_std])
