"""Bagged Gini decision trees, classification metrics and stratified k-fold CV."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np


@dataclass
class Tree:
    # parallel node arrays; leaves have feature == -1
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, n_classes)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        best, stack = 0, [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.feature[node] >= 0:
                stack += [(self.left[node], d + 1), (self.right[node], d + 1)]
        return best

    def leaf_index(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(len(x), dtype=int)
        active = self.feature[node] >= 0
        while np.any(active):
            idx = np.nonzero(active)[0]
            n = node[idx]
            go_left = x[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return node

    def predict_index(self, x: np.ndarray) -> np.ndarray:
        # argmax picks the lowest class index on ties
        return np.argmax(self.counts[self.leaf_index(x)], axis=1)


@dataclass
class ForestModel:
    trees: list[Tree]
    classes: np.ndarray
    seed: int = 0

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        votes = np.zeros((len(x), len(self.classes)), dtype=int)
        rows = np.arange(len(x))
        for tree in self.trees:
            np.add.at(votes, (rows, tree.predict_index(x)), 1)
        return self.classes[np.argmax(votes, axis=1)]


def gini(counts: np.ndarray) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = counts / total[..., None]
    return np.where(total > 0, 1.0 - np.sum(p * p, axis=-1), 0.0)


def best_split(x: np.ndarray, y: np.ndarray, n_classes: int, features: np.ndarray):
    """Lowest weighted-Gini threshold split over ``features``.

    Returns (feature, threshold, score) or None when no feature can split.
    Ties go to the earliest feature in ``features``, then the lowest threshold.
    """
    n = len(y)
    cols = x[:, features]
    order = np.argsort(cols, axis=0, kind="stable")
    sorted_vals = np.take_along_axis(cols, order, axis=0)
    onehot = np.eye(n_classes, dtype=np.int64)[y]
    left = np.cumsum(onehot[order], axis=0)[:-1]  # (n-1, m, C)
    total = onehot.sum(axis=0)
    right = total - left
    n_left = np.arange(1, n)[:, None]
    score = (n_left * gini(left) + (n - n_left) * gini(right)) / n
    valid = sorted_vals[1:] > sorted_vals[:-1]
    score = np.where(valid, score, np.inf)
    if not np.isfinite(score).any():
        return None
    # column-major scan so the first feature wins ties
    flat = int(np.argmin(score.T))
    fi, pos = divmod(flat, n - 1)
    thr = 0.5 * (sorted_vals[pos, fi] + sorted_vals[pos + 1, fi])
    if not thr < sorted_vals[pos + 1, fi]:
        thr = sorted_vals[pos, fi]
    return int(features[fi]), float(thr), float(score[pos, fi])


def build_tree(x: np.ndarray, y: np.ndarray, n_classes: int, max_features: int | None,
               rng: np.random.Generator, min_samples_split: int = 2) -> Tree:
    d = x.shape[1]
    m = d if max_features is None else max(1, min(d, max_features))
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(np.bincount(y[idx], minlength=n_classes))
        return len(feature) - 1

    root_idx = np.arange(len(y))
    stack = [(new_node(root_idx), root_idx)]
    while stack:
        node, idx = stack.pop()
        if len(idx) < min_samples_split or np.count_nonzero(counts[node]) <= 1:
            continue
        xs, ys = x[idx], y[idx]
        perm = rng.permutation(d)
        split = best_split(xs, ys, n_classes, perm[:m])
        if split is None and m < d:
            split = best_split(xs, ys, n_classes, perm[m:])
        if split is None:
            continue
        f, thr, _ = split
        mask = xs[:, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri))
        stack.append((left[node], li))
    return Tree(np.array(feature), np.array(threshold), np.array(left), np.array(right), np.array(counts))


def forest_train(x, y, n_trees: int = 10, seed: int = 0, max_features: int | str | None = "sqrt",
                 bootstrap: bool = True) -> ForestModel:
    """Random forest of fully grown Gini trees.

    ``max_features="sqrt"`` samples floor(sqrt(d)) candidate features per
    node; ``None`` uses every feature.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2 or len(x) != len(y) or len(y) == 0:
        raise ValueError("x must be (n_samples, n_features) with one label per row")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    classes, yi = np.unique(y, return_inverse=True)
    if len(classes) < 2:
        raise ValueError("need at least two classes to train a forest")
    if max_features == "sqrt":
        max_features = max(1, int(np.sqrt(x.shape[1])))
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        idx = rng.integers(0, len(y), len(y)) if bootstrap else np.arange(len(y))
        trees.append(build_tree(x[idx], yi[idx], len(classes), max_features, rng))
    return ForestModel(trees, classes, seed)


@dataclass
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision, "recall": self.recall, "f1": self.f1}


def classification_metrics(y_true, y_pred) -> Metrics:
    """Accuracy plus macro precision/recall/F1; undefined ratios count as 0."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if len(y_true) == 0 or len(y_true) != len(y_pred):
        raise ValueError("need equally long, nonempty label and prediction arrays")
    classes = np.union1d(y_true, y_pred)
    precision, recall, f1 = [], [], []
    for c in classes:
        tp = int(np.sum((y_pred == c) & (y_true == c)))
        pred_c = int(np.sum(y_pred == c))
        true_c = int(np.sum(y_true == c))
        p = tp / pred_c if pred_c else 0.0
        r = tp / true_c if true_c else 0.0
        precision.append(p)
        recall.append(r)
        f1.append(2 * p * r / (p + r) if p + r else 0.0)
    return Metrics(float(np.mean(y_true == y_pred)), float(np.mean(precision)),
                   float(np.mean(recall)), float(np.mean(f1)))


def forest_eval(model: ForestModel, x, y) -> Metrics:
    if len(y) == 0:
        raise ValueError("evaluation set is empty")
    return classification_metrics(y, model.predict(x))


def stratified_folds(y, folds: int = 5, seed: int = 0) -> np.ndarray:
    """Fold index per sample; each class is shuffled then dealt round-robin."""
    y = np.asarray(y)
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if len(y) < 2 * folds:
        raise ValueError(f"need at least {2 * folds} samples for {folds}-fold CV, got {len(y)}")
    rng = np.random.default_rng(seed)
    assign = np.empty(len(y), dtype=int)
    offset = 0
    for c in np.unique(y):
        idx = np.nonzero(y == c)[0]
        idx = idx[rng.permutation(len(idx))]
        assign[idx] = (np.arange(len(idx)) + offset) % folds
        offset += len(idx)
    return assign


def cross_validate(x, y, folds: int = 5, n_trees: int = 10, seed: int = 0) -> list[Metrics]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    assign = stratified_folds(y, folds, seed)
    out = []
    for k, child in enumerate(np.random.SeedSequence(seed).spawn(folds)):
        test = assign == k
        model = forest_train(x[~test], y[~test], n_trees=n_trees, seed=int(child.generate_state(1)[0]))
        out.append(forest_eval(model, x[test], y[test]))
    return out


# --- checkpoints ------------------------------------------------------------

_MAGIC = b"SCRF"
_VERSION = 1


def save_forest(model: ForestModel, path) -> None:
    """Header, class ids, then per tree: node count and float32 node arrays."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIIIq", _MAGIC, _VERSION, model.n_trees, len(model.classes), model.seed))
        fh.write(np.asarray(model.classes, dtype="<f4").tobytes())
        for t in model.trees:
            fh.write(struct.pack("<I", t.n_nodes))
            for arr in (t.feature, t.threshold, t.left, t.right, t.counts):
                fh.write(np.asarray(arr, dtype="<f4").reshape(-1).tobytes())


def load_forest(path) -> ForestModel:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, version, n_trees, n_classes, seed = struct.unpack_from("<4sIIIq", data, 0)
    if magic != _MAGIC or version != _VERSION:
        raise ValueError(f"{path}: not a version-{_VERSION} forest checkpoint")
    pos = struct.calcsize("<4sIIIq")
    classes = np.frombuffer(data, "<f4", n_classes, pos).astype(np.float64)
    pos += 4 * n_classes
    if np.all(classes == np.round(classes)):
        classes = classes.astype(int)
    trees = []
    for _ in range(n_trees):
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        arrs = []
        for size in (n, n, n, n, n * n_classes):
            arrs.append(np.frombuffer(data, "<f4", size, pos).astype(np.float64))
            pos += 4 * size
        f, thr, le, ri, cnt = arrs
        trees.append(Tree(f.astype(int), thr, le.astype(int), ri.astype(int), cnt.reshape(n, n_classes).astype(int)))
    return ForestModel(trees, classes, seed)
