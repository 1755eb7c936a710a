"""Binary tasks, the agreement score, and two task-discovery strategies.

The agreement score of a task is estimated by repeatedly training two
independently initialized MLPs on the same training split and measuring how
often their hard labels coincide on the held-out split.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .learners.mlp import MlpModel, mlp_init, mlp_train, predict_labels, predict_proba, standardizer

log = logging.getLogger(__name__)

STRATEGIES = ("embedding-bipartition", "as-hillclimb")


@dataclass
class Task:
    assignment: dict[str, int]
    task_id: str = ""

    def __post_init__(self):
        self.assignment = {str(k): int(v) for k, v in self.assignment.items()}
        bad = sorted(k for k, v in self.assignment.items() if v not in (0, 1))
        if bad:
            raise ValueError(f"task {self.task_id!r}: labels must be 0/1 (offending ids: {bad[:5]})")

    @property
    def ids(self) -> list[str]:
        return sorted(self.assignment)

    def labels(self, ids=None) -> np.ndarray:
        ids = self.ids if ids is None else ids
        return np.array([self.assignment[i] for i in ids], dtype=int)

    def members(self, label: int) -> list[str]:
        return [i for i in self.ids if self.assignment[i] == label]

    def counts(self) -> tuple[int, int]:
        ones = sum(self.assignment.values())
        return len(self.assignment) - ones, ones

    def is_degenerate(self) -> bool:
        return 0 in self.counts()

    def canonical_key(self) -> tuple:
        """Identical for a task and its complement."""
        ids = self.ids
        if not ids:
            return ()
        flip = self.assignment[ids[0]]
        return tuple(ids), tuple(self.assignment[i] ^ flip for i in ids)


def validate_task(task: Task, known_ids) -> None:
    missing = sorted(set(task.assignment) - set(known_ids))
    if missing:
        raise KeyError(f"task {task.task_id!r} references unknown ids: {missing[:5]}")
    if task.is_degenerate():
        raise ValueError(f"task {task.task_id!r} has only one label")


@dataclass
class AgreementEstimate:
    mean: float
    std: float
    n_pairs: int
    split_seed: int
    pair_scores: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class TrainParams:
    # lr is scaled for ~4096 standardized inputs: larger steps let both models
    # memorize arbitrary labelings the same way, inflating AS on random tasks
    hidden: int = 64
    epochs: int = 30
    lr: float = 0.001
    batch: int = 16


def random_task(ids, seed: int = 0, task_id: str | None = None) -> Task:
    """Balanced random bipartition: ceil(n/2) ones, floor(n/2) zeros."""
    ids = sorted(str(i) for i in ids)
    if len(ids) < 4:
        raise ValueError(f"need at least 4 ids for a random task, got {len(ids)}")
    rng = np.random.default_rng(seed)
    labels = np.zeros(len(ids), dtype=int)
    labels[rng.permutation(len(ids))[: (len(ids) + 1) // 2]] = 1
    return Task(dict(zip(ids, labels.tolist())), task_id or f"random-{seed}")


def complement(task: Task) -> Task:
    return Task({k: 1 - v for k, v in task.assignment.items()}, task.task_id + "~")


def dedup_tasks(tasks):
    """Drop tasks equal (up to complement) to an earlier one. Works on tasks or (task, ...) tuples."""
    seen, out = set(), []
    for item in tasks:
        t = item[0] if isinstance(item, tuple) else item
        key = t.canonical_key()
        if key in seen:
            continue
        seen.add(key)
        out.append(item)
    return out


def feature_matrix(ids, features: Mapping) -> np.ndarray:
    rows = []
    for i in ids:
        f = features[i]
        rows.append(np.asarray(getattr(f, "values", f), dtype=np.float64).reshape(-1))
    return np.vstack(rows)


def stratified_split(task: Task, train_frac: float, seed: int) -> tuple[list[str], list[str]]:
    """Per-label shuffle, then the first round(frac * n_label) go to training."""
    if not 0 < train_frac < 1:
        raise ValueError("train_frac must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for label in (0, 1):
        members = task.members(label)
        perm = rng.permutation(len(members))
        n_train = int(round(train_frac * len(members)))
        n_train = min(max(n_train, 1), len(members))
        train += [members[k] for k in perm[:n_train]]
        test += [members[k] for k in perm[n_train:]]
    if not test:
        raise ValueError(f"task {task.task_id!r}: train_frac={train_frac} leaves an empty test split")
    return sorted(train), sorted(test)


def train_task_model(x: np.ndarray, y: np.ndarray, init_seed: int, order_seed: int,
                     params: TrainParams = TrainParams()) -> MlpModel:
    """Fresh MLP standardized on ``x`` (training statistics) and trained on (x, y)."""
    model = mlp_init(x.shape[1], params.hidden, init_seed)
    model.shift, model.scale = standardizer(x)
    return mlp_train(model, x, y, params.epochs, params.lr, params.batch, order_seed)


def pair_agreement(x_train, y_train, x_test, seeds_a: tuple[int, int], seeds_b: tuple[int, int],
                   params: TrainParams = TrainParams()) -> float:
    """Fraction of test inputs on which two trained models emit the same label."""
    ma = train_task_model(x_train, y_train, *seeds_a, params)
    mb = train_task_model(x_train, y_train, *seeds_b, params)
    return float(np.mean(predict_labels(ma, x_test) == predict_labels(mb, x_test)))


def _pair_seeds(seed: int, pair: int) -> tuple[tuple[int, int], tuple[int, int]]:
    s = np.random.SeedSequence([seed, 1, pair]).generate_state(4)
    return (int(s[0]), int(s[1])), (int(s[2]), int(s[3]))


def agreement_score(task: Task, features: Mapping, n_pairs: int = 4, train_frac: float = 0.8,
                    seed: int = 0, params: TrainParams = TrainParams()) -> AgreementEstimate:
    validate_task(task, features.keys())
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    split_seed = int(np.random.SeedSequence([seed, 0]).generate_state(1)[0])
    train_ids, test_ids = stratified_split(task, train_frac, split_seed)
    x_tr, y_tr = feature_matrix(train_ids, features), task.labels(train_ids)
    x_te = feature_matrix(test_ids, features)
    scores = []
    for p in range(n_pairs):
        a, b = _pair_seeds(seed, p)
        scores.append(pair_agreement(x_tr, y_tr, x_te, a, b, params))
    arr = np.array(scores)
    return AgreementEstimate(float(arr.mean()), float(arr.std()), n_pairs, split_seed, scores)


# --- candidate generation ---------------------------------------------------

def principal_directions(x: np.ndarray, d: int = 8, seed: int = 0, iters: int = 200,
                         tol: float = 1e-10) -> np.ndarray:
    """Top-``d`` right singular vectors of ``x`` by power iteration with deflation.

    Returns a (d', n_features) array, d' <= d (stops early on a null remainder).
    """
    rng = np.random.default_rng(seed)
    dirs = []
    for _ in range(min(d, min(x.shape))):
        v = rng.standard_normal(x.shape[1])
        for u in dirs:
            v -= (v @ u) * u
        v /= np.linalg.norm(v)
        norm = 1.0
        for _ in range(iters):
            w = x.T @ (x @ v)
            for u in dirs:
                w -= (w @ u) * u
            norm = np.linalg.norm(w)
            if norm < 1e-12:
                break
            w /= norm
            done = abs(abs(w @ v) - 1.0) < tol
            v = w
            if done:
                break
        if norm < 1e-12:
            break
        # fix sign for reproducibility: largest-magnitude entry positive
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        dirs.append(v)
    return np.array(dirs).reshape(len(dirs), x.shape[1])


def two_means(points: np.ndarray, rng: np.random.Generator, iters: int = 100) -> np.ndarray:
    """Lloyd's algorithm with k=2 from two random seed points; returns 0/1 labels."""
    n = len(points)
    centers = points[rng.choice(n, size=2, replace=False)].copy()
    labels = None
    for _ in range(iters):
        d0 = np.sum((points - centers[0]) ** 2, axis=1)
        d1 = np.sum((points - centers[1]) ** 2, axis=1)
        new = (d1 < d0).astype(int)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in (0, 1):
            if np.any(labels == c):
                centers[c] = points[labels == c].mean(axis=0)
    return labels


def _standardized(x: np.ndarray) -> np.ndarray:
    mu, sd = standardizer(x)
    return (x - mu) / sd


def embedding_candidates(ids: list[str], x: np.ndarray, n_candidates: int, seed: int = 0,
                         n_dirs: int = 8, min_side: int = 2) -> list[Task]:
    """Sign splits along principal directions, then 2-means on random direction pairs."""
    z = _standardized(x)
    dirs = principal_directions(z, n_dirs, seed)
    proj = z @ dirs.T if len(dirs) else np.zeros((len(ids), 0))
    out, seen = [], set()

    def offer(labels):
        counts = np.bincount(labels, minlength=2)
        if counts.min() < min_side:
            return
        t = Task(dict(zip(ids, labels.tolist())), f"eb-{len(out):03d}")
        key = t.canonical_key()
        if key not in seen:
            seen.add(key)
            out.append(t)

    for k in range(proj.shape[1]):
        if len(out) >= n_candidates:
            return out
        offer((proj[:, k] > 0).astype(int))
    rng = np.random.default_rng([seed, 7])
    attempts = 0
    while len(out) < n_candidates and proj.shape[1] >= 2 and attempts < 20 * n_candidates:
        attempts += 1
        i, j = rng.choice(proj.shape[1], size=2, replace=False)
        offer(two_means(proj[:, [min(i, j), max(i, j)]], rng))
    return out


def _hillclimb(ids, features, x, seed, as_threshold, n_pairs, train_frac, params, rounds, flip_frac,
               restart) -> tuple[Task, AgreementEstimate] | None:
    task = random_task(ids, int(np.random.SeedSequence([seed, 3, restart]).generate_state(1)[0]),
                       task_id=f"hc-{restart:03d}")
    est = agreement_score(task, features, n_pairs, train_frac, seed, params)
    n_flip = max(1, int(round(flip_frac * len(ids))))
    for r in range(rounds):
        y = task.labels(ids)
        model = train_task_model(x, y, *_pair_seeds(seed + 101 * (r + 1), restart)[0], params)
        margin = np.abs(predict_proba(model, x) - 0.5)
        flip = np.lexsort((np.arange(len(ids)), margin))[:n_flip]
        new_y = y.copy()
        new_y[flip] ^= 1
        if min(np.bincount(new_y, minlength=2)) < 2:
            continue
        proposal = Task(dict(zip(ids, new_y.tolist())), task.task_id)
        new_est = agreement_score(proposal, features, n_pairs, train_frac, seed, params)
        log.debug("hill-climb %s round %d: %.3f -> %.3f", task.task_id, r, est.mean, new_est.mean)
        if new_est.mean > est.mean:
            task, est = proposal, new_est
    return (task, est) if est.mean >= as_threshold else None


def discover_tasks(features: Mapping, strategy: str = "embedding-bipartition", n_candidates: int = 16,
                   as_threshold: float = 0.85, seed: int = 0, n_pairs: int = 4, train_frac: float = 0.8,
                   params: TrainParams = TrainParams(), rounds: int = 8, flip_frac: float = 0.05
                   ) -> list[tuple[Task, AgreementEstimate]]:
    """High-agreement tasks over ``features`` (id -> grid), sorted by decreasing AS."""
    if not features:
        raise ValueError("no samples to discover tasks over")
    # thresholds above 1 are allowed and simply unreachable
    if as_threshold <= 0.5:
        raise ValueError("as_threshold must exceed 0.5")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    ids = sorted(features)
    x = feature_matrix(ids, features)
    found = []
    if strategy == "embedding-bipartition":
        for task in embedding_candidates(ids, x, n_candidates, seed):
            est = agreement_score(task, features, n_pairs, train_frac, seed, params)
            log.info("candidate %s: AS %.3f +- %.3f", task.task_id, est.mean, est.std)
            if est.mean >= as_threshold:
                found.append((task, est))
    else:
        for restart in range(n_candidates):
            res = _hillclimb(ids, features, x, seed, as_threshold, n_pairs, train_frac, params,
                             rounds, flip_frac, restart)
            if res is not None:
                found.append(res)
    found = dedup_tasks(found)
    found.sort(key=lambda te: (-te[1].mean, te[0].task_id))
    return found
