import numpy as np
import pytest

from oracles import confusion_metrics
from soundcollage.learners.forest import (ForestModel, best_split, build_tree, classification_metrics,
                                          cross_validate, forest_eval, forest_train, gini, load_forest,
                                          save_forest, stratified_folds)


def gaussians(n=200, sep=3.0, dim=2, seed=0, shift_all=False):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    x = rng.standard_normal((n, dim))
    if shift_all:
        x += sep * y[:, None]
    else:
        x[:, 0] += sep * y
    return x, y


def test_gini_values():
    assert gini(np.array([5, 5])) == 0.5
    assert gini(np.array([4, 0])) == 0.0
    assert gini(np.array([0, 0])) == 0.0


def test_single_tree_memorizes():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((60, 4))
    y = rng.integers(0, 3, 60)
    model = forest_train(x, y, n_trees=1, seed=1, bootstrap=False)
    assert np.array_equal(model.predict(x), y)


def test_xor_fit_with_two_levels():
    x = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([0, 1, 1, 0])
    model = forest_train(x, y, n_trees=1, seed=0, max_features=None, bootstrap=False)
    assert np.array_equal(model.predict(x), y)
    tree = model.trees[0]
    assert tree.depth() == 2
    assert int(np.sum(tree.feature >= 0)) == 3


def test_best_split_matches_exhaustive_scan():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((30, 3))
    y = (x[:, 1] + 0.3 * rng.standard_normal(30) > 0).astype(int)
    f, thr, score = best_split(x, y, 2, np.arange(3))
    best = np.inf
    for j in range(3):
        vals = np.unique(x[:, j])
        for a, b in zip(vals[:-1], vals[1:]):
            t = (a + b) / 2
            left, right = y[x[:, j] <= t], y[x[:, j] > t]
            s = (len(left) * gini(np.bincount(left, minlength=2)) + len(right) * gini(np.bincount(right, minlength=2))) / 30
            best = min(best, s)
    assert abs(score - best) <= 1e-12
    assert f == 1


def test_leaf_counts_sum_to_samples():
    x, y = gaussians(80)
    tree = build_tree(x, y, 2, 1, np.random.default_rng(0))
    leaves = tree.feature < 0
    assert tree.counts[0].sum() == 80
    # every internal node's counts equal the sum of its children's
    for node in np.nonzero(~leaves)[0]:
        assert np.array_equal(tree.counts[node], tree.counts[tree.left[node]] + tree.counts[tree.right[node]])


def test_single_tree_forest_equals_tree():
    x, y = gaussians(100, sep=1.0)
    model = forest_train(x, y, n_trees=1, seed=5)
    assert np.array_equal(model.predict(x), model.classes[model.trees[0].predict_index(x)])


def test_vote_tie_goes_to_lower_class():
    x, y = gaussians(40)
    m1 = forest_train(x, 1 - y, n_trees=1, seed=0, bootstrap=False)
    m2 = forest_train(x, y, n_trees=1, seed=0, bootstrap=False)
    both = ForestModel(m1.trees + m2.trees, m1.classes)
    assert np.all(both.predict(x) == 0)


def test_deterministic_per_seed():
    x, y = gaussians(100, sep=1.0)
    a = forest_train(x, y, seed=3).predict(x + 0.1)
    b = forest_train(x, y, seed=3).predict(x + 0.1)
    assert np.array_equal(a, b)


def test_single_class_rejected():
    with pytest.raises(ValueError):
        forest_train(np.zeros((5, 2)), np.zeros(5))


def test_metric_hand_cases():
    y = np.array([0, 1, 0, 1])
    m = classification_metrics(y, y)
    assert (m.accuracy, m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0, 1.0)
    c = classification_metrics(y, np.zeros(4, int))
    assert c.accuracy == 0.5
    assert abs(c.f1 - 1 / 3) < 1e-12


def test_metrics_match_confusion_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(1, 40))
        y, p = rng.integers(0, 3, n), rng.integers(0, 3, n)
        m = classification_metrics(y, p)
        ref = confusion_metrics(y.tolist(), p.tolist())
        np.testing.assert_allclose([m.accuracy, m.precision, m.recall, m.f1], ref, atol=1e-12)


def test_stratified_fold_sizes():
    y = np.repeat([0, 1], 100)
    assign = stratified_folds(y, 5, seed=0)
    for k in range(5):
        test = assign == k
        assert test.sum() == 40 and (~test).sum() == 160
        assert np.sum(y[test] == 1) == 20
    with pytest.raises(ValueError):
        stratified_folds(np.array([0, 1] * 4), 5)


def test_bayes_rate_of_generative_model():
    # 3 sigma per coordinate in 2-d: Mahalanobis gap 3*sqrt(2), Bayes accuracy Phi(gap / 2)
    from scipy.stats import norm
    assert norm.cdf(3.0 * np.sqrt(2) / 2) >= 0.98
    assert norm.cdf(3.0 / 2) < 0.95  # a single-axis 3 sigma shift could not meet 0.95


def test_cv_on_separated_gaussians():
    x, y = gaussians(200, sep=3.0, shift_all=True)
    folds = cross_validate(x, y, folds=5, n_trees=10, seed=0)
    assert np.mean([f.accuracy for f in folds]) >= 0.95


def test_cv_on_permuted_labels():
    x, y = gaussians(200, sep=3.0, shift_all=True)
    y = y[np.random.default_rng(1).permutation(200)]
    acc = np.mean([f.accuracy for f in cross_validate(x, y, folds=5, n_trees=10, seed=0)])
    assert 0.35 <= acc <= 0.65


def test_eval_and_checkpoint(tmp_path):
    x, y = gaussians(60)
    model = forest_train(x, y, n_trees=3, seed=2)
    save_forest(model, tmp_path / "f.bin")
    back = load_forest(tmp_path / "f.bin")
    assert back.n_trees == 3
    xt, yt = gaussians(40, seed=9)
    assert forest_eval(back, xt, yt) == forest_eval(model, xt, yt)
    with pytest.raises(ValueError):
        forest_eval(model, np.zeros((0, 2)), np.zeros(0))
