import numpy as np
import pytest

from soundcollage.discovery import (AgreementEstimate, Task, TrainParams, agreement_score, complement, dedup_tasks,
                                    discover_tasks, embedding_candidates, feature_matrix, pair_agreement,
                                    principal_directions, random_task, stratified_split, validate_task)
from soundcollage.synth import gen_planted_features

IDS = [f"s{i:02d}" for i in range(10)]


def small_planted(seed=0):
    return gen_planted_features(n=200, dim=256, informative=16, gap=4.0, seed=seed)


def noise_features(seed, n=200, dim=256):
    rng = np.random.default_rng([seed, 99])
    return {f"n{i:03d}": rng.standard_normal(dim) for i in range(n)}


def match_up_to_complement(task: Task, truth: Task) -> float:
    ids = truth.ids
    agree = np.mean(task.labels(ids) == truth.labels(ids))
    return max(agree, 1 - agree)


def test_random_task_balance_and_determinism():
    t = random_task(IDS, 3)
    assert sum(t.assignment.values()) == 5
    assert random_task(IDS, 3).assignment == t.assignment
    assert sum(random_task(IDS[:7], 0).assignment.values()) == 4
    with pytest.raises(ValueError):
        random_task(IDS[:3], 0)


def test_random_task_binomial_bound():
    hits = np.zeros(len(IDS))
    for seed in range(1000):
        hits += random_task(IDS, seed).labels(IDS)
    assert np.all(np.abs(hits - 500) <= 60)


def test_task_validation():
    with pytest.raises(ValueError):
        Task({"a": 2})
    t = Task({"a": 0, "b": 0})
    with pytest.raises(ValueError):
        validate_task(t, ["a", "b"])
    with pytest.raises(KeyError):
        validate_task(Task({"a": 0, "zz": 1}), ["a", "b"])


def test_complement_involution_and_balance():
    t = random_task(IDS, 1)
    assert complement(complement(t)).assignment == t.assignment
    assert complement(t).counts() == t.counts()[::-1]
    assert t.counts() == (5, 5)


def test_dedup_merges_complements():
    t = random_task(IDS, 4)
    u = random_task(IDS, 5)
    out = dedup_tasks([t, complement(t), u, complement(u), t])
    assert [x.task_id for x in out] == [t.task_id, u.task_id]
    assert len({x.canonical_key() for x in out}) == 2


def test_stratified_split_fractions():
    t = random_task([f"i{k:03d}" for k in range(200)], 0)
    train, test = stratified_split(t, 0.8, 5)
    assert len(train) == 160 and len(test) == 40
    assert sum(t.assignment[i] for i in test) == 20
    assert not set(train) & set(test)
    with pytest.raises(ValueError):
        stratified_split(Task({"a": 0, "b": 1}), 0.8, 0)
    with pytest.raises(ValueError):
        stratified_split(t, 1.0, 0)


def test_identical_seeds_agree_perfectly():
    feats, _ = small_planted()
    ids = sorted(feats)
    task = random_task(ids, 0)
    x = feature_matrix(ids, feats)
    y = task.labels(ids)
    assert pair_agreement(x[:150], y[:150], x[150:], (11, 12), (11, 12)) == 1.0


def test_estimate_fields_and_reproducibility():
    feats, planted = small_planted()
    a = agreement_score(planted, feats, n_pairs=3, seed=2)
    b = agreement_score(planted, feats, n_pairs=3, seed=2)
    assert isinstance(a, AgreementEstimate)
    assert a == b
    assert 0 <= a.mean <= 1 and a.std >= 0 and a.n_pairs == 3 and len(a.pair_scores) == 3
    with pytest.raises(ValueError):
        agreement_score(planted, feats, n_pairs=0)


def test_planted_scores_above_random():
    feats, planted = small_planted()
    hi = agreement_score(planted, feats, seed=0).mean
    lo = agreement_score(random_task(sorted(feats), 0), feats, seed=0).mean
    assert hi >= 0.85
    assert lo <= 0.65


def test_complement_invariance_is_statistical():
    feats, planted = small_planted(seed=1)
    rand = random_task(sorted(feats), 9)
    for task in (planted, rand):
        d = [agreement_score(task, feats, seed=s).mean - agreement_score(complement(task), feats, seed=s).mean
             for s in range(10)]
        assert abs(np.mean(d)) <= 0.05


def test_principal_directions_orthonormal():
    x = np.random.default_rng(0).standard_normal((50, 12)) * np.linspace(3, 0.5, 12)
    d = principal_directions(x, 4)
    np.testing.assert_allclose(d @ d.T, np.eye(4), atol=1e-6)
    # agrees with the SVD up to sign
    _, _, vt = np.linalg.svd(x, full_matrices=False)
    np.testing.assert_allclose(np.abs(np.sum(d * vt[:4], axis=1)), 1.0, atol=1e-4)


def test_embedding_candidates_distinct():
    feats, _ = small_planted()
    ids = sorted(feats)
    cands = embedding_candidates(ids, feature_matrix(ids, feats), 12, seed=0)
    assert 0 < len(cands) <= 12
    assert len({c.canonical_key() for c in cands}) == len(cands)
    assert all(min(c.counts()) >= 2 for c in cands)


def test_embedding_bipartition_recovers_planted_split():
    feats, planted = small_planted()
    found = discover_tasks(feats, n_candidates=4, seed=0)
    assert found
    assert max(match_up_to_complement(t, planted) for t, _ in found) >= 0.9
    means = [e.mean for _, e in found]
    assert means == sorted(means, reverse=True)
    assert all(m >= 0.85 for m in means)


def test_hillclimb_output_contract():
    feats, planted = small_planted()
    ids = sorted(feats)
    found = discover_tasks(feats, "as-hillclimb", n_candidates=1, seed=0, rounds=2, as_threshold=0.55)
    for t, est in found:
        assert est.mean >= 0.55
        assert set(t.ids) == set(ids)


def test_unreachable_threshold_is_empty():
    feats, _ = small_planted()
    assert discover_tasks(feats, n_candidates=2, as_threshold=1.01) == []


def test_bad_arguments():
    feats, _ = small_planted()
    with pytest.raises(ValueError):
        discover_tasks({})
    with pytest.raises(ValueError):
        discover_tasks(feats, "nope")
    with pytest.raises(ValueError):
        discover_tasks(feats, as_threshold=0.5)


@pytest.mark.slow
def test_noise_yields_no_tasks():
    empty = sum(discover_tasks(noise_features(s), n_candidates=16, seed=s) == [] for s in range(10))
    assert empty >= 9


def test_train_params_defaults():
    p = TrainParams()
    assert (p.hidden, p.epochs, p.batch) == (64, 30, 16)
