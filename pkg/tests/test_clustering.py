import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cachenet.clustering import (
    VARIANCE_FLOOR,
    ClusterModel,
    SearchRange,
    aic_score,
    cluster_users,
    cluster_variance,
    kmeans,
    log_likelihood,
    log_likelihood_signs_flipped,
    per_user_log_likelihood,
    score,
)
from cachenet.geometry import ParameterError
from cachenet.popularity import generate_profiles, random_catalog, random_ground_truth


def _random_model(rng, U, F, K):
    X = rng.dirichlet(np.ones(F), U)
    labels = np.concatenate([np.arange(K), rng.integers(0, K, U - K)])
    rng.shuffle(labels)
    C = np.array([X[labels == k].mean(0) for k in range(K)])
    return X, score(kmeans(X, C, max_iters=1), X)


def test_kmeans_single_cluster_is_global_mean():
    X = np.random.default_rng(0).dirichlet(np.ones(5), 30)
    m = kmeans(X, X[:1])
    assert np.all(m.assignment == 0)
    assert np.allclose(m.centroids[0], X.mean(0))


def test_kmeans_separated_clouds_recovered():
    rng = np.random.default_rng(1)
    centers = np.array([[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [0.0, 10.0, 0.0]])
    truth = rng.integers(0, 3, 90)
    X = centers[truth] + rng.normal(scale=0.1, size=(90, 3))
    m = kmeans(X, X[[np.flatnonzero(truth == k)[0] for k in range(3)]])
    # brute-force nearest-centroid check and label agreement up to permutation
    d = ((X[:, None, :] - m.centroids[None]) ** 2).sum(-1)
    assert np.array_equal(d.argmin(1), m.assignment)
    for k in range(3):
        assert len(set(m.assignment[truth == k])) == 1


def test_kmeans_identical_profiles():
    X = np.tile([0.5, 0.3, 0.2], (10, 1))
    m = score(kmeans(X, X[:2]), X)
    assert m.num_clusters == 1
    assert m.member_counts[0] == 10
    assert m.variances[0] == VARIANCE_FLOOR


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_kmeans_objective_never_increases(seed):
    rng = np.random.default_rng(seed)
    X = rng.dirichlet(np.ones(6), 40)
    C = X[rng.choice(40, 4, replace=False)]
    prev = math.inf
    for _ in range(8):
        m = kmeans(X, C, max_iters=1)
        sse = float(((X - m.centroids[m.assignment]) ** 2).sum())
        assert sse <= prev + 1e-12
        prev, C = sse, m.centroids


def test_cluster_variance_examples():
    P = np.array([[0.6, 0.4], [0.4, 0.6]])
    assert cluster_variance(P, [0, 1], [0.5, 0.5]) == pytest.approx(0.02)
    assert cluster_variance(P, [0], P[0]) == VARIANCE_FLOOR
    assert cluster_variance(np.tile(P[0], (3, 1)), [0, 1, 2], P[0]) == VARIANCE_FLOOR
    with pytest.raises(ParameterError):
        cluster_variance(P, [], [0.5, 0.5])


def _model(counts, variances, F=2):
    K = len(counts)
    return ClusterModel(K, np.zeros((K, F)), np.repeat(np.arange(K), counts), np.array(counts), np.array(variances))


def test_log_likelihood_single_cluster_by_hand():
    U, F, v = 12, 3, 0.05
    expect = -(U / 2) * (math.log(2 * math.pi) + 1 - F * math.log(v) * -1)
    assert log_likelihood(_model([U], [v], F), U, F) == pytest.approx(expect)


def test_log_likelihood_two_equal_clusters_by_hand():
    U, F, v = 10, 4, 0.01
    half = -(U / 4) * (math.log(2 * math.pi) + 1 - 2 * math.log(0.5) + F * math.log(v))
    assert log_likelihood(_model([5, 5], [v, v], F), U, F) == pytest.approx(2 * half)


def test_signs_flipped_arrangement_matches_its_formula():
    U, F, v = 12, 3, 0.05
    m = _model([U], [v], F)
    expect = -(U / 2) * (math.log(2 * math.pi) - 1 - F * math.log(v))
    assert log_likelihood_signs_flipped(m, U, F) == pytest.approx(expect)


def test_signs_flipped_arrangement_disagrees_with_per_user_sum():
    rng = np.random.default_rng(5)
    X, m = _random_model(rng, 15, 6, 3)
    assert abs(log_likelihood_signs_flipped(m, 15, 6) - per_user_log_likelihood(X, m)) > 1.0


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 20), st.integers(2, 10), st.integers(1, 4), st.integers(0, 10_000))
def test_closed_form_matches_per_user_sum(U, F, K, seed):
    K = min(K, U)
    X, m = _random_model(np.random.default_rng(seed), U, F, K)
    if m.floored:
        # a floored variance no longer equals the mean squared distance the closed form assumes
        return
    assert log_likelihood(m, U, F) == pytest.approx(per_user_log_likelihood(X, m), abs=1e-6, rel=1e-9)


def test_aic_by_hand_and_penalty():
    P = np.array([[0.6, 0.4], [0.4, 0.6]])
    m = score(kmeans(P, P.mean(0, keepdims=True)), P)
    ll = -1.0 * (math.log(2 * math.pi) + 1 - 2 * math.log(1.0) + 2 * math.log(0.02))
    assert m.log_likelihood == pytest.approx(ll)
    assert m.aic == pytest.approx(2 * 3 - 2 * ll)
    assert m.aic - 2 * m.num_params + 2 * m.log_likelihood == pytest.approx(0, abs=1e-9)
    # one extra cluster at fixed likelihood costs 2 (F + 1)
    bigger = ClusterModel(2, np.zeros((2, 2)), np.zeros(2, int), np.array([2, 0]), np.ones(2), log_likelihood=ll)
    assert aic_score(bigger, 2) - m.aic == pytest.approx(2 * 3)


def test_search_range_validation():
    with pytest.raises(ParameterError):
        SearchRange(3, 2).validate(10)
    with pytest.raises(ParameterError):
        SearchRange(0, 2).validate(10)
    with pytest.raises(ParameterError):
        SearchRange(20, 30).validate(10)


def test_cluster_users_single_value_range():
    X = np.random.default_rng(0).dirichlet(np.ones(4), 10)
    m = cluster_users(X, SearchRange(1, 1), seed=0)
    assert m.num_clusters == 1


@pytest.mark.parametrize("true_k", [3, 6])
def test_noise_free_truth_recovered_exactly(true_k):
    cat = random_catalog(60, 0.3, 0)
    gt = random_ground_truth(80, true_k, 60, 1)
    P = generate_profiles(cat, gt)
    best, trace = cluster_users(P, SearchRange(2, 12), seed=3, return_trace=True)
    assert best.num_clusters == true_k
    # every visited K above the truth scores worse than the truth
    at_truth = trace.aics[trace.ks.index(true_k)]
    assert all(a > at_truth for k, a in zip(trace.ks, trace.aics) if k != true_k)


def test_trace_csv(tmp_path):
    X = np.random.default_rng(0).dirichlet(np.ones(4), 30)
    _, trace = cluster_users(X, SearchRange(1, 4), seed=0, return_trace=True)
    trace.write_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "K,log_likelihood,aic"
    assert len(lines) == len(trace.ks) + 1
