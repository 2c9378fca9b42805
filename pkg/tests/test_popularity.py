import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cachenet.geometry import ParameterError
from cachenet.popularity import (
    Catalog,
    GroundTruth,
    cached_mass,
    cluster_mean_profile,
    generate_profiles,
    load_catalog,
    load_profiles,
    random_catalog,
    random_ground_truth,
    save_catalog,
    save_profiles,
    select_cache_set,
    zipf_pmf,
)


def _truth(orderings, labels):
    return GroundTruth(len(orderings), np.asarray(labels), np.asarray(orderings))


def test_catalog_invariants():
    with pytest.raises(ParameterError):
        Catalog(np.array([]), 1.0)
    with pytest.raises(ParameterError):
        Catalog(np.array([1.0, -1.0]), 1.0)
    with pytest.raises(ParameterError):
        Catalog(np.array([2.0, 3.0]), 1.0)
    c = Catalog.from_eta(np.array([1.0, 3.0]), 0.5)
    assert c.cache_capacity_M == 2.0 and c.eta == pytest.approx(0.5)


def test_zipf_f4_by_hand():
    # harmonic number H_4 = 25/12
    cat = Catalog(np.ones(4), 4.0)
    P = generate_profiles(cat, _truth([[0, 1, 2, 3]], [0]), zipf_s=1.0)
    assert np.allclose(P[0], [0.48, 0.24, 0.16, 0.12])


def test_single_file_profile():
    cat = Catalog(np.ones(1), 1.0)
    P = generate_profiles(cat, _truth([[0]], [0, 0]))
    assert np.allclose(P, 1.0)


def test_noise_free_members_identical():
    cat = random_catalog(50, 0.3, 0)
    gt = random_ground_truth(30, 3, 50, 1)
    P = generate_profiles(cat, gt)
    for k in range(3):
        rows = P[gt.per_user_cluster == k]
        assert np.all(rows == rows[0])


def test_rank_dispersion_keeps_exact_zipf_values():
    cat = random_catalog(100, 0.3, 0)
    gt = random_ground_truth(20, 2, 100, 1)
    P = generate_profiles(cat, gt, rank_dispersion=2.0, seed=3)
    base = np.sort(zipf_pmf(100, 1.0))
    for row in P:
        assert np.allclose(np.sort(row), base)
    # members of a cluster no longer agree exactly
    assert not np.all(P[gt.per_user_cluster == 0] == P[gt.per_user_cluster == 0][0])


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 60), st.floats(0.2, 2.0), st.floats(0, 1.5), st.floats(0, 3), st.integers(0, 1000))
def test_profiles_sum_to_one(F, s, noise, disp, seed):
    cat = Catalog(np.ones(F), float(F))
    gt = random_ground_truth(7, 2, F, seed)
    P = generate_profiles(cat, gt, zipf_s=s, noise=noise, seed=seed, rank_dispersion=disp)
    assert np.allclose(P.sum(1), 1.0, atol=1e-9)
    assert np.all((P >= 0) & (P <= 1))


def test_generate_profiles_rejects_bad_parameters():
    cat = Catalog(np.ones(3), 3.0)
    gt = _truth([[0, 1, 2]], [0])
    with pytest.raises(ParameterError):
        generate_profiles(cat, gt, zipf_s=0.0)
    with pytest.raises(ParameterError):
        generate_profiles(cat, gt, noise=-1.0)


def test_cluster_mean_profile_examples():
    P = np.array([[0.6, 0.4], [0.4, 0.6], [0.1, 0.9]])
    assert np.allclose(cluster_mean_profile(P, [0, 1]), [0.5, 0.5])
    assert np.array_equal(cluster_mean_profile(P, [2]), P[2])
    rng = np.random.default_rng(0)
    Q = rng.dirichlet(np.ones(6), 3)
    brute = [sum(Q[u][i] for u in range(3)) / 3 for i in range(6)]
    assert np.allclose(cluster_mean_profile(Q, {0, 1, 2}), brute)
    with pytest.raises(ParameterError):
        cluster_mean_profile(P, [])


def test_select_cache_set_examples():
    cat = Catalog(np.ones(4), 3.0)
    assert select_cache_set(np.array([0.3, 0.2, 0.4, 0.1]), cat).files == frozenset({2, 0, 1})
    # file 0 does not fit; the scan skips it and continues
    cat = Catalog(np.array([5.0, 1.0, 1.0]), 2.0)
    assert select_cache_set(np.array([0.5, 0.3, 0.2]), cat).files == frozenset({1, 2})
    cat = Catalog(np.array([1.0, 2.0, 3.0]), 1.0)
    cat_all = Catalog(np.array([1.0, 2.0, 3.0]), 6.0)
    assert select_cache_set(np.array([0.2, 0.3, 0.5]), cat_all).files == frozenset({0, 1, 2})
    # ties resolve to the lower index
    assert select_cache_set(np.array([0.5, 0.5, 0.0]), Catalog(np.ones(3), 1.0)).files == frozenset({0})
    assert select_cache_set(np.array([0.1, 0.2, 0.7]), cat).files == frozenset({0})


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_select_cache_set_capacity_and_local_optimality(seed):
    rng = np.random.default_rng(seed)
    F = int(rng.integers(2, 30))
    sizes = rng.uniform(1, 10, F)
    cat = Catalog(sizes, float(rng.uniform(sizes.min(), sizes.sum())))
    p = rng.dirichlet(np.ones(F))
    cs = select_cache_set(p, cat)
    assert cs.total_size <= cat.cache_capacity_M + 1e-9
    chosen = sorted(cs.files, key=lambda i: (-p[i], i))
    worst = chosen[-1]
    freed = cat.cache_capacity_M - cs.total_size + sizes[worst]
    for j in set(range(F)) - cs.files:
        if p[j] > p[worst]:
            # a more popular excluded file never fits even after dropping the least popular pick
            assert sizes[j] > freed - 1e-9 or sizes[j] > cat.cache_capacity_M - cs.total_size


def test_noise_free_member_and_mean_give_same_cache():
    cat = random_catalog(80, 0.25, 2)
    gt = random_ground_truth(15, 2, 80, 3)
    P = generate_profiles(cat, gt)
    members = np.flatnonzero(gt.per_user_cluster == 0)
    assert select_cache_set(cluster_mean_profile(P, members), cat) == select_cache_set(P[members[0]], cat)


def test_cached_mass():
    P = np.array([[0.5, 0.3, 0.2]])
    cat = Catalog(np.ones(3), 2.0)
    cs = [select_cache_set(np.array([1.0, 0.5, 0.0]), cat), select_cache_set(np.array([0.0, 0.1, 0.9]), cat)]
    assert np.allclose(cached_mass(P, cs), [[0.8, 0.5]])


def test_catalog_and_profile_round_trip(tmp_path):
    cat = random_catalog(25, 0.3, 0)
    save_catalog(tmp_path / "cat.csv", cat)
    back = load_catalog(tmp_path / "cat.csv")
    assert np.array_equal(back.file_sizes_L, cat.file_sizes_L)
    assert back.cache_capacity_M == cat.cache_capacity_M
    P = generate_profiles(cat, random_ground_truth(6, 2, 25, 1), noise=0.3, seed=2)
    save_profiles(tmp_path / "p.csv", P)
    assert np.array_equal(load_profiles(tmp_path / "p.csv"), P)
