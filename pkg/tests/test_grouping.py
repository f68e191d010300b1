import itertools

import numpy as np
import pytest

from conftest import crandn
from risjsdm.channel import UpaGeometry, upa_arv
from risjsdm.errors import ParameterError, ScaleExceededError
from risjsdm.grouping import (
    GroupingPlan,
    LosData,
    associate,
    association_objective,
    count_candidates,
    cross_correlation_q,
    kmeans_group,
    q_matrix,
    ris_grouping,
)
from risjsdm.numerics import SeededRng


def random_los(seed, K=4, N=6, side=4):
    gen = np.random.default_rng(seed)
    theta = gen.uniform(0.5, 2.5, (K, N))
    phi = gen.uniform(-1.0, 1.0, (K, N))
    beta_u = crandn(gen, K, N)
    beta_b = crandn(gen, K)
    return LosData(theta, phi, beta_u, beta_b, np.abs(beta_u), UpaGeometry(side, side))


def test_kmeans_separates_blobs():
    gen = np.random.default_rng(0)
    centers = np.array([[0.0, 0.0], [5.0, 5.0], [-5.0, 5.0]])
    truth = np.repeat(np.arange(3), 10)
    X = centers[truth] + 0.2 * gen.standard_normal((30, 2))
    groups = kmeans_group(X, 3, SeededRng(1))
    found = sorted(tuple(g) for g in groups)
    expected = sorted(tuple(np.flatnonzero(truth == c).tolist()) for c in range(3))
    assert found == expected
    assert groups == sorted(groups, key=lambda g: g[0])


def test_kmeans_never_empty_and_rejects_too_few():
    X = np.zeros((4, 2))
    groups = kmeans_group(X, 3, SeededRng(2))
    assert all(len(g) > 0 for g in groups)
    assert sorted(n for g in groups for n in g) == [0, 1, 2, 3]
    with pytest.raises(ParameterError):
        kmeans_group(X, 5, SeededRng(2))


def test_ris_grouping_by_hand():
    table = np.array([[5.0, 1.0], [4.0, 3.0], [2.0, 6.0], [1.0, 0.5]])
    # picks: (2,1)=6 -> (0,0)=5 -> (1,0)=4 closes group 0 (cap 2) -> (3,1)
    assert ris_grouping(table, [[0, 1], [2, 3]]) == [[0, 1], [2, 3]]
    # cap 1 on group 0: after (2,1) and (0,0) group 0 is full
    assert ris_grouping(table, [[0], [1, 2, 3]]) == [[0], [1, 2, 3]]


def test_ris_grouping_rejects_bad_tables():
    with pytest.raises(ParameterError):
        ris_grouping(np.ones((3, 2)), [[0], [1]])
    with pytest.raises(ParameterError):
        ris_grouping(-np.ones((2, 2)), [[0], [1]])


def test_q_matrix_matches_loop():
    los = random_los(3)
    assignment = {0: 1, 1: 0, 2: 4, 3: 5}
    Q = q_matrix(assignment, los)
    r = upa_arv(los.theta, los.phi, los.ris_geom)
    ref = np.zeros((los.N, los.N), dtype=complex)
    for n in range(los.N):
        for m in range(los.N):
            for k in range(los.K):
                a = assignment[k]
                ref[n, m] += (
                    abs(los.beta_b[k]) ** 2
                    * np.conj(los.beta_u[k, m])
                    * los.beta_u[k, n]
                    * np.vdot(r[k, m], r[k, a])
                    * np.vdot(r[k, a], r[k, n])
                )
    np.testing.assert_allclose(Q, ref, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(Q, Q.conj().T, atol=1e-14)
    assert cross_correlation_q(2, 3, assignment, los) == pytest.approx(ref[2, 3])
    with pytest.raises(ParameterError):
        cross_correlation_q(0, 1, {0: 1}, los)


@pytest.mark.parametrize("seed", range(5))
def test_associate_matches_brute_force(seed):
    los = random_los(10 + seed)
    plan = GroupingPlan([[0, 1, 2], [3, 4, 5]], [[0, 1], [2, 3]])
    best_plan, best_obj = associate(plan, los)
    ref = None
    for s0 in itertools.permutations([0, 1, 2], 2):
        for s1 in itertools.permutations([3, 4, 5], 2):
            cand = GroupingPlan(plan.ue_groups, plan.ris_groups, [list(s0), list(s1)])
            key = (association_objective(cand, los), (s0, s1))
            ref = key if ref is None or key < ref else ref
    assert best_obj == pytest.approx(ref[0], rel=1e-12)
    assert [tuple(s) for s in best_plan.selected] == list(ref[1])
    rev_plan, rev_obj = associate(plan, los, reverse=True)
    assert rev_plan.selected == best_plan.selected
    assert rev_obj == pytest.approx(best_obj, rel=1e-12)


def test_associate_cap_and_counts():
    los = random_los(4)
    plan = GroupingPlan([[0, 1, 2], [3, 4, 5]], [[0, 1], [2, 3]])
    assert count_candidates(plan.ue_groups, plan.ris_groups) == 36
    with pytest.raises(ScaleExceededError):
        associate(plan, los, cap=35)
    with pytest.raises(ParameterError):
        associate(GroupingPlan([[0], [1, 2, 3, 4, 5]], [[0, 1], [2, 3]]), los)


def test_plan_validation_and_views():
    p = GroupingPlan([[2, 0], [1, 3]], [[1], [0]], [[2], [3]])
    assert p.ue_groups == [[0, 2], [1, 3]]
    assert p.assignment() == {1: 2, 0: 3}
    assert p.ris_order() == [1, 0]
    assert p.served_order() == [2, 3]
    assert p.group_of_ue()[3] == 1
    assert "group 1" in p.to_text()
    with pytest.raises(ParameterError):
        GroupingPlan([[0, 1]], [[0]], [[5]])
    with pytest.raises(ParameterError):
        GroupingPlan([[0, 1]], [[0], [1]])
    with pytest.raises(ParameterError):
        GroupingPlan([[0, 1]], [[0]]).assignment()


def test_direction_vectors_recentring_keeps_distances():
    los = random_los(5)
    a = los.direction_vectors(recenter=False)
    b = los.direction_vectors(recenter=True)
    assert a.shape == (los.N, 2 * los.K)
    da = np.linalg.norm(a[:, None] - a[None], axis=-1)
    db = np.linalg.norm(b[:, None] - b[None], axis=-1)
    np.testing.assert_allclose(da, db, atol=1e-12)
    # a cluster across the seam stays tight after recentring
    los.phi[:] = np.where(np.arange(los.N) % 2, np.pi - 0.01, -np.pi + 0.01)
    c = los.direction_vectors()
    assert np.ptp(c[:, 1::2], axis=0).max() < 0.05
