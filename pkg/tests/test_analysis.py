import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import crandn
from risjsdm.analysis import (
    aggregate,
    baseline_architecture,
    block_statistics,
    closed_form_effective_matrix,
    ecdf,
    effective_rank,
    mean_effective_matrix,
)
from risjsdm.errors import ParameterError


def test_erank_identity_and_rank_one():
    assert effective_rank(np.eye(5)) == pytest.approx(5.0)
    assert effective_rank(np.eye(5), "sv") == pytest.approx(5.0)
    v = np.arange(1, 5.0)
    assert effective_rank(np.outer(v, v)) == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        effective_rank(np.zeros((3, 3)))
    with pytest.raises(ParameterError):
        effective_rank(np.eye(2), "bogus")


def test_erank_two_level_by_hand():
    # singular values 4 and 1: sqrt weights 2/3 and 1/3
    p = np.array([2.0, 1.0]) / 3
    expected = np.exp(-np.sum(p * np.log(p)))
    assert effective_rank(np.diag([4.0, 1.0])) == pytest.approx(expected)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10_000))
def test_erank_bounds(m, n, seed):
    H = crandn(np.random.default_rng(seed), m, n)
    for w in ("sqrt", "sv"):
        e = effective_rank(H, w)
        assert 1.0 - 1e-9 <= e <= min(m, n) + 1e-9
        assert effective_rank(3.7 * H, w) == pytest.approx(e)


def test_ecdf_right_continuous():
    np.testing.assert_allclose(ecdf([1.0, 2.0, 2.0, 3.0], [0.5, 1.0, 2.0, 2.5, 3.0]), [0, 0.25, 0.75, 0.75, 1.0])


def test_aggregate_sample_std():
    a = aggregate([1.0, 2.0, 3.0, 4.0], cdf_grid=[2.0])
    assert a.mean == 2.5 and a.count == 4
    assert a.std == pytest.approx(np.sqrt(5 / 3))
    assert a.stderr == pytest.approx(np.sqrt(5 / 3) / 2)
    assert a.cdf[1][0] == 0.5
    one = aggregate([7.0])
    assert one.std == 0.0 and one.stderr == float("inf")
    with pytest.raises(ParameterError):
        aggregate([])


def test_baselines_conserve_elements(scenario):
    total = scenario.K * scenario.ris_array[0] * scenario.ris_array[1]
    for kind in ("distributed", "consolidated_single", "merged_per_group"):
        b = baseline_architecture(scenario, kind)
        assert b.K * b.ris_array[0] * b.ris_array[1] == total
    assert baseline_architecture(scenario, "consolidated_single").K == 1
    assert baseline_architecture(scenario, "merged_per_group").K == scenario.C
    with pytest.raises(ParameterError):
        baseline_architecture(scenario, "other")


def test_block_statistics_by_hand():
    M = np.array([[4.0, 2.0, 0.5], [2.0, 4.0, 0.5], [0.5, 0.5, 6.0]])
    st_ = block_statistics(M, [slice(0, 2), slice(2, 3)])
    assert st_ == {"diagonal": pytest.approx(14 / 3), "intra": 2.0, "inter": 0.5}


def test_mean_matrix_tracks_closed_form(scenario, deployment):
    # many trials of the Rician links average toward the LoS closed form
    M = mean_effective_matrix(scenario, 2, 40, dep=deployment, threads=4)
    ref = np.abs(closed_form_effective_matrix(deployment, 2))
    big = ref > 0.5 * ref.max()
    assert np.all(np.abs(M[big] - ref[big]) / ref[big] < 0.35)
    with pytest.raises(ParameterError):
        closed_form_effective_matrix(deployment, 1)
