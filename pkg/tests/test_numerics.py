import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from risjsdm.errors import ParameterError, SingularityError
from risjsdm.numerics import SeededRng, cgauss_vector, hermitian_solve, singular_values, stream_id_for


def test_stream_id_is_stable_and_tag_sensitive():
    assert stream_id_for("trial", 3) == stream_id_for("trial", 3)
    assert stream_id_for("trial", 3) != stream_id_for("trial", 4)
    assert stream_id_for("trial", 3) != stream_id_for(("trial", 3))
    assert 0 <= stream_id_for("x") < 2**64


def test_same_seed_same_draws():
    a = SeededRng(7).spawn("trial", 2).normal(size=5)
    b = SeededRng(7).spawn("trial", 2).normal(size=5)
    np.testing.assert_array_equal(a, b)


def test_child_streams_do_not_depend_on_sibling_use():
    parent = SeededRng(7)
    first = parent.spawn("trial", 1).normal(size=4)
    parent.spawn("trial", 0).normal(size=1000)
    np.testing.assert_array_equal(first, SeededRng(7).spawn("trial", 1).normal(size=4))


def test_distinct_seeds_or_streams_differ():
    assert not np.allclose(SeededRng(1).normal(size=8), SeededRng(2).normal(size=8))
    assert not np.allclose(SeededRng(1, 0).normal(size=8), SeededRng(1, 1).normal(size=8))


def test_cgauss_moments():
    z = cgauss_vector(SeededRng(3), 200_000, variance=2.0)
    assert abs(np.mean(np.abs(z) ** 2) - 2.0) < 0.03
    assert abs(np.var(z.real) - 1.0) < 0.02
    assert abs(np.var(z.imag) - 1.0) < 0.02
    assert abs(np.mean(z * z)) < 0.02  # circular symmetry: E[z^2] = 0


def test_cgauss_shapes_and_zero_variance():
    assert cgauss_vector(SeededRng(0), (3, 4)).shape == (3, 4)
    assert not np.any(cgauss_vector(SeededRng(0), 5, 0.0))
    with pytest.raises(ParameterError):
        cgauss_vector(SeededRng(0), 5, -1.0)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 8), seed=st.integers(0, 2**32 - 1))
def test_hermitian_solve_residual(n, seed):
    g = np.random.default_rng(seed)
    A = g.standard_normal((n, n)) + 1j * g.standard_normal((n, n)) + 3 * n * np.eye(n)
    B = g.standard_normal((n, 2)) + 0j
    X = hermitian_solve(A, B)
    np.testing.assert_allclose(A @ X, B, atol=1e-10)


def test_hermitian_solve_rejects_singular_with_label():
    A = np.array([[1.0, 2.0], [2.0, 4.0]], dtype=complex)
    with pytest.raises(SingularityError) as info:
        hermitian_solve(A, np.eye(2), label=2)
    assert info.value.group == 2
    assert "group 2" in str(info.value)


def test_hermitian_solve_condition_cap():
    A = np.diag([1.0, 1e-8]).astype(complex)
    hermitian_solve(A, np.eye(2))
    with pytest.raises(SingularityError):
        hermitian_solve(A, np.eye(2), cond_cap=1e6)


def test_hermitian_solve_shape_errors():
    with pytest.raises(ParameterError):
        hermitian_solve(np.ones((2, 3)), np.ones(2))
    with pytest.raises(ParameterError):
        hermitian_solve(np.eye(2), np.ones(3))


def test_singular_values_descending():
    U, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((5, 5)))
    A = U @ np.diag([3.0, 1.0, 2.0, 0.5, 0.0]) @ U.T
    np.testing.assert_allclose(singular_values(A), [3.0, 2.0, 1.0, 0.5, 0.0], atol=1e-12)
    assert singular_values(np.zeros((0, 3))).size == 0
