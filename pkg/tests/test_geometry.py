import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from risjsdm.channel import UpaGeometry, upa_arv
from risjsdm.errors import ParameterError, PlacementError
from risjsdm.geometry import (
    SPEED_OF_LIGHT,
    GroupSpec,
    angle_spread,
    apply_deployment_offset,
    dft_direction,
    los_arrays,
    los_path,
    nearest_dft_indices,
    place_ris_dft,
    realizable_dft_indices,
    sample_ue_positions,
    unit_vector,
    wavelength,
)
from risjsdm.numerics import SeededRng

LAM = wavelength(6.5e9)


def test_wavelength():
    assert wavelength(6.5e9) == pytest.approx(SPEED_OF_LIGHT / 6.5e9)
    with pytest.raises(ParameterError):
        wavelength(0)


def test_los_path_convention_x_axis():
    src = np.zeros(3)
    dst = np.array([3.0, 4.0, 12.0])
    p = los_path(src, dst, LAM, "x")
    assert p.distance == pytest.approx(13.0)
    assert np.cos(p.theta) == pytest.approx(12 / 13)
    assert np.sin(p.theta) * np.cos(p.phi) == pytest.approx(3 / 13)
    assert np.sin(p.theta) * np.sin(p.phi) == pytest.approx(4 / 13)
    assert p.rho == pytest.approx(LAM / (4 * np.pi * 13))
    assert p.mu == pytest.approx(np.mod(2 * np.pi * 13 / LAM, 2 * np.pi))


def test_los_path_convention_y_axis_swaps_roles():
    p = los_path(np.zeros(3), np.array([3.0, 4.0, 12.0]), LAM, "y")
    assert np.sin(p.theta) * np.cos(p.phi) == pytest.approx(4 / 13)


def test_rho_halves_with_double_distance():
    a = los_path(np.zeros(3), np.array([1.0, 2.0, 3.0]), LAM)
    b = los_path(np.zeros(3), np.array([2.0, 4.0, 6.0]), LAM)
    assert b.rho == pytest.approx(a.rho / 2)


def test_coincident_points_rejected():
    with pytest.raises(ParameterError):
        los_path(np.ones(3), np.ones(3), LAM)


@settings(max_examples=50, deadline=None)
@given(
    st.floats(-50, 50), st.floats(-50, 50), st.floats(-50, 50), st.sampled_from(["x", "y"])
)
def test_unit_vector_inverts_los_angles(x, y, z, axis):
    d = np.array([x, y, z])
    if np.linalg.norm(d) < 1e-3:
        return
    th, ph, dist, _, _ = los_arrays(np.zeros(3), d, LAM, axis)
    np.testing.assert_allclose(unit_vector(th, ph, axis) * dist, d, atol=1e-9)


def _dft_column(m, p):
    # column p of the (unnormalized) DFT matrix, shifted by (-1)^i
    return np.exp(2j * np.pi * np.arange(m) * p / m) * (-1.0) ** np.arange(m)


@pytest.mark.parametrize("idx", [(4, 4), (5, 6), (2, 3), (6, 1)])
def test_dft_direction_gives_dft_response(idx):
    geom = UpaGeometry(9, 9)
    u = dft_direction((9, 9), idx, "x")
    th, ph, _, _, _ = los_arrays(np.zeros(3), u, LAM, "x")
    expected = np.kron(_dft_column(9, idx[0]), _dft_column(9, idx[1])) / 9.0
    np.testing.assert_allclose(upa_arv(th, ph, geom), expected, atol=1e-12)


def test_distinct_dft_directions_are_orthogonal():
    geom = UpaGeometry(9, 9)
    idxs = realizable_dft_indices((9, 9))
    A = []
    for idx in idxs:
        u = dft_direction((9, 9), idx, "y")
        th, ph, _, _, _ = los_arrays(np.zeros(3), u, LAM, "y")
        A.append(upa_arv(th, ph, geom))
    A = np.array(A)
    G = A.conj() @ A.T
    assert np.abs(G - np.eye(len(idxs))).max() < 1e-12


def test_realizable_indices():
    idxs = realizable_dft_indices((9, 9))
    for p, q in idxs:
        assert (2 * p / 9 - 1) ** 2 + (2 * q / 9 - 1) ** 2 <= 1 + 1e-12
    assert (0, 0) not in idxs
    with pytest.raises(PlacementError):
        dft_direction((9, 9), (0, 0))
    with pytest.raises(PlacementError):
        dft_direction((9, 9), (9, 0))


def test_placement_reproduces_example_positions():
    bs = np.array([0.0, 0.0, 30.0])
    r1 = place_ris_dft(bs, (9, 9), (5, 6), 60.81, "y")
    r2 = place_ris_dft(bs, (9, 9), (5, 5), 80.0, "y")
    assert np.linalg.norm(r1 - [57, 20, 37]) < 0.5
    assert np.linalg.norm(r2 - [79, 9, 39]) < 0.5
    assert np.linalg.norm(r1 - bs) == pytest.approx(60.81)


def test_placement_errors():
    with pytest.raises(ParameterError):
        place_ris_dft(np.zeros(3), (9, 9), (4, 4), 0.0)
    with pytest.raises(PlacementError):
        place_ris_dft(np.array([0.0, 0.0, 1.0]), (9, 9), (0, 4), 10.0)


def test_nearest_dft_indices_sorted_by_angle():
    bs = np.array([0.0, 0.0, 30.0])
    target = np.array([60.0, 0.0, 30.0])
    first = nearest_dft_indices(bs, (9, 9), target, 1, "y")[0]
    u = dft_direction((9, 9), first, "y")
    best = max(
        (dft_direction((9, 9), i, "y") @ [1.0, 0.0, 0.0], i) for i in realizable_dft_indices((9, 9))
    )
    assert u @ [1.0, 0.0, 0.0] == pytest.approx(best[0])


def test_ue_samples_uniform_on_disk():
    spec = GroupSpec((60.0, 0.0, 0.0), 4.0, 20000)
    pts = sample_ue_positions(spec, 0.5, SeededRng(1))
    r = np.hypot(pts[:, 0] - 60.0, pts[:, 1])
    assert np.all(r <= 4.0) and np.all(pts[:, 2] == 0.5)
    # uniform in area: half the points fall inside radius R / sqrt(2)
    assert abs(np.mean(r < 4.0 / np.sqrt(2)) - 0.5) < 0.015


def test_group_spec_validation():
    with pytest.raises(ParameterError):
        GroupSpec((0, 0, 0), 0.0, 3)
    with pytest.raises(ParameterError):
        GroupSpec((0, 0, 0), 1.0, 0)


def test_angle_spread():
    spec = GroupSpec((30.0, 40.0, 0.0), 5.0, 1)
    assert angle_spread(np.zeros(3), spec) == pytest.approx(np.arcsin(5.0 / 50.0))
    with pytest.raises(ParameterError):
        angle_spread(np.array([30.0, 41.0, 0.0]), spec)


def test_deployment_offset_statistics():
    nominal = np.array([10.0, 20.0, 30.0])
    np.testing.assert_array_equal(apply_deployment_offset(nominal, 0.0, SeededRng(0)), nominal)
    g = SeededRng(5)
    draws = np.array([apply_deployment_offset(nominal, 0.3, g.spawn(i)) for i in range(4000)])
    np.testing.assert_allclose(draws.mean(axis=0), nominal, atol=0.03)
    np.testing.assert_allclose(draws.std(axis=0), 0.3, rtol=0.05)
    with pytest.raises(ParameterError):
        apply_deployment_offset(nominal, -1.0, g)
