import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from risjsdm.channel import (
    ChannelRealization,
    RicianParams,
    UpaGeometry,
    assemble_end_to_end,
    bs_ris_los,
    dirichlet_inner_product,
    draw_bs_ris_channel,
    draw_direct_channel,
    draw_ris_ue_channels,
    dump_realization,
    load_realization,
    upa_arv,
)
from risjsdm.errors import ParameterError
from risjsdm.geometry import LosPath, los_path, wavelength
from risjsdm.numerics import SeededRng

LAM = wavelength(6.5e9)
angles = st.floats(0.05, np.pi - 0.05)


def test_arv_element_ordering_and_norm():
    geom = UpaGeometry(3, 4)
    th, ph = 1.1, 0.4
    a = upa_arv(th, ph, geom)
    assert np.linalg.norm(a) == pytest.approx(1.0)
    for iv in range(3):
        for ih in range(4):
            ref = np.exp(1j * np.pi * (iv * np.cos(th) + ih * np.sin(th) * np.cos(ph))) / np.sqrt(12)
            assert a[iv * 4 + ih] == pytest.approx(ref)


def test_arv_broadcasts():
    geom = UpaGeometry(2, 5)
    assert upa_arv(np.zeros((3, 4)), np.zeros((3, 4)), geom).shape == (3, 4, 10)


@settings(max_examples=60, deadline=None)
@given(angles, angles, angles, angles, st.integers(1, 12), st.integers(1, 12))
def test_dirichlet_inner_product_matches_direct(t1, p1, t2, p2, mv, mh):
    geom = UpaGeometry(mv, mh)
    direct = np.vdot(upa_arv(t1, p1, geom), upa_arv(t2, p2, geom))
    assert abs(dirichlet_inner_product(t1, p1, t2, p2, geom) - direct) < 1e-9


def test_rician_power_split():
    for kdb in (0.0, 10.0, 23.0):
        ric = RicianParams.from_db(kdb, 8)
        assert ric.los_amplitude**2 + 8 * ric.nlos_amplitude**2 == pytest.approx(1.0)
        assert ric.los_amplitude**2 / (8 * ric.nlos_amplitude**2) == pytest.approx(10 ** (kdb / 10))
    inf = RicianParams.from_db(np.inf)
    assert inf.los_only and inf.los_amplitude == 1.0 and inf.nlos_amplitude == 0.0
    with pytest.raises(ParameterError):
        RicianParams(-1.0)
    with pytest.raises(ParameterError):
        RicianParams(1.0, 0)


def test_geometry_validation():
    with pytest.raises(ParameterError):
        UpaGeometry(0, 3)
    assert UpaGeometry(4, 5).m_total == 20


def _link():
    return los_path(np.array([0.0, 0.0, 30.0]), np.array([40.0, 10.0, 35.0]), LAM, "y")


def test_los_only_bs_ris_channel_is_rank_one_outer_product():
    bs, ris = UpaGeometry(3, 3), UpaGeometry(4, 4)
    link = _link()
    ric = RicianParams.from_db(np.inf)
    B = draw_bs_ris_channel(bs, ris, link, ric, SeededRng(0))
    beta0, b0, r0 = bs_ris_los(bs, ris, link, ric)
    np.testing.assert_allclose(B, beta0 * np.outer(b0, r0.conj()))
    assert abs(beta0) == pytest.approx(np.sqrt(9 * 16) * link.rho)
    s = np.linalg.svd(B, compute_uv=False)
    assert s[1] < 1e-12 * s[0]


def test_bs_ris_channel_mean_and_power():
    bs, ris = UpaGeometry(2, 2), UpaGeometry(3, 3)
    link = _link()
    ric = RicianParams.from_db(3.0, 4)
    g = SeededRng(9)
    draws = np.array([draw_bs_ris_channel(bs, ris, link, ric, g.spawn(i)) for i in range(6000)])
    beta0, b0, r0 = bs_ris_los(bs, ris, link, ric)
    mean_err = np.abs(draws.mean(axis=0) - beta0 * np.outer(b0, r0.conj())).max()
    assert mean_err < 0.05 * abs(beta0) / 6
    # E ||B||_F^2 = M_B M_R rho^2 with unit-norm responses
    power = np.mean(np.sum(np.abs(draws) ** 2, axis=(1, 2)))
    assert power == pytest.approx(4 * 9 * link.rho**2, rel=0.04)


def test_ris_ue_channel_power_and_sectors():
    ris = UpaGeometry(4, 4)
    ric = RicianParams.from_db(0.0, 8)
    g = SeededRng(2)
    th, ph, rho, mu = np.array([1.0, 1.3]), np.array([0.2, -0.3]), np.array([1e-3, 2e-3]), np.zeros(2)
    sectors = np.array([[1.0, 0.2, 0.05], [1.3, -0.3, 0.05]])
    U = np.array([draw_ris_ue_channels(ris, th, ph, rho, mu, ric, g.spawn(i), sectors) for i in range(4000)])
    assert U.shape == (4000, 16, 2)
    np.testing.assert_allclose(np.mean(np.sum(np.abs(U) ** 2, axis=1), axis=0), 16 * rho**2, rtol=0.05)


def test_direct_channel():
    link = _link()
    assert not np.any(draw_direct_channel(np.inf, link, 9, SeededRng(0)))
    g = SeededRng(4)
    h = np.array([draw_direct_channel(20.0, link, 9, g.spawn(i)) for i in range(4000)])
    assert np.mean(np.abs(h) ** 2) == pytest.approx((0.1 * link.rho) ** 2, rel=0.05)
    with pytest.raises(ParameterError):
        draw_direct_channel(-1.0, link, 9, g)


def _random_realization(seed, K=3, m_b=4, m_r=5, N=2):
    g = np.random.default_rng(seed)
    c = lambda *s: g.standard_normal(s) + 1j * g.standard_normal(s)  # noqa: E731
    return ChannelRealization(c(K, m_b, m_r), c(K, m_r, N), c(m_b, N))


def test_assemble_matches_explicit_sum():
    real = _random_realization(0)
    g = np.exp(1j * np.random.default_rng(1).uniform(0, 2 * np.pi, (3, 5)))
    ref = real.h_direct + sum(real.B[k] @ np.diag(g[k]) @ real.U[k] for k in range(3))
    np.testing.assert_allclose(assemble_end_to_end(real, g), ref, atol=1e-12)
    with pytest.raises(ParameterError):
        assemble_end_to_end(real, g[:2])


def test_dump_load_roundtrip(tmp_path):
    real = _random_realization(3)
    path = tmp_path / "chan.bin"
    dump_realization(path, real, 42, "abc")
    back, header = load_realization(path)
    np.testing.assert_array_equal(back.B, real.B)
    np.testing.assert_array_equal(back.U, real.U)
    np.testing.assert_array_equal(back.h_direct, real.h_direct)
    assert header["seed"] == 42 and header["scenario_hash"] == "abc"


def test_dump_layout_is_column_major_little_endian(tmp_path):
    real = _random_realization(4, K=1, m_b=2, m_r=2, N=1)
    path = tmp_path / "c.bin"
    dump_realization(path, real, 0, "h")
    raw = path.read_bytes()
    assert raw[:8] == b"RISJSDM1"
    hlen = int.from_bytes(raw[8:12], "little")
    first = np.frombuffer(raw[12 + hlen : 12 + hlen + 32], dtype="<f8")
    B = real.B[0]
    np.testing.assert_array_equal(first, [B[0, 0].real, B[0, 0].imag, B[1, 0].real, B[1, 0].imag])


def test_load_rejects_garbage(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"NOTMAGIC" + b"\0" * 16)
    with pytest.raises(ParameterError):
        load_realization(p)


def test_los_path_type():
    assert isinstance(_link(), LosPath)
