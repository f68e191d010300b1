"""Channel synthesis: UPA responses, Rician BS-RIS / RIS-UE links, direct links.

Matrix conventions follow the downlink model ``y = H^H x``: ``B_k`` is
``M_B x M_R``, ``u_{k,n}`` has length ``M_R`` and the end-to-end channel of
UE ``n`` is ``h_n = h_direct_n + sum_k B_k diag(gamma_k) u_{k,n}``.

The arrival response ``r_{k,0}`` of the BS-RIS LoS path is evaluated at the
propagation direction of the incoming wave (BS -> RIS).  With that choice a
RIS with all-ones reflection coefficients behaves as a mirror in the array's
two angular coordinates.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .numerics import cgauss_vector

__all__ = [
    "UpaGeometry",
    "RicianParams",
    "ChannelRealization",
    "arv_from_cosines",
    "upa_arv",
    "dirichlet_inner_product",
    "bs_ris_los",
    "bs_ris_los_matrix",
    "ris_ue_los_matrix",
    "draw_bs_ris_channel",
    "draw_ris_ue_channel",
    "draw_ris_ue_channels",
    "draw_direct_channel",
    "assemble_end_to_end",
    "dump_realization",
    "load_realization",
]


@dataclass(frozen=True)
class UpaGeometry:
    """Half-wavelength uniform planar array with ``m_v x m_h`` elements."""

    m_v: int
    m_h: int

    def __post_init__(self):
        if int(self.m_v) < 1 or int(self.m_h) < 1:
            raise ParameterError(f"array dimensions must be >= 1, got {(self.m_v, self.m_h)}")
        object.__setattr__(self, "m_v", int(self.m_v))
        object.__setattr__(self, "m_h", int(self.m_h))

    @property
    def m_total(self):
        return self.m_v * self.m_h


@dataclass(frozen=True)
class RicianParams:
    """Linear Rician factor ``kappa`` (``inf`` for LoS only) and NLoS path count."""

    kappa: float
    n_paths: int = 8

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ParameterError(f"Rician factor must be >= 0, got {self.kappa}")
        if int(self.n_paths) < 1:
            raise ParameterError(f"n_paths must be >= 1, got {self.n_paths}")

    @classmethod
    def from_db(cls, kappa_db, n_paths=8):
        kappa = np.inf if np.isinf(kappa_db) and kappa_db > 0 else 10.0 ** (kappa_db / 10.0)
        return cls(float(kappa), int(n_paths))

    @property
    def los_only(self):
        return bool(np.isinf(self.kappa))

    @property
    def los_amplitude(self):
        """``sqrt(kappa / (kappa + 1))``."""
        if self.los_only:
            return 1.0
        return float(np.sqrt(self.kappa / (self.kappa + 1.0)))

    @property
    def nlos_amplitude(self):
        """Per-path amplitude ``sqrt(1 / ((kappa + 1) L))``."""
        if self.los_only:
            return 0.0
        return float(np.sqrt(1.0 / ((self.kappa + 1.0) * self.n_paths)))


def arv_from_cosines(cos_v, cos_h, geom):
    """Normalized UPA response from the two direction cosines.

    Broadcasts over leading dimensions; the element axis is last, ordered
    vertical-major (Kronecker product ``vertical (x) horizontal``).
    """
    cos_v = np.asarray(cos_v, dtype=float)[..., None]
    cos_h = np.asarray(cos_h, dtype=float)[..., None]
    v = np.exp(1j * np.pi * np.arange(geom.m_v) * cos_v) / np.sqrt(geom.m_total)
    h = np.exp(1j * np.pi * np.arange(geom.m_h) * cos_h)
    out = v[..., :, None] * h[..., None, :]
    return out.reshape(out.shape[:-2] + (geom.m_total,))


def upa_arv(theta, phi, geom):
    """Array response ``a(theta, phi)`` of a UPA (unit norm)."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return arv_from_cosines(np.cos(theta), np.sin(theta) * np.cos(phi), geom)


def dirichlet_inner_product(theta1, phi1, theta2, phi2, geom):
    """Closed form of ``a(theta1, phi1)^H a(theta2, phi2)`` via geometric sums."""
    half_v = 0.5 * np.pi * (np.cos(theta2) - np.cos(theta1))
    half_h = 0.5 * np.pi * (np.sin(theta2) * np.cos(phi2) - np.sin(theta1) * np.cos(phi1))

    def factor(m, x):
        s = np.sin(x)
        small = np.abs(s) < 1e-12
        ratio = np.where(small, m * np.cos(m * x) / np.cos(x), np.sin(m * x) / np.where(small, 1.0, s))
        return ratio * np.exp(1j * (m - 1) * x)

    return factor(geom.m_v, half_v) * factor(geom.m_h, half_h) / geom.m_total


def bs_ris_los(bs_geom, ris_geom, los, ric):
    """LoS constituents ``(beta_0, b_0, r_0)`` of the BS-RIS channel."""
    beta0 = (
        np.sqrt(bs_geom.m_total * ris_geom.m_total)
        * ric.los_amplitude
        * los.rho
        * np.exp(1j * los.mu)
    )
    b0 = upa_arv(los.theta, los.phi, bs_geom)
    r0 = upa_arv(los.theta, los.phi, ris_geom)
    return complex(beta0), b0, r0


def bs_ris_los_matrix(bs_geom, ris_geom, los, ric):
    """Deterministic LoS part ``beta_0 b_0 r_0^H`` of the BS-RIS channel."""
    beta0, b0, r0 = bs_ris_los(bs_geom, ris_geom, los, ric)
    return beta0 * np.outer(b0, r0.conj())


def draw_bs_ris_channel(bs_geom, ris_geom, los, ric, rng, los_part=None):
    """One draw of the Rician BS-RIS channel ``B_k`` (``M_B x M_R``).

    NLoS departure and arrival angles are uniform: ``theta`` on ``[0, pi]``
    and ``phi`` on ``[0, 2 pi)``.  ``los_part`` may carry a precomputed
    :func:`bs_ris_los_matrix`.
    """
    B = bs_ris_los_matrix(bs_geom, ris_geom, los, ric) if los_part is None else los_part
    if ric.los_only:
        return B
    L = ric.n_paths
    th_d = rng.uniform(0.0, np.pi, L)
    ph_d = rng.uniform(0.0, 2.0 * np.pi, L)
    th_a = rng.uniform(0.0, np.pi, L)
    ph_a = rng.uniform(0.0, 2.0 * np.pi, L)
    eta = cgauss_vector(rng, L, 1.0)
    beta = np.sqrt(bs_geom.m_total * ris_geom.m_total) * ric.nlos_amplitude * los.rho * eta
    b = upa_arv(th_d, ph_d, bs_geom)  # (L, M_B)
    r = upa_arv(th_a, ph_a, ris_geom)  # (L, M_R)
    return B + (b.T * beta) @ r.conj()


def ris_ue_los_matrix(ris_geom, theta, phi, rho, mu, ric):
    """Deterministic LoS part of :func:`draw_ris_ue_channels` (``M_R x N``)."""
    beta0 = np.sqrt(ris_geom.m_total) * ric.los_amplitude * np.atleast_1d(rho) * np.exp(1j * np.atleast_1d(mu))
    return (upa_arv(np.atleast_1d(theta), np.atleast_1d(phi), ris_geom) * beta0[:, None]).T


def draw_ris_ue_channels(ris_geom, theta, phi, rho, mu, ric, rng, sectors=None, los_part=None):
    """RIS-UE channels for several UEs at once; returns ``M_R x N``.

    ``sectors`` is an ``(N, 3)`` array of ``(theta_c, phi_c, delta)``; the
    NLoS departure angles of UE ``n`` are uniform on
    ``[theta_c - delta, theta_c + delta] x [phi_c - delta, phi_c + delta]``.
    Without sectors they are uniform over the full angular range.
    ``los_part`` may carry a precomputed :func:`ris_ue_los_matrix`.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    M = ris_geom.m_total
    U = ris_ue_los_matrix(ris_geom, theta, phi, rho, mu, ric) if los_part is None else los_part
    if ric.los_only:
        return U
    N = theta.size
    L = ric.n_paths
    if sectors is None:
        th = rng.uniform(0.0, np.pi, (N, L))
        ph = rng.uniform(0.0, 2.0 * np.pi, (N, L))
    else:
        sectors = np.asarray(sectors, dtype=float).reshape(N, 3)
        tc, pc, dl = sectors[:, 0:1], sectors[:, 1:2], sectors[:, 2:3]
        th = tc + dl * rng.uniform(-1.0, 1.0, (N, L))
        ph = pc + dl * rng.uniform(-1.0, 1.0, (N, L))
    eta = cgauss_vector(rng, (N, L), 1.0)
    beta = np.sqrt(M) * ric.nlos_amplitude * rho[:, None] * eta
    r = upa_arv(th, ph, ris_geom)  # (N, L, M)
    U = U + np.einsum("nl,nlm->mn", beta, r)
    return U


def draw_ris_ue_channel(ris_geom, los, ric, rng, sector=None):
    """Single-UE form of :func:`draw_ris_ue_channels`; returns a length-``M_R`` vector."""
    sectors = None if sector is None else np.asarray(sector, dtype=float)[None, :]
    U = draw_ris_ue_channels(ris_geom, los.theta, los.phi, los.rho, los.mu, ric, rng, sectors)
    return U[:, 0]


def draw_direct_channel(pene_loss_db, los, m_b, rng):
    """Blocked BS-UE channel with i.i.d. ``CN(0, (eps rho)^2)`` entries.

    ``pene_loss_db = inf`` means the link is omitted (zero vector).
    """
    if not pene_loss_db >= 0:
        raise ParameterError(f"penetration loss must be >= 0 dB, got {pene_loss_db}")
    if np.isinf(pene_loss_db):
        return np.zeros(m_b, dtype=complex)
    eps = 10.0 ** (-pene_loss_db / 20.0)
    return cgauss_vector(rng, m_b, (eps * los.rho) ** 2)


@dataclass
class ChannelRealization:
    """One Monte Carlo draw of all links.

    ``B`` has shape ``(K, M_B, M_R)``, ``U`` ``(K, M_R, N)`` and ``h_direct``
    ``(M_B, N)``.
    """

    B: np.ndarray
    U: np.ndarray
    h_direct: np.ndarray

    @property
    def dims(self):
        K, m_b, m_r = self.B.shape
        return K, m_b, m_r, self.U.shape[2]

    def assemble(self, gammas):
        return assemble_end_to_end(self, gammas)


def assemble_end_to_end(real, gammas):
    """End-to-end channel ``H`` (``M_B x N``) for reflection vectors ``gammas``."""
    K, m_b, m_r, N = real.dims
    G = np.asarray(gammas, dtype=complex)
    if G.shape != (K, m_r):
        raise ParameterError(f"expected {K} reflection vectors of length {m_r}, got shape {G.shape}")
    cascaded = np.matmul(real.B, G[:, :, None] * real.U).sum(axis=0)
    H = real.h_direct + cascaded
    if not np.all(np.isfinite(H)):
        raise ParameterError("assembled channel contains non-finite entries")
    return H


_MAGIC = b"RISJSDM1"


def dump_realization(path, real, seed, scenario_hash):
    """Write a realization to ``path``.

    Layout: 8-byte magic, little-endian uint32 header length, UTF-8 JSON header
    (dims, seed, scenario hash), then complex entries as little-endian float64
    interleaved ``re, im``: ``B_1 .. B_K``, then ``U_1 .. U_K`` (i.e. ``u_{k,n}``
    columns), then ``h_direct``; each matrix column-major.
    """
    K, m_b, m_r, N = real.dims
    header = json.dumps(
        {"K": K, "M_B": m_b, "M_R": m_r, "N": N, "seed": int(seed), "scenario_hash": scenario_hash},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for k in range(K):
            fh.write(np.asarray(real.B[k], dtype="<c16").tobytes(order="F"))
        for k in range(K):
            fh.write(np.asarray(real.U[k], dtype="<c16").tobytes(order="F"))
        fh.write(np.asarray(real.h_direct, dtype="<c16").tobytes(order="F"))


def load_realization(path):
    """Inverse of :func:`dump_realization`; returns ``(realization, header)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != _MAGIC:
        raise ParameterError(f"{path}: not a channel dump")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    K, m_b, m_r, N = header["K"], header["M_B"], header["M_R"], header["N"]
    data = np.frombuffer(raw[12 + hlen :], dtype="<c16")
    expected = K * m_b * m_r + K * m_r * N + m_b * N
    if data.size != expected:
        raise ParameterError(f"{path}: expected {expected} entries, found {data.size}")
    pos = 0

    def take(rows, cols):
        nonlocal pos
        block = data[pos : pos + rows * cols].reshape((rows, cols), order="F")
        pos += rows * cols
        return block.astype(complex)

    B = np.stack([take(m_b, m_r) for _ in range(K)]) if K else np.zeros((0, m_b, m_r), complex)
    U = np.stack([take(m_r, N) for _ in range(K)]) if K else np.zeros((0, m_r, N), complex)
    h_direct = take(m_b, N)
    return ChannelRealization(B, U, h_direct), header
