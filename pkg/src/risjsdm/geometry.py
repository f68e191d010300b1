"""Scene geometry: LoS angles, path loss, DFT-direction RIS placement, UE drops.

Angle convention
----------------
Every planar array (BS and RISs) shares one orientation: its vertical axis is
the global ``z`` axis and its horizontal axis is one of the global ``x`` or
``y`` axes (``horizontal_axis``).  The remaining global axis is the array
normal.  For a displacement ``D`` of length ``d``::

    cos(theta)            = D_z / d
    sin(theta) cos(phi)   = D_h / d        (h = horizontal axis)
    sin(theta) sin(phi)   = D_n / d        (n = normal axis)

so ``theta`` is the polar angle from ``z`` and ``phi`` the azimuth measured
from the horizontal axis toward the normal.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, PlacementError

__all__ = [
    "SPEED_OF_LIGHT",
    "LosPath",
    "GroupSpec",
    "wavelength",
    "axis_indices",
    "direction_cosines",
    "los_arrays",
    "los_path",
    "unit_vector",
    "place_ris_dft",
    "dft_direction",
    "realizable_dft_indices",
    "nearest_dft_indices",
    "sample_ue_positions",
    "angle_spread",
    "apply_deployment_offset",
]

SPEED_OF_LIGHT = 299_792_458.0


def wavelength(carrier_hz):
    if carrier_hz <= 0:
        raise ParameterError(f"carrier frequency must be positive, got {carrier_hz}")
    return SPEED_OF_LIGHT / carrier_hz


@dataclass(frozen=True)
class LosPath:
    """Geometry of one line-of-sight link.

    ``rho`` is the free-space amplitude ``lambda / (4 pi d)`` and ``mu`` the
    common phase ``2 pi d / lambda`` reduced modulo ``2 pi``.
    """

    theta: float
    phi: float
    distance: float
    rho: float
    mu: float


@dataclass(frozen=True)
class GroupSpec:
    """A scattering ring: UEs are dropped uniformly on a horizontal disk."""

    center: tuple
    radius: float
    ue_count: int

    def __post_init__(self):
        if not self.radius > 0:
            raise ParameterError(f"group radius must be positive, got {self.radius}")
        if int(self.ue_count) < 1:
            raise ParameterError(f"group ue_count must be >= 1, got {self.ue_count}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "ue_count", int(self.ue_count))


def axis_indices(horizontal_axis):
    """Indices ``(horizontal, normal)`` of the global axes for a convention."""
    if horizontal_axis == "x":
        return 0, 1
    if horizontal_axis == "y":
        return 1, 0
    raise ParameterError(f"horizontal_axis must be 'x' or 'y', got {horizontal_axis!r}")


def direction_cosines(delta, horizontal_axis="x"):
    """Return ``(cos_v, cos_h, cos_n, d)`` for displacement(s) ``delta``."""
    delta = np.asarray(delta, dtype=float)
    h, n = axis_indices(horizontal_axis)
    d = np.linalg.norm(delta, axis=-1)
    if np.any(d == 0):
        raise ParameterError("coincident points have no direction")
    return delta[..., 2] / d, delta[..., h] / d, delta[..., n] / d, d


def los_arrays(src, dst, lam, horizontal_axis="x"):
    """Vectorized LoS geometry from ``src`` to ``dst`` (broadcasting on ``...x3``).

    Returns ``theta, phi, d, rho, mu`` arrays.
    """
    delta = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    cv, ch, cn, d = direction_cosines(delta, horizontal_axis)
    theta = np.arccos(np.clip(cv, -1.0, 1.0))
    phi = np.arctan2(cn, ch)
    rho = lam / (4.0 * np.pi * d)
    mu = np.mod(2.0 * np.pi * d / lam, 2.0 * np.pi)
    return theta, phi, d, rho, mu


def los_path(src, dst, lam, horizontal_axis="x"):
    theta, phi, d, rho, mu = los_arrays(src, dst, lam, horizontal_axis)
    return LosPath(float(theta), float(phi), float(d), float(rho), float(mu))


def unit_vector(theta, phi, horizontal_axis="x"):
    """Global unit vector for angles ``(theta, phi)`` (inverse of :func:`los_arrays`)."""
    h, n = axis_indices(horizontal_axis)
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    out = np.empty(np.broadcast(theta, phi).shape + (3,))
    out[..., 2] = np.cos(theta)
    out[..., h] = np.sin(theta) * np.cos(phi)
    out[..., n] = np.sin(theta) * np.sin(phi)
    return out


def dft_direction(bs_array, dft_index, horizontal_axis="x"):
    """Unit vector of the DFT direction ``(p, q)`` of an ``(M_v, M_h)`` array.

    The direction satisfies ``cos(theta) = 2p/M_v - 1`` and
    ``sin(theta)cos(phi) = 2q/M_h - 1``; the normal component is taken
    non-negative.
    """
    m_v, m_h = bs_array
    p, q = dft_index
    if not (0 <= p < m_v and 0 <= q < m_h):
        raise PlacementError(f"DFT index {(p, q)} outside array {(m_v, m_h)}")
    cv = 2.0 * p / m_v - 1.0
    ch = 2.0 * q / m_h - 1.0
    rest = 1.0 - cv * cv - ch * ch
    if rest < -1e-12:
        raise PlacementError(
            f"DFT index {(p, q)} is not realizable: cos^2 + (sin cos)^2 = {1 - rest:.4f} > 1"
        )
    h, n = axis_indices(horizontal_axis)
    out = np.zeros(3)
    out[2] = cv
    out[h] = ch
    out[n] = np.sqrt(max(rest, 0.0))
    return out


def place_ris_dft(bs, bs_array, dft_index, distance, horizontal_axis="x"):
    """Position at ``distance`` from ``bs`` along a DFT direction of its array."""
    if not distance > 0:
        raise ParameterError(f"RIS distance must be positive, got {distance}")
    pos = np.asarray(bs, dtype=float) + distance * dft_direction(bs_array, dft_index, horizontal_axis)
    if pos[2] < 0:
        raise PlacementError(f"DFT index {tuple(dft_index)} at {distance} m lands below ground")
    return pos


def realizable_dft_indices(bs_array):
    m_v, m_h = bs_array
    out = []
    for p in range(m_v):
        for q in range(m_h):
            cv = 2.0 * p / m_v - 1.0
            ch = 2.0 * q / m_h - 1.0
            if cv * cv + ch * ch <= 1.0 + 1e-12:
                out.append((p, q))
    return out


def nearest_dft_indices(bs, bs_array, target, count, horizontal_axis="x"):
    """The ``count`` realizable indices closest in angle to ``bs -> target``."""
    delta = np.asarray(target, dtype=float) - np.asarray(bs, dtype=float)
    aim = delta / np.linalg.norm(delta)
    scored = []
    for idx in realizable_dft_indices(bs_array):
        u = dft_direction(bs_array, idx, horizontal_axis)
        scored.append((float(np.arccos(np.clip(u @ aim, -1, 1))), idx))
    scored.sort()
    return [idx for _, idx in scored[:count]]


def sample_ue_positions(spec, ue_height, rng):
    """Drop ``spec.ue_count`` UEs uniformly on the group's disk at ``ue_height``."""
    r = spec.radius * np.sqrt(rng.uniform(0.0, 1.0, spec.ue_count))
    ang = rng.uniform(0.0, 2.0 * np.pi, spec.ue_count)
    cx, cy, _ = spec.center
    out = np.empty((spec.ue_count, 3))
    out[:, 0] = cx + r * np.cos(ang)
    out[:, 1] = cy + r * np.sin(ang)
    out[:, 2] = ue_height
    return out


def angle_spread(ris, spec):
    """Angular half-width of a group disk seen from ``ris``: ``arcsin(R / d)``."""
    d = float(np.linalg.norm(np.asarray(spec.center) - np.asarray(ris, dtype=float)))
    if d <= spec.radius:
        raise ParameterError(
            f"RIS at distance {d:.3f} m lies inside the scattering disk of radius {spec.radius}"
        )
    return float(np.arcsin(spec.radius / d))


def apply_deployment_offset(nominal, sigma_offset, rng):
    """Perturb each coordinate by an independent N(0, sigma_offset^2) draw."""
    if sigma_offset < 0:
        raise ParameterError(f"sigma_offset must be non-negative, got {sigma_offset}")
    nominal = np.asarray(nominal, dtype=float)
    if sigma_offset == 0:
        return nominal.copy()
    return nominal + rng.normal(0.0, sigma_offset, nominal.shape)
