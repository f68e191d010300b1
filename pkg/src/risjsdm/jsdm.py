"""RIS-customized JSDM: pre-beamforming, reflection design, ZF precoding, SE.

Normalization note
------------------
All array responses are unit-norm and reflection coefficients unit-modulus.
Under that normalization a RIS steered with bias offsets ``(Theta, Phi)``
contributes, on average, ::

    E{[H^H F]_{n,k}} = conj(beta_B) conj(beta_U) D(Theta, Phi) e^{j psi} / M_R

where ``D`` is the two-dimensional Dirichlet kernel (``D(0, 0) = M_R``) and
``psi = (M_v - 1) Theta + (M_h - 1) Phi``.  Ratios of such means (ISR, the
bias objectives) do not depend on the ``1 / M_R`` scale.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

from .errors import DegenerateBiasError, ParameterError, SingularityError
from .numerics import hermitian_solve

__all__ = [
    "REGIMES",
    "BiasFallbackWarning",
    "ReflectionConfig",
    "Precoder",
    "RisView",
    "build_pbf",
    "reflection_vector",
    "identity_reflection",
    "dirichlet_factor",
    "dirichlet_kernel",
    "bias_offsets",
    "mean_effective_element",
    "isr",
    "bias_grid",
    "steer_bias",
    "interference_objective",
    "optimize_bias_interference",
    "optimize_bias_noise",
    "effective_channel",
    "zf_precode",
    "sinr_from_effective",
    "sum_se",
    "quantize_phase",
    "impair_reflection",
]

#: Configuration label -> reflection design regime.
REGIMES = {
    1: "identity",
    2: "steer",
    3: "interference_limited",
    4: "noise_limited",
}


class BiasFallbackWarning(RuntimeWarning):
    """A bias optimizer fell back to a default point."""


@dataclass
class ReflectionConfig:
    gamma: np.ndarray
    bias_v: float = 0.0
    bias_h: float = 0.0
    regime: str = "steer"
    quant_bits: int = None
    pn_variance: float = None


@dataclass
class Precoder:
    """Two-stage precoder ``F P`` with ``P = blkdiag(P_1, ..., P_C)``."""

    F: np.ndarray
    P_blocks: list
    epsilon: float

    @property
    def P(self):
        blocks = [b for b in self.P_blocks if b.size]
        return block_diag(*blocks) if blocks else np.zeros((0, 0), complex)


@dataclass
class RisView:
    """LoS statistics of one RIS toward every UE, plus its group's sector.

    ``theta``/``phi``/``beta_u`` are indexed by UE; ``beta_u`` holds the
    complex LoS gains ``beta^U_{k,n,0}``.
    """

    theta: np.ndarray
    phi: np.ndarray
    beta_u: np.ndarray
    center_theta: float
    center_phi: float
    spread: float
    geom: object
    extra: dict = field(default_factory=dict)


def build_pbf(bs_los_arvs):
    """Pre-beamformer ``F = [b_{1,0}, ..., b_{K,0}]``."""
    cols = [np.asarray(b, dtype=complex) for b in bs_los_arvs]
    if not cols:
        raise ParameterError("need at least one BS-RIS LoS response")
    F = np.column_stack(cols)
    if F.shape[1] > F.shape[0]:
        raise ParameterError(f"K={F.shape[1]} exceeds the number of BS antennas {F.shape[0]}")
    return F


def reflection_vector(delta_v, delta_h, r_incident, ris_geom):
    """Reflection coefficients ``gamma = M_R (a(delta_v, delta_h) * conj(r))^*``.

    Redirects the wave arriving along ``r_incident`` toward ``(delta_v, delta_h)``.
    """
    from .channel import upa_arv

    a = upa_arv(delta_v, delta_h, ris_geom)
    r = np.asarray(r_incident, dtype=complex)
    return ris_geom.m_total * np.conj(a * np.conj(r))


def identity_reflection(ris_geom):
    return np.ones(ris_geom.m_total, dtype=complex)


def dirichlet_factor(m, x):
    """Signed ``sin(m x) / sin(x)`` with the removable singularities filled in."""
    x = np.asarray(x, dtype=float)
    s = np.sin(x)
    small = np.abs(s) < 1e-12
    safe = np.where(small, 1.0, s)
    return np.where(small, m * np.cos(m * x) / np.cos(x), np.sin(m * x) / safe)


def dirichlet_kernel(Theta, Phi, ris_geom):
    """Two-dimensional Dirichlet kernel ``D(Theta, Phi)`` (signed; ``D(0,0) = M_R``)."""
    return dirichlet_factor(ris_geom.m_v, Theta) * dirichlet_factor(ris_geom.m_h, Phi)


def bias_offsets(delta_v, delta_h, theta, phi):
    """Half-angle offsets ``(Theta, Phi)`` between a beam and a UE direction.

    ``Theta = pi/2 (cos delta_v - cos theta)`` and
    ``Phi = pi/2 (sin delta_v cos delta_h - sin theta cos phi)``, the
    direction cosines along the array axes used by the response vectors.
    """
    Theta = 0.5 * np.pi * (np.cos(delta_v) - np.cos(theta))
    Phi = 0.5 * np.pi * (np.sin(delta_v) * np.cos(delta_h) - np.sin(theta) * np.cos(phi))
    return Theta, Phi


def mean_effective_element(beta_b0, beta_u0, Theta, Phi, ris_geom):
    """Closed-form mean of one effective-channel entry ``[H^H F]_{n,k}``."""
    D = dirichlet_kernel(Theta, Phi, ris_geom)
    psi = (ris_geom.m_v - 1) * np.asarray(Theta) + (ris_geom.m_h - 1) * np.asarray(Phi)
    return np.conj(beta_b0) * np.conj(beta_u0) * D * np.exp(1j * psi) / ris_geom.m_total


def _gain_magnitudes(view, delta_v, delta_h, ues):
    """``|beta_U| |D|`` toward each UE in ``ues``; broadcasts over the bias arrays."""
    ues = np.asarray(ues, dtype=int)
    Theta, Phi = bias_offsets(
        np.asarray(delta_v)[..., None], np.asarray(delta_h)[..., None], view.theta[ues], view.phi[ues]
    )
    D = np.abs(dirichlet_kernel(Theta, Phi, view.geom))
    return np.abs(view.beta_u[ues]) * D, D


def isr(view, n_out, n_in, bias):
    """Inter-group interference-to-signal ratio for a bias pair."""
    dv = view.center_theta + bias[0]
    dh = view.center_phi + bias[1]
    (g_out,), (d_out,) = _gain_magnitudes(view, dv, dh, [n_out])
    (g_in,), (d_in,) = _gain_magnitudes(view, dv, dh, [n_in])
    if d_in < 1e-9 * view.geom.m_total:
        raise DegenerateBiasError(
            f"in-group Dirichlet gain {d_in:.3g} vanishes for UE {n_in}; ISR undefined"
        )
    return float(g_out / g_in)


def bias_grid(spread, m, step_scale=1.0):
    """Bias values on ``[-spread, spread]`` with step ``2 pi / (m step_scale)``.

    The endpoints and zero are always included.
    """
    if spread < 0:
        raise ParameterError(f"angle spread must be >= 0, got {spread}")
    if spread == 0:
        return np.zeros(1)
    step = 2.0 * np.pi / (m * step_scale)
    n = int(np.floor(spread / step + 1e-12))
    pos = step * np.arange(1, n + 1)
    pos = pos[pos < spread]
    return np.concatenate([[-spread], -pos[::-1], [0.0], pos, [spread]])


def steer_bias(view, ue):
    """Bias that points the beam exactly at ``ue`` (azimuth difference wrapped to ``(-pi, pi]``)."""
    dh = np.angle(np.exp(1j * (view.phi[ue] - view.center_phi)))
    return float(view.theta[ue] - view.center_theta), float(dh)


def _pick(objective, bv, bh):
    """Grid argmin with ties broken by smaller bias norm, then lexicographically."""
    obj = objective.ravel()
    vv = bv.ravel()
    hh = bh.ravel()
    norm = np.hypot(vv, hh)
    order = np.lexsort((hh, vv, norm, obj))
    i = order[0]
    return float(vv[i]), float(hh[i])


def _grids(view, step_scale):
    gv = bias_grid(view.spread, view.geom.m_v, step_scale)
    gh = bias_grid(view.spread, view.geom.m_h, step_scale)
    return np.meshgrid(gv, gh, indexing="ij")


def interference_objective(view, in_ues, out_ues, bv, bh):
    """Max over (out, in) UE pairs of ``|beta_U'| D' / (|beta_U| D)`` per bias point."""
    dv = view.center_theta + np.asarray(bv)
    dh = view.center_phi + np.asarray(bh)
    g_out, _ = _gain_magnitudes(view, dv, dh, out_ues)
    g_in, _ = _gain_magnitudes(view, dv, dh, in_ues)
    num = g_out.max(axis=-1)
    den = g_in.min(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)


def optimize_bias_interference(view, in_ues, out_ues, step_scale=1.0):
    """Grid search minimizing the worst inter-group ISR of one RIS."""
    if len(out_ues) == 0:
        warnings.warn("no out-of-group UEs: bias set to (0, 0)", BiasFallbackWarning, stacklevel=2)
        return 0.0, 0.0
    if len(in_ues) == 0:
        raise ParameterError("need at least one in-group UE")
    bv, bh = _grids(view, step_scale)
    obj = interference_objective(view, in_ues, out_ues, bv, bh)
    return _pick(obj, bv, bh)


def noise_objective(view, in_ues, out_ues, bv, bh, tau):
    """Worst out-group ``|D|`` per bias point, ``inf`` where the in-group gain is below ``tau M_R``."""
    dv = view.center_theta + np.asarray(bv)
    dh = view.center_phi + np.asarray(bh)
    _, d_out = _gain_magnitudes(view, dv, dh, out_ues)
    _, d_in = _gain_magnitudes(view, dv, dh, in_ues)
    feasible = np.all(d_in >= tau * view.geom.m_total * (1 - 1e-12), axis=-1)
    worst = d_out.max(axis=-1) if len(out_ues) else np.zeros(feasible.shape)
    return np.where(feasible, worst, np.inf)


def optimize_bias_noise(view, in_ues, out_ues, assigned, tau=1 / np.sqrt(2), step_scale=1.0):
    """Grid search minimizing out-group leakage subject to an in-group gain floor.

    Falls back to exact steering at ``assigned`` when no grid point keeps every
    UE in ``in_ues`` above ``tau * M_R``.
    """
    if not 0 <= tau <= 1:
        raise ParameterError(f"tau must lie in [0, 1], got {tau}")
    if len(out_ues) == 0:
        warnings.warn("no out-of-group UEs: bias set to (0, 0)", BiasFallbackWarning, stacklevel=2)
        return 0.0, 0.0
    bv, bh = _grids(view, step_scale)
    obj = noise_objective(view, in_ues, out_ues, bv, bh, tau)
    if not np.any(np.isfinite(obj)):
        warnings.warn(
            f"no bias keeps in-group gain >= {tau:.3f} M_R; steering at UE {assigned + 1}",
            BiasFallbackWarning,
            stacklevel=2,
        )
        return steer_bias(view, assigned)
    return _pick(obj, bv, bh)


def effective_channel(H, F):
    """Dimension-reduced channel ``H^H F``."""
    H = np.asarray(H)
    F = np.asarray(F)
    if H.shape[0] != F.shape[0]:
        raise ParameterError(f"H has {H.shape[0]} rows but F has {F.shape[0]}")
    return H.conj().T @ F


def _culprit(block):
    """Pair of rows (UEs) with the largest normalized correlation in a block."""
    norms = np.linalg.norm(block, axis=1)
    norms = np.where(norms > 0, norms, 1.0)
    corr = np.abs(block @ block.conj().T) / np.outer(norms, norms)
    np.fill_diagonal(corr, -1.0)
    i, j = np.unravel_index(np.argmax(corr), corr.shape)
    return (int(i), int(j)), float(corr[i, j])


def zf_precode(blocks, p_max):
    """Zero-forcing on each group's square effective-channel block.

    Returns ``(P_blocks, epsilon)`` with ``P_c = epsilon * inv(Hbar_c)`` and
    ``epsilon^2 = p_max / sum_c tr((Hbar_c^H Hbar_c)^{-1})``.
    """
    inverses = []
    for c, blk in enumerate(blocks):
        blk = np.asarray(blk, dtype=complex)
        if blk.size == 0:
            inverses.append(np.zeros((0, 0), complex))
            continue
        if blk.shape[0] != blk.shape[1]:
            raise ParameterError(f"group {c} block is {blk.shape}, expected square")
        try:
            inverses.append(hermitian_solve(blk, np.eye(blk.shape[0]), label=c))
        except SingularityError as exc:
            pair, corr = _culprit(blk)
            raise SingularityError(
                f"{exc}; most correlated rows {pair} (|Q| = {corr:.4f})", group=c, culprit=pair
            ) from exc
    total = sum(float(np.sum(np.abs(inv) ** 2)) for inv in inverses)
    if total <= 0:
        raise ParameterError("no streams to precode")
    eps = float(np.sqrt(p_max / total))
    return [eps * inv for inv in inverses], eps


def sinr_from_effective(G, noise_power):
    """SINR per stream from the composite gain ``G = H_s^H F P`` (``S x S``)."""
    power = np.abs(G) ** 2
    signal = np.diagonal(power, axis1=-2, axis2=-1)
    interference = power.sum(axis=-1) - signal
    return signal / (interference + noise_power)


def sum_se(H, F, P, noise_power):
    """Per-UE spectral efficiency and their sum (bits/s/Hz).

    Column ``s`` of ``H`` must be the channel of the UE receiving stream ``s``.
    """
    G = effective_channel(H, F) @ P
    sinr = sinr_from_effective(G, noise_power)
    se = np.log2(1.0 + sinr)
    return se, float(se.sum()), sinr


def quantize_phase(gamma, bits):
    """Snap each coefficient's phase to the nearest of ``2^bits`` uniform levels.

    Exact ties go to the lower level; amplitudes are kept.
    """
    if bits is None:
        return np.asarray(gamma, dtype=complex).copy()
    if int(bits) < 1:
        raise ParameterError(f"quant_bits must be >= 1, got {bits}")
    levels = 2 ** int(bits)
    step = 2.0 * np.pi / levels
    gamma = np.asarray(gamma, dtype=complex)
    phase = np.mod(np.angle(gamma), 2.0 * np.pi)
    idx = np.mod(np.ceil(phase / step - 0.5), levels)
    return np.abs(gamma) * np.exp(1j * idx * step)


def impair_reflection(gamma, quant_bits=None, pn_variance=None, rng=None):
    """Quantize the phases, then add ``CN(0, pn_variance)`` noise to each coefficient."""
    out = quantize_phase(gamma, quant_bits)
    if pn_variance:
        if rng is None:
            raise ParameterError("phase noise requires an rng")
        from .numerics import cgauss_vector

        out = out + cgauss_vector(rng, out.shape, pn_variance)
    return out
