"""End-to-end transmission pipeline for one scenario.

``prepare_deployment`` performs everything that depends only on statistical
CSI: RIS placement, UE drops, K-means UE grouping, path-loss RIS grouping,
association and the reflection designs of every configuration.
``run_trial`` draws one set of channels and evaluates the effective channel
of every requested configuration on the same draw.

Reflection designs and the pre-beamformer always use the nominal RIS
positions; channels use the actual ones (nominal plus deployment offset).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag
from scipy.optimize import linear_sum_assignment

from .channel import (
    ChannelRealization,
    RicianParams,
    UpaGeometry,
    bs_ris_los,
    bs_ris_los_matrix,
    draw_bs_ris_channel,
    draw_direct_channel,
    draw_ris_ue_channels,
    ris_ue_los_matrix,
)
from .errors import ParameterError, SingularityError
from .geometry import angle_spread, apply_deployment_offset, los_arrays, los_path, place_ris_dft, sample_ue_positions, wavelength
from .grouping import GroupingPlan, LosData, associate, kmeans_group, ris_grouping
from .jsdm import (
    REGIMES,
    BiasFallbackWarning,
    ReflectionConfig,
    RisView,
    build_pbf,
    identity_reflection,
    impair_reflection,
    optimize_bias_interference,
    optimize_bias_noise,
    reflection_vector,
    sinr_from_effective,
    steer_bias,
)
from .numerics import SeededRng, hermitian_solve

__all__ = [
    "Deployment",
    "TrialOutcome",
    "prepare_deployment",
    "ris_positions",
    "draw_ue_positions",
    "draw_channels",
    "design_reflections",
    "run_trial",
    "zf_gains",
    "se_from_gains",
]


@dataclass
class Deployment:
    """Statistical-CSI state of one deployment (independent of the trial)."""

    scenario: object
    lam: float
    bs_geom: UpaGeometry
    ris_geom: UpaGeometry
    bs: np.ndarray
    ris_positions: np.ndarray
    ue_positions: np.ndarray
    ue_spec_group: np.ndarray
    los: LosData
    plan: GroupingPlan
    views: list
    F: np.ndarray
    designs: dict
    association_objective: float
    notices: list = field(default_factory=list)
    _links: list = field(default=None, repr=False)

    def nominal_links(self):
        """Link geometry at the nominal RIS positions (computed once)."""
        if self._links is None:
            self._links = _link_geometry(self, self.ris_positions)
        return self._links

    @property
    def ris_order(self):
        return self.plan.ris_order()

    @property
    def served(self):
        return self.plan.served_order()

    @property
    def F_ordered(self):
        return self.F[:, self.ris_order]

    def block_slices(self):
        """Row/column ranges of each group in the ordered effective channel."""
        out, start = [], 0
        for ris in self.plan.ris_groups:
            out.append(slice(start, start + len(ris)))
            start += len(ris)
        return out


@dataclass
class TrialOutcome:
    """Effective channels ``H_s^H F`` (stream order) per configuration, plus the full ``H``."""

    trial: int
    heff: dict
    H: dict


def ris_positions(scenario):
    bs = np.asarray(scenario.bs_position, dtype=float)
    return np.stack(
        [
            place_ris_dft(bs, scenario.bs_array, idx, d, scenario.horizontal_axis)
            for idx, d in zip(scenario.ris_dft_indices, scenario.ris_distances)
        ]
    )


def draw_ue_positions(scenario, rng):
    pos, lab = [], []
    for c, spec in enumerate(scenario.groups):
        pos.append(sample_ue_positions(spec, scenario.ue_height, rng.spawn("ue", c)))
        lab.extend([c] * spec.ue_count)
    return np.concatenate(pos), np.asarray(lab, dtype=int)


def _los_data(scenario, lam, bs, ris, ues, bs_geom, ris_geom):
    ric_b = RicianParams.from_db(scenario.kappa_b_db, scenario.n_nlos_paths)
    ric_u = RicianParams.from_db(scenario.kappa_u_db, scenario.n_nlos_paths)
    axis = scenario.horizontal_axis
    beta_b, theta, phi, rho, beta_u = [], [], [], [], []
    for pos in ris:
        b0, _, _ = bs_ris_los(bs_geom, ris_geom, los_path(bs, pos, lam, axis), ric_b)
        beta_b.append(b0)
        th, ph, _, rh, mu = los_arrays(pos, ues, lam, axis)
        theta.append(th)
        phi.append(ph)
        rho.append(rh)
        beta_u.append(np.sqrt(ris_geom.m_total) * ric_u.los_amplitude * rh * np.exp(1j * mu))
    return LosData(
        np.asarray(theta),
        np.asarray(phi),
        np.asarray(beta_u),
        np.asarray(beta_b),
        np.asarray(rho),
        ris_geom,
    )


def _match_groups(clusters, ue_positions, scenario):
    """Order K-means clusters so that cluster ``c`` is the one nearest ring ``c``."""
    centers = np.asarray([g.center for g in scenario.groups])
    means = np.asarray([ue_positions[g].mean(axis=0) for g in clusters])
    cost = np.linalg.norm(means[:, None, :2] - centers[None, :, :2], axis=-1)
    rows, cols = linear_sum_assignment(cost)
    ordered = [None] * len(clusters)
    for r, c in zip(rows, cols):
        ordered[c] = clusters[r]
    return ordered


def _ris_views(scenario, lam, ris, los, plan, ris_geom):
    axis = scenario.horizontal_axis
    views = []
    gor = plan.group_of_ris()
    for k, pos in enumerate(ris):
        spec = scenario.groups[gor[k]]
        ctr = los_path(pos, spec.center, lam, axis)
        views.append(
            RisView(
                theta=los.theta[k],
                phi=los.phi[k],
                beta_u=los.beta_u[k],
                center_theta=ctr.theta,
                center_phi=ctr.phi,
                spread=angle_spread(pos, spec),
                geom=ris_geom,
            )
        )
    return views


def design_reflections(scenario, plan, views, r0, notices=None):
    """Reflection designs of every configuration; returns ``{label: [ReflectionConfig]*K}``."""
    K = len(views)
    assignment = plan.assignment()
    gor = plan.group_of_ris()
    geom = views[0].geom
    designs = {}
    for label in (1, 2, 3, 4):
        regime = REGIMES[label]
        out = []
        for k in range(K):
            view = views[k]
            c = gor[k]
            pool = plan.ue_groups if scenario.bias_out_set == "group" else plan.selected
            out_ues = [n for d, s in enumerate(pool) if d != c for n in s]
            in_sets = {
                "assigned": [assignment[k]],
                "served": list(plan.selected[c]),
                "group": list(plan.ue_groups[c]),
            }
            if label == 1:
                out.append(ReflectionConfig(identity_reflection(geom), regime=regime))
                continue
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", BiasFallbackWarning)
                if label == 2:
                    bias = steer_bias(view, assignment[k])
                elif label == 3:
                    bias = optimize_bias_interference(view, in_sets[scenario.bias_in_set], out_ues, scenario.bias_step_scale)
                else:
                    bias = optimize_bias_noise(view, in_sets[scenario.noise_constraint], out_ues, assignment[k], scenario.tau, scenario.bias_step_scale)
            if notices is not None:
                notices.extend(f"config {label}, RIS {k + 1}: {w.message}" for w in caught)
            gamma = reflection_vector(view.center_theta + bias[0], view.center_phi + bias[1], r0[k], geom)
            out.append(ReflectionConfig(gamma, bias[0], bias[1], regime))
        designs[label] = out
    return designs


def prepare_deployment(scenario, ue_positions=None, rng=None):
    """Build the statistical-CSI state of ``scenario``.

    UE positions are drawn from ``rng`` (default: a stream derived from the
    scenario seed) unless given.
    """
    if rng is None:
        rng = SeededRng(scenario.base_seed).spawn("deployment")
    lam = wavelength(scenario.carrier_hz)
    bs_geom = UpaGeometry(*scenario.bs_array)
    ris_geom = UpaGeometry(*scenario.ris_array)
    bs = np.asarray(scenario.bs_position, dtype=float)
    ris = ris_positions(scenario)
    if ue_positions is None:
        ues, labels = draw_ue_positions(scenario, rng.spawn("ues"))
    else:
        ues = np.asarray(ue_positions, dtype=float)
        labels = np.concatenate([[c] * g.ue_count for c, g in enumerate(scenario.groups)]).astype(int)
        if ues.shape != (scenario.N, 3):
            raise ParameterError(f"expected {scenario.N} UE positions, got shape {ues.shape}")
    los = _los_data(scenario, lam, bs, ris, ues, bs_geom, ris_geom)

    clusters = kmeans_group(los.direction_vectors(), scenario.C, rng.spawn("kmeans"))
    clusters = _match_groups(clusters, ues, scenario)
    table = np.stack([los.rho_u[:, g].mean(axis=1) for g in clusters], axis=1)
    ris_groups = ris_grouping(table, clusters)
    plan, objective = associate(GroupingPlan(clusters, ris_groups), los, cap=scenario.association_cap)

    ric_b = RicianParams.from_db(scenario.kappa_b_db, scenario.n_nlos_paths)
    r0, b0 = [], []
    for pos in ris:
        _, b, r = bs_ris_los(bs_geom, ris_geom, los_path(bs, pos, lam, scenario.horizontal_axis), ric_b)
        b0.append(b)
        r0.append(r)
    F = build_pbf(b0)
    views = _ris_views(scenario, lam, ris, los, plan, ris_geom)
    notices = []
    designs = design_reflections(scenario, plan, views, r0, notices)
    return Deployment(
        scenario=scenario,
        lam=lam,
        bs_geom=bs_geom,
        ris_geom=ris_geom,
        bs=bs,
        ris_positions=ris,
        ue_positions=ues,
        ue_spec_group=labels,
        los=los,
        plan=plan,
        views=views,
        F=F,
        designs=designs,
        association_objective=objective,
        notices=notices,
    )


def _sectors(scenario, lam, ris_pos, ue_groups):
    """Per-UE NLoS sector ``(theta_c, phi_c, delta)`` as seen from one RIS."""
    out = np.empty((len(ue_groups), 3))
    for n, c in enumerate(ue_groups):
        spec = scenario.groups[c]
        ctr = los_path(ris_pos, spec.center, lam, scenario.horizontal_axis)
        out[n] = ctr.theta, ctr.phi, angle_spread(ris_pos, spec)
    return out


def _link_geometry(dep, ris):
    """Per-RIS LoS geometry, NLoS sectors and the LoS parts of ``B_k`` and ``U_k``."""
    s = dep.scenario
    ric_b = RicianParams.from_db(s.kappa_b_db, s.n_nlos_paths)
    ric_u = RicianParams.from_db(s.kappa_u_db, s.n_nlos_paths)
    out = []
    for pos in ris:
        path = los_path(dep.bs, pos, dep.lam, s.horizontal_axis)
        th, ph, _, rho, mu = los_arrays(pos, dep.ue_positions, dep.lam, s.horizontal_axis)
        out.append(
            (
                path,
                (th, ph, rho, mu),
                _sectors(s, dep.lam, pos, dep.ue_spec_group),
                bs_ris_los_matrix(dep.bs_geom, dep.ris_geom, path, ric_b),
                ris_ue_los_matrix(dep.ris_geom, th, ph, rho, mu, ric_u),
            )
        )
    return out


def draw_channels(dep, rng, actual_ris=None):
    """One draw of every link for the deployment (``actual_ris`` defaults to nominal)."""
    s = dep.scenario
    ris = dep.ris_positions if actual_ris is None else actual_ris
    ric_b = RicianParams.from_db(s.kappa_b_db, s.n_nlos_paths)
    ric_u = RicianParams.from_db(s.kappa_u_db, s.n_nlos_paths)
    axis = s.horizontal_axis
    links = _link_geometry(dep, ris) if actual_ris is not None else dep.nominal_links()
    B, U = [], []
    for k, (los_b, (th, ph, rho, mu), sectors, lb, lu) in enumerate(links):
        B.append(draw_bs_ris_channel(dep.bs_geom, dep.ris_geom, los_b, ric_b, rng.spawn("B", k), lb))
        U.append(draw_ris_ue_channels(dep.ris_geom, th, ph, rho, mu, ric_u, rng.spawn("U", k), sectors, lu))
    m_b = dep.bs_geom.m_total
    if s.omit_direct:
        h_direct = np.zeros((m_b, s.N), dtype=complex)
    else:
        d_rng = rng.spawn("direct")
        h_direct = np.stack(
            [
                draw_direct_channel(s.pene_loss_db, los_path(dep.bs, u, dep.lam, axis), m_b, d_rng.spawn(n))
                for n, u in enumerate(dep.ue_positions)
            ],
            axis=1,
        )
    return ChannelRealization(np.stack(B), np.stack(U), h_direct)


def _gammas(dep, label, rng):
    s = dep.scenario
    bits = s.quant_bits or None
    out = []
    for k, cfg in enumerate(dep.designs[label]):
        if bits is None and not s.pn_variance:
            out.append(cfg.gamma)
        else:
            out.append(impair_reflection(cfg.gamma, bits, s.pn_variance, rng.spawn("pn", label, k)))
    return np.stack(out)


def run_trial(dep, trial, configs=None, keep_h=False):
    """Draw channel realization ``trial`` and return effective channels per configuration."""
    s = dep.scenario
    configs = s.configs if configs is None else configs
    rng = SeededRng(s.base_seed).spawn("trial", int(trial))
    actual = None
    if s.sigma_offset > 0:
        off = rng.spawn("offset")
        actual = np.stack([apply_deployment_offset(p, s.sigma_offset, off.spawn(k)) for k, p in enumerate(dep.ris_positions)])
    real = draw_channels(dep, rng, actual)
    F = dep.F_ordered
    served = dep.served
    heff, Hs = {}, {}
    for label in configs:
        H = real.assemble(_gammas(dep, label, rng))
        heff[label] = H[:, served].conj().T @ F
        if keep_h:
            Hs[label] = H
    return TrialOutcome(int(trial), heff, Hs)


def zf_gains(dep, heff, label=None):
    """Composite gains ``H_s^H F P`` at unit transmit power.

    Returns ``(G1, eps1)``: ``G1 = heff @ blkdiag(inv(H_c))`` scaled by the
    unit-power normalization, so that at power ``p`` the gains are
    ``sqrt(p) * G1``.
    """
    inverses = []
    for c, sl in enumerate(dep.block_slices()):
        blk = heff[sl, sl]
        if blk.size == 0:
            continue
        try:
            inverses.append(hermitian_solve(blk, np.eye(blk.shape[0]), label=c))
        except SingularityError as exc:
            from .jsdm import _culprit

            pair, corr = _culprit(blk)
            served = dep.plan.selected[c]
            culprit = (served[pair[0]], served[pair[1]])
            where = "" if label is None else f" in configuration {label}"
            raise SingularityError(
                f"{exc}{where}; most correlated UEs {culprit[0] + 1} and {culprit[1] + 1} (|Q| = {corr:.4f})",
                group=c,
                culprit=culprit,
            ) from exc
    total = sum(float(np.sum(np.abs(inv) ** 2)) for inv in inverses)
    eps1 = float(np.sqrt(1.0 / total))
    return eps1 * heff @ block_diag(*inverses), eps1


def se_from_gains(G1, p_watts, noise_watts):
    """Per-stream SE at power ``p_watts`` from unit-power gains."""
    sinr = sinr_from_effective(np.sqrt(p_watts) * G1, noise_watts)
    return np.log2(1.0 + sinr), sinr
