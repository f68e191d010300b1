"""Metrics and experiment kernels: effective rank, averaged effective channels,
baseline RIS architectures and Monte Carlo aggregation."""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .numerics import SeededRng, singular_values

__all__ = [
    "SeResult",
    "Aggregate",
    "aggregate",
    "effective_rank",
    "mean_effective_matrix",
    "closed_form_effective_matrix",
    "block_statistics",
    "baseline_architecture",
    "BASELINE_KINDS",
    "ecdf",
    "rank_samples",
    "rank_cdf",
]

BASELINE_KINDS = ("distributed", "consolidated_single", "merged_per_group")


@dataclass
class SeResult:
    """Spectral efficiency of one realization under one configuration."""

    per_ue_se: np.ndarray
    sum_se: float
    sinr: np.ndarray
    trial_seed: int
    config_label: int

    def __post_init__(self):
        self.per_ue_se = np.asarray(self.per_ue_se, dtype=float)
        self.sinr = np.asarray(self.sinr, dtype=float)
        if np.any(self.per_ue_se < 0) or np.any(self.sinr < 0):
            raise ParameterError("SE and SINR must be non-negative")


@dataclass
class Aggregate:
    mean: float
    std: float
    count: int
    cdf: tuple = None

    @property
    def stderr(self):
        return self.std / np.sqrt(self.count) if self.count > 1 else float("inf")


def aggregate(samples, cdf_grid=None):
    """Mean / sample std (``ddof=1``) of ``samples``, in input order.

    Callers pass samples sorted by trial index, so the result does not depend
    on the order in which trials finished.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ParameterError("cannot aggregate zero samples")
    std = float(x.std(ddof=1)) if x.size > 1 else 0.0
    cdf = None
    if cdf_grid is not None:
        cdf = (np.asarray(cdf_grid, dtype=float), ecdf(x, cdf_grid))
    return Aggregate(float(x.mean()), std, int(x.size), cdf)


def effective_rank(H, weights="sqrt"):
    """Entropy-based effective rank ``exp(-sum p_n ln p_n)``.

    ``weights="sqrt"`` uses ``p_n = sqrt(s_n) / sum sqrt(s_m)`` over the
    singular values ``s_n``; ``weights="sv"`` uses ``p_n = s_n / sum s_m``.
    """
    s = singular_values(H)
    if s.size == 0 or not np.any(s > 0):
        raise ParameterError("effective rank of an all-zero matrix is undefined")
    if weights == "sqrt":
        w = np.sqrt(s)
    elif weights == "sv":
        w = s
    else:
        raise ParameterError(f"unknown weights {weights!r}")
    p = w / w.sum()
    p = p[p > 0]
    return float(np.exp(-np.sum(p * np.log(p))))


def ecdf(samples, grid):
    """Empirical CDF of ``samples`` evaluated on ``grid`` (right-continuous)."""
    x = np.sort(np.asarray(samples, dtype=float))
    return np.searchsorted(x, np.asarray(grid, dtype=float), side="right") / x.size


def mean_effective_matrix(scenario, config_label, n_trials, dep=None, threads=1):
    """Magnitudes of the trial-mean effective channel ``H_s^H F``.

    UE positions are fixed; only small-scale fading varies.  Rows and columns
    follow the stream order (group, then selection order).
    """
    from .experiments import map_trials
    from .pipeline import prepare_deployment, run_trial

    if n_trials < 1:
        raise ParameterError("n_trials must be >= 1")
    dep = prepare_deployment(scenario) if dep is None else dep
    outs = map_trials(lambda t: run_trial(dep, t, configs=[config_label]).heff[config_label], range(n_trials), threads)
    return np.abs(sum(outs) / n_trials)


def closed_form_effective_matrix(dep, config_label):
    """Mean effective channel predicted by the LoS closed form (stream order)."""
    from .jsdm import bias_offsets, mean_effective_element

    served = dep.served
    cols = []
    for k in dep.ris_order:
        view = dep.views[k]
        cfg = dep.designs[config_label][k]
        if config_label == 1:
            raise ParameterError("the closed form assumes a steered reflection (configurations 2-4)")
        Th, Ph = bias_offsets(view.center_theta + cfg.bias_v, view.center_phi + cfg.bias_h, view.theta[served], view.phi[served])
        cols.append(mean_effective_element(dep.los.beta_b[k], dep.los.beta_u[k, served], Th, Ph, dep.ris_geom))
    return np.stack(cols, axis=1)


def block_statistics(M, slices):
    """Mean magnitude of the diagonal, intra-group off-diagonal and inter-group entries."""
    M = np.abs(np.asarray(M))
    S = M.shape[0]
    group = np.empty(S, dtype=int)
    for c, sl in enumerate(slices):
        group[sl] = c
    same = group[:, None] == group[None, :]
    diag = np.eye(S, dtype=bool)
    return {
        "diagonal": float(M[diag].mean()),
        "intra": float(M[same & ~diag].mean()) if np.any(same & ~diag) else 0.0,
        "inter": float(M[~same].mean()) if np.any(~same) else 0.0,
    }


def baseline_architecture(scenario, kind):
    """Scenario variant for a RIS architecture with the same total element count.

    ``consolidated_single`` keeps only RIS 1 and widens it ``K`` times along
    the horizontal axis; ``merged_per_group`` keeps RISs 1, 3, 5, ... and
    widens each by the number of RISs it absorbs.
    """
    if kind not in BASELINE_KINDS:
        raise ParameterError(f"unknown architecture {kind!r}; expected one of {BASELINE_KINDS}")
    if kind == "distributed":
        return scenario
    m_v, m_h = scenario.ris_array
    K = scenario.K
    if kind == "consolidated_single":
        keep = [0]
    else:
        if K % scenario.C:
            raise ParameterError(f"cannot merge {K} RISs evenly into {scenario.C} groups")
        keep = list(range(0, K, K // scenario.C))
    factor = K // len(keep)
    return scenario.with_(
        name=f"{scenario.name}-{kind}",
        ris_dft_indices=tuple(scenario.ris_dft_indices[k] for k in keep),
        ris_distances=tuple(scenario.ris_distances[k] for k in keep),
        ris_array=(m_v, m_h * factor),
    )


def rank_samples(scenario, kind, n_trials, config_label=2, threads=1, redraw_ues=True, weights=None):
    """Effective rank of the end-to-end channel ``H`` (all UEs) per trial.

    With ``redraw_ues`` each trial drops new UEs (and redoes the grouping and
    reflection design); otherwise the deployment is fixed.
    """
    from .experiments import map_trials
    from .pipeline import prepare_deployment, run_trial

    s = baseline_architecture(scenario, kind)
    weights = s.erank_weights if weights is None else weights
    fixed = None if redraw_ues else prepare_deployment(s)

    def one(t):
        dep = fixed
        if dep is None:
            dep = prepare_deployment(s, rng=SeededRng(s.base_seed).spawn("ue-redraw", t))
        H = run_trial(dep, t, configs=[config_label], keep_h=True).H[config_label]
        return effective_rank(H, weights)

    return np.asarray(map_trials(one, range(n_trials), threads))


def rank_cdf(scenario, kinds=BASELINE_KINDS, n_trials=200, grid=None, threads=1, redraw_ues=True, weights=None):
    """Empirical CDFs of the effective rank per architecture on a common grid.

    Returns ``(grid, {kind: cdf}, {kind: samples})``.
    """
    if n_trials < 10:
        raise ParameterError("rank_cdf needs at least 10 trials")
    if grid is None:
        grid = np.linspace(1.0, float(min(scenario.N, scenario.bs_array[0] * scenario.bs_array[1])), 161)
    samples = {k: rank_samples(scenario, k, n_trials, threads=threads, redraw_ues=redraw_ues, weights=weights) for k in kinds}
    return np.asarray(grid), {k: ecdf(v, grid) for k, v in samples.items()}, samples
