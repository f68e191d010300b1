"""Experiment runners, Monte Carlo orchestration and result persistence.

Every experiment produces rows keyed by (sweep value, transmit power,
configuration).  Trials are independent: trial ``t`` always draws from the
stream ``(base_seed, "trial", t)``, so results do not depend on the thread
count or on evaluation order.  The same draws are reused across
configurations and transmit powers (common random numbers).
"""

import csv
import hashlib
import io
import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .analysis import BASELINE_KINDS, aggregate, baseline_architecture, block_statistics, ecdf, effective_rank
from .errors import ParameterError, RisJsdmError
from .numerics import SeededRng
from .pipeline import prepare_deployment, run_trial, se_from_gains, zf_gains
from .scenario import dbm_to_watts

__all__ = [
    "EXPERIMENTS",
    "DEFAULT_GRIDS",
    "ExperimentResult",
    "map_trials",
    "run_pipeline",
    "evaluate_points",
    "sweep",
    "result_csv",
    "save_result",
    "plot_script",
]

EXPERIMENTS = ("power", "ris_size", "stream_count", "offset", "phase_impair", "rician", "rank_cdf", "bd_matrix")

DEFAULT_GRIDS = {
    "power": (0.0, 10.0, 20.0, 30.0, 40.0, 50.0),
    "ris_size": (10, 15, 20, 25, 30),
    "stream_count": (3, 6),
    "offset": (0.0, 0.5, 1.0, 1.5, 2.0),
    "phase_impair": (0.0, 0.05, 0.1, 0.2, 0.3),
    "rician": (0.0, 5.0, 10.0, 15.0),
    "rank_cdf": BASELINE_KINDS,
    "bd_matrix": (1, 2, 3, 4),
}

_PARAMETER = {
    "power": "p_max_dbm",
    "ris_size": "ris_side",
    "stream_count": "K",
    "offset": "sigma_offset",
    "phase_impair": "pn_variance",
    "rician": "kappa_db",
    "rank_cdf": "erank",
    "bd_matrix": "trials",
}

TAIL = ["config", "sweep_value", "mean_sum_se", "std_sum_se", "n_trials", "seed"]


@dataclass
class ExperimentResult:
    experiment: str
    parameter: str
    values: tuple
    header: list
    rows: list
    scenario: object
    aggregates: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def scenario_hash(self):
        return self.scenario.content_hash()


def map_trials(fn, items, threads=1):
    """``[fn(i) for i in items]`` on up to ``threads`` threads, in input order."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(fn, items))


def run_pipeline(scenario, config_label, trial, dep=None, p_max_dbm=None):
    """One realization of the full pipeline; returns an :class:`SeResult`."""
    from .analysis import SeResult

    dep = prepare_deployment(scenario) if dep is None else dep
    out = run_trial(dep, trial, configs=[config_label])
    G1, _ = zf_gains(dep, out.heff[config_label], config_label)
    p = dbm_to_watts(scenario.p_max_dbm if p_max_dbm is None else p_max_dbm)
    se, sinr = se_from_gains(G1, p, scenario.noise_watts)
    return SeResult(se, float(se.sum()), sinr, trial, config_label)


def _trial_se(dep, trial, configs, powers_w, noise_w):
    out = run_trial(dep, trial, configs=configs)
    res = {}
    for label in configs:
        G1, _ = zf_gains(dep, out.heff[label], label)
        res[label] = [float(se_from_gains(G1, p, noise_w)[0].sum()) for p in powers_w]
    return res


def evaluate_points(scenario, configs=None, powers_dbm=None, n_trials=None, threads=1, dep=None):
    """Sum-SE samples ``{(config, power_dbm): array over trials}`` for one scenario."""
    configs = list(scenario.configs if configs is None else configs)
    powers_dbm = [scenario.p_max_dbm] if powers_dbm is None else list(powers_dbm)
    n_trials = scenario.n_trials if n_trials is None else int(n_trials)
    dep = prepare_deployment(scenario) if dep is None else dep
    powers_w = [dbm_to_watts(p) for p in powers_dbm]
    per_trial = map_trials(lambda t: _trial_se(dep, t, configs, powers_w, scenario.noise_watts), range(n_trials), threads)
    out = {}
    for label in configs:
        for j, p in enumerate(powers_dbm):
            out[(label, float(p))] = np.asarray([r[label][j] for r in per_trial])
    return out, dep


def _variants(scenario, experiment, values, options):
    """``[(sweep_value, scenario_variant)]`` for the SE experiments."""
    out = []
    for v in values:
        if experiment == "power":
            out.append((float(v), scenario))
        elif experiment == "ris_size":
            side = int(v)
            out.append((side, scenario.with_(ris_array=(side, side))))
        elif experiment == "stream_count":
            K = int(v)
            if K == scenario.K:
                out.append((K, scenario))
                continue
            if scenario.K % K:
                raise ParameterError(f"stream_count {K} must divide the deployed RIS count {scenario.K}")
            keep = list(range(0, scenario.K, scenario.K // K))
            out.append(
                (
                    K,
                    scenario.with_(
                        ris_dft_indices=tuple(scenario.ris_dft_indices[k] for k in keep),
                        ris_distances=tuple(scenario.ris_distances[k] for k in keep),
                    ),
                )
            )
        elif experiment == "offset":
            out.append((float(v), scenario.with_(sigma_offset=float(v))))
        elif experiment == "phase_impair":
            out.append((float(v), scenario.with_(pn_variance=float(v))))
        elif experiment == "rician":
            target = options.get("rician_target", "b")
            changes = {}
            if target in ("b", "both"):
                changes["kappa_b_db"] = float(v)
            if target in ("u", "both"):
                changes["kappa_u_db"] = float(v)
            if not changes:
                raise ParameterError(f"rician_target must be 'b', 'u' or 'both', got {target!r}")
            out.append((float(v), scenario.with_(**changes)))
        else:
            raise ParameterError(f"unknown experiment {experiment!r}")
    return out


def _se_sweep(scenario, experiment, values, configs, n_trials, threads, options):
    powers = options.get("powers_dbm")
    bits_list = options.get("bits", (1, 2, 3, 0)) if experiment == "phase_impair" else (scenario.quant_bits,)
    header = ["experiment", "parameter", "quant_bits", "p_max_dbm"] + TAIL
    rows, aggs = [], {}
    for bits in bits_list:
        for value, variant in _variants(scenario, experiment, values, options):
            variant = variant.with_(quant_bits=int(bits))
            pw = [value] if experiment == "power" else (powers if powers is not None else [variant.p_max_dbm])
            samples, _ = evaluate_points(variant, configs, pw, n_trials, threads)
            for label in configs:
                for p in pw:
                    agg = aggregate(samples[(label, float(p))])
                    aggs[(int(bits), float(p), value, label)] = agg
                    rows.append([experiment, _PARAMETER[experiment], int(bits), float(p), label, value, agg.mean, agg.std, agg.count, scenario.base_seed])
    return header, rows, aggs


def _rank_sweep(scenario, kinds, n_trials, threads, options):
    """Effective rank CDF per architecture plus the sum SE of each trial (configuration 2)."""
    redraw = options.get("redraw_ues", True)
    weights = options.get("weights", scenario.erank_weights)
    grid = options.get("grid")
    if grid is None:
        grid = np.round(np.linspace(1.0, float(min(scenario.N, scenario.bs_array[0] * scenario.bs_array[1])), 81), 6)
    p_w = scenario.p_max_watts
    header = ["experiment", "architecture", "weights", "cdf"] + TAIL
    rows, aggs, samples = [], {}, {}
    for kind in kinds:
        s = baseline_architecture(scenario, kind)
        fixed = None if redraw else prepare_deployment(s)

        def one(t, s=s, fixed=fixed):
            dep = fixed if fixed is not None else prepare_deployment(s, rng=SeededRng(s.base_seed).spawn("ue-redraw", t))
            out = run_trial(dep, t, configs=[2], keep_h=True)
            G1, _ = zf_gains(dep, out.heff[2], 2)
            return effective_rank(out.H[2], weights), float(se_from_gains(G1, p_w, s.noise_watts)[0].sum())

        res = map_trials(one, range(n_trials), threads)
        ranks = np.asarray([r[0] for r in res])
        se = aggregate([r[1] for r in res])
        samples[kind] = ranks
        aggs[kind] = aggregate(ranks, grid)
        for g, F in zip(grid, ecdf(ranks, grid)):
            rows.append(["rank_cdf", kind, weights, float(F), 2, float(g), se.mean, se.std, se.count, scenario.base_seed])
    return header, rows, aggs, {"rank_samples": samples, "grid": np.asarray(grid)}


def _bd_sweep(scenario, configs, n_trials, threads):
    """Trial-mean effective-channel magnitudes per configuration."""
    dep = prepare_deployment(scenario)
    header = ["experiment", "row_ue", "col_ris", "magnitude"] + TAIL
    p_w = scenario.p_max_watts

    def one(t):
        out = run_trial(dep, t, configs=configs)
        se = {}
        for label in configs:
            G1, _ = zf_gains(dep, out.heff[label], label)
            se[label] = float(se_from_gains(G1, p_w, scenario.noise_watts)[0].sum())
        return out.heff, se

    res = map_trials(one, range(n_trials), threads)
    rows, aggs, mats = [], {}, {}
    served, order = dep.served, dep.ris_order
    for label in configs:
        M = np.abs(sum(r[0][label] for r in res) / n_trials)
        mats[label] = M
        se = aggregate([r[1][label] for r in res])
        aggs[label] = se
        for i in range(M.shape[0]):
            for j in range(M.shape[1]):
                rows.append(["bd_matrix", served[i] + 1, order[j] + 1, float(M[i, j]), label, n_trials, se.mean, se.std, se.count, scenario.base_seed])
    stats = {label: block_statistics(M, dep.block_slices()) for label, M in mats.items()}
    return header, rows, aggs, {"matrices": mats, "block_stats": stats, "plan": dep.plan.to_text()}


def sweep(scenario, experiment, values=None, configs=None, n_trials=None, threads=1, **options):
    """Run one experiment over a grid and collect aggregates and CSV rows.

    Options: ``powers_dbm`` (transmit powers evaluated at every grid point;
    default the scenario's ``p_max_dbm``), ``bits`` (phase_impair),
    ``rician_target`` (``"b"``, ``"u"`` or ``"both"``), ``redraw_ues``,
    ``weights`` and ``grid`` (rank_cdf).
    """
    if experiment not in EXPERIMENTS:
        raise ParameterError(f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")
    values = tuple(DEFAULT_GRIDS[experiment] if values is None else values)
    if not values:
        raise ParameterError("sweep grid is empty")
    configs = list(scenario.configs if configs is None else configs)
    n_trials = scenario.n_trials if n_trials is None else int(n_trials)
    extras = {}
    try:
        if experiment == "rank_cdf":
            header, rows, aggs, extras = _rank_sweep(scenario, values, n_trials, threads, options)
        elif experiment == "bd_matrix":
            header, rows, aggs, extras = _bd_sweep(scenario, [int(v) for v in values], n_trials, threads)
        else:
            header, rows, aggs = _se_sweep(scenario, experiment, values, configs, n_trials, threads, options)
    except RisJsdmError as exc:
        exc.args = (f"{experiment} experiment on scenario {scenario.name!r}: {exc.args[0] if exc.args else exc}",)
        raise
    return ExperimentResult(experiment, _PARAMETER[experiment], values, header, rows, scenario, aggs, extras)


def result_csv(result):
    """CSV text of a result (header row; floats in shortest round-trip form)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result.header)
    for row in result.rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def _manifest(result, csv_text, csv_name):
    return {
        "experiment": result.experiment,
        "parameter": result.parameter,
        "values": [v if isinstance(v, (int, float, str)) else str(v) for v in result.values],
        "csv": csv_name,
        "csv_sha256": hashlib.sha256(csv_text.encode("utf-8")).hexdigest(),
        "scenario_hash": result.scenario_hash,
        "base_seed": result.scenario.base_seed,
        "n_trials": result.rows[0][-2] if result.rows else 0,
        "package_version": __version__,
        "scenario": result.scenario.to_dict(),
    }


def plot_script(result, csv_name):
    """A gnuplot script that plots mean sum SE per configuration from the CSV."""
    head = {name: i + 1 for i, name in enumerate(result.header)}
    lines = [
        "# gnuplot script generated alongside " + csv_name,
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set grid",
    ]
    if result.experiment == "rank_cdf":
        lines += [
            "set xlabel 'effective rank'",
            "set ylabel 'CDF'",
            "plot for [a in 'distributed consolidated_single merged_per_group'] "
            f"'{csv_name}' using {head['sweep_value']}:(strcol({head['architecture']}) eq a ? ${head['cdf']} : 1/0) "
            "with steps title a",
        ]
    elif result.experiment == "bd_matrix":
        lines += [
            "set view map",
            "set xlabel 'RIS'",
            "set ylabel 'UE'",
            f"plot '{csv_name}' using {head['col_ris']}:{head['row_ue']}:(${head['config']} == 2 ? ${head['magnitude']} : 1/0) with image title 'configuration 2'",
        ]
    else:
        lines += [
            f"set xlabel '{result.parameter}'",
            "set ylabel 'sum SE (bit/s/Hz)'",
            f"plot for [c=1:4] '{csv_name}' using {head['sweep_value']}:(${head['config']} == c ? ${head['mean_sum_se']} : 1/0) "
            "with linespoints title sprintf('configuration %d', c)",
        ]
    return "\n".join(lines) + "\n"


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_result(result, out_dir, plot=False, stem=None):
    """Write ``<stem>.csv`` and ``<stem>.manifest.json`` (and a plot script) atomically.

    Returns the list of written paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    stem = stem or result.experiment
    csv_name = f"{stem}.csv"
    csv_text = result_csv(result)
    payload = {csv_name: csv_text, f"{stem}.manifest.json": json.dumps(_manifest(result, csv_text, csv_name), indent=2, sort_keys=True) + "\n"}
    if plot:
        payload[f"{stem}.gp"] = plot_script(result, csv_name)
    written = []
    for name, text in payload.items():
        path = os.path.join(out_dir, name)
        _atomic_write(path, text)
        written.append(path)
    return written
