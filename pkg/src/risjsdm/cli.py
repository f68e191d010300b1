"""Command-line front end.

Subcommands::

    run          sum SE of every configuration at the scenario's p_max_dbm
    sweep EXP    one experiment (power, ris_size, stream_count, offset,
                 phase_impair, rician, rank_cdf, bd_matrix) over a grid
    rank-cdf     effective-rank CDFs of the RIS architectures
    bd-matrix    trial-mean effective channel magnitudes per configuration
    validate     fast invariant suite, one PASS/FAIL line per check
    cross-check  large-scale attenuation of the example deployment under
                 several path-loss conventions

Exit codes: 0 success, 1 usage error, 2 scenario error, 3 numerical failure.

CSV schemas (every file ends with ``config, sweep_value, mean_sum_se,
std_sum_se, n_trials, seed``):

* run / sweep (SE experiments): ``experiment, parameter, quant_bits, p_max_dbm, ...``
  with ``parameter`` naming the swept quantity held in ``sweep_value``
* rank-cdf: ``experiment, architecture, weights, cdf, ...`` with
  ``sweep_value`` the effective-rank grid point and the SE columns giving the
  configuration-2 sum SE of the same trials
* bd-matrix: ``experiment, row_ue, col_ris, magnitude, ...`` with
  ``sweep_value`` the trial count
"""

import argparse
import logging
import sys

import numpy as np

from . import __version__
from .errors import DegenerateBiasError, ParameterError, RisJsdmError, ScaleExceededError, ScenarioError, SingularityError
from .experiments import DEFAULT_GRIDS, EXPERIMENTS, save_result, sweep
from .scenario import load_scenario

__all__ = ["main", "build_parser", "validate_checks", "cross_check_table"]

log = logging.getLogger("risjsdm")

EXIT_OK, EXIT_USAGE, EXIT_SCENARIO, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _csv_list(kind):
    def parse(text):
        try:
            return tuple(kind(v) for v in text.split(",") if v.strip())
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc

    return parse


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed {text} is not an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--scenario", default="default", metavar="PATH", help="scenario TOML file or 'default'")
    common.add_argument("--override", action="append", default=[], metavar="K=V", help="dotted scenario override (repeatable)")
    common.add_argument("--out", default="results", metavar="DIR", help="output directory")
    common.add_argument("--threads", type=_positive, default=1, metavar="N")
    common.add_argument("--seed", type=_u64, default=None, metavar="U64", help="replace base_seed")
    common.add_argument("--trials", type=_positive, default=None, metavar="N", help="replace n_trials")
    common.add_argument("--plot", action="store_true", help="also emit a gnuplot script")
    verb = common.add_mutually_exclusive_group()
    verb.add_argument("--quiet", action="store_true")
    verb.add_argument("--verbose", action="store_true")

    p = _Parser(prog="risjsdm", description="Multi-RIS customized JSDM simulator")
    p.add_argument("--version", action="version", version=f"risjsdm {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    r = sub.add_parser("run", parents=[common], help="sum SE per configuration at p_max_dbm")
    r.add_argument("--configs", type=_csv_list(int), default=None)

    s = sub.add_parser("sweep", parents=[common], help="run one experiment over a grid")
    s.add_argument("experiment", choices=EXPERIMENTS)
    s.add_argument("--values", type=_csv_list(str), default=None, help="comma-separated grid")
    s.add_argument("--powers", type=_csv_list(float), default=None, help="transmit powers (dBm) at every grid point")
    s.add_argument("--configs", type=_csv_list(int), default=None)
    s.add_argument("--bits", type=_csv_list(int), default=None, help="phase_impair: quantization bits (0 = continuous)")
    s.add_argument("--rician-target", choices=("b", "u", "both"), default="b")

    c = sub.add_parser("rank-cdf", parents=[common], help="effective-rank CDFs")
    c.add_argument("--weights", choices=("sqrt", "sv"), default=None)
    c.add_argument("--fixed-ues", action="store_true", help="keep UE positions fixed across trials")

    b = sub.add_parser("bd-matrix", parents=[common], help="trial-mean effective channel")
    b.add_argument("--configs", type=_csv_list(int), default=None)

    sub.add_parser("validate", parents=[common], help="fast invariant suite")
    sub.add_parser("cross-check", parents=[common], help="large-scale attenuation conventions")
    return p


def _load(args):
    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"base_seed={args.seed}")
    if args.trials is not None:
        overrides.append(f"n_trials={args.trials}")
    return load_scenario(args.scenario, overrides)


def _grid(experiment, values):
    if values is None:
        return None
    if experiment == "rank_cdf":
        return values
    kind = int if experiment in ("ris_size", "stream_count", "bd_matrix") else float
    try:
        return tuple(kind(v) for v in values)
    except ValueError as exc:
        raise UsageError(f"risjsdm sweep: bad --values for {experiment}: {exc}") from exc


def validate_checks(scenario, n_draws=500):
    """Fast invariant checks on ``scenario``: ``[(name, passed, detail)]``."""
    from scipy.linalg import block_diag

    from .analysis import closed_form_effective_matrix
    from .pipeline import prepare_deployment, run_trial, zf_gains

    out = []
    dep = prepare_deployment(scenario)
    gram = dep.F.conj().T @ dep.F
    off = float(np.abs(gram - np.diag(np.diag(gram))).max())
    out.append(("pre-beamformer orthogonality", off < 1e-10, f"max |F^H F| off-diagonal = {off:.3e}"))

    los_b = prepare_deployment(scenario.with_(kappa_b_db=float("inf")))
    cf = closed_form_effective_matrix(los_b, 2)
    mc = sum(run_trial(los_b, t, configs=[2]).heff[2] for t in range(n_draws)) / n_draws
    big = np.abs(cf) >= 0.5 * np.abs(cf).max()
    rel = float(np.max(np.abs(mc[big] - cf[big]) / np.abs(cf[big])))
    out.append(("mean effective channel closed form", rel < 0.05, f"max relative error {rel:.3e} over {int(big.sum())} main-lobe entries"))

    worst_off, worst_pow = 0.0, 0.0
    p = scenario.p_max_watts
    for t in range(20):
        heff = run_trial(dep, t, configs=[2]).heff[2]
        G1, eps1 = zf_gains(dep, heff, 2)
        for sl in dep.block_slices():
            blk = G1[sl, sl]
            worst_off = max(worst_off, float(np.abs(blk - np.diag(np.diag(blk))).max() / eps1))
        P = np.sqrt(p) * eps1 * block_diag(*[np.linalg.inv(heff[sl, sl]) for sl in dep.block_slices()])
        worst_pow = max(worst_pow, abs(float(np.sum(np.abs(dep.F_ordered @ P) ** 2)) / p - 1.0))
    out.append(("ZF intra-group nulling", worst_off < 1e-9, f"max off-diagonal / epsilon = {worst_off:.3e}"))
    out.append(("ZF transmit power", worst_pow < 1e-9, f"max relative power error = {worst_pow:.3e}"))
    return out


def cross_check_table(scenario):
    """Large-scale levels (dB) of the example deployment under candidate conventions.

    Example positions: BS at the scenario's BS position, RIS 1 [57,20,37],
    RIS 2 [79,9,39], UE 1 [62,1,0.5].  Returns ``[(link, convention, dB)]``;
    ``REFERENCE_LEVELS`` holds the levels quoted for the same deployment.
    """
    from .geometry import wavelength

    lam = wavelength(scenario.carrier_hz)
    bs = np.asarray(scenario.bs_position, dtype=float)
    r1, r2, ue = np.array([57.0, 20.0, 37.0]), np.array([79.0, 9.0, 39.0]), np.array([62.0, 1.0, 0.5])
    m_r = scenario.ris_array[0] * scenario.ris_array[1]
    m_b = scenario.bs_array[0] * scenario.bs_array[1]

    def d(a, b):
        return float(np.linalg.norm(a - b))

    def fs(dist):
        return 20.0 * np.log10(lam / (4.0 * np.pi * dist))

    rows = [
        ("BS-UE1", "free space", fs(d(bs, ue))),
        ("BS-UE1", "free space + penetration loss", fs(d(bs, ue)) - scenario.pene_loss_db),
    ]
    for name, r in (("BS-RIS1-UE1", r1), ("BS-RIS2-UE1", r2)):
        d1, d2 = d(bs, r), d(r, ue)
        prod = fs(d1) + fs(d2)
        rows += [
            (name, "per-hop product", prod),
            (name, "per-hop product x M_R (coherent reflection)", prod + 20 * np.log10(m_r)),
            (name, "per-hop product x M_R x sqrt(M_B)", prod + 20 * np.log10(m_r) + 10 * np.log10(m_b)),
            (name, "specular, free space over d1 + d2", fs(d1 + d2)),
        ]
    for name, (a, b) in (("BS-RIS1-RIS2-UE1", (r1, r2)), ("BS-RIS2-RIS1-UE1", (r2, r1))):
        prod = fs(d(bs, a)) + fs(d(a, b)) + fs(d(b, ue))
        rows += [
            (name, "per-hop product", prod),
            (name, "per-hop product x M_R^2", prod + 40 * np.log10(m_r)),
            (name, "specular, free space over total length", fs(d(bs, a) + d(a, b) + d(b, ue))),
        ]
    return rows


REFERENCE_LEVELS = {"BS-UE1": -117.7, "BS-RIS1-UE1": -82.7, "BS-RIS2-UE1": -84.1, "BS-RIS1-RIS2-UE1": -121.1, "BS-RIS2-RIS1-UE1": -120.2}


def _emit(args, result):
    paths = save_result(result, args.out, plot=args.plot)
    for p in paths:
        log.info("wrote %s", p)
    return paths


def _run(args):
    if args.command == "cross-check":
        scenario = _load(args)
        print(f"{'link':<18} {'reference':>10} {'computed':>10}  convention")
        for link, conv, level in cross_check_table(scenario):
            print(f"{link:<18} {REFERENCE_LEVELS[link]:>10.1f} {level:>10.1f}  {conv}")
        return EXIT_OK
    if args.command == "validate":
        scenario = _load(args)
        checks = validate_checks(scenario)
        for name, ok, detail in checks:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        return EXIT_OK if all(ok for _, ok, _ in checks) else EXIT_NUMERIC

    scenario = _load(args)
    if args.command == "run":
        result = sweep(scenario, "power", values=(scenario.p_max_dbm,), configs=args.configs, threads=args.threads)
        result.experiment = "run"
        result.rows = [["run"] + row[1:] for row in result.rows]
    elif args.command == "sweep":
        options = {"rician_target": args.rician_target}
        if args.powers is not None:
            options["powers_dbm"] = args.powers
        if args.bits is not None:
            options["bits"] = args.bits
        result = sweep(scenario, args.experiment, values=_grid(args.experiment, args.values), configs=args.configs, threads=args.threads, **options)
    elif args.command == "rank-cdf":
        options = {"redraw_ues": not args.fixed_ues}
        if args.weights is not None:
            options["weights"] = args.weights
        result = sweep(scenario, "rank_cdf", threads=args.threads, **options)
    elif args.command == "bd-matrix":
        labels = args.configs or DEFAULT_GRIDS["bd_matrix"]
        result = sweep(scenario, "bd_matrix", values=labels, threads=args.threads)
        for label, stats in result.extras["block_stats"].items():
            log.info("configuration %d: diagonal %.4g, intra-group %.4g, inter-group %.4g", label, stats["diagonal"], stats["intra"], stats["inter"])
    else:  # pragma: no cover - argparse restricts the choices
        raise UsageError(f"unknown subcommand {args.command!r}")
    if not args.quiet:
        _summarize(result)
    _emit(args, result)
    return EXIT_OK


def _summarize(result):
    if result.experiment in ("rank_cdf", "bd_matrix"):
        for key, agg in result.aggregates.items():
            print(f"{result.experiment} {key}: mean {agg.mean:.4f} std {agg.std:.4f} n {agg.count}")
        return
    for (bits, p, value, label), agg in result.aggregates.items():
        print(f"{result.parameter}={value} p_max_dbm={p:g} bits={bits} config {label}: sum SE {agg.mean:.4f} +- {agg.stderr:.4f}")


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(str(exc) if str(exc).endswith("\n") else f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(
        level=logging.WARNING if args.quiet else (logging.DEBUG if args.verbose else logging.INFO),
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return _run(args)
    except UsageError as exc:
        print(str(exc).splitlines()[0], file=sys.stderr)
        return EXIT_USAGE
    except (ScenarioError, ParameterError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except (SingularityError, DegenerateBiasError, ScaleExceededError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RisJsdmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
