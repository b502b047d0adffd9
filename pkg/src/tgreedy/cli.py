"""
Command-line interface.

    tgreedy synth   --out DIR [--config FILE] [--seed N]
    tgreedy split   SAMPLES.csv --holdout ID --out DIR [--fraction F] [--seed N]
    tgreedy moments SAMPLES.csv --out DIR
    tgreedy select  MOMENTS --method {greedy,t_greedy} --steps K --out DIR
    tgreedy eval    TRACE.csv --source CSV --target CSV --out DIR [--plot]
    tgreedy bounds  --check {selfnorm,theorem1} --out DIR
    tgreedy report  --out DIR [--input SAMPLES.csv | --config FILE]

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 bound check FAIL.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .bounds import SymmetricDistSpec, mc_exceedance, theorem1_coverage_sim
from .evaluate import balance, evaluate_trace, loo_experiment, split_domain
from .exceptions import ValidationError
from .moments import DomainCollection, LabeledSampleSet, compute_domain_moments
from .select import StopRule, run_selection
from .synth import SynthConfig, default_contrast_config, gen_domains

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_FAIL = 0, 1, 2, 3
THREADS_ENV = "TGREEDY_THREADS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _load_synth_config(path, seed):
    if path:
        try:
            cfg = SynthConfig.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise ValidationError(f"{path}: {exc}") from None
    else:
        cfg = default_contrast_config()
    if seed is not None:
        cfg = SynthConfig.from_dict({**json.loads(cfg.to_json()), "seed": seed})
    return cfg


def cmd_synth(args) -> int:
    cfg = _load_synth_config(args.config, args.seed)
    out = _out_dir(args.out)
    data, truth = gen_domains(cfg)
    samples, truth_path, cfg_path = out / "samples.csv", out / "truth.json", out / "config.json"
    io.write_samples(samples, data)
    truth_path.write_text(json.dumps(truth.to_dict(), indent=2, sort_keys=True) + "\n")
    cfg_path.write_text(cfg.to_json() + "\n")
    io.write_manifest(out, "synth", json.loads(cfg.to_json()), [cfg.seed],
                      [args.config] if args.config else [], [samples, truth_path, cfg_path])
    print(f"wrote {len(data)} domains x {cfg.samples_per_domain} samples to {samples}")
    return EXIT_OK


def cmd_split(args) -> int:
    data, names = io.read_samples(args.samples)
    if args.holdout not in data:
        raise ValidationError(f"holdout domain {args.holdout!r} not in {sorted(data)}")
    out = _out_dir(args.out)
    order = list(data)
    train, test = {}, {}
    for did in order:
        if did == args.holdout:
            continue
        rng = np.random.default_rng([args.seed, order.index(did)])
        train[did], test[did] = split_domain(data[did], args.fraction, rng)
    source = LabeledSampleSet(np.vstack([s.features for s in test.values()]),
                              np.concatenate([s.labels for s in test.values()]))
    target = data[args.holdout]
    if not args.no_balance:
        brng = np.random.default_rng([args.seed, len(order), order.index(args.holdout)])
        source, target = balance(source, brng), balance(target, brng)
    paths = [out / "train.csv", out / "source_eval.csv", out / "target_eval.csv"]
    io.write_samples(paths[0], train, names)
    io.write_samples(paths[1], {"source": source}, names)
    io.write_samples(paths[2], {args.holdout: target}, names)
    config = {"holdout": args.holdout, "fraction": args.fraction,
              "balanced": not args.no_balance, "seed": args.seed}
    io.write_manifest(out, "split", config, [args.seed], [args.samples], paths)
    return EXIT_OK


def cmd_moments(args) -> int:
    data, names = io.read_samples(args.samples)
    out = _out_dir(args.out)
    paths = []
    for did, s in data.items():
        path = out / io.moment_filename(did)
        io.write_moments(path, compute_domain_moments(s, did), names)
        paths.append(path)
    io.write_manifest(out, "moments", {"samples": str(args.samples)}, [], [args.samples], paths)
    print(f"wrote {len(paths)} moment files to {out}")
    return EXIT_OK


def cmd_select(args) -> int:
    domains, names = io.load_moment_dir(args.moments)
    population = None
    pooled = None
    if args.unbiased_gram:
        pooled = io.read_matrix_csv(args.unbiased_gram)
        population = np.diag(pooled).copy()
    collection = DomainCollection.from_domains(domains, names, pooled)
    stop = StopRule(args.stop, args.steps, args.threshold, args.delta)
    trace = run_selection(collection, args.method, stop, population)
    out = _out_dir(args.out)
    path = out / "trace.csv"
    io.write_trace(path, trace)
    config = {"method": args.method, "steps": args.steps, "stop": args.stop,
              "threshold": args.threshold, "delta": args.delta,
              "unbiased_gram": str(args.unbiased_gram or ""),
              "domains": [d.domain_id for d in domains]}
    inputs = [args.moments] + ([args.unbiased_gram] if args.unbiased_gram else [])
    io.write_manifest(out, "select", config, [], inputs, [path])
    print(f"{len(trace)} steps; stop: {trace.stop_reason}")
    return EXIT_OK


def _as_single_set(path) -> LabeledSampleSet:
    data, _ = io.read_samples(path)
    sets = list(data.values())
    return LabeledSampleSet(np.vstack([s.features for s in sets]),
                            np.concatenate([s.labels for s in sets]))


def cmd_eval(args) -> int:
    source, target = _as_single_set(args.source), _as_single_set(args.target)
    trace = io.read_trace(args.trace, source.n_features)
    curve = evaluate_trace(trace, source, target)
    out = _out_dir(args.out)
    paths = [out / "curve.csv"]
    io.write_curve(paths[0], curve)
    if args.plot:
        from .plotting import write_curve_svg
        paths.append(out / "curve.svg")
        write_curve_svg(paths[-1], curve, title=trace.method)
    io.write_manifest(out, "eval", {"plot": bool(args.plot)}, [],
                      [args.trace, args.source, args.target], paths)
    return EXIT_OK


def cmd_bounds(args) -> int:
    out = _out_dir(args.out)
    threads = args.threads or _default_threads()
    dist = SymmetricDistSpec(args.dist, args.scale)
    if args.n is None:
        args.n = 20 if args.check == "selfnorm" else 64
    if args.check == "selfnorm":
        t_grid = [float(t) for t in args.t_grid.split(",")]
        report = mc_exceedance(dist, args.n, t_grid, args.trials, args.seed, threads)
        paths = [out / "bounds.csv"]
        io.write_exceedance(paths[0], report)
        if args.plot:
            from .plotting import plot_exceedance
            paths.append(out / "bounds.png")
            plot_exceedance(report, paths[-1])
        for t, e, b, s in zip(report.t_grid, report.empirical_freq, report.bound_value,
                              report.statement_bound):
            print(f"t={t:g} empirical={e:.6g} bound={b:.6g} statement={s:.6g}")
        print(f"max ratio {report.max_ratio:.6g} (ceiling n={args.n})")
        passed = report.passed
        config = {"check": "selfnorm", "dist": args.dist, "scale": args.scale, "n": args.n,
                  "t_grid": t_grid, "trials": args.trials}
    else:
        report = theorem1_coverage_sim(args.n, args.family_size, args.delta, args.trials,
                                       args.seed, dist, threads=threads)
        paths = [out / "coverage.csv"]
        paths[0].write_text(
            "n,family_size,delta,trials,violation_rate,limit\n"
            f"{report.n},{report.family_size},{io.fmt(report.delta)},{report.trials},"
            f"{io.fmt(report.violation_rate)},{io.fmt(report.limit)}\n")
        print(f"violation rate {report.violation_rate:.6g} (limit {report.limit:.6g})")
        passed = report.passed
        config = {"check": "theorem1", "dist": args.dist, "scale": args.scale, "n": args.n,
                  "family_size": args.family_size, "delta": args.delta, "trials": args.trials}
    io.write_manifest(out, "bounds", config, [args.seed], [], paths)
    print("PASS" if passed else "FAIL")
    return EXIT_OK if passed else EXIT_FAIL


def cmd_report(args) -> int:
    if args.input:
        data, _ = io.read_samples(args.input)
        seeds = [args.seed]
        config = {"input": str(args.input)}
    else:
        cfg = _load_synth_config(args.config, args.seed)
        data, _ = gen_domains(cfg)
        seeds = [cfg.seed]
        config = json.loads(cfg.to_json())
    config.update({"steps": args.steps, "fraction": args.fraction})
    out = _out_dir(args.out)
    results, paths = [], []
    for method in ("greedy", "t_greedy"):
        res = loo_experiment(data, method, args.steps, args.seed, args.fraction)
        results.append(res)
        for s in res.series + [res.average]:
            path = out / f"curve_{s.label.replace(':', '_')}.csv"
            io.write_curve(path, s)
            paths.append(path)
        g = res.average.gap()[-1]
        print(f"{method}: final source {res.average.source_auroc[-1]:.3f} "
              f"target {res.average.target_auroc[-1]:.3f} gap {g:.3f}")
    if not args.no_plot:
        from .plotting import plot_loo
        paths.append(out / "loo_curves.png")
        plot_loo(results, paths[-1])
    io.write_manifest(out, "report", config, seeds, [args.input] if args.input else [], paths)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tgreedy", description=__doc__.split("\n\n")[0].strip())
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic multi-domain dataset")
    s.add_argument("--config", help="JSON file of SynthConfig fields")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("split", help="split samples into train / source-eval / target-eval")
    s.add_argument("samples")
    s.add_argument("--holdout", required=True)
    s.add_argument("--fraction", type=float, default=0.5, help="source test fraction")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--no-balance", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("moments", help="compute per-domain DSMOM1 moment files")
    s.add_argument("samples")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_moments)

    s = sub.add_parser("select", help="run greedy or T-greedy selection")
    s.add_argument("moments", help="directory of .dsmom files (or one file)")
    s.add_argument("--method", choices=("greedy", "t_greedy"), default="t_greedy")
    s.add_argument("--steps", type=int, default=30, help="maximum number of steps")
    s.add_argument("--stop", choices=("max_steps", "t_threshold", "bonferroni"),
                   default="max_steps")
    s.add_argument("--threshold", type=float, default=0.0)
    s.add_argument("--delta", type=float, default=0.05)
    s.add_argument("--unbiased-gram", help="CSV p x p population E[XX^T]")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("eval", help="AUROC curves of a selection trace")
    s.add_argument("trace")
    s.add_argument("--source", required=True, help="source evaluation samples CSV")
    s.add_argument("--target", required=True, help="target evaluation samples CSV")
    s.add_argument("--plot", action="store_true", help="also write curve.svg")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("bounds", help="Monte Carlo checks of the tail bounds")
    s.add_argument("--check", choices=("selfnorm", "theorem1"), required=True)
    s.add_argument("--dist", default="gaussian",
                   choices=("gaussian", "rademacher", "cauchy_symmetric", "two_point_scaled"))
    s.add_argument("--scale", type=float, default=1.0)
    s.add_argument("--n", type=int, help="domains per trial (default 20 for selfnorm, "
                   "64 for theorem1)")
    s.add_argument("--t-grid", default="2,4,8,12")
    s.add_argument("--trials", type=int, default=100_000)
    s.add_argument("--family-size", type=int, default=64)
    s.add_argument("--delta", type=float, default=0.05)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    s.add_argument("--plot", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("report", help="leave-one-domain-out curves for both methods + figures")
    src = s.add_mutually_exclusive_group()
    src.add_argument("--input", help="samples CSV (default: synthetic contrast data)")
    src.add_argument("--config", help="synth config JSON")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--steps", type=int, default=30)
    s.add_argument("--fraction", type=float, default=0.5)
    s.add_argument("--no-plot", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"tgreedy {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"tgreedy {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
