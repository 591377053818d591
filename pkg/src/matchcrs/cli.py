"""Command-line frontend: instances in, JSON/CSV reports (and figures) out.

Exit codes: 0 success, 2 malformed input, 3 mathematical infeasibility or
an internal guarantee violation. Reports embed a manifest (command,
instance hash, seed, sizes, version, wall time); identical manifests
produce identical reports apart from the wall-time field.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time

import numpy as np

from . import __version__, figures
from .allocation import AllocationInstance, AllocationRounder, solve_config_lp
from .errors import (CalibrationInsufficient, DegreeCapExceeded, EdgeNeverAppears,
                     Infeasible, InputError, NotATree, TooLarge)
from .evaluation import (SCHEME_IDS, check_lem_bound, conjecture_probe,
                         density_experiment, exact_balancedness, make_scheme,
                         mc_balancedness)
from .graphs import (complete_loads, gen_birkhoff, gen_uniform_knn,
                     instance_to_dict, load_instance, load_matrix_csv, validate)
from .gw_tree import estimate_root_edge_prob, solve_lambda
from .sampling import RngStream, sample_presence_batch
from .schemes import compute_constants

log = logging.getLogger("matchcrs")

GUARANTEES = {"simple": "simple_factor", "two-stage": "two_stage_factor",
              "rbg": "gamma"}


def _manifest(args, command, instance_hash=None, **extra):
    started = getattr(args, "_t0", None)
    return {
        "command": command,
        "instance_hash": instance_hash,
        "seed": getattr(args, "seed", None),
        "trials": getattr(args, "trials", None),
        "scheme": getattr(args, "scheme", None),
        "mode": extra or None,
        "version": __version__,
        "wall_time_s": None if started is None else round(
            time.monotonic() - started, 6),
    }


def _emit(report, args, csv_rows=None, csv_header=None):
    """JSON to stdout by default; CSV when asked and a table projection exists."""
    manifest = report.get("manifest", {})
    if getattr(args, "format", "json") == "csv" and csv_rows is not None:
        buf = io.StringIO()
        for key in sorted(manifest):
            buf.write(f"# {key}={manifest[key]}\n")
        writer = csv.writer(buf)
        writer.writerow(csv_header)
        writer.writerows(csv_rows)
        sys.stdout.write(buf.getvalue())
    else:
        json.dump(report, sys.stdout, sort_keys=True, indent=1, default=_coerce)
        sys.stdout.write("\n")


def _coerce(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, frozenset):
        return sorted(obj)
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def _load(args):
    fm = load_instance(args.instance)
    errs = validate(fm)
    if errs and not getattr(args, "allow_invalid", False):
        raise InputError(f"instance invalid: {errs[0]}")
    return fm


def _maybe_plot(args, render, report):
    if getattr(args, "plot_dir", None):
        path = render(report, args.plot_dir)
        log.info("figure written to %s", path)


# ------------------------------------------------------------- subcommands

def cmd_validate(args):
    fm = load_instance(args.instance)
    errs = validate(fm)
    report = {"violations": errs, "valid": not errs,
              "manifest": _manifest(args, "validate", fm.instance_hash())}
    _emit(report, args,
          csv_rows=[[e.get("kind"), e.get("vertex", e.get("edge")),
                     e.get("load", e.get("value"))] for e in errs],
          csv_header=["kind", "where", "value"])
    return 0


def cmd_complete(args):
    fm = _load(args)
    fm2, dummies = complete_loads(fm)
    doc = instance_to_dict(fm2)
    doc["dummy_edges"] = sorted(dummies)
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
    else:
        json.dump(doc, sys.stdout, indent=1, sort_keys=True)
        sys.stdout.write("\n")
    return 0


def cmd_sample(args):
    fm = _load(args)
    gen = RngStream(args.seed).generator()
    present = sample_presence_batch(fm, args.trials, gen)
    sizes = present.sum(axis=1)
    report = {
        "trials": args.trials,
        "edge_count": fm.graph.edge_count,
        "per_edge_present": present.sum(axis=0).tolist(),
        "sizes": sizes.tolist() if args.trials <= 10000 else None,
        "mean_size": float(sizes.mean()),
        "manifest": _manifest(args, "sample", fm.instance_hash()),
    }
    _emit(report, args,
          csv_rows=list(enumerate(report["per_edge_present"])),
          csv_header=["edge", "present_count"])
    _maybe_plot(args, lambda r, d: figures.sample_figure(
        {"sizes": sizes.tolist(), "trials": args.trials}, d), report)
    return 0


def _scheme_runner(args, fm):
    kwargs = {}
    if args.scheme == "rbg":
        kwargs = {"step6": args.step6,
                  "cal_samples": args.cal_samples,
                  "cal_rng": RngStream(args.seed, ("calibration",))}
        if args.step6 != "calibrated":
            kwargs.pop("cal_samples")
            kwargs.pop("cal_rng")
    return make_scheme(args.scheme, fm, **kwargs)


def cmd_run_scheme(args):
    fm0 = _load(args)
    fm, _ = complete_loads(fm0)
    runner = _scheme_runner(args, fm)
    sizes = np.zeros(args.trials, dtype=np.int64)
    counts = np.zeros(fm.graph.edge_count, dtype=np.int64)
    rng = RngStream(args.seed)
    done = 0
    batch_id = 0
    while done < args.trials:
        size = min(8192, args.trials - done)
        gen = rng.child(batch_id).generator()
        present = sample_presence_batch(fm, size, gen)
        sel = runner.run_batch(present, gen)
        real = np.asarray(fm.real_edges())
        sizes[done:done + size] = sel[:, real].sum(axis=1)
        counts += sel.sum(axis=0)
        done += size
        batch_id += 1
    report = {
        "scheme": args.scheme,
        "trials": args.trials,
        "mean_matching_size": float(sizes.mean()),
        "per_edge_selected": {int(e): int(counts[e]) for e in fm.real_edges()},
        "manifest": _manifest(args, "run-scheme", fm0.instance_hash(),
                              step6=args.step6 if args.scheme == "rbg" else None),
    }
    _emit(report, args,
          csv_rows=sorted(report["per_edge_selected"].items()),
          csv_header=["edge", "selected_count"])
    return 0


def cmd_evaluate(args):
    fm0 = _load(args)
    fm, _ = complete_loads(fm0)
    runner = _scheme_runner(args, fm)
    probe = None
    if args.probe_edges:
        probe = [int(e) for e in args.probe_edges.split(",")]
    report = mc_balancedness(runner, fm, args.trials, RngStream(args.seed),
                             probe_edges=probe, threads=args.threads,
                             scheme_id=args.scheme)
    consts = compute_constants()
    guarantee = getattr(consts, GUARANTEES[args.scheme], None) \
        if args.scheme in GUARANTEES else None
    report["guarantee"] = guarantee
    report["manifest"] = _manifest(args, "evaluate", fm0.instance_hash(),
                                   step6=getattr(args, "step6", None))
    _emit(report, args,
          csv_rows=[[r["edge"], r["x"], r["trials"], r["selected"],
                     r["estimate"], r["ci_low"], r["ci_high"]]
                    for r in report["per_edge"]],
          csv_header=["edge", "x", "trials", "selected", "estimate",
                      "ci_low", "ci_high"])
    _maybe_plot(args, lambda r, d: figures.balancedness_figure(
        r, d, guarantee=guarantee), report)
    return 0


def cmd_exact_evaluate(args):
    fm0 = _load(args)
    fm, _ = complete_loads(fm0)
    report = exact_balancedness(args.scheme, fm)
    consts = compute_constants()
    guarantee = getattr(consts, GUARANTEES[args.scheme], None) \
        if args.scheme in GUARANTEES else None
    report["guarantee"] = guarantee
    report["manifest"] = _manifest(args, "exact-evaluate", fm0.instance_hash())
    _emit(report, args,
          csv_rows=[[r["edge"], r["x"], r["selected_prob"], r["conditional"]]
                    for r in report["per_edge"]],
          csv_header=["edge", "x", "selected_prob", "conditional"])
    _maybe_plot(args, lambda r, d: figures.balancedness_figure(
        r, d, guarantee=guarantee, name="exact_balancedness.png"), report)
    return 0


def cmd_gw_experiment(args):
    report = estimate_root_edge_prob(args.trials, RngStream(args.seed),
                                     node_cap=args.node_cap,
                                     threads=args.threads, engine=args.engine)
    report["manifest"] = _manifest(args, "gw-experiment", None,
                                   node_cap=args.node_cap, engine=args.engine)
    _emit(report, args,
          csv_rows=[[report["trials"], report["kept"], report["truncated"],
                     report["estimate"], report["ci_low"], report["ci_high"],
                     report["target"]]],
          csv_header=["trials", "kept", "truncated", "estimate",
                      "ci_low", "ci_high", "target"])
    _maybe_plot(args, figures.gw_figure, report)
    return 0


def cmd_density(args):
    if args.knn:
        fm = gen_uniform_knn(args.knn)
        ih = f"knn_{args.knn}"
    else:
        if not args.instance:
            raise InputError("density needs --instance or --knn")
        fm0 = _load(args)
        fm, _ = complete_loads(fm0)
        ih = fm0.instance_hash()
    report = density_experiment(fm, args.trials, RngStream(args.seed),
                                threads=args.threads,
                                compute_max=not args.no_max)
    consts = solve_lambda()
    report["target_density_per_vertex"] = consts.max_match_density
    report["manifest"] = _manifest(args, "density", ih, knn=args.knn)
    _emit(report, args,
          csv_rows=[[i, k, m] for i, (k, m) in enumerate(
              zip(report["ks_sizes"],
                  report.get("max_sizes", [None] * args.trials)))],
          csv_header=["trial", "ks_size", "max_size"])
    _maybe_plot(args, figures.density_figure, report)
    return 0


def cmd_lem_bound(args):
    report = check_lem_bound(args.samples, RngStream(args.seed))
    report["manifest"] = _manifest(args, "lem-bound", None, samples=args.samples)
    _emit(report, args,
          csv_rows=[[report["samples"], report["violations"],
                     report["min_margin"]]],
          csv_header=["samples", "violations", "min_margin"])
    _maybe_plot(args, figures.lem_bound_figure, report)
    return 0


def cmd_conjecture_probe(args):
    matrices = [load_matrix_csv(p) for p in args.matrices]
    if args.random:
        gen = RngStream(args.seed, ("matrices",)).generator()
        matrices += [gen_birkhoff(args.n, args.perms, gen)
                     for _ in range(args.random)]
    report = conjecture_probe(matrices, args.trials, RngStream(args.seed),
                              threads=args.threads)
    report["manifest"] = _manifest(args, "conjecture-probe", None,
                                   random=args.random, n=args.n,
                                   perms=args.perms)
    _emit(report, args,
          csv_rows=[[r["label"], r["mean"], r["ci_low"], r["ci_high"]]
                    for r in report["results"]],
          csv_header=["matrix", "mean_max_matching", "ci_low", "ci_high"])
    _maybe_plot(args, figures.conjecture_figure, report)
    return 0


def cmd_allocate(args):
    inst = AllocationInstance.load(args.instance)
    sol = solve_config_lp(inst)
    errs = sol.violations()
    if errs:
        raise AssertionError(f"LP solution violates constraints: {errs}")
    rng = RngStream(args.seed)
    rounder = AllocationRounder(inst, sol, step6=args.step6,
                                cal_rng=rng.child("calibration"))
    rep = rounder.round_batch(args.roundings, rng)
    welfare = rep.pop("welfare")
    counts, edges = np.histogram(welfare, bins=30)
    report = {
        "lp_objective": sol.objective,
        "roundings": args.roundings,
        "mean_welfare": rep["mean_welfare"],
        "std_error": rep["std_error"],
        "ratio": rep["mean_welfare"] / sol.objective if sol.objective > 0 else None,
        "example_allocation": rep["example_allocation"],
        "welfare_histogram": {"bin_edges": edges.tolist(),
                              "counts": counts.tolist()},
        "manifest": _manifest(args, "allocate", None, step6=args.step6),
    }
    _emit(report, args,
          csv_rows=[[report["lp_objective"], report["mean_welfare"],
                     report["std_error"], report["ratio"]]],
          csv_header=["lp_objective", "mean_welfare", "std_error", "ratio"])
    _maybe_plot(args, figures.allocation_figure, report)
    return 0


# ------------------------------------------------------------------ parser

def _add_common(p, trials_default=1000, with_scheme=False, with_instance=True):
    if with_instance:
        p.add_argument("--instance", required=True, help="instance JSON file")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--trials", type=int, default=trials_default)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--plot-dir", default=None,
                   help="also render matplotlib figures into this directory")
    if with_scheme:
        p.add_argument("--scheme", required=True,
                       choices=SCHEME_IDS + ("ks",))
        p.add_argument("--step6", choices=("exact", "calibrated", "uniform"),
                       default="exact", help="final-stage mode (rbg only)")
        p.add_argument("--cal-samples", type=int, default=10 ** 5)


def build_parser():
    ap = argparse.ArgumentParser(
        prog="matchcrs",
        description="Contention resolution schemes for matchings: run, "
                    "measure, and verify.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("validate", help="check instance invariants")
    p.add_argument("--instance", required=True)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("complete", help="pad loads to 1 with dummy partners")
    p.add_argument("--instance", required=True)
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("sample", help="sample realized edge sets")
    _add_common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("run-scheme", help="run a scheme on sampled sets")
    _add_common(p, with_scheme=True)
    p.set_defaults(func=cmd_run_scheme)

    p = sub.add_parser("evaluate", help="Monte Carlo balancedness per edge")
    _add_common(p, trials_default=10 ** 4, with_scheme=True)
    p.add_argument("--probe-edges", default=None,
                   help="comma-separated edge ids (default: all)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("exact-evaluate", help="exact balancedness by enumeration")
    p.add_argument("--instance", required=True)
    p.add_argument("--scheme", required=True, choices=SCHEME_IDS + ("ks",))
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--plot-dir", default=None)
    p.set_defaults(func=cmd_exact_evaluate)

    p = sub.add_parser("gw-experiment",
                       help="random-tree root-edge matching frequency")
    _add_common(p, trials_default=10 ** 6, with_instance=False)
    p.add_argument("--node-cap", type=int, default=10 ** 6)
    p.add_argument("--engine", choices=("fast", "reference"), default="fast")
    p.set_defaults(func=cmd_gw_experiment)

    p = sub.add_parser("density", help="matching sizes of sampled sets")
    _add_common(p, trials_default=50, with_instance=False)
    p.add_argument("--instance", default=None)
    p.add_argument("--knn", type=int, default=None,
                   help="use the uniform complete bipartite instance K_{n,n}")
    p.add_argument("--no-max", action="store_true",
                   help="skip the exact maximum matching")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("lem-bound", help="check the availability union bound")
    p.add_argument("--samples", type=int, default=10 ** 5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--plot-dir", default=None)
    p.set_defaults(func=cmd_lem_bound)

    p = sub.add_parser("conjecture-probe",
                       help="expected max matching: matrices vs uniform")
    p.add_argument("matrices", nargs="*", help="matrix CSV files")
    p.add_argument("--random", type=int, default=0,
                   help="also draw this many random doubly stochastic matrices")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--perms", type=int, default=10)
    p.add_argument("--trials", type=int, default=10 ** 4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--plot-dir", default=None)
    p.set_defaults(func=cmd_conjecture_probe)

    p = sub.add_parser("allocate", help="configuration LP + rounded allocation")
    p.add_argument("--instance", required=True)
    p.add_argument("--roundings", type=int, default=10 ** 4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step6", choices=("exact", "calibrated", "uniform"),
                   default="exact")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--plot-dir", default=None)
    p.set_defaults(func=cmd_allocate)

    return ap


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    ap = build_parser()
    args = ap.parse_args(argv)
    t0 = time.monotonic()
    args._t0 = t0
    try:
        code = args.func(args)
    except (InputError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (Infeasible, DegreeCapExceeded, CalibrationInsufficient, TooLarge,
            NotATree, EdgeNeverAppears, AssertionError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3
    log.info("completed in %.2fs", time.monotonic() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
