"""Command-line interface: ``circadia {fit,test,select,simulate}``."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import __version__
from .dataio import export_curves, input_digest, load_cohorts, write_report
from .exceptions import CircadiaError
from .inference import bootstrap_amplitude_test, bootstrap_two_cohort, wald_test, wald_test_two_cohort
from .rng import RngStream
from .selection import DEFAULT_THRESHOLD, forward_order_select
from .simulate import SimSetting, error_summary, full_scale, resolve_jobs, run_study, summarize
from .trig import fit_individual
from .twostage import GSpec, estimate

TESTS = ("zero-amplitudes", "equal-midlines", "equal-rhythms")

# first stream coordinate per kind of random computation
_ZERO_AMP, _TWO_COHORT, _SELECT = 0, 1, 2


def _threads(value):
    if value is None:
        value = os.environ.get("CIRCADIA_THREADS", "1")
    return resolve_jobs("auto" if str(value).lower() == "auto" else int(value))


def _methods(arg):
    return ("sts", "rts") if arg == "both" else (arg,)


def _add_common(p, data=True, order=True):
    if data:
        p.add_argument("--input", required=True, type=Path, help="CSV with columns cohort,subject,time,value")
        if order:
            g = p.add_mutually_exclusive_group(required=True)
            g.add_argument("--order", type=int, help="number of harmonics K")
            g.add_argument("--select", action="store_true", help="choose K by forward selection")
        p.add_argument("--max-order", type=int, default=3, help="largest K tried by --select")
        p.add_argument("--method", choices=("sts", "rts", "both"), default="both")
        p.add_argument("--cohorts", help="comma-separated cohort ids to analyse (case first)")
    p.add_argument("--replicates", type=int, default=199, help="bootstrap replicates R")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("circadia_out"))
    p.add_argument("--threads", default=None, help="worker count or 'auto' (default: $CIRCADIA_THREADS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="circadia", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="estimate population parameters")
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("test", help="estimate and run hypothesis tests")
    _add_common(p)
    p.add_argument("--test", choices=TESTS + ("all",), default="all")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("select", help="forward selection of the harmonic order")
    _add_common(p, order=False)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", help="run a Monte Carlo study")
    _add_common(p, data=False)
    p.add_argument("--study", choices=("single", "two-cohort"), default="single")
    p.add_argument("--setting", default="K1", help="e.g. K1,snr=high,size=large,var=high")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--datasets", default="1,2,3,4", help="dataset variants to generate")
    p.add_argument("--full-scale", action="store_true", help="1000 trials x 1000 replicates")
    p.set_defaults(func=cmd_simulate)
    return parser


# --------------------------------------------------------------------------
# data workflows


def _load(args):
    cohorts = load_cohorts(args.input)
    if args.cohorts:
        wanted = [c.strip() for c in args.cohorts.split(",") if c.strip()]
        unknown = [c for c in wanted if c not in cohorts]
        if unknown:
            raise CircadiaError(f"unknown cohort id(s): {', '.join(unknown)}")
        cohorts = {c: cohorts[c] for c in wanted}
    return cohorts


def _provenance(args, order):
    return {
        "command": args.command,
        "input": args.input.name,
        "input_sha256": input_digest(args.input),
        "seed": args.seed,
        "replicates": args.replicates,
        "order": order,
        "methods": list(_methods(args.method)),
        "version": __version__,
    }


def _selection(args, cohorts, threads):
    """Per (method, cohort) selection; the largest selected order is used."""
    trace = []
    for ci, (cid, cohort) in enumerate(cohorts.items()):
        rng = RngStream(args.seed, (_SELECT, ci))
        for method in _methods(args.method):
            sel = forward_order_select(
                cohort, args.max_order, method, args.replicates, rng,
                getattr(args, "threshold", DEFAULT_THRESHOLD), threads,
            )
            trace.append({"cohort": cid, **sel.as_dict()})
    return max(t["selected"] for t in trace), trace


def _resolve_order(args, cohorts, threads):
    if args.select:
        return _selection(args, cohorts, threads)
    if args.order < 0:
        raise CircadiaError("--order must be non-negative")
    return args.order, None


def _estimates(cohorts, order, methods):
    fits = {cid: [fit_individual(s, order) for s in c.subjects] for cid, c in cohorts.items()}
    section = {}
    for cid, f in fits.items():
        entry = {"M": len(f), "n": [x.n for x in f], "methods": {}}
        for m in methods:
            est = estimate(f, m)
            entry["methods"][m] = {
                "coefficients": (est.alpha if m == "sts" else est.beta_tilde).tolist(),
                "midline": est.midline,
                "amplitudes": est.amplitudes.tolist(),
                "phases": est.phases.tolist(),
            }
        section[cid] = entry
    return fits, section


def _result(res, **extra):
    d = res.as_dict()
    d.update(extra)
    return d


def _run_tests(args, fits, order, threads):
    tests = TESTS if args.test == "all" else (args.test,)
    R = args.replicates
    out = []
    ids = list(fits)
    for ci, cid in enumerate(ids):
        if "zero-amplitudes" not in tests or order == 0:
            continue
        for m in _methods(args.method):
            spec = GSpec.zero_amplitudes()
            if R > 0:
                res = bootstrap_amplitude_test(fits[cid], order, m, spec, R, RngStream(args.seed, (_ZERO_AMP, ci)), threads)
            else:
                res = wald_test(fits[cid], order, m, spec)
            out.append(_result(res, cohorts=[cid]))
    if len(ids) >= 2:
        case, control = ids[0], ids[1]
        for ti, test in enumerate(("equal-midlines", "equal-rhythms")):
            if test not in tests or (test == "equal-rhythms" and order == 0):
                continue
            for m in _methods(args.method):
                if R > 0:
                    rng = RngStream(args.seed, (_TWO_COHORT, ti))
                    res = bootstrap_two_cohort(fits[case], fits[control], order, m, test, R, rng, threads)
                else:
                    res = wald_test_two_cohort(fits[case], fits[control], order, m, GSpec(test))
                out.append(_result(res, cohorts=[case, control]))
    return out


def cmd_fit(args) -> int:
    threads = _threads(args.threads)
    cohorts = _load(args)
    order, trace = _resolve_order(args, cohorts, threads)
    _, section = _estimates(cohorts, order, _methods(args.method))
    report = {"provenance": _provenance(args, order), "estimates": section}
    if trace is not None:
        report["selection"] = trace
    _finish(report, args.out)
    return 0


def cmd_test(args) -> int:
    threads = _threads(args.threads)
    cohorts = _load(args)
    order, trace = _resolve_order(args, cohorts, threads)
    fits, section = _estimates(cohorts, order, _methods(args.method))
    report = {
        "provenance": _provenance(args, order),
        "estimates": section,
        "tests": _run_tests(args, fits, order, threads),
    }
    if trace is not None:
        report["selection"] = trace
    _finish(report, args.out)
    return 0


def cmd_select(args) -> int:
    threads = _threads(args.threads)
    cohorts = _load(args)
    order, trace = _selection(args, cohorts, threads)
    report = {"provenance": _provenance(args, order), "selection": trace, "selected_order": order}
    _finish(report, args.out)
    return 0


def cmd_simulate(args) -> int:
    setting = SimSetting.parse(args.setting, study=args.study)
    trials, R = (full_scale(setting) if args.full_scale else (args.trials, args.replicates))
    variants = tuple(int(v) for v in args.datasets.split(",") if v.strip())
    records = run_study(setting, trials, R, args.seed, _threads(args.threads), variants)
    report = {
        "provenance": {
            "command": "simulate",
            "setting": setting.label(),
            "trials": trials,
            "replicates": R,
            "seed": args.seed,
            "datasets": list(variants),
            "version": __version__,
        },
        "errors": error_summary(records),
    }
    if R > 0:
        curves = summarize(records)
        report["auc"] = {k: {"auc": c.auc, "mcse": c.mcse, "kind": c.kind, "N": c.N} for k, c in curves.items()}
        export_curves(list(curves.values()), args.out)
    _finish(report, args.out)
    return 0


def _finish(report, out):
    jpath, tpath = write_report(report, out)
    sys.stdout.write(tpath.read_text())


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CircadiaError, OSError, ValueError) as exc:
        print(f"circadia: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
