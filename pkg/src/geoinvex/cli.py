"""Command-line front end.

Exit codes: 0 when every executed check passed (or a search found nothing),
1 when at least one violation was found, 2 on configuration or evaluation
errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from geoinvex import __version__
from geoinvex import engine, harness
from geoinvex.errors import GeoInvexError, ScenarioError
from geoinvex.scenario_io import resolve

EXIT_OK, EXIT_VIOLATION, EXIT_ERROR = 0, 1, 2

CHECKS = ("invex-set", "preinvex", "invex-function", "property-P", "condition-C")


class UsageError(GeoInvexError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _coords(text, flag):
    try:
        return np.array([float(v) for v in text.replace(" ", "").strip("()[]").split(",")])
    except ValueError:
        raise UsageError(f"{flag} expects comma-separated numbers, got {text!r}") from None


def _tol_overrides(items):
    out = {}
    for item in items or ():
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"--tol expects KEY=VAL, got {item!r}")
        try:
            out[key.strip()] = float(val)
        except ValueError:
            raise UsageError(f"--tol {key}: not a number: {val!r}") from None
    return out


def _load(args, path=None):
    return resolve(
        path or args.scenario,
        tol_overrides=_tol_overrides(args.tol),
        sampler_overrides={"seed": args.seed, "samples": args.samples, "t_grid": args.t_grid},
    )


def _emit(text, out_path=None, stream=None):
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        (stream or sys.stdout).write(text)


def run_report(digest, checks, exit_status, timing=False):
    """Stable-order report document. Wall times only appear with ``timing``."""
    doc = {
        "tool": "geoinvex",
        "version": __version__,
        "scenario_digest": digest,
        "checks": [c.to_dict(timing=timing) for c in checks],
        "exit_status": exit_status,
    }
    if timing:
        doc["timing"] = {"total_seconds": sum(getattr(c, "wall_time", 0.0) for c in checks)}
    return doc


def _write_report(args, doc, lines):
    # JSON on stdout stays parseable: the text summary is only printed alongside a file
    if args.report == "json":
        if args.out:
            sys.stdout.write("\n".join(lines) + "\n")
        _emit(json.dumps(doc, indent=2, allow_nan=False) + "\n", args.out)
    else:
        _emit("\n".join(lines) + "\n", args.out)


def _witness_lines(rep):
    out = []
    for w in rep.violations[:3]:
        parts = [f"x={','.join(repr(float(v)) for v in w.x)}", f"y={','.join(repr(float(v)) for v in w.y)}"]
        if w.t is not None:
            parts.append(f"t={w.t!r}")
        if w.s is not None:
            parts.append(f"s={w.s!r}")
        out.append(f"    witness: {' '.join(parts)} lhs={w.lhs:.6g} rhs={w.rhs:.6g} slack={w.slack:.3e}")
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args):
    try:
        ls = resolve(args.scenario)
    except ScenarioError as exc:
        for d in exc.diagnostics:
            print(f"{args.scenario}: {d}")
        return EXIT_ERROR
    sc = ls.scenario
    print(f"{args.scenario}: OK ({sc.manifold.kind}, dim {sc.manifold.dim}, functions: "
          f"{', '.join(sorted(sc.functions)) or 'none'}; digest {ls.digest[:12]})")
    return EXIT_OK


def _single_witness(args, sc, predicate, fname):
    if args.x is None or args.y is None:
        raise UsageError("--x and --y must be given together")
    x, y = _coords(args.x, "--x"), _coords(args.y, "--y")
    if predicate in ("invex-set", "preinvex", "property-P") and args.t is None:
        raise UsageError(f"{predicate} replay needs --t")
    if predicate in ("property-P", "condition-C") and args.s is None:
        raise UsageError(f"{predicate} replay needs --s")
    w = engine.ViolationWitness(predicate, list(x), list(y), args.t, 0.0, 0.0, 0.0, s=args.s, function=fname)
    lhs, rhs, slack, tol = engine.evaluate_witness(sc, predicate, x, y, t=args.t, s=args.s, fname=fname)
    w.lhs, w.rhs, w.slack = lhs, rhs, slack
    violated = engine.replay(sc, w)
    return engine.CheckReport(predicate, 1, [w] if violated else [], int(violated), slack, tol, function=fname,
                              notes=["replay"])


def cmd_check(args):
    ls = _load(args)
    sc = ls.scenario
    predicates = args.predicate or ["invex-set"] + (["preinvex"] if sc.functions else [])
    for p in predicates:
        if p not in CHECKS:
            raise UsageError(f"unknown predicate {p!r}; expected one of {', '.join(CHECKS)}")
    fnames = [args.function] if args.function else sorted(sc.functions)
    reports = []
    for p in predicates:
        names = fnames if p in ("preinvex", "invex-function") else [None]
        for fname in names:
            if args.x is not None or args.y is not None:
                reports.append(_single_witness(args, sc, p, fname))
            elif p == "invex-set":
                reports.append(engine.check_invex_set(sc))
            elif p == "preinvex":
                reports.append(engine.check_preinvex(sc, fname))
            elif p == "invex-function":
                reports.append(engine.check_invex_function(sc, fname))
            elif p == "property-P":
                reports.append(engine.check_property_P_sampled(sc))
            else:
                reports.append(engine.check_condition_C_sampled(sc))
    status = EXIT_OK if all(r.passed for r in reports) else EXIT_VIOLATION
    lines = [f"scenario {sc.name} (seed {sc.sampler.seed}, samples {sc.sampler.samples}, t-grid {sc.sampler.t_grid})"]
    for r in reports:
        lines.append("  " + r.summary())
        lines.extend(_witness_lines(r))
    _write_report(args, run_report(ls.digest, reports, status, args.timing), lines)
    return status


def cmd_theorems(args):
    target = args.scenario
    if target in harness.SUITES:
        loaded = [_load(args, name) for name in harness.SUITES[target]]
    elif target.endswith((".yaml", ".yml")) or "/" in target:
        loaded = [_load(args)]
    else:
        raise UsageError(f"unknown suite {target!r}; known suites: {', '.join(sorted(harness.SUITES))}")
    results = harness.run_cases([(ls.scenario, ls.theorems) for ls in loaded], workers=args.workers)
    status = EXIT_OK if all(r.status != harness.FAIL for r in results) else EXIT_VIOLATION
    lines = [f"{r.status:18s} {r.theorem:5s} {r.label}" + (f"  ({'; '.join(r.notes)})" if r.notes else "")
             for r in results]
    digest = ",".join(ls.digest for ls in loaded)
    doc = {
        "tool": "geoinvex",
        "version": __version__,
        "scenario_digest": digest,
        "cases": [r.to_dict(timing=args.timing) for r in results],
        "exit_status": status,
    }
    _write_report(args, doc, lines)
    return status


def cmd_trace(args):
    ls = _load(args)
    sc = ls.scenario
    if args.steps < 0:
        raise UsageError("--steps must be non-negative")
    if args.x is None or args.y is None:
        raise UsageError("trace needs --x and --y")
    x, y = _coords(args.x, "--x"), _coords(args.y, "--y")
    for name, p in (("x", x), ("y", y)):
        if p.shape != (sc.manifold.dim,):
            raise UsageError(f"--{name} has {p.size} coordinates, manifold dimension is {sc.manifold.dim}")
        if not float(sc.margin(p)) <= 0.0:
            raise UsageError(f"{name}={p.tolist()} is not in the set")
    fam = engine._family(sc, x, y)
    ts = np.linspace(0.0, 1.0, args.steps + 1) if args.steps else np.zeros(1)
    pts = np.atleast_2d(fam.geodesic.coords_at(ts))
    inside = np.atleast_1d(sc.contains(pts))
    names = sorted(sc.functions)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t"] + [f"coord{i}" for i in range(sc.manifold.dim)] + ["in_set"] + [f"f_{n}" for n in names])
    for k, t in enumerate(ts):
        row = [repr(float(t))] + [repr(float(v)) for v in pts[k]] + [str(bool(inside[k])).lower()]
        row += [repr(float(sc.functions[n](pts[k]))) for n in names]
        writer.writerow(row)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_search(args):
    ls = _load(args)
    sc = ls.scenario
    if not args.predicate or len(args.predicate) != 1:
        raise UsageError("search needs exactly one --predicate")
    predicate = args.predicate[0]
    if predicate not in CHECKS:
        raise UsageError(f"unknown predicate {predicate!r}; expected one of {', '.join(CHECKS)}")
    budget = harness.SearchBudget(args.budget_samples, args.budget_seconds, sc.sampler.seed)
    w = harness.search_counterexample(sc, predicate, budget, fname=args.function)
    if w is None:
        rep = engine.CheckReport(predicate, budget.max_samples, [], 0, -np.inf, 0.0, function=args.function,
                                 notes=["NOT-FOUND"])
        lines = [f"NOT-FOUND {predicate} within {budget.max_samples} samples / {budget.max_seconds:g} s"]
        status = EXIT_OK
    else:
        tol = engine.evaluate_witness(sc, predicate, w.x, w.y, t=w.t, s=w.s, fname=w.function)[3]
        rep = engine.CheckReport(predicate, budget.max_samples, [w], 1, w.slack, tol, function=w.function,
                                 notes=["FOUND"])
        frag = [f"geoinvex check {args.scenario} --predicate {predicate} --seed {sc.sampler.seed}",
                f"--x {','.join(repr(float(v)) for v in w.x)}", f"--y {','.join(repr(float(v)) for v in w.y)}"]
        if w.t is not None:
            frag.append(f"--t {w.t!r}")
        if w.s is not None:
            frag.append(f"--s {w.s!r}")
        if w.function:
            frag.append(f"--function {w.function}")
        lines = [f"FOUND {predicate} witness: slack={w.slack:.6e}", "replay: " + " ".join(frag)]
        status = EXIT_VIOLATION
    _write_report(args, run_report(ls.digest, [rep], status, args.timing), lines)
    return status


# ---------------------------------------------------------------------------
# parser


def _common(p, scenario_help="scenario file or builtin name"):
    p.add_argument("scenario", nargs="?", help=scenario_help)
    p.add_argument("--scenario", dest="scenario_flag", help=scenario_help)
    p.add_argument("--samples", type=int)
    p.add_argument("--t-grid", type=int)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--tol", action="append", metavar="KEY=VAL")
    p.add_argument("--report", choices=("text", "json"), default="text")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--timing", action="store_true", help="include wall times in the JSON report")


def build_parser():
    parser = _Parser(prog="geoinvex", description="Geodesic (alpha, E)-invexity checker.")
    parser.add_argument("--version", action="version", version=f"geoinvex {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("validate", help="parse and type-check a scenario file")
    p.add_argument("scenario", nargs="?")
    p.add_argument("--scenario", dest="scenario_flag")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("check", help="run predicates on a scenario")
    _common(p)
    p.add_argument("--predicate", action="append", choices=None)
    p.add_argument("--function")
    for flag in ("--x", "--y"):
        p.add_argument(flag)
    p.add_argument("--t", type=float)
    p.add_argument("--s", type=float)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("theorems", help="run theorem cases for a scenario file or builtin suite")
    _common(p, "builtin suite name or scenario file")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_theorems)

    p = sub.add_parser("trace", help="CSV trace of the family geodesic for one pair")
    _common(p)
    p.add_argument("--x")
    p.add_argument("--y")
    p.add_argument("--steps", type=int, default=32)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("search", help="counterexample search")
    _common(p)
    p.add_argument("--predicate", action="append")
    p.add_argument("--function")
    p.add_argument("--budget-samples", type=int, default=1000)
    p.add_argument("--budget-seconds", type=float, default=30.0)
    p.set_defaults(func=cmd_search)
    return parser


_VALUE_FLAGS = ("--x", "--y", "--t", "--s")


def _glue_negative_values(argv):
    """Rewrite ``--y -1,0`` as ``--y=-1,0`` so argparse does not read a flag."""
    out, it = [], iter(argv)
    for tok in it:
        if tok in _VALUE_FLAGS:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(_glue_negative_values(argv))
        if args.command is None:
            raise UsageError("a subcommand is required: validate, check, theorems, trace, search")
        args.scenario = args.scenario_flag or args.scenario
        if not args.scenario:
            raise UsageError("a scenario (file, builtin name or suite) is required")
        return args.func(args)
    except ScenarioError as exc:
        for d in exc.diagnostics:
            print(f"error: {d}", file=sys.stderr)
        return EXIT_ERROR
    except GeoInvexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
