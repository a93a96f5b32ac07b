"""Command line entry point: run, check and list scenarios."""

from __future__ import annotations

import argparse
import sys

from . import scenario

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _load(ref: str):
    try:
        return scenario.load(ref)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except scenario.ScenarioError as exc:
        print(f"error: {ref}: {type(exc).__name__}: {exc}", file=sys.stderr)
    return None


def cmd_run(args) -> int:
    s = _load(args.scenario)
    if s is None:
        return EXIT_USAGE
    result = scenario.run_scenario(s, seed=args.seed, max_events=args.max_events)
    if args.trace:
        try:
            scenario.write_trace(result.trace, args.trace)
        except scenario.IoFailure as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    if args.figure:
        from .report import render_figure
        render_figure(result, args.figure)
    if not args.quiet:
        for r in result.reports:
            if r.error:
                print(f"step {r.tick} {r.action}: error {r.error}")
            else:
                metrics = " ".join(f"{k}={v}" for k, v in r.metrics.items())
                print(f"step {r.tick} {r.action}: {metrics}")
        for a in result.results:
            print(a.render())
        print("PASS" if result.exit_status == 0 else "FAIL", s.name)
    return result.exit_status


def cmd_check(args) -> int:
    s = _load(args.scenario)
    if s is None:
        return EXIT_USAGE
    print(f"ok {s.name}: {len(s.script)} steps, {len(s.assertions)} assertions")
    return EXIT_PASS


def cmd_list(args) -> int:
    for name in scenario.stock_names():
        print(name)
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="netsecsim", description="Network attack and defense scenarios")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario file or stock scenario")
    run.add_argument("scenario")
    run.add_argument("--trace", metavar="PATH", help="write the trace file here")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--max-events", type=int, default=None, help="event budget per run call")
    run.add_argument("--quiet", action="store_true", help="print nothing, exit status only")
    run.add_argument("--figure", metavar="PATH", help="render a summary figure (PNG/PDF/SVG)")
    run.set_defaults(fn=cmd_run)
    check = sub.add_parser("check", help="parse a scenario without running it")
    check.add_argument("scenario")
    check.set_defaults(fn=cmd_check)
    lst = sub.add_parser("list", help="list stock scenarios")
    lst.set_defaults(fn=cmd_list)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    if getattr(args, "max_events", None) is not None and args.max_events <= 0:
        print("error: --max-events must be positive", file=sys.stderr)
        return EXIT_USAGE
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
