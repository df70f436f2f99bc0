"""Command line entry point: ``careloop validate|run|report|compare``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import CareloopError, InvariantViolation, ParseError, UnknownFormat, ValidationError
from .report import RunReport, compare, render, render_comparison
from .scenario import load_scenario
from .simulation import Simulation

EXIT_OK, EXIT_INVALID, EXIT_INVARIANT = 0, 1, 2


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _run_file(path: str, args, follow=None) -> RunReport:
    sim = Simulation(load_scenario(path), follow=follow)
    try:
        return sim.run(dump_histories=getattr(args, "histories", False))
    finally:
        if getattr(args, "log", None):
            Path(args.log).write_text("\n".join(sim.event_log) + "\n", encoding="utf-8")


def _load_any(path: str, args) -> RunReport:
    """A report JSON is read as is; anything else is run as a scenario."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if isinstance(doc, dict) and "event_log_sha256" in doc:
        return RunReport.from_dict(doc)
    return _run_file(path, args)


def cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    print(f"{args.scenario}: ok ({len(sc.elements)} elements, {len(sc.sensors)} sensors, {len(sc.loops)} loops)")
    return EXIT_OK


def _check_format(fmt: str) -> None:
    if fmt not in ("json", "text"):
        raise UnknownFormat(f"unknown report format {fmt!r} (expected json or text)")


def cmd_run(args) -> int:
    _check_format(args.format)
    follow = None
    if args.follow:
        def follow(rec: dict) -> None:
            print(f"[{rec['emitted_at']} ms] {rec['party']} <- {rec['element']} v{rec['version']}: "
                  + "; ".join(rec["payload"]), file=sys.stderr)
    report = _run_file(args.scenario, args, follow)
    _emit(render(report, args.format), args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        report = RunReport.from_json(Path(args.report).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise ParseError(f"{args.report}: {exc}") from exc
    _emit(render(report, args.format), args.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    _check_format(args.format)
    diff = compare(_load_any(args.a, args), _load_any(args.b, args))
    text = json.dumps(diff, indent=2, sort_keys=True) if args.format == "json" else render_comparison(diff)
    _emit(text, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="careloop", description="Simulate fog-hosted health monitoring loops.")
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a scenario file and list every problem")
    v.add_argument("scenario")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="run a scenario and print its report")
    r.add_argument("scenario")
    r.add_argument("--format", default="text", help="json or text")
    r.add_argument("--out", help="write the report here instead of stdout")
    r.add_argument("--follow", action="store_true", help="stream notifications to stderr while running")
    r.add_argument("--log", help="write the event log to this file")
    r.add_argument("--histories", action="store_true", help="include context histories in the report")
    r.set_defaults(func=cmd_run)

    rp = sub.add_parser("report", help="render a saved JSON report")
    rp.add_argument("report")
    rp.add_argument("--format", default="text")
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_report)

    c = sub.add_parser("compare", help="diff two runs (scenario files or saved reports)")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--format", default="text")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"invalid scenario: {len(exc.errors)} problem(s)", file=sys.stderr)
        for e in exc.errors:
            print(f"  - {e}", file=sys.stderr)
        return EXIT_INVALID
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ParseError, UnknownFormat) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except CareloopError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
