"""Command line front end: ``run``, ``compare`` and ``list-scenarios``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .scenario import (
    RunFailure,
    ScenarioError,
    bundled_scenarios,
    compare_metrics,
    format_comparison,
    load_scenario,
    run_scenario,
)

log = logging.getLogger("santw")


def _cmd_run(args) -> int:
    try:
        scn = load_scenario(args.file)
    except ScenarioError as exc:
        print(f"error: invalid scenario: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else Path("runs") / scn.id
    log.info("running %s (%s) into %s", scn.id, scn.method, out)
    try:
        res = run_scenario(scn, out, seed=args.seed)
    except ScenarioError as exc:
        print(f"error: invalid scenario: {exc}", file=sys.stderr)
        return 2
    except RunFailure as exc:
        print(f"error: {exc} (details in {exc.diagnostic})", file=sys.stderr)
        return 3
    m = res.metrics
    print(f"{scn.id}: method {scn.method}, seed {m['seed']}, {res.elapsed:.1f} s")
    for key in ("sat_error_energy", "peak_u", "tracking_ise", "peak_grid_current", "recovery_time"):
        if key in m["nominal"]:
            print(f"  {key:<18} nominal {m['nominal'][key]!s:<24} compensated {m['compensated'][key]!s}")
    print(f"  artifacts in {out}")
    return 0


def _cmd_compare(args) -> int:
    try:
        a = json.loads(Path(args.a).read_text(encoding="utf-8"))
        b = json.loads(Path(args.b).read_text(encoding="utf-8"))
        rows = compare_metrics(a, b)
    except (OSError, json.JSONDecodeError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.json:
        print(json.dumps(rows, indent=2))
    else:
        print(format_comparison(rows))
    return 0


def _cmd_list(args) -> int:
    for name, path in bundled_scenarios().items():
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            desc = data.get("description", "")
            method = data.get("synthesis", {}).get("method", "?")
        except json.JSONDecodeError:
            desc, method = "(unreadable)", "?"
        print(f"{name:<22} {method:<16} {desc}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="santw", description="Anti-windup design and simulation scenarios")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="design and simulate one scenario")
    r.add_argument("file", help="scenario JSON file or bundled scenario name")
    r.add_argument("--out", help="output directory (default runs/<id>)")
    r.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    r.set_defaults(func=_cmd_run)
    c = sub.add_parser("compare", help="metric deltas between two metrics.json files")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--json", action="store_true", help="machine-readable output")
    c.set_defaults(func=_cmd_compare)
    ls = sub.add_parser("list-scenarios", help="list bundled scenarios")
    ls.set_defaults(func=_cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
