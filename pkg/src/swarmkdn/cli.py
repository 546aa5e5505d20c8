"""Command-line entry point: ``swarmkdn run|query|export``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .errors import QueryError, SwarmKdnError
from .runtime import Deployment
from .scenario import load_scenario, run_scenario
from .sparql import evaluate, parse_query
from .topology import load_topology

EXIT_OK, EXIT_ASSERTION, EXIT_USAGE = 0, 1, 2


def _configure_logging() -> None:
    level = os.environ.get("SWARMKDN_LOG", "WARNING").upper()
    if level.isdigit():
        level = int(level)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarmkdn", description="Knowledge-defined swarm network simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario and print its report")
    p.add_argument("--topology", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="also write the report to this file")

    p = sub.add_parser("query", help="evaluate a SPARQL query against the knowledge graph")
    p.add_argument("--topology", required=True)
    p.add_argument("--scenario", help="run this scenario before querying")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sparql", required=True)
    p.add_argument("--csv", action="store_true", help="emit CSV instead of an aligned table")

    p = sub.add_parser("export", help="write the knowledge graph as N-Triples")
    p.add_argument("--topology", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def _run_scenario(args):
    topology = load_topology(args.topology)
    scenario = load_scenario(args.scenario, topology)
    return run_scenario(topology, scenario, args.seed, Path(args.topology).name, Path(args.scenario).name)


def cmd_run(args) -> int:
    report = _run_scenario(args)
    sys.stdout.write(report.text)
    if args.report:
        Path(args.report).write_text(report.text)
    return report.exit_code


def cmd_query(args) -> int:
    try:
        q = parse_query(args.sparql)
    except QueryError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.scenario:
        store = _run_scenario(args).deployment.store
    else:
        store = Deployment(load_topology(args.topology)).store
    table = evaluate(q, store)
    sys.stdout.write(table.to_csv() if args.csv else table.to_text())
    return EXIT_OK


def cmd_export(args) -> int:
    store = _run_scenario(args).deployment.store
    Path(args.out).write_text(store.export_ntriples())
    return EXIT_OK


COMMANDS = {"run": cmd_run, "query": cmd_query, "export": cmd_export}


def main(argv=None) -> int:
    _configure_logging()
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except SwarmKdnError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
