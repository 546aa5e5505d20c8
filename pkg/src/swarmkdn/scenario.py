"""
Scripted scenarios and their reports.

A scenario is a line-oriented script. Timed directives take an optional
``at T`` prefix (virtual microseconds); times must never decrease::

    # comment
    at 0 route h1 h2
    at 0 inject h1 10.0.0.2 5000 int payload=hello
    at 100 inject h1 239.255.0.1 7400 rtps
    at 500 set_cpu h1 55
    at 500 set_link_latency 1:2-2:1 300
    at 500 set_proc_latency 2 1000
    at 600 random_traffic count=20 interval=50 int
    run_until 5000
    expect_delivery h2 h3
    expect_path h1 h2 1 3 4
    select_node 3
    query SELECT ?h WHERE { ?h sn:cpuLoad ?c }
    export state.nt
"""

from __future__ import annotations

import hashlib
import json
import random
import shlex
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .controller import ControllerConfig, detect_congestion
from .errors import NoCapableNode, ParseError, QueryError, TopologyError, UnknownEntity
from .network import ObservableEvent
from .packet import ip_to_int
from .runtime import Deployment
from .sparql import evaluate, parse_query
from .topology import Topology, load_topology

TIMED = {"inject", "set_cpu", "set_link_latency", "set_proc_latency", "route", "random_traffic"}
UNTIMED = {"run_until", "expect_delivery", "expect_path", "select_node", "query", "export"}
MULTICAST_DST = "239.255.0.1"


@dataclass
class Directive:
    kind: str
    args: list
    opts: dict
    line: int
    at: Optional[int] = None
    text: str = ""


@dataclass
class Scenario:
    directives: list[Directive]
    path: Optional[str] = None


def _int(value, line, path, what):
    try:
        return int(value, 0) if isinstance(value, str) else int(value)
    except ValueError:
        raise ParseError(f"{what} must be an integer, got {value!r}", path, line) from None


def parse_scenario(text: str, topology: Topology, path: Optional[str] = None) -> Scenario:
    directives = []
    last_time = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        at = None
        body = stripped
        if body.split(None, 1)[0] == "at":
            parts = body.split(None, 2)
            if len(parts) < 3:
                raise ParseError("'at' needs a time and a directive", path, lineno)
            at = _int(parts[1], lineno, path, "time")
            body = parts[2]
        kind, _, rest = body.partition(" ")
        if kind not in TIMED | UNTIMED:
            raise ParseError(f"unknown directive {kind!r}", path, lineno)
        if at is not None and kind not in TIMED:
            raise ParseError(f"{kind} does not take a time", path, lineno)
        if kind == "query":
            d = Directive(kind, [rest.strip()], {}, lineno, at, stripped)
            try:
                parse_query(rest)
            except QueryError as exc:
                raise ParseError(str(exc), path, lineno) from None
            directives.append(d)
            continue
        try:
            tokens = shlex.split(rest)
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from None
        args = [t for t in tokens if "=" not in t]
        opts = dict(t.split("=", 1) for t in tokens if "=" in t)
        d = Directive(kind, args, opts, lineno, at, stripped)
        _validate(d, topology, path)
        when = at if at is not None else (_int(args[0], lineno, path, "time") if kind == "run_until" else None)
        if when is not None:
            if when < last_time:
                raise ParseError(f"time {when} is earlier than a previous directive ({last_time})", path, lineno)
            last_time = when
        directives.append(d)
    return Scenario(directives, path)


def _need(d: Directive, n: int, path, usage: str):
    if len(d.args) < n:
        raise ParseError(f"usage: {usage}", path, d.line)


def _host(topology, name, d, path):
    if name not in topology.hosts:
        raise UnknownEntity(f"{path or '<scenario>'}:{d.line}: unknown host {name!r}")


def _validate(d: Directive, topology: Topology, path) -> None:
    k = d.kind
    if k == "inject":
        _need(d, 3, path, "inject HOST DST_IP DST_PORT [rtps] [int] [payload=TEXT]")
        _host(topology, d.args[0], d, path)
        try:
            ip_to_int(d.args[1])
        except ValueError:
            raise ParseError(f"bad destination ip {d.args[1]!r}", path, d.line) from None
        _int(d.args[2], d.line, path, "port")
        extra = set(d.args[3:]) - {"rtps", "int"}
        if extra:
            raise ParseError(f"unknown inject flags {sorted(extra)}", path, d.line)
    elif k == "set_cpu":
        _need(d, 2, path, "set_cpu HOST PCT")
        _host(topology, d.args[0], d, path)
        pct = _int(d.args[1], d.line, path, "cpu load")
        if not 0 <= pct <= 100:
            raise ParseError("cpu load must be within [0, 100]", path, d.line)
    elif k == "set_link_latency":
        _need(d, 2, path, "set_link_latency A_SW:A_PORT-B_SW:B_PORT US")
        try:
            topology.find_link(d.args[0])
        except TopologyError:
            raise UnknownEntity(f"{path or '<scenario>'}:{d.line}: unknown link {d.args[0]!r}") from None
        _int(d.args[1], d.line, path, "latency")
    elif k == "set_proc_latency":
        _need(d, 2, path, "set_proc_latency SWITCH US")
        if _int(d.args[0], d.line, path, "switch") not in topology.switches:
            raise UnknownEntity(f"{path or '<scenario>'}:{d.line}: unknown switch {d.args[0]!r}")
        _int(d.args[1], d.line, path, "latency")
    elif k == "route":
        _need(d, 2, path, "route SRC_HOST DST_HOST")
        _host(topology, d.args[0], d, path)
        _host(topology, d.args[1], d, path)
    elif k == "random_traffic":
        _int(d.opts.get("count", "1"), d.line, path, "count")
        _int(d.opts.get("interval", "100"), d.line, path, "interval")
        extra = set(d.args) - {"rtps", "int"}
        if extra:
            raise ParseError(f"unknown random_traffic flags {sorted(extra)}", path, d.line)
    elif k == "run_until":
        _need(d, 1, path, "run_until TIME")
    elif k == "expect_delivery":
        for h in d.args:
            _host(topology, h, d, path)
    elif k == "expect_path":
        _need(d, 3, path, "expect_path SRC_HOST DST_HOST SWITCH...")
        _host(topology, d.args[0], d, path)
        _host(topology, d.args[1], d, path)
        for s in d.args[2:]:
            if _int(s, d.line, path, "switch") not in topology.switches:
                raise UnknownEntity(f"{path or '<scenario>'}:{d.line}: unknown switch {s!r}")
    elif k == "select_node":
        _need(d, 1, path, "select_node CAPABILITY_MASK")
        _int(d.args[0], d.line, path, "capability mask")
    elif k == "export":
        _need(d, 1, path, "export PATH")


def load_scenario(path, topology: Topology) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), topology, str(path))


@dataclass
class Assertion:
    line: int
    text: str
    passed: bool

    def line_text(self) -> str:
        return f"line={self.line} {self.text} {'PASS' if self.passed else 'FAIL'}"


@dataclass
class Report:
    text: str
    exit_code: int
    assertions: list[Assertion] = field(default_factory=list)
    deployment: Optional[Deployment] = field(default=None, repr=False)
    summary: dict = field(default_factory=dict)


def _event_line(e: ObservableEvent) -> str:
    digest = hashlib.sha256(e.frame).hexdigest()[:16]
    parts = [f"t={e.time}", e.kind, e.node]
    if e.port is not None:
        parts.append(f"port={e.port}")
    if e.reason is not None:
        parts.append(f"reason=0x{e.reason:02x}")
    parts += [f"len={len(e.frame)}", f"sha256={digest}"]
    if e.detail:
        parts.append(e.detail)
    return " ".join(parts)


class ScenarioRunner:
    """Executes a parsed scenario against a fresh deployment."""

    def __init__(self, topology: Topology, scenario: Scenario, seed: int = 0,
                 config: Optional[ControllerConfig] = None, export_root: Optional[Path] = None):
        self.topology = topology
        self.scenario = scenario
        self.seed = seed
        self.rng = random.Random(seed)
        self.deployment = Deployment(topology, config)
        self.export_root = export_root
        self.timeline: list[str] = []
        self.queries: list[str] = []
        self.assertions: list[Assertion] = []
        self._mark = 0

    def run(self) -> Deployment:
        d = self.deployment
        for directive in self.scenario.directives:
            if directive.at is not None:
                d.run_until(directive.at)
            self.timeline.append(f"t={d.clock} line={directive.line} {directive.text}")
            getattr(self, "_do_" + directive.kind)(directive)
        return d

    # directives

    def _do_inject(self, x: Directive):
        host, dst_ip, port = x.args[0], x.args[1], int(x.args[2], 0)
        payload = x.opts.get("payload", "").encode()
        self.deployment.inject(host, dst_ip, port, rtps="rtps" in x.args[3:], int_enabled="int" in x.args[3:],
                               payload=payload)

    def _do_set_cpu(self, x: Directive):
        self.deployment.net.set_cpu(x.args[0], int(x.args[1], 0))

    def _do_set_link_latency(self, x: Directive):
        self.deployment.net.set_link_latency(x.args[0], int(x.args[1], 0))

    def _do_set_proc_latency(self, x: Directive):
        self.deployment.net.set_proc_latency(int(x.args[0], 0), int(x.args[1], 0))

    def _do_route(self, x: Directive):
        self.deployment.install_route(x.args[0], x.args[1])

    def _do_random_traffic(self, x: Directive):
        d = self.deployment
        count = int(x.opts.get("count", "1"), 0)
        interval = int(x.opts.get("interval", "100"), 0)
        rtps = "rtps" in x.args
        hosts = sorted(self.topology.hosts)
        cfg = d.controller.config
        for i in range(count):
            src = self.rng.choice(hosts)
            payload = self.rng.randbytes(self.rng.randint(0, 32))
            if rtps:
                dst_ip, port = MULTICAST_DST, cfg.rtps_udp_port
            else:
                dst = self.rng.choice([h for h in hosts if h != src] or hosts)
                dst_ip, port = self.topology.hosts[dst].ip, self.rng.randint(1024, 65535)
            d.inject(src, dst_ip, port, rtps=rtps, int_enabled="int" in x.args, payload=payload,
                     at=d.clock + i * interval)

    def _do_run_until(self, x: Directive):
        self.deployment.run_until(int(x.args[0], 0))

    def _do_expect_delivery(self, x: Directive):
        d = self.deployment
        got = sorted({e.node for e in d.events[self._mark:] if e.kind == "deliver"})
        self._mark = len(d.events)
        want = sorted(set(x.args))
        self.assertions.append(Assertion(
            x.line, f"expect_delivery expected={{{','.join(want)}}} got={{{','.join(got)}}}", got == want))

    def _do_expect_path(self, x: Directive):
        route = self.deployment.controller.routes.get(("unicast", x.args[0], x.args[1]))
        want = [int(s, 0) for s in x.args[2:]]
        got = sorted(route.depth, key=route.depth.get) if route is not None else []
        self.assertions.append(Assertion(
            x.line, f"expect_path {x.args[0]}->{x.args[1]} expected={want} got={got}", got == want))

    def _do_select_node(self, x: Directive):
        mask = int(x.args[0], 0)
        try:
            picked = self.deployment.controller.select_node(mask).n3()
        except NoCapableNode:
            picked = "NoCapableNode"
        self.queries.append(f"line={x.line} select_node 0x{mask:04x} -> {picked}")

    def _do_query(self, x: Directive):
        table = evaluate(parse_query(x.args[0]), self.deployment.store)
        self.queries.append(f"line={x.line} {x.args[0]}")
        self.queries.extend(table.to_text().rstrip("\n").split("\n"))

    def _do_export(self, x: Directive):
        target = Path(x.args[0])
        if self.export_root is not None and not target.is_absolute():
            target = self.export_root / target
        target.write_text(self.deployment.store.export_ntriples())
        self.timeline.append(f"exported {len(self.deployment.store)} triples to {x.args[0]}")

    # report

    def report(self, topology_name: str = "", scenario_name: str = "") -> Report:
        d = self.deployment
        failed = sum(not a.passed for a in self.assertions)
        counts = {k: sum(e.kind == k for e in d.events) for k in ("deliver", "packet_in", "drop")}
        summary = {
            "seed": self.seed,
            "final_time": d.clock,
            "deliveries": counts["deliver"],
            "packet_ins": counts["packet_in"],
            "drops": counts["drop"],
            "writes": len(d.writes),
            "write_failures": sum(w.status != "OK" for w in d.writes),
            "triples": len(d.store),
            "congested_links": [str(dl) for dl in _congested(d)],
            "assertions": len(self.assertions),
            "assertions_failed": failed,
            "exit_code": 1 if failed else 0,
        }
        lines = ["# swarmkdn scenario report v1",
                 f"topology: {topology_name}", f"scenario: {scenario_name}", f"seed: {self.seed}"]
        sections = [
            ("timeline", self.timeline),
            ("events", [_event_line(e) for e in d.events]),
            ("writes", [w.line() for w in d.writes]),
            ("controller-log", d.logs),
            ("queries", self.queries),
            ("weights", d.controller.weights.lines()),
            ("assertions", [a.line_text() for a in self.assertions]),
        ]
        for name, body in sections:
            lines.append(f"[{name}]")
            lines.extend(body)
        lines.append("[summary]")
        lines.append(json.dumps(summary, sort_keys=True))
        return Report("\n".join(lines) + "\n", summary["exit_code"], list(self.assertions), d, summary)


def _congested(d: Deployment):
    return detect_congestion(d.controller.weights)


def run_scenario(topology: Topology, scenario: Scenario, seed: int = 0, topology_name: str = "",
                 scenario_name: str = "", export_root: Optional[Path] = None) -> Report:
    runner = ScenarioRunner(topology, scenario, seed, export_root=export_root)
    runner.run()
    return runner.report(topology_name, scenario_name)


def run(topology_path, scenario_path, seed: int = 0) -> Report:
    topology = load_topology(topology_path)
    scenario = load_scenario(scenario_path, topology)
    return run_scenario(topology, scenario, seed, Path(topology_path).name, Path(scenario_path).name)
