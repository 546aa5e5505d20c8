"""
Control-plane applications driven by the knowledge graph.

* swarm-scoped RTPS multicast: packet-ins from publishers are answered by
  querying group membership and installing replication groups along a
  shortest-path tree;
* adaptive routing: sink INT reports feed per-link EWMA latencies, congested
  links trigger make-before-break reroutes;
* capability-aware node selection over the node metadata in the graph.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field, fields
from typing import NamedTuple, Optional, Union

from .channel import PacketIn, PacketOut, Status, Update, WriteReply, WriteRequest
from .errors import (
    DuplicateBootstrap,
    NoCapableNode,
    NoPath,
    PacketError,
    UnknownPublisher,
)
from .packet import PORT_PIPELINE, REASON_INT_REPORT, REASON_RTPS_INSPECT, parse_packet
from .rdf import Iri, Literal
from .rdfizer import RDF_TYPE, SNC, SNP, flow_iri, rdfize_int_report, rdfize_table_entry, rdfize_topology
from .sparql import query as sparql_query
from .store import TripleStore
from .switch import (
    AclMatch,
    Drop,
    Forward,
    IntReport,
    Multicast,
    MulticastGroup,
    TableEntry,
    WriteOp,
    report_from_frame,
)
from .topology import DirectedLink, Topology

log = logging.getLogger(__name__)


@dataclass
class ControllerConfig:
    alpha: float = 0.3
    congestion_threshold_us: float = 500.0
    rtps_udp_port: int = 7400
    acl_priority_base: int = 100
    # delay before stale entries of a replaced route are removed
    drain_us: int = 10_000

    @classmethod
    def from_dict(cls, doc: Optional[dict]) -> ControllerConfig:
        doc = dict(doc or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValueError(f"unknown controller config keys: {unknown}")
        cfg = cls(**doc)
        if not 0 < cfg.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        return cfg

    @property
    def unicast_priority(self) -> int:
        return self.acl_priority_base // 2


# link weights

@dataclass
class LinkWeight:
    ewma_latency_us: float
    last_update: int = 0
    sample_count: int = 0


class LinkWeightTable:
    """EWMA latency per directed switch-to-switch link."""

    def __init__(self, topology: Topology, alpha=0.3, congestion_threshold_us=500.0):
        self.alpha = alpha
        self.congestion_threshold_us = congestion_threshold_us
        self.links = {dl: LinkWeight(float(lat)) for dl, lat in sorted(topology.static_latency().items())}

    def __getitem__(self, dl: DirectedLink) -> float:
        return self.links[dl].ewma_latency_us

    def __contains__(self, dl) -> bool:
        return dl in self.links

    def __iter__(self):
        return iter(self.links)

    def update(self, dl: DirectedLink, sample: float, now: int) -> float:
        w = self.links[dl]
        w.ewma_latency_us = self.alpha * sample + (1 - self.alpha) * w.ewma_latency_us
        w.last_update = now
        w.sample_count += 1
        return w.ewma_latency_us

    def lines(self) -> list[str]:
        return [f"{dl} ewma={w.ewma_latency_us:.6f} samples={w.sample_count} last={w.last_update}"
                for dl, w in self.links.items()]


def ewma_update(ewma: float, sample: float, alpha: float) -> float:
    return alpha * sample + (1 - alpha) * ewma


def detect_congestion(weights: LinkWeightTable) -> list[DirectedLink]:
    return sorted(dl for dl, w in weights.links.items() if w.ewma_latency_us > weights.congestion_threshold_us)


# paths

def compute_path(topology: Topology, weights, src_switch: int, dst_switch: int) -> list[tuple[int, Optional[int]]]:
    """
    Minimum total weight path as ``[(switch, egress_port), ..., (dst, None)]``.

    Ties go to fewer hops, then to the lexicographically smallest sequence
    of switch ids, then of egress ports.
    """
    topology.switch(src_switch)
    topology.switch(dst_switch)
    adj = topology.adjacency()
    # label: (cost, hops, switch sequence, port sequence)
    heap = [(0.0, 0, (src_switch,), ())]
    done = set()
    while heap:
        cost, hops, seq, ports = heapq.heappop(heap)
        here = seq[-1]
        if here in done:
            continue
        done.add(here)
        if here == dst_switch:
            return list(zip(seq, ports + (None,)))
        for dl in adj[here]:
            if dl.dst in done or dl.dst in seq:
                continue
            heapq.heappush(heap, (cost + weights[dl], hops + 1, seq + (dl.dst,), ports + (dl.src_port,)))
    raise NoPath(f"no path from switch {src_switch} to switch {dst_switch}")


def path_links(topology: Topology, path) -> list[DirectedLink]:
    out = []
    adj = topology.adjacency()
    for (sw, port), (nxt, _) in zip(path, path[1:]):
        out.append(next(dl for dl in adj[sw] if dl.src_port == port and dl.dst == nxt))
    return out


# routes

class Member(NamedTuple):
    host: Iri
    ip: str
    switch: int
    port: int


@dataclass
class Route:
    key: tuple
    # switch -> set of egress ports (a path for unicast, a tree for multicast)
    hops: dict
    depth: dict
    links: frozenset
    installation: dict
    generation: int = 0


@dataclass
class RouteState:
    routes: dict = field(default_factory=dict)

    def get(self, key) -> Optional[Route]:
        return self.routes.get(key)

    def __len__(self):
        return len(self.routes)

    def __iter__(self):
        return iter(sorted(self.routes))


@dataclass(frozen=True)
class Write:
    request: WriteRequest
    delay_us: int = 0


@dataclass(frozen=True)
class SendPacketOut:
    packet_out: PacketOut


@dataclass(frozen=True)
class Log:
    event: str


ControlAction = Union[Write, SendPacketOut, Log]


def _entity_key(e) -> tuple:
    if isinstance(e, MulticastGroup):
        return ("group", e.group_id)
    return ("entry",) + e.key


MEMBERS_QUERY = """
SELECT ?m ?ip ?sid ?port WHERE {{
  ?p sn:hasIp "{ip}" .
  ?p sn:memberOf ?g .
  ?m sn:memberOf ?g .
  ?m sn:hasIp ?ip .
  ?m sn:attachedTo ?sw .
  ?sw sn:hasId ?sid .
  ?m sn:attachPort ?port
  FILTER(?m != ?p)
}}
"""


def host_for_ip(store: TripleStore, ip: str) -> Optional[Iri]:
    hits = sorted(t.subject.value for t in store.match(None, SNP.hasIp, Literal(ip)))
    return Iri(hits[0]) if hits else None


def resolve_swarm_members(publisher_ip: str, store: TripleStore) -> list[Member]:
    if host_for_ip(store, publisher_ip) is None:
        raise UnknownPublisher(f"no host with ip {publisher_ip} in the knowledge graph")
    table = sparql_query(store, MEMBERS_QUERY.format(ip=publisher_ip))
    members = [Member(m, ip.lexical, int(sid.lexical), int(port.lexical)) for m, ip, sid, port in table.rows]
    return sorted(members, key=lambda m: m.host.value)


def select_node(store: TripleStore, required_capabilities: int) -> Iri:
    best = None
    for t in store.match(None, RDF_TYPE, SNC.Host):
        host = t.subject
        caps = store.value(host, SNP.capabilities)
        cpu = store.value(host, SNP.cpuLoad)
        if caps is None or cpu is None:
            continue
        if int(caps.lexical) & required_capabilities != required_capabilities:
            continue
        rank = (int(cpu.lexical), host.value)
        if best is None or rank < best:
            best = rank
    if best is None:
        raise NoCapableNode(f"no host offers capabilities 0x{required_capabilities:04x}")
    return Iri(best[1])


class Controller:
    def __init__(self, topology: Topology, store: Optional[TripleStore] = None,
                 config: Optional[ControllerConfig] = None):
        self.topology = topology
        self.store = store if store is not None else TripleStore()
        self.config = config or ControllerConfig.from_dict(topology.controller)
        self.weights = LinkWeightTable(topology, self.config.alpha, self.config.congestion_threshold_us)
        self.routes = RouteState()
        self.bootstrapped = False
        self.report_seq = 0
        self.clock = 0
        self._next_group = 1
        # (switch, entity key) -> entity, from acknowledged writes
        self.installed: dict = {}
        self.log: list[str] = []

    def _log(self, message: str) -> Log:
        log.info(message)
        self.log.append(message)
        return Log(message)

    def bootstrap(self) -> None:
        if self.bootstrapped or len(self.store):
            raise DuplicateBootstrap("controller already bootstrapped")
        for t in rdfize_topology(self.topology):
            self.store.insert(t)
        self.weights = LinkWeightTable(self.topology, self.config.alpha, self.config.congestion_threshold_us)
        self.routes = RouteState()
        self.bootstrapped = True

    # packet-ins

    def handle_packet_in(self, pi: PacketIn, clock: Optional[int] = None) -> list[ControlAction]:
        if clock is not None:
            self.clock = clock
        if pi.reason == REASON_RTPS_INSPECT:
            return self.handle_rtps_packet_in(pi)
        if pi.reason == REASON_INT_REPORT:
            try:
                pkt = parse_packet(pi.frame)
            except PacketError as exc:
                return [self._log(f"unparseable INT report from s{pi.switch_id}: {exc}")]
            if pkt.int_stack is None:
                return [self._log(f"INT report from s{pi.switch_id} without INT stack")]
            actions = []
            self.ingest_int_report(report_from_frame(pi.switch_id, pkt), actions)
            actions.extend(self.reroute_on_congestion())
            return actions
        return [self._log(f"ignored packet-in reason 0x{pi.reason:02x} from s{pi.switch_id}")]

    def handle_rtps_packet_in(self, pi: PacketIn) -> list[ControlAction]:
        try:
            pkt = parse_packet(pi.frame)
        except PacketError as exc:
            return [self._log(f"unparseable packet-in from s{pi.switch_id}: {exc}")]
        if pkt.rtps is None or pkt.ipv4 is None:
            return [self._log(f"packet-in from s{pi.switch_id} is not RTPS")]
        publisher = self.topology.host_by_ip(pkt.ipv4.src_ip)
        try:
            members = resolve_swarm_members(pkt.ipv4.src_ip, self.store)
        except UnknownPublisher as exc:
            return [self._log(f"UnknownPublisher: {exc}")]
        if publisher is None:
            return [self._log(f"UnknownPublisher: {pkt.ipv4.src_ip} not in topology")]
        actions: list[ControlAction] = []
        route = self._multicast_route(publisher, members, actions)
        actions.extend(self._transition(route))
        if any(route.hops.values()):
            actions.append(SendPacketOut(PacketOut(publisher.switch, PORT_PIPELINE, pi.frame)))
        else:
            actions.append(self._log(f"publisher {publisher.id} has no reachable swarm members; deny installed"))
        return actions

    # route construction

    def _multicast_route(self, publisher, members, actions) -> Route:
        key = ("multicast", publisher.id)
        root = publisher.switch
        tree: dict[int, set] = {}
        depth = {root: 0}
        links = set()
        for m in members:
            try:
                path = compute_path(self.topology, self.weights, root, m.switch)
            except NoPath:
                actions.append(self._log(f"NoPath: member {m.host} unreachable from s{root}; skipped"))
                continue
            for i, (sw, port) in enumerate(path):
                depth.setdefault(sw, i)
                if port is not None:
                    tree.setdefault(sw, set()).add(port)
            links.update(path_links(self.topology, path))
            tree.setdefault(m.switch, set()).add(m.port)

        old = self.routes.get(key)
        old_groups = {}
        if old is not None:
            for sw, ents in old.installation.items():
                for e in ents.values():
                    if isinstance(e, MulticastGroup):
                        old_groups[sw] = e
        match = AclMatch.build(src_ip=publisher.ip, udp_dst_port=self.config.rtps_udp_port)
        prio = self.config.acl_priority_base
        installation = {}
        for sw in sorted(tree):
            ports = frozenset(tree[sw])
            prev = old_groups.get(sw)
            if prev is not None and prev.egress_ports == ports:
                group = prev
            else:
                group = MulticastGroup(self._allocate_group(), ports)
            entry = TableEntry.acl(match, prio, Multicast(group.group_id))
            installation[sw] = {_entity_key(group): group, _entity_key(entry): entry}
        if not tree:
            deny = TableEntry.acl(match, prio, Drop())
            installation[root] = {_entity_key(deny): deny}
        return Route(key, {sw: set(p) for sw, p in tree.items()}, depth, frozenset(links), installation)

    def _allocate_group(self) -> int:
        gid = self._next_group
        self._next_group = gid % 0xFFFF + 1
        return gid

    def _unicast_route(self, src, dst) -> Route:
        key = ("unicast", src.id, dst.id)
        path = compute_path(self.topology, self.weights, src.switch, dst.switch)
        path[-1] = (path[-1][0], dst.port)
        match = AclMatch.build(src_ip=src.ip, dst_ip=dst.ip)
        installation = {}
        for sw, port in path:
            entry = TableEntry.acl(match, self.config.unicast_priority, Forward(port))
            installation[sw] = {_entity_key(entry): entry}
        depth = {sw: i for i, (sw, _) in enumerate(path)}
        return Route(key, {sw: {port} for sw, port in path}, depth,
                     frozenset(path_links(self.topology, path)), installation)

    def install_unicast_route(self, src_host: str, dst_host: str) -> list[ControlAction]:
        src, dst = self.topology.host(src_host), self.topology.host(dst_host)
        try:
            route = self._unicast_route(src, dst)
        except NoPath as exc:
            return [self._log(f"NoPath: {exc}")]
        return self._transition(route)

    def _transition(self, new: Route) -> list[ControlAction]:
        """
        Writes moving from the installed version of ``new.key`` to ``new``.

        Inserts and modifies go first, deepest switch first, so every switch
        that starts steering traffic onto the new branch already finds its
        downstream entries. Stale entries and groups are removed afterwards
        (after ``drain_us`` when replacing a live route).
        """
        old = self.routes.get(new.key)
        old_inst = old.installation if old is not None else {}
        new.generation = old.generation + 1 if old is not None else 1
        # what the switches hold: the old route, overridden by acknowledged writes
        present = {(sw, k): e for sw, ents in old_inst.items() for k, e in ents.items()}
        present.update(self.installed)
        make = []
        for sw in sorted(new.installation, key=lambda s: (-new.depth.get(s, 0), s)):
            groups, entries = [], []
            for k, e in sorted(new.installation[sw].items()):
                bucket = groups if isinstance(e, MulticastGroup) else entries
                if (sw, k) not in present:
                    bucket.append(Update(WriteOp.INSERT, e))
                elif present[(sw, k)] != e:
                    bucket.append(Update(WriteOp.MODIFY, e))
            if groups or entries:
                make.append(Write(WriteRequest(sw, tuple(groups + entries))))
        brk = []
        for sw in sorted(old_inst, key=lambda s: (old.depth.get(s, 0), s)):
            after = new.installation.get(sw, {})
            stale = [(k, e) for k, e in sorted(old_inst[sw].items()) if k not in after]
            entries = [Update(WriteOp.DELETE, e) for k, e in stale if not isinstance(e, MulticastGroup)]
            groups = [Update(WriteOp.DELETE, e) for k, e in stale if isinstance(e, MulticastGroup)]
            if entries or groups:
                brk.append(Write(WriteRequest(sw, tuple(entries + groups)), delay_us=self.config.drain_us))
        self.routes.routes[new.key] = new
        return make + brk

    # telemetry

    def _resolve_host(self, ip: str) -> Optional[Iri]:
        return host_for_ip(self.store, ip)

    def ingest_int_report(self, r: IntReport, actions: Optional[list] = None) -> list[DirectedLink]:
        self.report_seq += 1
        triples, updates = rdfize_int_report(r, self.report_seq, self.clock, self._resolve_host)
        for t in triples:
            self.store.insert(t)
        for t in updates:
            self.store.upsert_functional(t.subject, t.predicate, t.object)
        updated = []
        for a, b in zip(r.hops, r.hops[1:]):
            if a.switch_id not in self.topology.switches or b.switch_id not in self.topology.switches:
                msg = f"UnknownSwitchInReport: hop s{a.switch_id}->s{b.switch_id} in report {self.report_seq}"
                entry = self._log(msg)
                if actions is not None:
                    actions.append(entry)
                continue
            dl = self.topology.link_between(a.switch_id, b.switch_id)
            if dl is None:
                entry = self._log(f"report {self.report_seq}: s{a.switch_id} and s{b.switch_id} are not adjacent")
                if actions is not None:
                    actions.append(entry)
                continue
            self.weights.update(dl, b.hop_latency_us, self.clock)
            updated.append(dl)
        return updated

    def reroute_on_congestion(self) -> list[ControlAction]:
        congested = set(detect_congestion(self.weights))
        if not congested:
            return []
        actions = []
        for key in list(self.routes):
            route = self.routes.get(key)
            if not route.links & congested:
                continue
            try:
                if key[0] == "unicast":
                    new = self._unicast_route(self.topology.host(key[1]), self.topology.host(key[2]))
                else:
                    publisher = self.topology.host(key[1])
                    members = resolve_swarm_members(publisher.ip, self.store)
                    new = self._multicast_route(publisher, members, actions)
            except NoPath as exc:
                actions.append(self._log(f"NoPath: {key} left in place: {exc}"))
                continue
            if new.hops == route.hops:
                actions.append(self._log(f"route {key} crosses congested links but has no better alternative"))
                continue
            actions.extend(self._transition(new))
            actions.append(self._log(f"rerouted {key} generation {new.generation}"))
        return actions

    def select_node(self, required_capabilities: int) -> Iri:
        return select_node(self.store, required_capabilities)

    def filter_deferred(self, req: WriteRequest) -> WriteRequest:
        """Drop deferred deletes of entities that a newer route version still uses."""
        live = {k for r in self.routes.routes.values() for k in r.installation.get(req.switch_id, {})}
        keep = tuple(u for u in req.updates if _entity_key(u.entity) not in live)
        return WriteRequest(req.switch_id, keep)

    # DKG mirror of switch state

    def on_write_reply(self, req: WriteRequest, reply: WriteReply) -> None:
        for update, status in zip(req.updates, reply.statuses):
            if status != Status.OK:
                continue
            slot = (req.switch_id, _entity_key(update.entity))
            if update.op == WriteOp.DELETE:
                self.installed.pop(slot, None)
            else:
                self.installed[slot] = update.entity
            if not isinstance(update.entity, TableEntry):
                continue
            me = flow_iri(req.switch_id, update.entity)
            for t in self.store.match(me, None, None):
                self.store.remove(t)
            if update.op != WriteOp.DELETE:
                for t in rdfize_table_entry(req.switch_id, update.entity):
                    self.store.insert(t)


def bootstrap(topology: Topology, store: TripleStore, config: Optional[ControllerConfig] = None) -> Controller:
    ctl = Controller(topology, store, config)
    ctl.bootstrap()
    return ctl
