"""
Knowledge generator: network objects to RDF triples.

Everything is mapped onto a small closed vocabulary under ``urn:swarm-net:``
(prefix ``sn:``). Nodes are always minted IRIs, never blank nodes, so the
output of every function here is deterministic and sorted.
"""

from __future__ import annotations

import hashlib
import warnings
from typing import Callable, Optional
from urllib.parse import quote

from .errors import EmptyId, UnknownSourceHost
from .rdf import RDF, Iri, Literal, Triple, sort_triples
from .switch import Drop, Forward, IntReport, Multicast, SendToCpu, TableEntry, TableId
from .topology import HostSpec, LinkSpec, Topology

SN = "urn:swarm-net:"

CLASS_NAMES = ("Switch", "Host", "Link", "Port", "SwarmGroup", "FlowEntry", "IntReport", "Hop")
PREDICATE_NAMES = (
    "hasId", "memberOf", "hasIp", "hasMac", "attachedTo", "attachPort", "connects", "latencyUs",
    "hopLatencyUs", "cpuLoad", "locX", "locY", "capabilities", "onSwitch", "table", "priority",
    "actionKind", "actionPort", "reportedAt", "hopIndex", "observedSwitch",
)
FUNCTIONAL_NAMES = ("cpuLoad", "locX", "locY", "capabilities", "hasIp")
IRI_KINDS = ("switch", "host", "group", "link", "flow", "report", "hop")


class _Namespace:
    def __init__(self, base, names):
        self._base = base
        for name in names:
            setattr(self, name, Iri(base + name))

    def __getitem__(self, name):
        return getattr(self, name)


SNC = _Namespace(SN, CLASS_NAMES)
SNP = _Namespace(SN, PREDICATE_NAMES)
RDF_TYPE = Iri(RDF + "type")

CLASSES = frozenset(SNC[n] for n in CLASS_NAMES)
PREDICATES = frozenset([SNP[n] for n in PREDICATE_NAMES] + [RDF_TYPE])
FUNCTIONAL = frozenset(SNP[n] for n in FUNCTIONAL_NAMES)


def mint_iri(kind: str, *parts) -> Iri:
    if kind not in IRI_KINDS:
        raise ValueError(f"unknown IRI kind {kind!r}")
    if not parts or any(str(p) == "" for p in parts):
        raise EmptyId(f"{kind} IRI needs non-empty id parts")
    return Iri(SN + kind + ":" + ":".join(quote(str(p), safe="") for p in parts))


def switch_iri(sid: int) -> Iri:
    return mint_iri("switch", sid)


def host_iri(hid: str) -> Iri:
    return mint_iri("host", hid)


def group_iri(swarm_id: str) -> Iri:
    return mint_iri("group", swarm_id)


def link_iri(link: LinkSpec) -> Iri:
    return mint_iri("link", *link.a, *link.b)


def _t(s, p, o) -> Triple:
    return Triple(s, p, o)


def rdfize_host(h: HostSpec) -> list[Triple]:
    me = host_iri(h.id)
    return sort_triples([
        _t(me, RDF_TYPE, SNC.Host),
        _t(me, SNP.hasIp, Literal(h.ip)),
        _t(me, SNP.hasMac, Literal(h.mac)),
        _t(me, SNP.attachedTo, switch_iri(h.switch)),
        _t(me, SNP.attachPort, Literal.integer(h.port)),
        _t(me, SNP.memberOf, group_iri(h.swarm_id)),
        _t(me, SNP.capabilities, Literal.integer(h.capabilities)),
        _t(me, SNP.cpuLoad, Literal.integer(h.cpu_load_pct)),
        _t(me, SNP.locX, Literal.integer(h.loc_x)),
        _t(me, SNP.locY, Literal.integer(h.loc_y)),
    ])


def rdfize_topology(topo: Topology) -> list[Triple]:
    out = []
    for sid in topo.switches:
        out.append(_t(switch_iri(sid), RDF_TYPE, SNC.Switch))
        out.append(_t(switch_iri(sid), SNP.hasId, Literal.integer(sid)))
    for link in topo.links:
        me = link_iri(link)
        out.append(_t(me, RDF_TYPE, SNC.Link))
        out.append(_t(me, SNP.connects, switch_iri(link.a[0])))
        out.append(_t(me, SNP.connects, switch_iri(link.b[0])))
        out.append(_t(me, SNP.latencyUs, Literal.integer(link.latency_us)))
    for swarm in sorted({h.swarm_id for h in topo.hosts.values()}):
        out.append(_t(group_iri(swarm), RDF_TYPE, SNC.SwarmGroup))
    for h in topo.hosts.values():
        out.extend(rdfize_host(h))
    return sort_triples(out)


_ACTION_KINDS = {Forward: "forward", Drop: "drop", SendToCpu: "send_to_cpu", Multicast: "multicast"}


def flow_iri(switch_id: int, e: TableEntry) -> Iri:
    digest = hashlib.sha256(e.match.key_bytes() + (e.priority or 0).to_bytes(4, "big")).hexdigest()[:16]
    return mint_iri("flow", switch_id, e.table.name.lower(), digest)


def rdfize_table_entry(switch_id: int, e: TableEntry) -> list[Triple]:
    me = flow_iri(switch_id, e)
    out = [
        _t(me, RDF_TYPE, SNC.FlowEntry),
        _t(me, SNP.onSwitch, switch_iri(switch_id)),
        _t(me, SNP.table, Literal(e.table.name.lower())),
        _t(me, SNP.actionKind, Literal(_ACTION_KINDS[type(e.action)])),
    ]
    if e.table == TableId.ACL:
        out.append(_t(me, SNP.priority, Literal.integer(e.priority)))
    if isinstance(e.action, Forward):
        out.append(_t(me, SNP.actionPort, Literal.integer(e.action.port)))
    elif isinstance(e.action, Multicast):
        out.append(_t(me, SNP.actionPort, Literal.integer(e.action.group_id)))
    return sort_triples(out)


def rdfize_int_report(r: IntReport, seq: int, clock: int,
                      resolve_host: Optional[Callable[[str], Optional[Iri]]] = None):
    """
    Map one sink report to ``(report_triples, node_updates)``.

    Report and hop triples are append-only history. ``node_updates`` holds
    the functional host properties carried in the node metadata block; the
    caller upserts them. When the source IP resolves to no host an
    UnknownSourceHost warning is issued and the updates are empty.
    """
    me = mint_iri("report", seq)
    triples = [
        _t(me, RDF_TYPE, SNC.IntReport),
        _t(me, SNP.reportedAt, Literal.integer(clock)),
    ]
    for i, hop in enumerate(r.hops):
        hop_node = mint_iri("hop", seq, i)
        triples.append(_t(hop_node, SNP.hopIndex, Literal.integer(i)))
        triples.append(_t(hop_node, SNP.observedSwitch, switch_iri(hop.switch_id)))
        triples.append(_t(hop_node, SNP.hopLatencyUs, Literal.integer(hop.hop_latency_us)))

    updates = []
    if r.node_meta is not None:
        host = resolve_host(r.src_ip) if resolve_host is not None else None
        if host is None:
            warnings.warn(UnknownSourceHost(f"no host with ip {r.src_ip}; node metadata skipped"), stacklevel=2)
        else:
            m = r.node_meta
            updates = [
                _t(host, SNP.cpuLoad, Literal.integer(m.cpu_load_pct)),
                _t(host, SNP.locX, Literal.integer(m.loc_x)),
                _t(host, SNP.locY, Literal.integer(m.loc_y)),
                _t(host, SNP.capabilities, Literal.integer(m.capabilities)),
            ]
    return sort_triples(triples), updates
