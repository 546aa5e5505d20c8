"""
Deterministic discrete-event simulation of hosts, links and switches.

Frames travel between nodes as raw bytes and are re-parsed at every switch.
The clock is an integer number of microseconds. Events with equal timestamps
are processed in insertion order.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional

from .errors import PacketError, UnknownGroup, UnknownHost, UnknownSwitch
from .packet import (
    PORT_FLOOD,
    PORT_PIPELINE,
    REASON_INT_REPORT,
    IntStack,
    NodeMetadata,
    RTPSHeader,
    build_udp_frame,
    emit_packet,
    ip_to_int,
    mac_to_bytes,
    parse_packet,
)
from .switch import (
    Drop,
    IntReport,
    Multicast,
    SendToCpu,
    SwitchState,
    apply_pipeline,
    multicast_replicate,
    process_int,
    report_frame,
)
from .topology import HostSpec, Topology

log = logging.getLogger(__name__)

HOST_SRC_PORT = 49152


@dataclass(frozen=True)
class ObservableEvent:
    time: int
    kind: str  # deliver | packet_in | drop
    node: str
    frame: bytes = field(repr=False, default=b"")
    port: Optional[int] = None
    reason: Optional[int] = None
    detail: str = ""

    def line(self) -> str:
        parts = [f"t={self.time}", self.kind, self.node]
        if self.port is not None:
            parts.append(f"port={self.port}")
        if self.reason is not None:
            parts.append(f"reason=0x{self.reason:02x}")
        parts.append(f"len={len(self.frame)}")
        parts.append(f"frame={self.frame.hex()}")
        if self.detail:
            parts.append(self.detail)
        return " ".join(parts)


@dataclass
class HostState:
    spec: HostSpec
    cpu_load_pct: int

    @property
    def node_metadata(self) -> NodeMetadata:
        s = self.spec
        return NodeMetadata(s.node_id, self.cpu_load_pct, s.loc_x, s.loc_y, s.capabilities)


def multicast_mac(ip: str) -> str:
    low = ip_to_int(ip) & 0x7FFFFF
    return "01:00:5e:%02x:%02x:%02x" % (low >> 16, (low >> 8) & 0xFF, low & 0xFF)


class Network:
    """Mutable simulation state built from a Topology."""

    def __init__(self, topology: Topology):
        self.topology = topology
        self.clock = 0
        self._queue = []
        self._seq = itertools.count()
        self.trace: list[str] = []
        self.switches: dict[int, SwitchState] = {}
        self.hosts: dict[str, HostState] = {}
        # (switch, port) -> ("host", host_id) | ("switch", switch_id, port)
        self.peers: dict[tuple[int, int], tuple] = {}
        # (switch, port) -> one-way latency of the attached link
        self.link_latency: dict[tuple[int, int], int] = {}

        for spec in topology.switches.values():
            self.switches[spec.id] = SwitchState(spec.id, int_role=spec.int_role,
                                                 proc_latency_us=spec.proc_latency_us)
        for link in topology.links:
            self._attach(link.a, ("switch", *link.b), link.latency_us)
            self._attach(link.b, ("switch", *link.a), link.latency_us)
        for h in topology.hosts.values():
            self.hosts[h.id] = HostState(h, h.cpu_load_pct)
            self._attach((h.switch, h.port), ("host", h.id), h.latency_us)

    def _attach(self, endpoint, peer, latency):
        self.peers[endpoint] = peer
        self.link_latency[endpoint] = latency
        self.switches[endpoint[0]].ports[endpoint[1]] = peer

    # lookups

    def switch(self, sid: int) -> SwitchState:
        try:
            return self.switches[sid]
        except KeyError:
            raise UnknownSwitch(f"unknown switch {sid}") from None

    def host(self, hid: str) -> HostState:
        try:
            return self.hosts[hid]
        except KeyError:
            raise UnknownHost(f"unknown host {hid!r}") from None

    def host_by_ip(self, ip: str) -> Optional[HostState]:
        for h in self.hosts.values():
            if h.spec.ip == ip:
                return h
        return None

    # scenario knobs

    def set_cpu(self, hid: str, pct: int) -> None:
        if not 0 <= pct <= 100:
            raise ValueError("cpu load must be within [0, 100]")
        self.host(hid).cpu_load_pct = pct

    def set_link_latency(self, name: str, latency_us: int) -> None:
        link = self.topology.find_link(name)
        self.link_latency[link.a] = latency_us
        self.link_latency[link.b] = latency_us

    def set_proc_latency(self, sid: int, latency_us: int) -> None:
        self.switch(sid).proc_latency_us = latency_us

    # event queue

    def schedule(self, time: int, event: tuple) -> None:
        heapq.heappush(self._queue, (time, next(self._seq), event))

    def pending(self) -> int:
        return len(self._queue)

    def next_time(self) -> Optional[int]:
        return self._queue[0][0] if self._queue else None

    def step(self) -> list[ObservableEvent]:
        if not self._queue:
            return []
        time, _, event = heapq.heappop(self._queue)
        self.clock = max(self.clock, time)
        kind = event[0]
        if kind == "switch":
            out = self._switch_arrival(event[1], event[2], event[3])
        elif kind == "host":
            out = [ObservableEvent(self.clock, "deliver", event[1], event[2])]
        elif kind == "packet_out":
            out = self._packet_out(event[1], event[2], event[3])
        else:
            raise AssertionError(f"unknown event {kind}")
        self.trace.extend(e.line() for e in out)
        return out

    def run_until(self, time: int) -> list[ObservableEvent]:
        out = []
        while self._queue and self._queue[0][0] <= time:
            out.extend(self.step())
        self.clock = max(self.clock, time)
        return out

    # injection

    def inject_from_host(self, host_id: str, dst_ip: str, dst_port: int, rtps: bool = False,
                         int_enabled: bool = False, payload: bytes = b"", at: Optional[int] = None) -> bytes:
        """Build a frame at a host and schedule its arrival at the attachment switch."""
        host = self.host(host_id)
        spec = host.spec
        dst = self.host_by_ip(dst_ip)
        if dst is not None:
            dst_mac = dst.spec.mac
        elif ip_to_int(dst_ip) >> 28 == 0xE:
            dst_mac = multicast_mac(dst_ip)
        else:
            dst_mac = "ff:ff:ff:ff:ff:ff"
        header = None
        if rtps:
            guid = spec.node_id.to_bytes(4, "big") + mac_to_bytes(spec.mac) + b"\x00\x00"
            header = RTPSHeader(guid_prefix=guid)
        int_stack = IntStack(node_meta=host.node_metadata) if int_enabled else None
        pkt = build_udp_frame(spec.mac, dst_mac, spec.ip, dst_ip, HOST_SRC_PORT, dst_port,
                              payload=payload, rtps=header, int_stack=int_stack)
        frame = emit_packet(pkt)
        start = self.clock if at is None else max(at, self.clock)
        self.schedule(start + spec.latency_us, ("switch", spec.switch, spec.port, frame))
        return frame

    def packet_out(self, switch_id: int, egress_port: int, frame: bytes, at: Optional[int] = None) -> None:
        self.switch(switch_id)
        self.schedule(self.clock if at is None else at, ("packet_out", switch_id, egress_port, frame))

    # switch processing

    def _switch_arrival(self, sid, in_port, frame):
        s = self.switches[sid]
        node = f"s{sid}"
        try:
            pkt = parse_packet(frame)
        except PacketError as exc:
            return [ObservableEvent(self.clock, "drop", node, frame, in_port, detail=f"malformed:{type(exc).__name__}")]
        action = apply_pipeline(s, pkt, in_port)
        if isinstance(action, Drop):
            return [ObservableEvent(self.clock, "drop", node, frame, in_port, detail="action")]
        if isinstance(action, SendToCpu):
            return [ObservableEvent(self.clock, "packet_in", node, frame, in_port, action.reason)]
        if isinstance(action, Multicast):
            try:
                copies = multicast_replicate(s, action.group_id, pkt, in_port)
            except UnknownGroup:
                return [ObservableEvent(self.clock, "drop", node, frame, in_port, detail="unknown-group")]
        else:
            copies = [(action.port, pkt)]
        return self._egress(s, copies, in_port)

    def _packet_out(self, sid, egress_port, frame):
        s = self.switches[sid]
        if egress_port == PORT_PIPELINE:
            return self._switch_arrival(sid, None, frame)
        try:
            pkt = parse_packet(frame)
        except PacketError as exc:
            return [ObservableEvent(self.clock, "drop", f"s{sid}", frame, detail=f"malformed:{type(exc).__name__}")]
        if egress_port == PORT_FLOOD:
            ports = sorted(s.ports)
        else:
            ports = [egress_port]
        return self._egress(s, [(p, pkt) for p in ports], None)

    def _egress(self, s: SwitchState, copies, in_port):
        events = []
        node = f"s{s.switch_id}"
        for port, pkt in copies:
            peer = self.peers.get((s.switch_id, port))
            if peer is None:
                events.append(ObservableEvent(self.clock, "drop", node, emit_packet(pkt), port, detail="no-link"))
                continue
            out, report = process_int(s, pkt, to_host=peer[0] == "host")
            if report is not None:
                events.append(self._report_event(s, port, pkt, report))
            delay = self.clock + self.link_latency[(s.switch_id, port)] + s.proc_latency_us
            frame = emit_packet(out)
            if peer[0] == "host":
                self.schedule(delay, ("host", peer[1], frame))
            else:
                self.schedule(delay, ("switch", peer[1], peer[2], frame))
        return events

    def _report_event(self, s, port, pkt, report: IntReport):
        frame = emit_packet(report_frame(pkt, report))
        return ObservableEvent(self.clock, "packet_in", f"s{s.switch_id}", frame, port, REASON_INT_REPORT)


def step(net: Network) -> list[ObservableEvent]:
    return net.step()


def inject_from_host(net: Network, host_id, dst_ip, dst_port, rtps=False, int_enabled=False, payload=b""):
    return net.inject_from_host(host_id, dst_ip, dst_port, rtps=rtps, int_enabled=int_enabled, payload=payload)
