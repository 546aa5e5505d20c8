"""
A running deployment: simulated network, one control channel per switch,
and the controller with its knowledge graph.

Packet-ins, writes, replies and packet-outs all cross the byte-level channel,
so every control interaction exercises the message codec.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass
from typing import Callable, Optional

from .channel import Channel, PacketIn, PacketOut, WriteRequest, dispatch_write
from .controller import Controller, ControllerConfig, Log, SendPacketOut, Write
from .network import Network, ObservableEvent
from .store import TripleStore
from .switch import MulticastGroup
from .topology import Topology

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WriteRecord:
    time: int
    switch_id: int
    op: str
    entity: object
    status: str

    def line(self) -> str:
        return f"t={self.time} s{self.switch_id} {self.op} {_describe(self.entity)} -> {self.status}"


def _describe(entity) -> str:
    if isinstance(entity, MulticastGroup):
        return f"group id={entity.group_id} ports={sorted(entity.egress_ports)}"
    m = entity.match
    prio = f" prio={entity.priority}" if entity.priority is not None else ""
    return f"{entity.table.name.lower()} key={m.key_bytes().hex()}{prio} action={entity.action}"


class Deployment:
    def __init__(self, topology: Topology, config: Optional[ControllerConfig] = None,
                 store: Optional[TripleStore] = None, bootstrap: bool = True):
        self.topology = topology
        self.net = Network(topology)
        self.controller = Controller(topology, store, config)
        self.channels = {sid: Channel(sid) for sid in sorted(topology.switches)}
        self.events: list[ObservableEvent] = []
        self.writes: list[WriteRecord] = []
        self.logs: list[str] = []
        self._deferred = []
        self._seq = itertools.count()
        # called after every applied write request (tests hook safety checks here)
        self.on_write: Optional[Callable[[WriteRequest], None]] = None
        if bootstrap:
            self.controller.bootstrap()

    @property
    def clock(self) -> int:
        return self.net.clock

    @property
    def store(self) -> TripleStore:
        return self.controller.store

    # driving the simulation

    def run_until(self, time: int) -> list[ObservableEvent]:
        out = []
        while True:
            t_net = self.net.next_time()
            t_ctl = self._deferred[0][0] if self._deferred else None
            candidates = [t for t in (t_net, t_ctl) if t is not None and t <= time]
            if not candidates:
                break
            t = min(candidates)
            if t_ctl is not None and t_ctl == t:
                _, _, req = heapq.heappop(self._deferred)
                self.net.clock = max(self.net.clock, t)
                req = self.controller.filter_deferred(req)
                if req.updates:
                    self._write(req)
                continue
            out.extend(self._observe(self.net.step()))
        self.net.clock = max(self.net.clock, time)
        return out

    def run(self, max_time: int = 10 ** 12) -> list[ObservableEvent]:
        """Run until both the event queue and deferred writes are exhausted."""
        out = []
        while self.net.pending() or self._deferred:
            nxt = min(t for t in (self.net.next_time(), self._deferred[0][0] if self._deferred else None)
                      if t is not None)
            if nxt > max_time:
                break
            out.extend(self.run_until(nxt))
        return out

    def _observe(self, events: list[ObservableEvent]) -> list[ObservableEvent]:
        self.events.extend(events)
        for e in events:
            if e.kind == "packet_in":
                sid = int(e.node[1:])
                chan = self.channels[sid]
                chan.send_to_controller(PacketIn(sid, e.port or 0, e.reason, e.frame))
                for msg in chan.recv_at_controller():
                    self.apply(self.controller.handle_packet_in(msg, clock=self.clock))
        return events

    # control actions

    def apply(self, actions) -> None:
        for action in actions:
            if isinstance(action, Write):
                if action.delay_us:
                    heapq.heappush(self._deferred, (self.clock + action.delay_us, next(self._seq), action.request))
                else:
                    self._write(action.request)
            elif isinstance(action, SendPacketOut):
                po = action.packet_out
                chan = self.channels[po.switch_id]
                chan.send_to_switch(po)
                for msg in chan.recv_at_switch():
                    self.net.packet_out(msg.switch_id, msg.egress_port, msg.frame)
            elif isinstance(action, Log):
                self.logs.append(f"t={self.clock} {action.event}")
            else:
                raise TypeError(f"unknown control action {action!r}")

    def _write(self, req: WriteRequest) -> None:
        chan = self.channels[req.switch_id]
        chan.send_to_switch(req)
        for msg in chan.recv_at_switch():
            reply = dispatch_write(self.net, msg)
            chan.send_to_controller(reply)
            for r in chan.recv_at_controller():
                self.controller.on_write_reply(msg, r)
                for u, status in zip(msg.updates, r.statuses):
                    self.writes.append(WriteRecord(self.clock, msg.switch_id, u.op.name, u.entity, status.name))
        if self.on_write is not None:
            self.on_write(req)

    # conveniences

    def install_route(self, src_host: str, dst_host: str) -> None:
        self.apply(self.controller.install_unicast_route(src_host, dst_host))

    def inject(self, host_id: str, dst_ip: str, dst_port: int, rtps=False, int_enabled=False,
               payload=b"", at: Optional[int] = None) -> bytes:
        return self.net.inject_from_host(host_id, dst_ip, dst_port, rtps=rtps, int_enabled=int_enabled,
                                         payload=payload, at=at)

    def packet_out(self, switch_id: int, egress_port: int, frame: bytes) -> None:
        self.apply([SendPacketOut(PacketOut(switch_id, egress_port, frame))])

    def deliveries(self, since: int = 0) -> list[ObservableEvent]:
        return [e for e in self.events[since:] if e.kind == "deliver"]
