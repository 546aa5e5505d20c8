"""
Match-action state of a single P4-style switch.

Two tables: a ternary ACL over (src_ip, dst_ip, udp_dst_port) with priorities
and an exact-match L2 table on dst_mac. Multicast groups live beside the
tables and are written through the same path.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .errors import AlreadyExists, InvalidEntry, NotFound, UnknownGroup
from .packet import (
    INT_MAX_HOPS,
    PACKET_IN_REASONS,
    REASON_RTPS_INSPECT,
    HeaderStack,
    IntHopMetadata,
    IntStack,
    NodeMetadata,
    ip_to_int,
    mac_to_bytes,
)


class TableId(enum.IntEnum):
    ACL = 1
    L2 = 2


class WriteOp(enum.IntEnum):
    INSERT = 1
    MODIFY = 2
    DELETE = 3


class IntRole(enum.Enum):
    NONE = "none"
    TRANSIT = "transit"
    SINK = "sink"


# actions

@dataclass(frozen=True)
class Forward:
    port: int


@dataclass(frozen=True)
class Drop:
    pass


@dataclass(frozen=True)
class SendToCpu:
    reason: int


@dataclass(frozen=True)
class Multicast:
    group_id: int


Action = Union[Forward, Drop, SendToCpu, Multicast]


# match keys

_ACL_KEY = struct.Struct("!IIIIHH")


@dataclass(frozen=True)
class AclMatch:
    """Ternary match. A zero mask is a wildcard for that field."""

    src_ip: int = 0
    src_mask: int = 0
    dst_ip: int = 0
    dst_mask: int = 0
    udp_dst_port: int = 0
    port_mask: int = 0

    def __post_init__(self):
        # canonical form: value bits outside the mask are cleared
        object.__setattr__(self, "src_ip", self.src_ip & self.src_mask)
        object.__setattr__(self, "dst_ip", self.dst_ip & self.dst_mask)
        object.__setattr__(self, "udp_dst_port", self.udp_dst_port & self.port_mask)

    @classmethod
    def build(cls, src_ip=None, dst_ip=None, udp_dst_port=None) -> AclMatch:
        """Exact match on the given fields, wildcard on the rest."""
        return cls(
            src_ip=ip_to_int(src_ip) if src_ip is not None else 0,
            src_mask=0xFFFFFFFF if src_ip is not None else 0,
            dst_ip=ip_to_int(dst_ip) if dst_ip is not None else 0,
            dst_mask=0xFFFFFFFF if dst_ip is not None else 0,
            udp_dst_port=udp_dst_port if udp_dst_port is not None else 0,
            port_mask=0xFFFF if udp_dst_port is not None else 0,
        )

    def key_bytes(self) -> bytes:
        return _ACL_KEY.pack(self.src_ip & self.src_mask, self.src_mask,
                             self.dst_ip & self.dst_mask, self.dst_mask,
                             self.udp_dst_port & self.port_mask, self.port_mask)

    @classmethod
    def from_key_bytes(cls, raw: bytes) -> AclMatch:
        return cls(*_ACL_KEY.unpack(raw))

    def matches(self, src_ip: int, dst_ip: int, udp_dst_port: int) -> bool:
        return (src_ip & self.src_mask == self.src_ip & self.src_mask
                and dst_ip & self.dst_mask == self.dst_ip & self.dst_mask
                and udp_dst_port & self.port_mask == self.udp_dst_port & self.port_mask)


@dataclass(frozen=True)
class L2Match:
    dst_mac: str

    def key_bytes(self) -> bytes:
        return mac_to_bytes(self.dst_mac)


ACL_KEY_LEN = _ACL_KEY.size
L2_KEY_LEN = 6


@dataclass(frozen=True)
class TableEntry:
    table: TableId
    match: Union[AclMatch, L2Match]
    action: Action
    priority: Optional[int] = None

    @classmethod
    def acl(cls, match: AclMatch, priority: int, action: Action) -> TableEntry:
        return cls(TableId.ACL, match, action, priority)

    @classmethod
    def l2(cls, dst_mac: str, action: Action) -> TableEntry:
        return cls(TableId.L2, L2Match(dst_mac), action)

    @property
    def key(self) -> tuple:
        """Identity of the entry within its table: key bytes plus priority."""
        return (self.table, self.match.key_bytes(), self.priority)

    def sort_key(self) -> tuple:
        return (-(self.priority or 0), self.match.key_bytes())


@dataclass(frozen=True)
class MulticastGroup:
    group_id: int
    egress_ports: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "egress_ports", frozenset(self.egress_ports))


Entity = Union[TableEntry, MulticastGroup]


@dataclass(frozen=True)
class IntReport:
    """Telemetry extracted at an INT sink."""

    sink_switch: int
    src_ip: str
    dst_ip: str
    node_meta: Optional[NodeMetadata]
    hops: tuple[IntHopMetadata, ...]


@dataclass
class SwitchState:
    switch_id: int
    ports: dict = field(default_factory=dict)
    int_role: IntRole = IntRole.NONE
    proc_latency_us: int = 0
    tables: dict = field(default_factory=lambda: {TableId.ACL: {}, TableId.L2: {}})
    multicast_groups: dict = field(default_factory=dict)
    hop_cap_exceeded: int = 0


def _validate_entry(s: SwitchState, e: TableEntry) -> None:
    if e.table == TableId.ACL:
        if not isinstance(e.match, AclMatch) or e.priority is None or not 0 <= e.priority <= 0xFFFFFFFF:
            raise InvalidEntry("ACL entries need an AclMatch and a u32 priority")
    elif e.table == TableId.L2:
        if not isinstance(e.match, L2Match) or e.priority is not None:
            raise InvalidEntry("L2 entries need an L2Match and no priority")
    action = e.action
    if isinstance(action, Forward) and action.port not in s.ports:
        raise InvalidEntry(f"switch {s.switch_id} has no port {action.port}")
    if isinstance(action, SendToCpu) and action.reason not in PACKET_IN_REASONS:
        raise InvalidEntry(f"packet-in reason 0x{action.reason:02x} not allowed")
    if isinstance(action, Multicast) and action.group_id not in s.multicast_groups:
        raise UnknownGroup(f"switch {s.switch_id} has no multicast group {action.group_id}")


def table_write(s: SwitchState, op: WriteOp, e: TableEntry) -> int:
    """Apply one write and return the resulting table size."""
    _validate_entry(s, e)
    table = s.tables[e.table]
    key = e.key
    if op == WriteOp.INSERT:
        if key in table:
            raise AlreadyExists(f"entry already present in {e.table.name}")
        table[key] = e
    elif op == WriteOp.MODIFY:
        if key not in table:
            raise NotFound(f"no such entry in {e.table.name}")
        table[key] = replace(table[key], action=e.action)
    elif op == WriteOp.DELETE:
        if key not in table:
            raise NotFound(f"no such entry in {e.table.name}")
        del table[key]
    else:
        raise InvalidEntry(f"unknown write op {op!r}")
    return len(table)


def group_write(s: SwitchState, op: WriteOp, g: MulticastGroup) -> int:
    if op != WriteOp.DELETE:
        if g.group_id == 0 or not g.egress_ports:
            raise InvalidEntry("multicast group needs id != 0 and at least one port")
        missing = sorted(p for p in g.egress_ports if p not in s.ports)
        if missing:
            raise InvalidEntry(f"switch {s.switch_id} has no ports {missing}")
    groups = s.multicast_groups
    if op == WriteOp.INSERT:
        if g.group_id in groups:
            raise AlreadyExists(f"group {g.group_id} exists")
        groups[g.group_id] = g
    elif op == WriteOp.MODIFY:
        if g.group_id not in groups:
            raise NotFound(f"group {g.group_id} absent")
        groups[g.group_id] = g
    elif op == WriteOp.DELETE:
        if g.group_id not in groups:
            raise NotFound(f"group {g.group_id} absent")
        del groups[g.group_id]
    else:
        raise InvalidEntry(f"unknown write op {op!r}")
    return len(groups)


def entity_write(s: SwitchState, op: WriteOp, entity: Entity) -> int:
    if isinstance(entity, MulticastGroup):
        return group_write(s, op, entity)
    return table_write(s, op, entity)


def table_read(s: SwitchState, table_id: TableId) -> list[TableEntry]:
    return sorted(s.tables[TableId(table_id)].values(), key=TableEntry.sort_key)


def groups_read(s: SwitchState) -> list[MulticastGroup]:
    return [s.multicast_groups[g] for g in sorted(s.multicast_groups)]


def acl_fields(pkt: HeaderStack) -> tuple[int, int, int]:
    # absent layers read as zero
    src = ip_to_int(pkt.ipv4.src_ip) if pkt.ipv4 else 0
    dst = ip_to_int(pkt.ipv4.dst_ip) if pkt.ipv4 else 0
    port = pkt.udp.dst_port if pkt.udp else 0
    return src, dst, port


def acl_lookup(s: SwitchState, pkt: HeaderStack) -> Optional[TableEntry]:
    fields = acl_fields(pkt)
    best = None
    for e in s.tables[TableId.ACL].values():
        if e.match.matches(*fields) and (best is None or e.sort_key() < best.sort_key()):
            best = e
    return best


def apply_pipeline(s: SwitchState, pkt: HeaderStack, ingress_port: int) -> Action:
    hit = acl_lookup(s, pkt)
    if hit is not None:
        action = hit.action
    elif pkt.rtps is not None:
        return SendToCpu(REASON_RTPS_INSPECT)
    else:
        l2 = s.tables[TableId.L2].get((TableId.L2, mac_to_bytes(pkt.eth.dst_mac), None))
        action = l2.action if l2 is not None else Drop()
    if isinstance(action, Multicast) and action.group_id not in s.multicast_groups:
        raise UnknownGroup(f"switch {s.switch_id} has no multicast group {action.group_id}")
    return action


def multicast_replicate(s: SwitchState, group_id: int, pkt, ingress_port: Optional[int] = None) -> list:
    group = s.multicast_groups.get(group_id)
    if group is None:
        raise UnknownGroup(f"switch {s.switch_id} has no multicast group {group_id}")
    return [(port, pkt) for port in sorted(group.egress_ports) if port != ingress_port]


def process_int(s: SwitchState, pkt: HeaderStack, to_host: bool = True):
    """
    INT transit/sink processing for one egress copy.

    Returns ``(pkt', report)``. A sink only strips and reports when the copy
    leaves towards a host; on switch-facing ports it behaves like a transit
    hop. When the stack is already at the hop cap the switch forwards the
    packet unchanged and bumps ``hop_cap_exceeded``.
    """
    st = pkt.int_stack
    if s.int_role == IntRole.NONE or st is None:
        return pkt, None
    if len(st.hops) >= INT_MAX_HOPS:
        s.hop_cap_exceeded += 1
    else:
        st = replace(st, hops=st.hops + (IntHopMetadata(s.switch_id, s.proc_latency_us),))
    if s.int_role == IntRole.SINK and to_host:
        report = IntReport(s.switch_id, pkt.ipv4.src_ip, pkt.ipv4.dst_ip, st.node_meta, st.hops)
        stripped = replace(pkt, int_stack=None, ipv4=replace(pkt.ipv4, dscp=0)).with_lengths()
        return stripped, report
    return replace(pkt, int_stack=st).with_lengths(), None


def report_frame(pkt: HeaderStack, report: IntReport) -> HeaderStack:
    """The frame a sink clones to the CPU port: original packet with the full INT stack."""
    st = IntStack(node_meta=report.node_meta, hops=report.hops,
                  version=pkt.int_stack.version if pkt.int_stack else 1)
    return replace(pkt, int_stack=st).with_lengths()


def report_from_frame(sink_switch: int, pkt: HeaderStack) -> IntReport:
    st = pkt.int_stack
    return IntReport(sink_switch, pkt.ipv4.src_ip, pkt.ipv4.dst_ip, st.node_meta, st.hops)
