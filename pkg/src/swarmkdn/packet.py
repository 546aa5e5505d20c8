"""
Frame layout, parsing and emission.

Layers: Ethernet / IPv4 / UDP / INT shim / RTPS / payload. All integers are
big-endian and checksum fields are always zero. INT presence is signalled by
DSCP 0x17 on a UDP datagram; the shim sits right after the UDP header and the
RTPS header (if any) starts after the shim.
"""

from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass, field, replace
from typing import Optional

from .errors import BadIntStack, InvariantViolation, TruncatedFrame

ETHERTYPE_IPV4 = 0x0800
IPPROTO_UDP = 17
INT_DSCP = 0x17
INT_VERSION = 1
INT_MAX_HOPS = 16
RTPS_MAGIC = b"RTPS"

ETH_LEN = 14
IPV4_LEN = 20
UDP_LEN = 8
INT_SHIM_LEN = 4
NODE_META_LEN = 11
HOP_LEN = 8
RTPS_LEN = 20

_ETH = struct.Struct("!6s6sH")
_IPV4 = struct.Struct("!BBHHHBBH4s4s")
_UDP = struct.Struct("!HHHH")
_SHIM = struct.Struct("!BBBB")
_NODE = struct.Struct("!IBhhH")
_HOP = struct.Struct("!II")
_RTPS = struct.Struct("!4sHH12s")


def mac_to_bytes(mac: str) -> bytes:
    raw = bytes(int(part, 16) for part in mac.split(":"))
    if len(raw) != 6:
        raise ValueError(f"bad MAC address {mac!r}")
    return raw


def mac_from_bytes(raw: bytes) -> str:
    return ":".join(f"{b:02x}" for b in raw)


def ip_to_int(ip: str) -> int:
    return int(ipaddress.IPv4Address(ip))


def ip_from_int(value: int) -> str:
    return str(ipaddress.IPv4Address(value))


@dataclass(frozen=True)
class Ethernet:
    dst_mac: str
    src_mac: str
    ethertype: int


@dataclass(frozen=True)
class IPv4:
    src_ip: str
    dst_ip: str
    protocol: int = IPPROTO_UDP
    dscp: int = 0
    ttl: int = 64
    total_length: int = IPV4_LEN


@dataclass(frozen=True)
class UDP:
    src_port: int
    dst_port: int
    length: int = UDP_LEN


@dataclass(frozen=True)
class RTPSHeader:
    protocol_version: int = 0x0203
    vendor_id: int = 0x0101
    guid_prefix: bytes = bytes(12)


@dataclass(frozen=True)
class NodeMetadata:
    """Swarm-node properties embedded by an INT source host."""

    node_id: int
    cpu_load_pct: int
    loc_x: int = 0
    loc_y: int = 0
    capabilities: int = 0


@dataclass(frozen=True)
class IntHopMetadata:
    switch_id: int
    hop_latency_us: int


@dataclass(frozen=True)
class IntStack:
    node_meta: Optional[NodeMetadata] = None
    hops: tuple[IntHopMetadata, ...] = ()
    version: int = INT_VERSION

    @property
    def hop_count(self) -> int:
        return len(self.hops)

    @property
    def node_meta_present(self) -> bool:
        return self.node_meta is not None

    def encoded_length(self) -> int:
        return INT_SHIM_LEN + (NODE_META_LEN if self.node_meta else 0) + HOP_LEN * len(self.hops)


@dataclass(frozen=True)
class HeaderStack:
    eth: Ethernet
    ipv4: Optional[IPv4] = None
    udp: Optional[UDP] = None
    int_stack: Optional[IntStack] = None
    rtps: Optional[RTPSHeader] = None
    payload: bytes = field(default=b"", repr=False)

    def l4_payload_length(self) -> int:
        n = len(self.payload)
        if self.int_stack is not None:
            n += self.int_stack.encoded_length()
        if self.rtps is not None:
            n += RTPS_LEN
        return n

    def with_lengths(self) -> HeaderStack:
        """Return a copy whose IPv4 total_length and UDP length match the content."""
        if self.ipv4 is None:
            return self
        if self.udp is None:
            return replace(self, ipv4=replace(self.ipv4, total_length=IPV4_LEN + len(self.payload)))
        udp_len = UDP_LEN + self.l4_payload_length()
        return replace(
            self,
            ipv4=replace(self.ipv4, total_length=IPV4_LEN + udp_len),
            udp=replace(self.udp, length=udp_len),
        )


def _check(h: HeaderStack) -> None:
    ip, udp = h.ipv4, h.udp
    if (ip is not None) != (h.eth.ethertype == ETHERTYPE_IPV4):
        raise InvariantViolation("ipv4 header present iff ethertype is 0x0800")
    if udp is not None and (ip is None or ip.protocol != IPPROTO_UDP):
        raise InvariantViolation("udp header requires ipv4.protocol = 17")
    if ip is not None and ip.protocol == IPPROTO_UDP and udp is None:
        raise InvariantViolation("ipv4.protocol = 17 requires a udp header")
    if h.rtps is not None and udp is None:
        raise InvariantViolation("rtps header requires udp")
    if h.int_stack is not None:
        if udp is None or ip.dscp != INT_DSCP:
            raise InvariantViolation("int_stack requires udp and dscp 0x17")
        if len(h.int_stack.hops) > INT_MAX_HOPS:
            raise InvariantViolation(f"int hop count above {INT_MAX_HOPS}")
        meta = h.int_stack.node_meta
        if meta is not None and not 0 <= meta.cpu_load_pct <= 100:
            raise InvariantViolation("cpu_load_pct outside [0, 100]")
    elif udp is not None and ip.dscp == INT_DSCP:
        raise InvariantViolation("dscp 0x17 on udp requires an int_stack")
    if udp is not None and h.rtps is None and h.payload[:4] == RTPS_MAGIC and len(h.payload) >= RTPS_LEN:
        raise InvariantViolation("udp payload starting with RTPS magic must be parsed as rtps")


def emit_packet(h: HeaderStack) -> bytes:
    _check(h)
    out = bytearray(_ETH.pack(mac_to_bytes(h.eth.dst_mac), mac_to_bytes(h.eth.src_mac), h.eth.ethertype))
    if h.ipv4 is not None:
        ip = h.ipv4
        out += _IPV4.pack(0x45, ip.dscp, ip.total_length, 0, 0, ip.ttl, ip.protocol, 0,
                          ipaddress.IPv4Address(ip.src_ip).packed, ipaddress.IPv4Address(ip.dst_ip).packed)
    if h.udp is not None:
        out += _UDP.pack(h.udp.src_port, h.udp.dst_port, h.udp.length, 0)
    if h.int_stack is not None:
        st = h.int_stack
        out += _SHIM.pack(st.version, len(st.hops), NODE_META_LEN if st.node_meta else 0, 0)
        if st.node_meta is not None:
            m = st.node_meta
            out += _NODE.pack(m.node_id, m.cpu_load_pct, m.loc_x, m.loc_y, m.capabilities)
        for hop in st.hops:
            out += _HOP.pack(hop.switch_id, hop.hop_latency_us)
    if h.rtps is not None:
        r = h.rtps
        out += _RTPS.pack(RTPS_MAGIC, r.protocol_version, r.vendor_id, r.guid_prefix)
    out += h.payload
    return bytes(out)


def parse_packet(data: bytes) -> HeaderStack:
    if len(data) < ETH_LEN:
        raise TruncatedFrame(f"frame of {len(data)} bytes is shorter than an Ethernet header")
    dst, src, ethertype = _ETH.unpack_from(data, 0)
    eth = Ethernet(mac_from_bytes(dst), mac_from_bytes(src), ethertype)
    if ethertype != ETHERTYPE_IPV4:
        return HeaderStack(eth=eth, payload=bytes(data[ETH_LEN:]))

    if len(data) < ETH_LEN + IPV4_LEN:
        raise TruncatedFrame("IPv4 header truncated")
    vihl, dscp, total_length, _, _, ttl, proto, _, sip, dip = _IPV4.unpack_from(data, ETH_LEN)
    if vihl != 0x45:
        raise TruncatedFrame(f"unsupported IPv4 version/IHL byte 0x{vihl:02x}")
    if total_length < IPV4_LEN or ETH_LEN + total_length > len(data):
        raise TruncatedFrame(f"IPv4 total_length {total_length} exceeds available bytes")
    ip = IPv4(str(ipaddress.IPv4Address(sip)), str(ipaddress.IPv4Address(dip)),
              protocol=proto, dscp=dscp, ttl=ttl, total_length=total_length)
    off = ETH_LEN + IPV4_LEN
    if proto != IPPROTO_UDP:
        return HeaderStack(eth=eth, ipv4=ip, payload=bytes(data[off:]))

    if len(data) < off + UDP_LEN:
        raise TruncatedFrame("UDP header truncated")
    sport, dport, ulen, _ = _UDP.unpack_from(data, off)
    if ulen < UDP_LEN or off + ulen > len(data):
        raise TruncatedFrame(f"UDP length {ulen} exceeds available bytes")
    udp = UDP(sport, dport, ulen)
    off += UDP_LEN

    int_stack = None
    if dscp == INT_DSCP:
        if len(data) < off + INT_SHIM_LEN:
            raise BadIntStack("INT shim truncated")
        version, hop_count, meta_len, _ = _SHIM.unpack_from(data, off)
        if meta_len not in (0, NODE_META_LEN):
            raise BadIntStack(f"node metadata length {meta_len} not in {{0, {NODE_META_LEN}}}")
        if hop_count > INT_MAX_HOPS:
            raise BadIntStack(f"hop_count {hop_count} above cap {INT_MAX_HOPS}")
        need = INT_SHIM_LEN + meta_len + HOP_LEN * hop_count
        if off + need > len(data):
            raise BadIntStack(f"hop_count {hop_count} inconsistent with {len(data) - off} remaining bytes")
        off += INT_SHIM_LEN
        meta = None
        if meta_len:
            meta = NodeMetadata(*_NODE.unpack_from(data, off))
            off += NODE_META_LEN
        hops = []
        for _ in range(hop_count):
            hops.append(IntHopMetadata(*_HOP.unpack_from(data, off)))
            off += HOP_LEN
        int_stack = IntStack(node_meta=meta, hops=tuple(hops), version=version)

    rtps = None
    if data[off:off + 4] == RTPS_MAGIC and len(data) - off >= RTPS_LEN:
        _, pver, vendor, guid = _RTPS.unpack_from(data, off)
        rtps = RTPSHeader(pver, vendor, guid)
        off += RTPS_LEN
    return HeaderStack(eth=eth, ipv4=ip, udp=udp, int_stack=int_stack, rtps=rtps, payload=bytes(data[off:]))


def build_udp_frame(src_mac, dst_mac, src_ip, dst_ip, src_port, dst_port, payload=b"",
                    rtps=None, int_stack=None, ttl=64) -> HeaderStack:
    """Assemble a consistent Ethernet/IPv4/UDP stack with lengths filled in."""
    h = HeaderStack(
        eth=Ethernet(dst_mac, src_mac, ETHERTYPE_IPV4),
        ipv4=IPv4(src_ip, dst_ip, protocol=IPPROTO_UDP, dscp=INT_DSCP if int_stack is not None else 0, ttl=ttl),
        udp=UDP(src_port, dst_port),
        int_stack=int_stack,
        rtps=rtps,
        payload=payload,
    )
    return h.with_lengths()


# CPU port encapsulation

REASON_RTPS_INSPECT = 0x01
REASON_INT_REPORT = 0x02
REASON_TABLE_MISS = 0x03
PACKET_IN_REASONS = (REASON_RTPS_INSPECT, REASON_INT_REPORT, REASON_TABLE_MISS)

PORT_FLOOD = 0xFFFF
# artifact extension: packet-out that re-enters the ingress pipeline
PORT_PIPELINE = 0xFFFE

_CPU_IN = struct.Struct("!HBB")
_CPU_OUT = struct.Struct("!HH")


def encode_cpu_in(ingress_port: int, reason: int, frame: bytes) -> bytes:
    return _CPU_IN.pack(ingress_port, reason, 0) + frame


def decode_cpu_in(data: bytes) -> tuple[int, int, bytes]:
    if len(data) < _CPU_IN.size:
        raise TruncatedFrame("cpu_in header truncated")
    port, reason, _ = _CPU_IN.unpack_from(data, 0)
    return port, reason, bytes(data[_CPU_IN.size:])


def encode_cpu_out(egress_port: int, frame: bytes) -> bytes:
    return _CPU_OUT.pack(egress_port, 0) + frame


def decode_cpu_out(data: bytes) -> tuple[int, bytes]:
    if len(data) < _CPU_OUT.size:
        raise TruncatedFrame("cpu_out header truncated")
    port, _ = _CPU_OUT.unpack_from(data, 0)
    return port, bytes(data[_CPU_OUT.size:])
