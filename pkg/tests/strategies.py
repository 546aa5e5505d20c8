"""Hypothesis strategies shared by the unit and acceptance tests."""

from hypothesis import strategies as st

from swarmkdn.channel import (
    READ_GROUPS,
    PacketIn,
    PacketOut,
    ReadReply,
    ReadRequest,
    Status,
    Update,
    WriteReply,
    WriteRequest,
)
from swarmkdn.packet import (
    INT_DSCP,
    UDP,
    Ethernet,
    HeaderStack,
    IntHopMetadata,
    IntStack,
    IPv4,
    NodeMetadata,
    RTPSHeader,
)
from swarmkdn.switch import AclMatch, Drop, Forward, Multicast, MulticastGroup, SendToCpu, TableEntry, WriteOp

macs = st.binary(min_size=6, max_size=6).map(lambda b: ":".join(f"{x:02x}" for x in b))
ips = st.integers(0, 2 ** 32 - 1).map(lambda v: ".".join(str((v >> s) & 0xFF) for s in (24, 16, 8, 0)))
u16 = st.integers(0, 0xFFFF)
u32 = st.integers(0, 0xFFFFFFFF)
i16 = st.integers(-0x8000, 0x7FFF)

node_meta = st.builds(NodeMetadata, u32, st.integers(0, 100), i16, i16, u16)
hops = st.lists(st.builds(IntHopMetadata, u32, st.integers(1, 0xFFFFFFFF)), max_size=16).map(tuple)
int_stacks = st.builds(IntStack, st.none() | node_meta, hops)
rtps_headers = st.builds(RTPSHeader, u16, u16, st.binary(min_size=12, max_size=12))


@st.composite
def header_stacks(draw):
    """Well-formed stacks of every layer combination."""
    depth = draw(st.sampled_from(["eth", "ip", "udp"]))
    payload = draw(st.binary(max_size=64))
    if depth == "eth":
        ethertype = draw(u16.filter(lambda t: t != 0x0800))
        return HeaderStack(Ethernet(draw(macs), draw(macs), ethertype), payload=payload)
    eth = Ethernet(draw(macs), draw(macs), 0x0800)
    if depth == "ip":
        proto = draw(st.integers(0, 255).filter(lambda p: p != 17))
        dscp = draw(st.integers(0, 255).filter(lambda d: d != INT_DSCP))
        ip = IPv4(draw(ips), draw(ips), proto, dscp, draw(st.integers(0, 255)))
        return HeaderStack(eth, ip, payload=payload).with_lengths()
    int_stack = draw(st.none() | int_stacks)
    dscp = INT_DSCP if int_stack is not None else draw(st.integers(0, 255).filter(lambda d: d != INT_DSCP))
    rtps = draw(st.none() | rtps_headers)
    if rtps is None and payload.startswith(b"RTPS"):
        payload = b"X" + payload
    ip = IPv4(draw(ips), draw(ips), 17, dscp, draw(st.integers(0, 255)))
    udp = UDP(draw(u16), draw(u16))
    return HeaderStack(eth, ip, udp, int_stack, rtps, payload).with_lengths()




# control messages

u8 = st.integers(0, 0xFF)
acl_matches = st.builds(AclMatch, u32, u32, u32, u32, u16, u16)
actions = st.one_of(st.builds(Forward, u16), st.just(Drop()), st.builds(SendToCpu, st.sampled_from([1, 2, 3])),
                    st.builds(Multicast, st.integers(1, 0xFFFF)))
table_entries = st.one_of(
    st.builds(TableEntry.acl, acl_matches, u32, actions),
    st.builds(TableEntry.l2, macs, actions),
)
groups = st.builds(MulticastGroup, st.integers(1, 0xFFFF), st.frozensets(u16, min_size=1, max_size=8))
entities = table_entries | groups
frames = st.one_of(st.binary(max_size=64), st.just(b""), st.just(bytes(range(256)) * 6))

messages = st.one_of(
    st.builds(WriteRequest, u32, st.lists(st.builds(Update, st.sampled_from(list(WriteOp)), entities),
                                          max_size=6).map(tuple)),
    st.builds(WriteReply, u32, st.lists(st.sampled_from(list(Status)), max_size=8).map(tuple)),
    st.builds(ReadRequest, u32, st.sampled_from([1, 2, READ_GROUPS])),
    st.builds(ReadReply, u32, st.lists(entities, max_size=6).map(tuple)),
    st.builds(PacketIn, u32, u16, st.sampled_from([1, 2, 3]), frames),
    st.builds(PacketOut, u32, u16, frames),
)
