import struct

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from strategies import entities, messages
from swarmkdn.channel import (
    HEADER,
    MAGIC,
    READ_GROUPS,
    Channel,
    MsgType,
    PacketIn,
    PacketOut,
    ReadReply,
    ReadRequest,
    Status,
    Update,
    WriteRequest,
    decode_message,
    dispatch_read,
    dispatch_write,
    encode_message,
    split_frames,
)
from swarmkdn.errors import BadLength, BadMagic, MalformedBody, UnknownSwitch, UnknownType
from swarmkdn.network import Network
from swarmkdn.switch import (
    AclMatch,
    Drop,
    Forward,
    Multicast,
    MulticastGroup,
    TableEntry,
    TableId,
    WriteOp,
    groups_read,
    table_read,
)


@settings(max_examples=1200, deadline=None)
@given(messages)
def test_round_trip(m):
    raw = encode_message(m)
    assert decode_message(raw) == m
    magic, version, mtype, length = HEADER.unpack_from(raw)
    assert magic == MAGIC and version == 1 and length == len(raw) - HEADER.size


def test_packet_out_length_arithmetic():
    raw = encode_message(PacketOut(1, 0xFFFF, bytes(14)))
    assert raw[:2] == b"KD" and raw[3] == MsgType.PACKET_OUT
    body_len = struct.unpack_from("!I", raw, 4)[0]
    assert body_len == len(raw) - 8
    # switch id, then the cpu-out header, then the frame
    assert body_len == 4 + 4 + 14


def test_empty_write_request():
    m = WriteRequest(3, ())
    assert decode_message(encode_message(m)) == m


def test_packet_in_keeps_frame_bytes():
    frame = bytes(range(60))
    m = decode_message(encode_message(PacketIn(2, 5, 0x02, frame)))
    assert isinstance(m, PacketIn) and m.frame == frame


def test_decode_errors_name_offsets():
    raw = encode_message(PacketOut(1, 2, b"abc"))
    with pytest.raises(BadLength) as exc:
        decode_message(raw[:-1])
    assert exc.value.offset == 4
    bad = bytearray(raw)
    bad[3] = 0x7F
    with pytest.raises(UnknownType) as exc:
        decode_message(bytes(bad))
    assert exc.value.offset == 3
    with pytest.raises(BadMagic) as exc:
        decode_message(b"XX" + raw[2:])
    assert exc.value.offset == 0
    with pytest.raises(BadMagic) as exc:
        decode_message(raw[:2] + b"\x09" + raw[3:])
    assert exc.value.offset == 2
    with pytest.raises(BadLength):
        decode_message(b"K")


def test_malformed_bodies():
    # write request claiming one update but carrying none
    raw = HEADER.pack(MAGIC, 1, MsgType.WRITE_REQUEST, 6) + struct.pack("!IH", 1, 1)
    with pytest.raises(MalformedBody):
        decode_message(raw)
    # packet-in with an undefined reason
    good = encode_message(PacketIn(1, 1, 1, b"x"))
    bad = bytearray(good)
    bad[HEADER.size + 4 + 2] = 0x09
    with pytest.raises(MalformedBody):
        decode_message(bytes(bad))


@given(st.lists(messages, max_size=5), st.integers(0, 30))
def test_split_frames(msgs, cut):
    stream = b"".join(encode_message(m) for m in msgs)
    cut = min(cut, len(stream))
    head, rest = split_frames(stream[:len(stream) - cut])
    decoded = [decode_message(x) for x in head]
    assert decoded == msgs[:len(decoded)]
    assert b"".join(head) + rest == stream[:len(stream) - cut]


def test_channel_fifo():
    ch = Channel(1)
    for i in range(3):
        ch.send_to_controller(PacketIn(1, i, 1, b""))
    assert [m.ingress_port for m in ch.recv_at_controller()] == [0, 1, 2]
    assert ch.recv_at_controller() == []


def test_dispatch_examples(one_switch):
    net = Network(one_switch)
    e1 = TableEntry.l2("00:00:00:00:00:02", Forward(2))
    reply = dispatch_write(net, WriteRequest(1, (Update(WriteOp.INSERT, e1), Update(WriteOp.INSERT, e1))))
    assert reply.statuses == (Status.OK, Status.ALREADY_EXISTS)
    g = MulticastGroup(5, {2, 3})
    e2 = TableEntry.acl(AclMatch.build(src_ip="10.0.0.1"), 100, Multicast(5))
    reply = dispatch_write(net, WriteRequest(1, (Update(WriteOp.INSERT, g), Update(WriteOp.INSERT, e2))))
    assert reply.statuses == (Status.OK, Status.OK)
    bad = TableEntry.acl(AclMatch(), 1, Multicast(9))
    reply = dispatch_write(net, WriteRequest(1, (Update(WriteOp.INSERT, bad), Update(WriteOp.DELETE, e1))))
    assert reply.statuses == (Status.UNKNOWN_GROUP, Status.OK)
    with pytest.raises(UnknownSwitch):
        dispatch_write(net, WriteRequest(42, ()))
    assert dispatch_read(net, ReadRequest(1, READ_GROUPS)).entities == (g,)
    assert dispatch_read(net, ReadRequest(1, TableId.ACL)).entities == (e2,)
    with pytest.raises(UnknownSwitch):
        dispatch_read(net, ReadRequest(9, TableId.L2))


small_entities = st.one_of(
    st.builds(TableEntry.l2, st.sampled_from(["00:00:00:00:00:01", "00:00:00:00:00:02"]),
              st.sampled_from([Drop(), Forward(1), Forward(7), Multicast(1), Multicast(2)])),
    st.builds(TableEntry.acl, st.just(AclMatch.build(dst_ip="10.0.0.9")), st.integers(0, 1), st.just(Drop())),
    st.builds(MulticastGroup, st.integers(1, 2), st.sampled_from([{1}, {2, 3}, {9}])),
)


@settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.lists(st.builds(Update, st.sampled_from(list(WriteOp)), small_entities), max_size=30))
def test_ok_prefix_replay(one_switch, updates):
    net = Network(one_switch)
    reply = dispatch_write(net, WriteRequest(1, tuple(updates)))
    assert len(reply.statuses) == len(updates)
    replay = Network(one_switch)
    ok = tuple(u for u, s in zip(updates, reply.statuses) if s == Status.OK)
    assert all(s == Status.OK for s in dispatch_write(replay, WriteRequest(1, ok)).statuses)
    a, b = net.switch(1), replay.switch(1)
    for t in TableId:
        assert table_read(a, t) == table_read(b, t)
    assert groups_read(a) == groups_read(b)


@given(entities)
def test_entities_survive_read_reply(e):
    m = ReadReply(1, (e,))
    assert decode_message(encode_message(m)) == m
