"""
Controller/switch message framing, modelled on P4Runtime write/read/stream.

Frame: magic 0x4B44 ("KD"), version 0x01, type byte, u32 body length, body.
"""

from __future__ import annotations

import enum
import struct
from collections import deque
from dataclasses import dataclass
from typing import Union

from .errors import (
    AlreadyExists,
    BadLength,
    BadMagic,
    InvalidEntry,
    MalformedBody,
    NotFound,
    UnknownGroup,
    UnknownSwitch,
    UnknownType,
)
from .packet import (
    PACKET_IN_REASONS,
    decode_cpu_in,
    decode_cpu_out,
    encode_cpu_in,
    encode_cpu_out,
    mac_from_bytes,
)
from .switch import (
    ACL_KEY_LEN,
    L2_KEY_LEN,
    AclMatch,
    Drop,
    Entity,
    Forward,
    L2Match,
    Multicast,
    MulticastGroup,
    SendToCpu,
    TableEntry,
    TableId,
    WriteOp,
    entity_write,
    groups_read,
    table_read,
)

MAGIC = 0x4B44
VERSION = 0x01
HEADER = struct.Struct("!HBBI")


class MsgType(enum.IntEnum):
    WRITE_REQUEST = 0x01
    WRITE_REPLY = 0x02
    READ_REQUEST = 0x03
    READ_REPLY = 0x04
    PACKET_IN = 0x05
    PACKET_OUT = 0x06


class Status(enum.IntEnum):
    OK = 0
    ALREADY_EXISTS = 1
    NOT_FOUND = 2
    UNKNOWN_GROUP = 3
    INVALID_ENTRY = 4


READ_GROUPS = 0xFF


@dataclass(frozen=True)
class Update:
    op: WriteOp
    entity: Entity


@dataclass(frozen=True)
class WriteRequest:
    switch_id: int
    updates: tuple[Update, ...] = ()


@dataclass(frozen=True)
class WriteReply:
    switch_id: int
    statuses: tuple[Status, ...] = ()


@dataclass(frozen=True)
class ReadRequest:
    switch_id: int
    target: int  # TableId value or READ_GROUPS


@dataclass(frozen=True)
class ReadReply:
    switch_id: int
    entities: tuple[Entity, ...] = ()


@dataclass(frozen=True)
class PacketIn:
    switch_id: int
    ingress_port: int
    reason: int
    frame: bytes


@dataclass(frozen=True)
class PacketOut:
    switch_id: int
    egress_port: int
    frame: bytes


Message = Union[WriteRequest, WriteReply, ReadRequest, ReadReply, PacketIn, PacketOut]

_TYPES = {
    WriteRequest: MsgType.WRITE_REQUEST,
    WriteReply: MsgType.WRITE_REPLY,
    ReadRequest: MsgType.READ_REQUEST,
    ReadReply: MsgType.READ_REPLY,
    PacketIn: MsgType.PACKET_IN,
    PacketOut: MsgType.PACKET_OUT,
}

_ENTITY_ENTRY = 1
_ENTITY_GROUP = 2
_ACTIONS = {Forward: 1, Drop: 2, SendToCpu: 3, Multicast: 4}


# encoding

def _encode_action(action) -> bytes:
    kind = _ACTIONS[type(action)]
    if isinstance(action, Forward):
        arg = action.port
    elif isinstance(action, SendToCpu):
        arg = action.reason
    elif isinstance(action, Multicast):
        arg = action.group_id
    else:
        arg = 0
    return struct.pack("!BH", kind, arg)


def encode_entity(entity: Entity) -> bytes:
    if isinstance(entity, MulticastGroup):
        ports = sorted(entity.egress_ports)
        return struct.pack(f"!BHH{len(ports)}H", _ENTITY_GROUP, entity.group_id, len(ports), *ports)
    key = entity.match.key_bytes()
    out = struct.pack("!BBH", _ENTITY_ENTRY, int(entity.table), len(key)) + key
    if entity.table == TableId.ACL:
        out += struct.pack("!I", entity.priority)
    return out + _encode_action(entity.action)


def _body(m: Message) -> bytes:
    if isinstance(m, WriteRequest):
        out = struct.pack("!IH", m.switch_id, len(m.updates))
        for u in m.updates:
            out += struct.pack("!B", int(u.op)) + encode_entity(u.entity)
        return out
    if isinstance(m, WriteReply):
        return struct.pack(f"!IH{len(m.statuses)}B", m.switch_id, len(m.statuses), *map(int, m.statuses))
    if isinstance(m, ReadRequest):
        return struct.pack("!IB", m.switch_id, m.target)
    if isinstance(m, ReadReply):
        return struct.pack("!IH", m.switch_id, len(m.entities)) + b"".join(map(encode_entity, m.entities))
    if isinstance(m, PacketIn):
        return struct.pack("!I", m.switch_id) + encode_cpu_in(m.ingress_port, m.reason, m.frame)
    if isinstance(m, PacketOut):
        return struct.pack("!I", m.switch_id) + encode_cpu_out(m.egress_port, m.frame)
    raise TypeError(f"not a message: {m!r}")


def encode_message(m: Message) -> bytes:
    body = _body(m)
    return HEADER.pack(MAGIC, VERSION, _TYPES[type(m)], len(body)) + body


# decoding

class _Reader:
    def __init__(self, data: bytes, base: int):
        self.data = data
        self.pos = 0
        self.base = base

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise MalformedBody(f"body ends before {fmt!r} field", self.base + self.pos)
        values = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return values

    def raw(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise MalformedBody(f"body ends inside a {n}-byte field", self.base + self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return bytes(chunk)

    def need(self, n: int) -> None:
        if self.pos + n > len(self.data):
            raise MalformedBody(f"body ends inside a {n}-byte header", self.base + self.pos)

    def rest(self) -> bytes:
        chunk = bytes(self.data[self.pos:])
        self.pos = len(self.data)
        return chunk

    def offset(self) -> int:
        return self.base + self.pos


def _decode_action(r: _Reader):
    at = r.offset()
    kind, arg = r.take("!BH")
    if kind == 1:
        return Forward(arg)
    if kind == 2:
        return Drop()
    if kind == 3:
        return SendToCpu(arg)
    if kind == 4:
        return Multicast(arg)
    raise MalformedBody(f"unknown action kind {kind}", at)


def _decode_entity(r: _Reader) -> Entity:
    at = r.offset()
    (kind,) = r.take("!B")
    if kind == _ENTITY_GROUP:
        gid, n = r.take("!HH")
        ports = r.take(f"!{n}H")
        return MulticastGroup(gid, frozenset(ports))
    if kind != _ENTITY_ENTRY:
        raise MalformedBody(f"unknown entity kind {kind}", at)
    at = r.offset()
    table, klen = r.take("!BH")
    if table == TableId.ACL and klen == ACL_KEY_LEN:
        match = AclMatch.from_key_bytes(r.raw(klen))
        (priority,) = r.take("!I")
        return TableEntry(TableId.ACL, match, _decode_action(r), priority)
    if table == TableId.L2 and klen == L2_KEY_LEN:
        match = L2Match(mac_from_bytes(r.raw(klen)))
        return TableEntry(TableId.L2, match, _decode_action(r))
    raise MalformedBody(f"bad table id {table} or key length {klen}", at)


def _decode_body(mtype: MsgType, r: _Reader) -> Message:
    if mtype == MsgType.WRITE_REQUEST:
        sid, n = r.take("!IH")
        updates = []
        for _ in range(n):
            at = r.offset()
            (op,) = r.take("!B")
            if op not in WriteOp._value2member_map_:
                raise MalformedBody(f"unknown write op {op}", at)
            updates.append(Update(WriteOp(op), _decode_entity(r)))
        return WriteRequest(sid, tuple(updates))
    if mtype == MsgType.WRITE_REPLY:
        sid, n = r.take("!IH")
        at = r.offset()
        raw = r.take(f"!{n}B")
        try:
            return WriteReply(sid, tuple(Status(s) for s in raw))
        except ValueError:
            raise MalformedBody("unknown status code", at) from None
    if mtype == MsgType.READ_REQUEST:
        sid, target = r.take("!IB")
        return ReadRequest(sid, target)
    if mtype == MsgType.READ_REPLY:
        sid, n = r.take("!IH")
        return ReadReply(sid, tuple(_decode_entity(r) for _ in range(n)))
    if mtype == MsgType.PACKET_IN:
        (sid,) = r.take("!I")
        at = r.offset()
        r.need(4)
        port, reason, frame = decode_cpu_in(r.rest())
        if reason not in PACKET_IN_REASONS:
            raise MalformedBody(f"packet-in reason 0x{reason:02x} not allowed", at + 2)
        return PacketIn(sid, port, reason, frame)
    if mtype == MsgType.PACKET_OUT:
        (sid,) = r.take("!I")
        r.need(4)
        port, frame = decode_cpu_out(r.rest())
        return PacketOut(sid, port, frame)
    raise AssertionError(mtype)


def decode_message(data: bytes) -> Message:
    if len(data) < 3:
        raise BadLength(f"{len(data)} bytes is shorter than the header", len(data))
    magic, version = struct.unpack_from("!HB", data, 0)
    if magic != MAGIC:
        raise BadMagic(f"magic 0x{magic:04x} != 0x{MAGIC:04x}", 0)
    if version != VERSION:
        raise BadMagic(f"unsupported version {version}", 2)
    if len(data) < HEADER.size:
        raise BadLength(f"{len(data)} bytes is shorter than the header", len(data))
    _, _, mtype, length = HEADER.unpack_from(data, 0)
    if mtype not in MsgType._value2member_map_:
        raise UnknownType(f"unknown message type 0x{mtype:02x}", 3)
    if len(data) != HEADER.size + length:
        raise BadLength(f"declared body length {length}, have {len(data) - HEADER.size}", 4)
    r = _Reader(memoryview(data)[HEADER.size:], HEADER.size)
    msg = _decode_body(MsgType(mtype), r)
    if r.pos != length:
        raise MalformedBody(f"{length - r.pos} trailing bytes in body", r.offset())
    return msg


def split_frames(buf: bytes) -> tuple[list[bytes], bytes]:
    """Cut complete messages off the front of a byte stream; returns (messages, remainder)."""
    out = []
    pos = 0
    while len(buf) - pos >= HEADER.size:
        (length,) = struct.unpack_from("!I", buf, pos + 4)
        end = pos + HEADER.size + length
        if end > len(buf):
            break
        out.append(bytes(buf[pos:end]))
        pos = end
    return out, bytes(buf[pos:])


class Channel:
    """In-process duplex byte channel between the controller and one switch."""

    def __init__(self, switch_id: int):
        self.switch_id = switch_id
        self._to_switch = deque()
        self._to_controller = deque()

    def send_to_switch(self, m: Message) -> None:
        self._to_switch.append(encode_message(m))

    def send_to_controller(self, m: Message) -> None:
        self._to_controller.append(encode_message(m))

    def recv_at_switch(self) -> list[Message]:
        out = [decode_message(b) for b in self._to_switch]
        self._to_switch.clear()
        return out

    def recv_at_controller(self) -> list[Message]:
        out = [decode_message(b) for b in self._to_controller]
        self._to_controller.clear()
        return out


# switch-side handlers

_STATUS_FOR = {
    AlreadyExists: Status.ALREADY_EXISTS,
    NotFound: Status.NOT_FOUND,
    UnknownGroup: Status.UNKNOWN_GROUP,
    InvalidEntry: Status.INVALID_ENTRY,
}


def dispatch_write(net, req: WriteRequest) -> WriteReply:
    """Apply updates in order, continuing past failures."""
    if req.switch_id not in net.switches:
        raise UnknownSwitch(f"unknown switch {req.switch_id}")
    s = net.switches[req.switch_id]
    statuses = []
    for u in req.updates:
        try:
            entity_write(s, u.op, u.entity)
        except tuple(_STATUS_FOR) as exc:
            statuses.append(_STATUS_FOR[type(exc)])
        else:
            statuses.append(Status.OK)
    return WriteReply(req.switch_id, tuple(statuses))


def dispatch_read(net, req: ReadRequest) -> ReadReply:
    if req.switch_id not in net.switches:
        raise UnknownSwitch(f"unknown switch {req.switch_id}")
    s = net.switches[req.switch_id]
    if req.target == READ_GROUPS:
        return ReadReply(req.switch_id, tuple(groups_read(s)))
    return ReadReply(req.switch_id, tuple(table_read(s, TableId(req.target))))
