import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmkdn.errors import AlreadyExists, InvalidEntry, NotFound, UnknownGroup
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
    ip_from_int,
    ip_to_int,
)
from swarmkdn.switch import (
    AclMatch,
    Drop,
    Forward,
    IntRole,
    Multicast,
    MulticastGroup,
    SendToCpu,
    SwitchState,
    TableEntry,
    TableId,
    WriteOp,
    acl_fields,
    acl_lookup,
    apply_pipeline,
    group_write,
    multicast_replicate,
    process_int,
    table_read,
    table_write,
)


def make_switch(role=IntRole.NONE, proc=50, ports=(1, 2, 3, 4, 5)):
    return SwitchState(7, ports={p: None for p in ports}, int_role=role, proc_latency_us=proc)


def udp_pkt(src="10.0.0.1", dst="10.0.0.2", dport=5000, rtps=False, int_stack=None, dst_mac="00:00:00:00:00:02"):
    ip = IPv4(src, dst, dscp=INT_DSCP if int_stack is not None else 0)
    return HeaderStack(Ethernet(dst_mac, "00:00:00:00:00:01", 0x0800), ip, UDP(49152, dport), int_stack,
                       RTPSHeader() if rtps else None, b"x").with_lengths()


def test_l2_insert_and_duplicate():
    s = make_switch()
    e = TableEntry.l2("aa:bb:cc:dd:ee:ff", Forward(2))
    assert table_write(s, WriteOp.INSERT, e) == 1
    with pytest.raises(AlreadyExists):
        table_write(s, WriteOp.INSERT, e)


def test_modify_absent_acl():
    s = make_switch()
    with pytest.raises(NotFound):
        table_write(s, WriteOp.MODIFY, TableEntry.acl(AclMatch.build(src_ip="10.0.0.1"), 5, Drop()))


def test_read_order_and_delete():
    s = make_switch()
    assert table_read(s, TableId.ACL) == []
    entries = [TableEntry.acl(AclMatch.build(dst_ip=f"10.0.0.{i}"), p, Drop()) for i, p in ((3, 5), (1, 9), (2, 5))]
    for e in entries:
        table_write(s, WriteOp.INSERT, e)
    assert [e.priority for e in table_read(s, TableId.ACL)] == [9, 5, 5]
    assert table_read(s, TableId.ACL)[1].match.dst_ip == ip_to_int("10.0.0.2")
    for e in entries:
        table_write(s, WriteOp.DELETE, e)
    assert table_read(s, TableId.ACL) == []


def test_invalid_entries():
    s = make_switch()
    with pytest.raises(InvalidEntry):
        table_write(s, WriteOp.INSERT, TableEntry.l2("aa:bb:cc:dd:ee:ff", Forward(99)))
    with pytest.raises(InvalidEntry):
        table_write(s, WriteOp.INSERT, TableEntry(TableId.ACL, AclMatch(), Drop(), None))
    with pytest.raises(InvalidEntry):
        table_write(s, WriteOp.INSERT, TableEntry.acl(AclMatch(), 1, SendToCpu(0x09)))
    with pytest.raises(UnknownGroup):
        table_write(s, WriteOp.INSERT, TableEntry.acl(AclMatch(), 1, Multicast(4)))
    with pytest.raises(InvalidEntry):
        group_write(s, WriteOp.INSERT, MulticastGroup(0, {1}))
    with pytest.raises(InvalidEntry):
        group_write(s, WriteOp.INSERT, MulticastGroup(1, set()))


# table_write against a reference dict

macs = st.sampled_from(["aa:00:00:00:00:01", "aa:00:00:00:00:02", "aa:00:00:00:00:03"])
small_ips = st.sampled_from([None, "10.0.0.1", "10.0.0.2"])
actions = st.sampled_from([Drop(), Forward(1), Forward(2), SendToCpu(1)])
l2_entries = st.builds(TableEntry.l2, macs, actions)
acl_entries = st.builds(lambda s, d, p, a: TableEntry.acl(AclMatch.build(src_ip=s, dst_ip=d), p, a),
                        small_ips, small_ips, st.sampled_from([1, 2]), actions)
ops = st.lists(st.tuples(st.sampled_from(list(WriteOp)), l2_entries | acl_entries), max_size=60)


def reference_apply(ref, op, e):
    key = (e.table, e.match.key_bytes(), e.priority)
    if op == WriteOp.INSERT:
        if key in ref:
            return "exists"
        ref[key] = e.action
    elif key not in ref:
        return "missing"
    elif op == WriteOp.MODIFY:
        ref[key] = e.action
    else:
        del ref[key]
    return "ok"


@settings(max_examples=300, deadline=None)
@given(ops)
def test_table_write_matches_reference_map(seq):
    s = make_switch()
    ref = {}
    for op, e in seq:
        expected = reference_apply(ref, op, e)
        try:
            size = table_write(s, op, e)
            outcome = "ok"
            assert size == sum(1 for k in ref if k[0] == e.table)
        except AlreadyExists:
            outcome = "exists"
        except NotFound:
            outcome = "missing"
        assert outcome == expected
    got = {(e.table, e.match.key_bytes(), e.priority): e.action
           for t in TableId for e in table_read(s, t)}
    assert got == ref


# priority semantics by brute force

ternary = st.tuples(st.integers(0, 3), st.sampled_from([0, 1, 2, 3]))


@st.composite
def acl_tables(draw):
    entries = {}
    for _ in range(draw(st.integers(0, 12))):
        (sv, sm), (dv, dm), (pv, pm) = draw(ternary), draw(ternary), draw(ternary)
        m = AclMatch(sv, sm, dv, dm, pv, pm)
        e = TableEntry.acl(m, draw(st.integers(0, 3)), Forward(draw(st.integers(1, 5))))
        entries[e.key] = e
    return list(entries.values())


@settings(max_examples=400, deadline=None)
@given(acl_tables(), st.integers(0, 3), st.integers(0, 3), st.integers(0, 3))
def test_acl_priority_brute_force(entries, src, dst, port):
    s = make_switch()
    for e in entries:
        table_write(s, WriteOp.INSERT, e)
    pkt = udp_pkt(ip_from_int(src), ip_from_int(dst), port)
    fields = acl_fields(pkt)
    matching = [e for e in entries
                if all((f & mask) == (v & mask) for f, v, mask in zip(
                    fields,
                    (e.match.src_ip, e.match.dst_ip, e.match.udp_dst_port),
                    (e.match.src_mask, e.match.dst_mask, e.match.port_mask)))]
    best = max(matching, key=lambda e: (e.priority, [-b for b in e.match.key_bytes()]), default=None)
    assert acl_lookup(s, pkt) == best
    expected_action = best.action if best else Drop()
    assert apply_pipeline(s, pkt, 1) == expected_action


def test_pipeline_examples():
    s = make_switch()
    assert apply_pipeline(s, udp_pkt(dport=7400, rtps=True), 1) == SendToCpu(0x01)
    table_write(s, WriteOp.INSERT, TableEntry.l2("00:00:00:00:00:02", Forward(3)))
    assert apply_pipeline(s, udp_pkt(), 1) == Forward(3)
    any_match = AclMatch.build(dst_ip="10.0.0.2")
    table_write(s, WriteOp.INSERT, TableEntry.acl(any_match, 10, Forward(4)))
    table_write(s, WriteOp.INSERT, TableEntry.acl(AclMatch.build(src_ip="10.0.0.1"), 20, Forward(5)))
    assert apply_pipeline(s, udp_pkt(), 1) == Forward(5)


def test_pipeline_unknown_group():
    s = make_switch()
    group_write(s, WriteOp.INSERT, MulticastGroup(3, {1, 2}))
    table_write(s, WriteOp.INSERT, TableEntry.acl(AclMatch(), 1, Multicast(3)))
    assert apply_pipeline(s, udp_pkt(), 1) == Multicast(3)
    del s.multicast_groups[3]
    with pytest.raises(UnknownGroup):
        apply_pipeline(s, udp_pkt(), 1)


def test_multicast_replicate():
    s = make_switch()
    group_write(s, WriteOp.INSERT, MulticastGroup(1, {2, 3, 4}))
    group_write(s, WriteOp.INSERT, MulticastGroup(2, {5}))
    pkt = udp_pkt()
    copies = multicast_replicate(s, 1, pkt, ingress_port=2)
    assert [p for p, _ in copies] == [3, 4]
    assert all(c is pkt for _, c in copies)
    assert len(multicast_replicate(s, 2, pkt, ingress_port=1)) == 1
    with pytest.raises(UnknownGroup):
        multicast_replicate(s, 9, pkt)


@given(st.frozensets(st.integers(1, 5), min_size=1), st.integers(1, 5))
def test_replication_never_returns_to_ingress(ports, ingress):
    s = make_switch()
    group_write(s, WriteOp.INSERT, MulticastGroup(1, ports))
    out = [p for p, _ in multicast_replicate(s, 1, udp_pkt(), ingress)]
    assert ingress not in out
    assert len(out) == len(ports - {ingress})


def test_transit_appends_hop():
    s = make_switch(IntRole.TRANSIT, proc=50)
    pkt = udp_pkt(int_stack=IntStack(None, (IntHopMetadata(1, 10),)))
    out, report = process_int(s, pkt)
    assert report is None
    assert out.int_stack.hop_count == 2
    assert out.int_stack.hops[-1] == IntHopMetadata(7, 50)
    assert out.udp.length == pkt.udp.length + 8


def test_sink_strips_and_reports():
    s = make_switch(IntRole.SINK, proc=30)
    meta = NodeMetadata(4, 55, 1, 2, 3)
    hops = (IntHopMetadata(1, 10), IntHopMetadata(2, 20))
    pkt = udp_pkt(int_stack=IntStack(meta, hops))
    out, report = process_int(s, pkt, to_host=True)
    assert out.int_stack is None and out.ipv4.dscp == 0
    assert out.udp.length == 8 + len(b"x")
    assert report.node_meta == meta
    assert report.hops == hops + (IntHopMetadata(7, 30),)
    # towards another switch a sink acts like a transit hop
    out, report = process_int(s, pkt, to_host=False)
    assert report is None and out.int_stack.hop_count == 3


def test_no_role_or_no_stack_is_identity():
    pkt = udp_pkt(int_stack=IntStack(None, ()))
    assert process_int(make_switch(IntRole.NONE), pkt) == (pkt, None)
    plain = udp_pkt()
    assert process_int(make_switch(IntRole.TRANSIT), plain) == (plain, None)


def test_hop_cap():
    s = make_switch(IntRole.TRANSIT)
    full = IntStack(None, tuple(IntHopMetadata(i, 1) for i in range(1, 17)))
    out, _ = process_int(s, udp_pkt(int_stack=full))
    assert out.int_stack.hop_count == 16
    assert s.hop_cap_exceeded == 1


def test_acl_match_canonical_round_trip():
    m = AclMatch(0xFFFFFFFF, 0xFF000000, 5, 0, 7400, 0xFFFF)
    assert AclMatch.from_key_bytes(m.key_bytes()) == m
    assert m.src_ip == 0xFF000000 and m.dst_ip == 0
