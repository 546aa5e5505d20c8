import random

import pytest

from conftest import chain_doc
from swarmkdn.errors import UnknownHost
from swarmkdn.network import Network, inject_from_host, step
from swarmkdn.packet import REASON_INT_REPORT, REASON_RTPS_INSPECT, NodeMetadata, parse_packet
from swarmkdn.switch import AclMatch, Forward, TableEntry, WriteOp, report_from_frame, table_write
from swarmkdn.topology import topology_from_dict


def drain(net):
    events = []
    while net.pending():
        events.extend(step(net))
    return events


def test_one_switch_latency_arithmetic(one_switch):
    net = Network(one_switch)
    table_write(net.switch(1), WriteOp.INSERT, TableEntry.l2("00:00:00:00:00:02", Forward(2)))
    inject_from_host(net, "h1", "10.0.0.2", 5000, payload=b"ping")
    events = drain(net)
    link = one_switch.host("h1").latency_us
    assert [(e.kind, e.node, e.time) for e in events] == [("deliver", "h2", 2 * link + 20)]
    assert parse_packet(events[0].frame).payload == b"ping"


def test_rtps_without_entries_is_packet_in(one_switch):
    net = Network(one_switch)
    inject_from_host(net, "h1", "239.255.0.1", 7400, rtps=True)
    events = drain(net)
    assert len(events) == 1
    e = events[0]
    assert (e.kind, e.node, e.reason, e.port) == ("packet_in", "s1", REASON_RTPS_INSPECT, 1)
    assert parse_packet(e.frame).rtps is not None


def test_plain_miss_is_drop(one_switch):
    net = Network(one_switch)
    inject_from_host(net, "h1", "10.0.0.3", 9)
    assert [e.kind for e in drain(net)] == ["drop"]


def test_inject_frames(one_switch):
    net = Network(one_switch)
    pkt = parse_packet(net.inject_from_host("h1", "10.0.0.2", 1, int_enabled=True))
    assert pkt.int_stack.hop_count == 0
    assert pkt.int_stack.node_meta == NodeMetadata(1, 10, 0, 0, 1)
    net.set_cpu("h1", 40)
    pkt = parse_packet(net.inject_from_host("h1", "10.0.0.2", 1, int_enabled=True))
    assert pkt.int_stack.node_meta.cpu_load_pct == 40
    pkt = parse_packet(net.inject_from_host("h1", "239.255.0.1", 7400, rtps=True, payload=b"data"))
    assert pkt.rtps is not None and pkt.payload == b"data" and pkt.int_stack is None
    plain = parse_packet(net.inject_from_host("h1", "10.0.0.2", 1))
    assert plain.rtps is None and plain.int_stack is None and plain.ipv4.dscp == 0
    with pytest.raises(UnknownHost):
        net.inject_from_host("hX", "10.0.0.2", 1)


def route_chain(net, n):
    """Static forwarding h1 -> h2 along the chain."""
    m = AclMatch.build(dst_ip="10.0.0.2")
    for sid in range(1, n + 1):
        port = 1 if sid == n else 2
        table_write(net.switch(sid), WriteOp.INSERT, TableEntry.acl(m, 1, Forward(port)))


def test_int_chain_report(chain3):
    net = Network(chain3)
    route_chain(net, 3)
    net.inject_from_host("h1", "10.0.0.2", 5000, int_enabled=True, payload=b"x")
    events = drain(net)
    kinds = [(e.kind, e.node) for e in events]
    assert kinds == [("packet_in", "s3"), ("deliver", "h2")]
    report_ev, deliver = events
    assert report_ev.reason == REASON_INT_REPORT and report_ev.port == 1
    report = report_from_frame(3, parse_packet(report_ev.frame))
    assert [(h.switch_id, h.hop_latency_us) for h in report.hops] == [(1, 50), (2, 60), (3, 70)]
    assert report.node_meta.cpu_load_pct == 40
    delivered = parse_packet(deliver.frame)
    assert delivered.int_stack is None and delivered.ipv4.dscp == 0
    # 10 host link in, two 100us switch links, 10 host link out, plus the three processing delays
    assert deliver.time == 10 + 100 + 100 + 10 + 50 + 60 + 70


def test_int_skips_role_none():
    doc = chain_doc(roles=["transit", "none", "sink"])
    net = Network(topology_from_dict(doc))
    route_chain(net, 3)
    net.inject_from_host("h1", "10.0.0.2", 5000, int_enabled=True)
    report_ev = next(e for e in drain(net) if e.kind == "packet_in")
    assert [h.switch_id for h in report_from_frame(3, parse_packet(report_ev.frame)).hops] == [1, 3]


def random_run(topology, seed, count=1000):
    rng = random.Random(seed)
    net = Network(topology)
    for s in net.switches.values():
        for h in topology.hosts.values():
            port = h.port if h.switch == s.switch_id else min(s.ports)
            table_write(s, WriteOp.INSERT, TableEntry.l2(h.mac, Forward(port)))
    hosts = sorted(topology.hosts)
    for i in range(count):
        src, dst = rng.choice(hosts), rng.choice(hosts)
        net.inject_from_host(src, topology.hosts[dst].ip, rng.randint(1, 65535),
                             rtps=rng.random() < 0.2, int_enabled=rng.random() < 0.5,
                             payload=rng.randbytes(rng.randint(0, 40)), at=rng.randint(0, 50_000))
    drain(net)
    return net.trace


def test_determinism_replay(swarm9):
    a = random_run(swarm9, 11)
    b = random_run(swarm9, 11)
    assert len(a) > 1000
    assert a == b
    assert random_run(swarm9, 12, 50) != random_run(swarm9, 11, 50)


def test_clock_is_monotonic(swarm9):
    rng = random.Random(3)
    net = Network(swarm9)
    for i in range(200):
        net.inject_from_host(f"h{rng.randint(1, 9)}", "239.255.0.1", 7400, rtps=True, at=rng.randint(0, 5000))
    last = 0
    while net.pending():
        step(net)
        assert net.clock >= last
        last = net.clock
    assert step(net) == []


def test_knobs(diamond):
    net = Network(diamond)
    net.set_link_latency("1:2-2:1", 700)
    assert net.link_latency[(1, 2)] == net.link_latency[(2, 1)] == 700
    net.set_proc_latency(3, 900)
    assert net.switch(3).proc_latency_us == 900
