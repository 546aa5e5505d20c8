import json
from pathlib import Path

import pytest

from swarmkdn.topology import load_topology, topology_from_dict

DATA = Path(__file__).parent / "data"


def chain_doc(n=3, proc=(50, 60, 70), roles=None, link_latency=100):
    """h1 - s1 - s2 - ... - sn - h2, ports: 1 host side, 2 towards higher ids, 3 towards lower ids."""
    roles = roles or ["transit"] * (n - 1) + ["sink"]
    switches = [{"id": i + 1, "proc_latency_us": proc[i], "int_role": roles[i]} for i in range(n)]
    links = [{"a": [i, 2], "b": [i + 1, 3], "latency_us": link_latency} for i in range(1, n)]
    hosts = [
        {"id": "h1", "mac": "00:00:00:00:00:01", "ip": "10.0.0.1", "switch": 1, "port": 1,
         "swarm_id": "A", "capabilities": 1, "cpu_load_pct": 40},
        {"id": "h2", "mac": "00:00:00:00:00:02", "ip": "10.0.0.2", "switch": n, "port": 1,
         "swarm_id": "A", "capabilities": 3, "cpu_load_pct": 10},
    ]
    return {"switches": switches, "links": links, "hosts": hosts}


@pytest.fixture
def diamond():
    return load_topology(DATA / "diamond.json")


@pytest.fixture
def swarm9():
    return load_topology(DATA / "swarm9.json")


@pytest.fixture
def chain3():
    return topology_from_dict(chain_doc())


@pytest.fixture
def one_switch():
    """Four hosts on a single switch; swarm A = {h1, h2, h3}, B = {h4}."""
    hosts = [
        {"id": f"h{i}", "mac": f"00:00:00:00:00:0{i}", "ip": f"10.0.0.{i}", "switch": 1, "port": i,
         "swarm_id": "A" if i < 4 else "B", "capabilities": i, "cpu_load_pct": 10 * i}
        for i in range(1, 5)
    ]
    return topology_from_dict({"switches": [{"id": 1, "proc_latency_us": 20}], "links": [], "hosts": hosts})


def load_json(name):
    return json.loads((DATA / name).read_text())


# Acceptance criteria record one PASS/FAIL line each; they are echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
