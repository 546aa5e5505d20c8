"""Static network description and its JSON loader."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ParseError, TopologyError, UnknownHost, UnknownSwitch
from .packet import ip_to_int, mac_to_bytes
from .switch import IntRole

DEFAULT_HOST_LINK_LATENCY_US = 10


@dataclass(frozen=True)
class SwitchSpec:
    id: int
    proc_latency_us: int = 0
    int_role: IntRole = IntRole.NONE


@dataclass(frozen=True)
class HostSpec:
    id: str
    mac: str
    ip: str
    switch: int
    port: int
    swarm_id: str
    capabilities: int = 0
    cpu_load_pct: int = 0
    loc_x: int = 0
    loc_y: int = 0
    node_id: int = 0
    latency_us: int = DEFAULT_HOST_LINK_LATENCY_US


@dataclass(frozen=True)
class LinkSpec:
    a: tuple[int, int]
    b: tuple[int, int]
    latency_us: int

    @property
    def name(self) -> str:
        return f"{self.a[0]}:{self.a[1]}-{self.b[0]}:{self.b[1]}"


@dataclass(frozen=True, order=True)
class DirectedLink:
    """One direction of a switch-to-switch link, identified by its endpoints."""

    src: int
    src_port: int
    dst: int
    dst_port: int

    def __str__(self):
        return f"s{self.src}.{self.src_port}>s{self.dst}.{self.dst_port}"


@dataclass
class Topology:
    switches: dict[int, SwitchSpec]
    hosts: dict[str, HostSpec]
    links: list[LinkSpec]
    controller: dict = field(default_factory=dict)

    def __post_init__(self):
        self._validate()

    def _validate(self):
        used = set()

        def claim(sw, port, what):
            if sw not in self.switches:
                raise UnknownSwitch(f"{what} references unknown switch {sw}")
            if not 0 <= port < 0xFFFE:
                raise TopologyError(f"{what}: port {port} out of range")
            if (sw, port) in used:
                raise TopologyError(f"{what}: port {sw}:{port} already has a link")
            used.add((sw, port))

        for link in self.links:
            if link.a[0] == link.b[0]:
                raise TopologyError(f"link {link.name} is a self-loop")
            claim(*link.a, f"link {link.name}")
            claim(*link.b, f"link {link.name}")
        ips = set()
        for h in self.hosts.values():
            claim(h.switch, h.port, f"host {h.id}")
            mac_to_bytes(h.mac)
            ip_to_int(h.ip)
            if h.ip in ips:
                raise TopologyError(f"duplicate host ip {h.ip}")
            ips.add(h.ip)

    # lookups

    def switch(self, sid: int) -> SwitchSpec:
        try:
            return self.switches[sid]
        except KeyError:
            raise UnknownSwitch(f"unknown switch {sid}") from None

    def host(self, hid: str) -> HostSpec:
        try:
            return self.hosts[hid]
        except KeyError:
            raise UnknownHost(f"unknown host {hid!r}") from None

    def host_by_ip(self, ip: str) -> Optional[HostSpec]:
        for h in self.hosts.values():
            if h.ip == ip:
                return h
        return None

    def directed_links(self) -> list[DirectedLink]:
        out = []
        for link in self.links:
            out.append(DirectedLink(link.a[0], link.a[1], link.b[0], link.b[1]))
            out.append(DirectedLink(link.b[0], link.b[1], link.a[0], link.a[1]))
        return sorted(out)

    def static_latency(self) -> dict[DirectedLink, int]:
        lat = {}
        for link in self.links:
            lat[DirectedLink(link.a[0], link.a[1], link.b[0], link.b[1])] = link.latency_us
            lat[DirectedLink(link.b[0], link.b[1], link.a[0], link.a[1])] = link.latency_us
        return lat

    def adjacency(self) -> dict[int, list[DirectedLink]]:
        adj = {sid: [] for sid in self.switches}
        for dl in self.directed_links():
            adj[dl.src].append(dl)
        return adj

    def link_between(self, a: int, b: int) -> Optional[DirectedLink]:
        """Lowest-port directed link from switch a to switch b."""
        for dl in self.adjacency().get(a, ()):
            if dl.dst == b:
                return dl
        return None

    def find_link(self, name: str) -> LinkSpec:
        for link in self.links:
            if link.name == name or f"{link.b[0]}:{link.b[1]}-{link.a[0]}:{link.a[1]}" == name:
                return link
        raise TopologyError(f"unknown link {name!r}")


def _endpoint(value, where):
    if isinstance(value, str):
        value = value.split(":")
    try:
        sw, port = (int(x) for x in value)
    except (TypeError, ValueError):
        raise ParseError(f"{where}: endpoint must be [switch, port] or 'switch:port', got {value!r}") from None
    return sw, port


def topology_from_dict(doc: dict, source=None) -> Topology:
    try:
        switches = {}
        for raw in doc.get("switches", []):
            spec = SwitchSpec(int(raw["id"]), int(raw.get("proc_latency_us", 0)),
                              IntRole(str(raw.get("int_role", "none")).lower()))
            if spec.id in switches:
                raise TopologyError(f"duplicate switch id {spec.id}")
            switches[spec.id] = spec
        hosts = {}
        for i, raw in enumerate(doc.get("hosts", [])):
            h = HostSpec(
                id=str(raw["id"]), mac=raw["mac"], ip=raw["ip"], switch=int(raw["switch"]),
                port=int(raw["port"]), swarm_id=str(raw["swarm_id"]),
                capabilities=int(raw.get("capabilities", 0)), cpu_load_pct=int(raw.get("cpu_load_pct", 0)),
                loc_x=int(raw.get("loc_x", 0)), loc_y=int(raw.get("loc_y", 0)),
                node_id=int(raw.get("node_id", i + 1)),
                latency_us=int(raw.get("latency_us", DEFAULT_HOST_LINK_LATENCY_US)),
            )
            if h.id in hosts:
                raise TopologyError(f"duplicate host id {h.id}")
            hosts[h.id] = h
        links = [LinkSpec(_endpoint(raw["a"], "link"), _endpoint(raw["b"], "link"), int(raw["latency_us"]))
                 for raw in doc.get("links", [])]
        return Topology(switches, hosts, links, dict(doc.get("controller", {})))
    except (KeyError, ValueError, TypeError) as exc:
        raise ParseError(f"bad topology document: {exc!r}", path=source) from None


def load_topology(path) -> Topology:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=str(path), line=exc.lineno) from None
    return topology_from_dict(doc, source=str(path))
