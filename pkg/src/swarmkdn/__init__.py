"""
swarmkdn: a knowledge-defined networking stack for robot swarms.

A simulated P4-style data plane with in-band telemetry, a byte-level
control channel, an RDF knowledge graph of the network with a small SPARQL
engine, and controller applications (swarm-scoped multicast, adaptive
routing, capability-aware node selection) driven by that graph.
"""

from .channel import decode_message, dispatch_read, dispatch_write, encode_message
from .controller import Controller, ControllerConfig, bootstrap, compute_path, select_node
from .network import Network
from .packet import HeaderStack, emit_packet, parse_packet
from .rdfizer import rdfize_int_report, rdfize_table_entry, rdfize_topology
from .runtime import Deployment
from .scenario import Report, load_scenario, parse_scenario, run, run_scenario
from .sparql import evaluate, parse_query, query
from .store import TripleStore, export_ntriples
from .topology import Topology, load_topology, topology_from_dict

__version__ = "0.1.0"

__all__ = [
    "Controller", "ControllerConfig", "Deployment", "HeaderStack", "Network", "Report", "Topology",
    "TripleStore", "bootstrap", "compute_path", "decode_message", "dispatch_read", "dispatch_write",
    "emit_packet", "encode_message", "evaluate", "export_ntriples", "load_scenario", "load_topology",
    "parse_packet", "parse_query", "parse_scenario", "query", "rdfize_int_report", "rdfize_table_entry",
    "rdfize_topology", "run", "run_scenario", "select_node", "topology_from_dict",
]
