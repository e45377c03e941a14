"""Deterministic synthetic access networks used as ground truth."""

from revelio.simulator.corpus import (ADDRESSING_PATTERNS, generate_corpus, make_topology,
                                      scripted_isp_fleet, two_hop_cpe_topology,
                                      uneven_home_topology)
from revelio.simulator.network import (SIM_TARGET, SimulatedNetwork, respond, sim_config,
                                       simulate_session)
from revelio.simulator.topology import (LinkSpec, NatRole, NodeSpec, ReplyBehavior, ReplyKind,
                                        SyntheticTopology, build_topology, dump_topologies,
                                        load_topologies, serialize_topology)

__all__ = [
    "ADDRESSING_PATTERNS", "generate_corpus", "make_topology", "scripted_isp_fleet",
    "two_hop_cpe_topology", "uneven_home_topology",
    "SIM_TARGET", "SimulatedNetwork", "respond", "sim_config", "simulate_session", "LinkSpec",
    "NatRole", "NodeSpec", "ReplyBehavior", "ReplyKind", "SyntheticTopology", "build_topology",
    "dump_topologies", "load_topologies", "serialize_topology",
]
