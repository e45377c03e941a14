"""On-the-wire tests: STUN, sized traceroutes, UPnP, and the run orchestrator."""

from revelio.probing.records import DEFAULT_SIZES, ProbeConfig, RawRunRecord, even_sizes
from revelio.probing.session import LiveNetwork, run_revelio_session
from revelio.probing.stun import stun_discover_gra
from revelio.probing.traceroute import trace_hops, traceroute, traceroute_to_gra
from revelio.probing.upnp import upnp_query_wan_ip

__all__ = [
    "DEFAULT_SIZES", "ProbeConfig", "RawRunRecord", "even_sizes", "LiveNetwork",
    "run_revelio_session", "stun_discover_gra", "trace_hops", "traceroute",
    "traceroute_to_gra", "upnp_query_wan_ip",
]
