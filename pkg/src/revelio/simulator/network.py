"""A seeded stand-in for the network that answers probes from a topology."""

from __future__ import annotations

import random
from datetime import datetime, timedelta, timezone

from revelio import kernels
from revelio.errors import StunMalformed
from revelio.probing.records import ProbeConfig, RawRunRecord
from revelio.probing.session import run_revelio_session
from revelio.probing.stun import HEADER_LEN, MAGIC_COOKIE, encode_binding_response
from revelio.simulator.topology import GRA_ROLES, LinkSpec, NatRole, ReplyKind, SyntheticTopology
from revelio.types import HopObservation

SIM_EPOCH = datetime(2016, 8, 1, tzinfo=timezone.utc)
JITTER_MAX_US = 200.0
# one-way delay of the path inside a CPE between its LAN and WAN interfaces
CPE_INTERNAL_DELAY_US = 2.0
# the external target sits one link past the last modelled node
TARGET_LINK = LinkSpec(delay=2_000.0, bandwidth=125.0)
LOCAL_STUN_PORT = 40000


class _SimStunTransport:
    def __init__(self, net: "SimulatedNetwork"):
        self.net = net

    def local_address(self):
        return self.net.topology.probe, LOCAL_STUN_PORT

    def exchange(self, request: bytes, timeout_s: float) -> bytes | None:
        net = self.net
        if not net.topology.stun:
            net.clock_us += int(timeout_s * 1e6)
            return None
        if len(request) != HEADER_LEN or int.from_bytes(request[4:8], "big") != MAGIC_COOKIE:
            raise StunMalformed("simulated server got a malformed binding request")
        topo = net.topology
        if topo.probe == topo.gra:
            port = LOCAL_STUN_PORT
        else:
            port = net.mapped_port
        net.clock_us += 2 * int(sum(link.delay for link in topo.links)) + 10_000
        return encode_binding_response(request[8:20], topo.gra, port)


class SimulatedNetwork:
    """Network object for :func:`run_revelio_session` backed by a topology.

    RTT to hop ``k`` for a probe of ``size`` bytes is
    ``2 * sum(delay_i + size / bandwidth_i for i <= k)`` plus uniform jitter in
    ``[0, jitter_max]``. The clock only moves when probes are sent or the
    session pauses, so the same seed gives the same record.
    """

    def __init__(self, topology: SyntheticTopology, seed: int = 0,
                 jitter_max: float = JITTER_MAX_US, start: datetime = SIM_EPOCH,
                 backend: str | None = None):
        self.topology = topology
        self.rng = random.Random(seed)
        self.jitter_max = float(jitter_max)
        self.start = start
        self.clock_us = 0
        self.backend = backend
        self.mapped_port = 1024 + self.rng.randrange(64000)
        self.probes_sent = 0
        self._tokens: dict[int, tuple[float, int]] = {}
        links = list(topology.links) + [TARGET_LINK]
        self._delays = [link.delay for link in links]
        self._bandwidths = [link.bandwidth for link in links]
        self._survival = []
        p = 1.0
        for link in links:
            p *= (1.0 - link.loss) ** 2
            self._survival.append(p)
        self._rtt_cache: dict[int, list[float]] = {}
        self._by_address = {}
        for hop, node in enumerate(topology.nodes, start=1):
            self._by_address.setdefault(node.address, hop)
            if node.wan is not None:
                self._by_address.setdefault(node.wan, hop)

    # -- session interface -------------------------------------------------

    def now(self) -> datetime:
        return self.start + timedelta(microseconds=self.clock_us)

    def pause(self, ms: float):
        self.clock_us += int(ms * 1000)

    def stun_transport(self):
        return _SimStunTransport(self)

    def upnp_wan_ip(self) -> str | None:
        topo = self.topology
        first = topo.nodes[0]
        if not topo.upnp or first.nat_role not in (NatRole.HOME_NAT, NatRole.GRA_NAT):
            return None
        return first.wan

    def probe(self, target: str, size: int, ttl: int, timeout_ms: float) -> HopObservation:
        stamp = self.now()
        self.probes_sent += 1
        responder, rtt = self._respond(target, size, ttl)
        if rtt is not None and self.jitter_max > 0:
            rtt += self.rng.uniform(0.0, self.jitter_max)
        self.clock_us += int(rtt) if rtt is not None else int(timeout_ms * 1000)
        if responder is None:
            return HopObservation(ttl, None, None, size, target, stamp)
        return HopObservation(ttl, responder, rtt, size, target, stamp)

    # -- path model --------------------------------------------------------

    def path_rtts(self, size: int) -> list[float]:
        cached = self._rtt_cache.get(size)
        if cached is None:
            cached = kernels.cumulative_rtts(self._delays, self._bandwidths, size, self.backend)
            self._rtt_cache[size] = cached
        return cached

    def _respond(self, target: str, size: int, ttl: int):
        topo = self.topology
        if target == topo.probe:
            return target, 1.0
        rtts = self.path_rtts(size)
        n = len(topo.nodes)
        dest = self._by_address.get(target, n + 1)
        hop = min(ttl, dest)
        node = topo.nodes[hop - 1] if hop <= n else None
        rtt = rtts[hop - 1]

        if hop < dest:
            responder = node.address
        elif node is None:
            responder = target
        elif (node.reply_behavior.kind is ReplyKind.TWO_HOP_REPLY
              and node.nat_role in GRA_ROLES and target == node.wan):
            # answers from the LAN side at ttl n and from the GRA at ttl n + 1
            if ttl == dest:
                responder = node.address
            else:
                responder = target
                rtt += 2 * CPE_INTERNAL_DELAY_US
        else:
            responder = target

        if topo.filter_after_hop is not None and hop > topo.filter_after_hop:
            return None, None
        if node is not None:
            kind = node.reply_behavior.kind
            if kind is ReplyKind.SILENT:
                return None, None
            if kind is ReplyKind.RATE_LIMITED and not self._take_token(hop, node.reply_behavior.rate):
                return None, None
        if self._survival[hop - 1] < 1.0 and self.rng.random() >= self._survival[hop - 1]:
            return None, None
        return responder, rtt

    def _take_token(self, hop: int, rate: float) -> bool:
        # bucket of depth one, refilled at `rate` tokens per second
        tokens, last = self._tokens.get(hop, (1.0, self.clock_us))
        tokens = min(1.0, tokens + (self.clock_us - last) * rate / 1e6)
        if tokens >= 1.0:
            self._tokens[hop] = (tokens - 1.0, self.clock_us)
            return True
        self._tokens[hop] = (tokens, self.clock_us)
        return False


def respond(topology: SyntheticTopology, target: str, size: int, ttl: int,
            clock_us: int = 0, seed: int = 0, jitter_max: float = 0.0) -> HopObservation:
    """Answer a single probe; a fresh network per call (no rate-limit state)."""
    net = SimulatedNetwork(topology, seed=seed, jitter_max=jitter_max)
    net.clock_us = clock_us
    return net.probe(target, size, ttl, timeout_ms=2000.0)


def simulate_session(topology: SyntheticTopology, cfg: ProbeConfig | None = None, seed: int = 0,
                     jitter_max: float = JITTER_MAX_US, device_id: str | None = None,
                     start: datetime = SIM_EPOCH) -> RawRunRecord:
    cfg = cfg or sim_config()
    net = SimulatedNetwork(topology, seed=seed, jitter_max=jitter_max, start=start)
    return run_revelio_session(cfg, net, device_id=device_id or topology.name or "sim")


SIM_TARGET = "192.0.2.1"


def sim_config(**overrides) -> ProbeConfig:
    """Default probe configuration for simulated runs (TEST-NET-1 target)."""
    overrides.setdefault("external_target", SIM_TARGET)
    overrides.setdefault("stun_server", ("stun.sim", 3478))
    return ProbeConfig(**overrides)
