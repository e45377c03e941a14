"""One complete measurement run.

A *network* object bundles everything the run touches on the wire::

    stun_transport()                      -> object with exchange/local_address
    probe(target, size, ttl, timeout_ms)  -> HopObservation
    upnp_wan_ip()                         -> str | None
    now()                                 -> datetime
    pause(ms)

:class:`LiveNetwork` uses real sockets; ``revelio.simulator`` has a
synthetic one.
"""

from __future__ import annotations

import logging
import time

from revelio.errors import AllHopsSilent, StunError
from revelio.probing.records import ProbeConfig, RawRunRecord
from revelio.probing.stun import UdpStunTransport, stun_discover_gra
from revelio.probing.traceroute import UdpResponder, trace_hops, traceroute_to_gra
from revelio.probing.upnp import upnp_query_wan_ip
from revelio.types import utc_now

log = logging.getLogger(__name__)


class LiveNetwork:
    def __init__(self, cfg: ProbeConfig):
        self.cfg = cfg
        self._responder = None

    def stun_transport(self):
        return UdpStunTransport(self.cfg.stun_server)

    def probe(self, target, size, ttl, timeout_ms):
        if self._responder is None:
            self._responder = UdpResponder()
        return self._responder.probe(target, size, ttl, timeout_ms)

    def upnp_wan_ip(self):
        return upnp_query_wan_ip(timeout_s=self.cfg.per_probe_timeout_ms / 1000.0)

    def now(self):
        return utc_now()

    def pause(self, ms):
        time.sleep(ms / 1000.0)

    def close(self):
        if self._responder is not None:
            self._responder.close()


class _PacedResponder:
    """Inserts the configured gap between consecutive probes."""

    def __init__(self, network, gap_ms):
        self.network = network
        self.gap_ms = gap_ms
        self.sent = 0

    def probe(self, target, size, ttl, timeout_ms):
        if self.sent and self.gap_ms:
            self.network.pause(self.gap_ms)
        self.sent += 1
        return self.network.probe(target, size, ttl, timeout_ms)


def _sized_traces(target, cfg, responder):
    out = []
    for size in cfg.packet_sizes:
        for _ in range(cfg.repetitions_per_size):
            out.extend(trace_hops(target, size, cfg, responder))
    return out


def run_revelio_session(cfg: ProbeConfig, network, device_id: str = "local") -> RawRunRecord:
    """STUN, traceroute to the GRA, sized traceroutes to the external target
    and to the GRA, then UPnP. Network failures are written into the record
    instead of aborting it.
    """
    cfg.validate()
    responder = _PacedResponder(network, cfg.inter_probe_gap_ms)
    started = network.now()
    errors = []

    gra_obs = None
    transport = network.stun_transport()
    try:
        gra_obs = stun_discover_gra(transport, retransmits=cfg.stun_retransmits,
                                    clock=network.now)
    except StunError as exc:
        errors.append(f"stun: {type(exc).__name__}: {exc}")
    finally:
        close = getattr(transport, "close", None)
        if close is not None:
            close()

    gra_trace = []
    if gra_obs is not None:
        try:
            gra_trace, _ = traceroute_to_gra(gra_obs.gra, cfg, responder)
        except AllHopsSilent as exc:
            gra_trace = exc.observations
            errors.append(f"gra traceroute: all hops silent toward {exc.target}")

    sized = _sized_traces(cfg.external_target, cfg, responder)
    if all(o.missing for o in sized):
        errors.append(f"sized traceroutes: all hops silent toward {cfg.external_target}")

    gra_sized = _sized_traces(gra_obs.gra, cfg, responder) if gra_obs is not None else []

    upnp = None
    if any(o.ttl == 1 and not o.missing for o in (*gra_trace, *sized)):
        upnp = network.upnp_wan_ip()
    else:
        errors.append("upnp: skipped, nothing answered at hop 1")

    log.debug("session %s done: %d external probes, %d GRA probes",
              device_id, len(sized), len(gra_sized))
    return RawRunRecord(
        device_id=device_id,
        timestamp=started,
        gra_observation=gra_obs,
        gra_traceroute=tuple(gra_trace),
        sized_traceroutes=tuple(sized),
        gra_sized_traceroutes=tuple(gra_sized),
        upnp_wan_ip=upnp,
        errors=tuple(errors),
    )
