"""TTL-limited probing.

The engine talks to a *responder*: any object with
``probe(target, size, ttl, timeout_ms) -> HopObservation``. The live
responder sends UDP datagrams to high ports and reads ICMP Time Exceeded /
Port Unreachable replies from a raw socket; the simulator provides another.
"""

from __future__ import annotations

import errno
import ipaddress
import select
import socket
import struct
import time
from dataclasses import dataclass

from revelio.errors import AllHopsSilent, SendFailure
from revelio.types import HopObservation, utc_now

IP_HEADER_LEN = 20
UDP_HEADER_LEN = 8
BASE_PORT = 33434

ICMP_ECHO_REPLY = 0
ICMP_DEST_UNREACH = 3
ICMP_TIME_EXCEEDED = 11
ICMP_PORT_UNREACH = 3


def trace_hops(target: str, size: int, cfg, responder) -> list[HopObservation]:
    """Probe ttl = 1..max_ttl toward ``target``; never raises on silence.

    Stops when the target itself answers or after ``cfg.silent_hop_limit``
    consecutive silent hops.
    """
    hops = []
    silent = 0
    for ttl in range(1, cfg.max_ttl + 1):
        obs = responder.probe(target, size, ttl, cfg.per_probe_timeout_ms)
        hops.append(obs)
        if obs.responder == target:
            break
        silent = silent + 1 if obs.missing else 0
        if silent >= cfg.silent_hop_limit:
            break
    return hops


def traceroute(target: str, size: int, cfg, responder) -> list[HopObservation]:
    hops = trace_hops(target, size, cfg, responder)
    if all(h.missing for h in hops):
        raise AllHopsSilent(target, hops)
    return hops


def hops_to(hops, address: str) -> int | None:
    """Smallest ttl answered by ``address``."""
    ttls = [h.ttl for h in hops if h.responder == address]
    return min(ttls) if ttls else None


def traceroute_to_gra(gra: str, cfg, responder, size: int | None = None):
    """Traceroute to our own GRA; returns ``(hops, hops_to_gra)``.

    ``hops_to_gra`` is None when the GRA never answers. The raw hop list is
    kept either way since replies past the access link are evidence too.
    """
    size = size if size is not None else cfg.packet_sizes[0]
    hops = traceroute(gra, size, cfg, responder)
    return hops, hops_to(hops, gra)


@dataclass(frozen=True)
class IcmpReply:
    icmp_type: int
    code: int
    source: str
    inner_dst: str
    inner_sport: int
    inner_dport: int

    @property
    def reached_target(self) -> bool:
        return self.icmp_type == ICMP_DEST_UNREACH and self.code == ICMP_PORT_UNREACH


def parse_icmp_reply(packet: bytes) -> IcmpReply | None:
    """Decode an IPv4+ICMP error quoting a UDP probe; None if it is not one."""
    if len(packet) < IP_HEADER_LEN:
        return None
    ihl = (packet[0] & 0x0F) * 4
    if packet[0] >> 4 != 4 or packet[9] != socket.IPPROTO_ICMP:
        return None
    source = str(ipaddress.IPv4Address(packet[12:16]))
    icmp = packet[ihl:]
    if len(icmp) < 8:
        return None
    icmp_type, code = icmp[0], icmp[1]
    if icmp_type not in (ICMP_TIME_EXCEEDED, ICMP_DEST_UNREACH):
        return None
    inner = icmp[8:]
    if len(inner) < IP_HEADER_LEN:
        return None
    inner_ihl = (inner[0] & 0x0F) * 4
    if inner[9] != socket.IPPROTO_UDP or len(inner) < inner_ihl + 4:
        return None
    inner_dst = str(ipaddress.IPv4Address(inner[16:20]))
    sport, dport = struct.unpack_from("!HH", inner, inner_ihl)
    return IcmpReply(icmp_type, code, source, inner_dst, sport, dport)


def udp_payload(size: int) -> bytes:
    """Payload giving an IP datagram of exactly ``size`` bytes."""
    return b"\x00" * (size - IP_HEADER_LEN - UDP_HEADER_LEN)


def can_open_raw_socket() -> bool:
    try:
        s = socket.socket(socket.AF_INET, socket.SOCK_RAW, socket.IPPROTO_ICMP)
    except (PermissionError, OSError):
        return False
    s.close()
    return True


class UdpResponder:
    """Classic UDP traceroute against the real network. Needs CAP_NET_RAW.

    Sockets can be injected for testing.
    """

    def __init__(self, send_sock=None, recv_sock=None, clock=time.perf_counter_ns):
        self.send_sock = send_sock or socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.recv_sock = recv_sock or socket.socket(socket.AF_INET, socket.SOCK_RAW,
                                                    socket.IPPROTO_ICMP)
        self.clock = clock
        self._seq = 0

    def _next_port(self) -> int:
        self._seq = (self._seq + 1) % 4096
        return BASE_PORT + self._seq

    def probe(self, target: str, size: int, ttl: int, timeout_ms: float) -> HopObservation:
        port = self._next_port()
        stamp = utc_now()
        self.send_sock.setsockopt(socket.IPPROTO_IP, socket.IP_TTL, ttl)
        start = self.clock()
        try:
            self.send_sock.sendto(udp_payload(size), (target, port))
        except OSError as exc:
            if exc.errno in (errno.EHOSTUNREACH, errno.ENETUNREACH):
                return HopObservation(ttl, None, None, size, target, stamp)
            raise SendFailure(str(exc)) from exc
        deadline = start + int(timeout_ms * 1e6)
        while True:
            remaining = (deadline - self.clock()) / 1e9
            if remaining <= 0:
                return HopObservation(ttl, None, None, size, target, stamp)
            ready, _, _ = select.select([self.recv_sock], [], [], remaining)
            if not ready:
                continue
            packet, _ = self.recv_sock.recvfrom(4096)
            now = self.clock()
            reply = parse_icmp_reply(packet)
            if reply is None or reply.inner_dst != target or reply.inner_dport != port:
                continue
            return HopObservation(ttl, reply.source, (now - start) / 1000.0, size, target, stamp)

    def close(self):
        self.send_sock.close()
        self.recv_sock.close()
