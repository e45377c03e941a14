"""Probe configuration and the raw per-run record."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime

from revelio.addresses import is_ipv4, normalize
from revelio.errors import ConfigInvalid
from revelio.types import (EPOCH, MAX_PROBE_SIZE, MIN_PROBE_SIZE, GraObservation,
                           HopObservation, as_utc)

DEFAULT_STUN_SERVER = ("stun.stunprotocol.org", 3478)
DEFAULT_TARGET = "8.8.8.8"


def even_sizes(lo: int = 120, hi: int = 1440, count: int = 21) -> tuple[int, ...]:
    step = (hi - lo) / (count - 1)
    return tuple(int(round(lo + i * step)) for i in range(count))


DEFAULT_SIZES = even_sizes()


def parse_hostport(text: str, default_port: int = 3478) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        return text, default_port
    return host, int(port)


@dataclass(frozen=True)
class ProbeConfig:
    stun_server: tuple[str, int] = DEFAULT_STUN_SERVER
    external_target: str = DEFAULT_TARGET
    packet_sizes: tuple[int, ...] = DEFAULT_SIZES
    repetitions_per_size: int = 5
    max_ttl: int = 30
    per_probe_timeout_ms: float = 2000.0
    inter_probe_gap_ms: float = 20.0
    silent_hop_limit: int = 5
    stun_retransmits: int = 3

    def __post_init__(self):
        object.__setattr__(self, "packet_sizes", tuple(int(s) for s in self.packet_sizes))
        self.validate()

    def validate(self):
        sizes = self.packet_sizes
        if len(sizes) < 3:
            raise ConfigInvalid("need at least 3 packet sizes for a line fit")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigInvalid("packet sizes must be strictly increasing")
        if sizes[0] < MIN_PROBE_SIZE or sizes[-1] > MAX_PROBE_SIZE:
            raise ConfigInvalid(f"packet sizes must lie in [{MIN_PROBE_SIZE}, {MAX_PROBE_SIZE}]")
        if self.repetitions_per_size < 1:
            raise ConfigInvalid("repetitions_per_size must be >= 1")
        if not 1 <= self.max_ttl <= 255:
            raise ConfigInvalid("max_ttl must be in 1..255")
        if self.per_probe_timeout_ms <= 0 or self.inter_probe_gap_ms < 0:
            raise ConfigInvalid("timeouts must be positive and gaps non-negative")
        if self.silent_hop_limit < 1:
            raise ConfigInvalid("silent_hop_limit must be >= 1")
        if not is_ipv4(self.external_target):
            raise ConfigInvalid(f"external target {self.external_target!r} is not IPv4")
        object.__setattr__(self, "external_target", normalize(self.external_target))
        host, port = self.stun_server
        if not host or not 1 <= int(port) <= 65535:
            raise ConfigInvalid(f"bad STUN server {self.stun_server!r}")

    @property
    def max_external_probes(self) -> int:
        return len(self.packet_sizes) * self.repetitions_per_size * self.max_ttl


@dataclass(frozen=True)
class RawRunRecord:
    device_id: str
    timestamp: datetime = EPOCH
    gra_observation: GraObservation | None = None
    gra_traceroute: tuple[HopObservation, ...] = ()
    sized_traceroutes: tuple[HopObservation, ...] = ()
    gra_sized_traceroutes: tuple[HopObservation, ...] = ()
    upnp_wan_ip: str | None = None
    errors: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "timestamp", as_utc(self.timestamp))
        for name in ("gra_traceroute", "sized_traceroutes", "gra_sized_traceroutes", "errors"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        targets = {o.target for o in self.sized_traceroutes}
        if len(targets) > 1:
            raise ValueError(f"sized traceroutes mix targets {sorted(targets)}")
        if self.upnp_wan_ip is not None:
            object.__setattr__(self, "upnp_wan_ip", normalize(self.upnp_wan_ip))

    @property
    def gra(self) -> str | None:
        return self.gra_observation.gra if self.gra_observation else None
