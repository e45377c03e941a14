"""Domain value objects shared by the probing, analysis and reporting layers.

Addresses are carried as canonical dotted-quad strings. ``None`` stands for
the Missing / Timeout / Undetermined / Unavailable markers, so a missing
responder is simply ``responder=None``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime, timezone

from revelio.addresses import IpClass, classify_address, is_ipv4, normalize

MIN_PROBE_SIZE = 64
MAX_PROBE_SIZE = 1500

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def as_utc(ts: datetime) -> datetime:
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


class AccessTechnology(str, enum.Enum):
    DSL = "dsl"
    CABLE = "cable"
    FIBER = "fiber"
    SATELLITE = "satellite"
    UNKNOWN = "unknown"


class VerdictKind(str, enum.Enum):
    INCONCLUSIVE = "inconclusive"
    NO_HOME_NAT = "no_home_nat"
    SIMPLE_HOME_NAT = "simple_home_nat"
    CARRIER_GRADE_NAT = "carrier_grade_nat"

    @property
    def definite(self) -> bool:
        return self is not VerdictKind.INCONCLUSIVE


class Correction(str, enum.Enum):
    SPURIOUS_LINK_PURGE = "spurious_link_purge"
    EXPECTED_DELAY_CORRECTION = "expected_delay_correction"


class Placement(str, enum.Enum):
    """Which side of the access link a test put the GRA-NAT on."""

    HOME = "home"
    ISP = "isp"


@dataclass(frozen=True)
class HopObservation:
    ttl: int
    responder: str | None
    rtt: float | None
    probe_size: int
    target: str
    timestamp: datetime = EPOCH

    def __post_init__(self):
        if self.ttl < 1:
            raise ValueError(f"ttl must be >= 1, got {self.ttl}")
        if (self.rtt is None) != (self.responder is None):
            raise ValueError("rtt is a timeout exactly when the responder is missing")
        if not MIN_PROBE_SIZE <= self.probe_size <= MAX_PROBE_SIZE:
            raise ValueError(f"probe size {self.probe_size} outside "
                             f"[{MIN_PROBE_SIZE}, {MAX_PROBE_SIZE}]")
        # IPv6 responders are kept verbatim, IPv4 ones canonicalised.
        if self.responder is not None and is_ipv4(self.responder):
            object.__setattr__(self, "responder", normalize(self.responder))
        object.__setattr__(self, "target", normalize(self.target))
        object.__setattr__(self, "timestamp", as_utc(self.timestamp))

    @property
    def missing(self) -> bool:
        return self.responder is None


@dataclass(frozen=True)
class GraObservation:
    gra: str
    mapped_port: int
    local_address: str
    local_port: int
    timestamp: datetime = EPOCH

    def __post_init__(self):
        object.__setattr__(self, "gra", normalize(self.gra))
        object.__setattr__(self, "local_address", normalize(self.local_address))
        object.__setattr__(self, "timestamp", as_utc(self.timestamp))
        if not 1 <= self.mapped_port <= 65535:
            raise ValueError(f"mapped port {self.mapped_port} out of range")
        # An identity mapping (no translation anywhere) is reported as-is even
        # on a private test LAN.
        if self.gra != self.local_address and classify_address(self.gra) is not IpClass.PUBLIC:
            raise ValueError(f"GRA {self.gra} is not a public address")


@dataclass(frozen=True)
class RevelioState:
    device_id: str
    isp_name: str = ""
    technology: AccessTechnology = AccessTechnology.UNKNOWN
    local_ip: str | None = None
    gra_set: tuple[GraObservation, ...] = ()
    hops_to_gra: int | None = None
    access_link_hop: int | None = None
    private_after_cpe: frozenset[str] = frozenset()
    shared_after_access: frozenset[str] = frozenset()
    upnp_wan_ip: str | None = None
    run_count: int = 0
    country: str = ""

    def __post_init__(self):
        object.__setattr__(self, "technology", AccessTechnology(self.technology))
        object.__setattr__(self, "gra_set", tuple(sorted(
            self.gra_set, key=lambda g: (g.timestamp, g.gra, g.mapped_port,
                                         g.local_address, g.local_port))))
        object.__setattr__(self, "private_after_cpe", frozenset(self.private_after_cpe))
        object.__setattr__(self, "shared_after_access", frozenset(self.shared_after_access))
        for addr in self.private_after_cpe:
            if classify_address(addr) is not IpClass.PRIVATE:
                raise ValueError(f"{addr} is not a private address")
        for addr in self.shared_after_access:
            if classify_address(addr) is not IpClass.SHARED:
                raise ValueError(f"{addr} is not a shared address")
        for name in ("hops_to_gra", "access_link_hop"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ValueError(f"{name} must be >= 1 or None")
        if self.run_count < 0:
            raise ValueError("run_count must be >= 0")

    @property
    def gras(self) -> frozenset[str]:
        return frozenset(g.gra for g in self.gra_set)


@dataclass(frozen=True)
class Finding:
    test: str
    observation: str
    placement: Placement | None = None


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    evidence: tuple[Finding, ...] = ()
    corrections_applied: frozenset[Correction] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "kind", VerdictKind(self.kind))
        object.__setattr__(self, "evidence", tuple(self.evidence))
        object.__setattr__(self, "corrections_applied",
                           frozenset(Correction(c) for c in self.corrections_applied))
        if self.kind is VerdictKind.NO_HOME_NAT and not any(
                f.test == "local_ip" for f in self.evidence):
            raise ValueError("a no-home-NAT verdict needs the local_ip = GRA finding")
        if self.kind is VerdictKind.CARRIER_GRADE_NAT and not any(
                f.placement is Placement.ISP for f in self.evidence):
            raise ValueError("a CGN verdict needs evidence placing the GRA-NAT past the access link")
