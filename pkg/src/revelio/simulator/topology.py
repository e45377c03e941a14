"""Synthetic access-network topologies and their text format.

A topology is an ordered chain of nodes from the probe outward. ``links[i]``
leads into ``nodes[i]``, so node ``i`` answers at ttl ``i + 1``. The access
link is numbered the same way (link ``k`` reaches hop ``k``); the CPE is the
hop just before it.

Text format, one item per line::

    # revelio topology
    name = two-hop-cpe
    technology = dsl
    access_link = 3
    gra = 203.0.113.7
    probe = 192.168.1.10
    upnp = yes
    stun = yes
    filter_after_hop = none
    well_formed = yes
    truth = simple_home_nat
    node 192.168.1.1 private none normal
    node 192.168.0.1 private gra_nat two_hop_reply wan=203.0.113.7
    link 100.0 12.5 0.0

Serialising a parsed canonical file reproduces it byte for byte.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

from revelio.addresses import IpClass, classify_address, is_ipv4, normalize
from revelio.errors import SpecInconsistent, SpecParse
from revelio.pathchar import TechDelayRanges
from revelio.types import AccessTechnology, VerdictKind

HEADER = "# revelio topology"


class NatRole(str, enum.Enum):
    NONE = "none"
    HOME_NAT = "home_nat"
    GRA_NAT = "gra_nat"
    CGN_NAT = "cgn_nat"


GRA_ROLES = (NatRole.GRA_NAT, NatRole.CGN_NAT)


class ReplyKind(str, enum.Enum):
    NORMAL = "normal"
    TWO_HOP_REPLY = "two_hop_reply"
    SILENT = "silent"
    RATE_LIMITED = "rate_limited"


@dataclass(frozen=True)
class ReplyBehavior:
    kind: ReplyKind = ReplyKind.NORMAL
    rate: float | None = None  # replies per second, rate-limited nodes only

    def __post_init__(self):
        object.__setattr__(self, "kind", ReplyKind(self.kind))
        if self.kind is ReplyKind.RATE_LIMITED:
            if self.rate is None:
                object.__setattr__(self, "rate", 10.0)
            if self.rate <= 0:
                raise ValueError("reply rate must be positive")
        elif self.rate is not None:
            raise ValueError("only rate-limited nodes carry a rate")

    def token(self) -> str:
        if self.kind is ReplyKind.RATE_LIMITED:
            return f"{self.kind.value}:{self.rate!r}"
        return self.kind.value

    @classmethod
    def from_token(cls, token: str) -> "ReplyBehavior":
        kind, _, rate = token.partition(":")
        return cls(ReplyKind(kind), float(rate) if rate else None)


NORMAL = ReplyBehavior()


@dataclass(frozen=True)
class LinkSpec:
    delay: float      # one-way propagation, µs
    bandwidth: float  # bytes per µs
    loss: float = 0.0

    def __post_init__(self):
        for name in ("delay", "bandwidth", "loss"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.delay <= 0 or self.bandwidth <= 0:
            raise ValueError("link delay and bandwidth must be positive")
        if not 0.0 <= self.loss <= 1.0:
            raise ValueError("loss must be a probability")


@dataclass(frozen=True)
class NodeSpec:
    address: str
    realm: IpClass | None = None
    nat_role: NatRole = NatRole.NONE
    reply_behavior: ReplyBehavior = NORMAL
    wan: str | None = None  # external address of NAT nodes

    def __post_init__(self):
        object.__setattr__(self, "address", normalize(self.address))
        realm = classify_address(self.address) if self.realm is None else IpClass(self.realm)
        object.__setattr__(self, "realm", realm)
        object.__setattr__(self, "nat_role", NatRole(self.nat_role))
        if self.wan is not None:
            object.__setattr__(self, "wan", normalize(self.wan))


def label_truth(nodes, access_link: int, gra: str, probe: str) -> VerdictKind:
    """Ground-truth class from where the GRA translation happens."""
    gra_hops = [i + 1 for i, n in enumerate(nodes) if n.nat_role in GRA_ROLES]
    if not gra_hops:
        if probe == gra:
            return VerdictKind.NO_HOME_NAT
        raise SpecInconsistent("no node translates to the GRA and the probe does not hold it")
    if len(gra_hops) > 1:
        raise SpecInconsistent(f"{len(gra_hops)} nodes translate to the GRA (hops {gra_hops})")
    if gra_hops[0] >= access_link:
        return VerdictKind.CARRIER_GRADE_NAT
    return VerdictKind.SIMPLE_HOME_NAT


@dataclass(frozen=True)
class SyntheticTopology:
    nodes: tuple[NodeSpec, ...]
    links: tuple[LinkSpec, ...]
    access_link: int
    gra: str
    probe: str
    technology: AccessTechnology = AccessTechnology.UNKNOWN
    name: str = ""
    upnp: bool = True
    stun: bool = True
    filter_after_hop: int | None = None
    well_formed: bool = False
    truth: VerdictKind | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "technology", AccessTechnology(self.technology))
        if not (is_ipv4(self.gra) and is_ipv4(self.probe)):
            raise SpecInconsistent("gra and probe must be IPv4 addresses")
        object.__setattr__(self, "gra", normalize(self.gra))
        object.__setattr__(self, "probe", normalize(self.probe))
        object.__setattr__(self, "nodes", tuple(
            replace(n, wan=self.gra) if n.nat_role in GRA_ROLES and n.wan is None else n
            for n in self.nodes))
        self._validate()
        truth = label_truth(self.nodes, self.access_link, self.gra, self.probe)
        if self.truth is not None and VerdictKind(self.truth) is not truth:
            raise SpecInconsistent(f"stated truth {VerdictKind(self.truth).value} "
                                   f"contradicts NAT placement ({truth.value})")
        object.__setattr__(self, "truth", truth)

    def _validate(self):
        nodes, links = self.nodes, self.links
        if not nodes:
            raise SpecInconsistent("topology has no nodes")
        if len(nodes) != len(links):
            raise SpecInconsistent(f"{len(nodes)} nodes but {len(links)} links")
        if not 1 <= self.access_link <= len(nodes):
            raise SpecInconsistent(f"access link {self.access_link} outside 1..{len(nodes)}")
        if classify_address(self.gra) is not IpClass.PUBLIC:
            raise SpecInconsistent(f"GRA {self.gra} is not public")
        for hop, node in enumerate(nodes, start=1):
            if node.realm is not classify_address(node.address):
                raise SpecInconsistent(f"hop {hop}: {node.address} is not in realm {node.realm.value}")
            if node.nat_role is NatRole.GRA_NAT and hop >= self.access_link:
                raise SpecInconsistent(f"hop {hop}: home GRA-NAT sits past the access link")
            if node.nat_role is NatRole.CGN_NAT and hop < self.access_link:
                raise SpecInconsistent(f"hop {hop}: CGN sits inside the home")
            if node.nat_role in GRA_ROLES and node.wan not in (None, self.gra):
                raise SpecInconsistent(f"hop {hop}: GRA-NAT external address {node.wan} != GRA")
            if node.nat_role is NatRole.NONE and node.wan is not None:
                raise SpecInconsistent(f"hop {hop}: only NAT nodes have a WAN address")
        if self.probe == self.gra and any(n.nat_role in GRA_ROLES for n in nodes):
            raise SpecInconsistent("probe holds the GRA but a node also translates to it")
        if self.filter_after_hop is not None and not 0 <= self.filter_after_hop <= len(nodes):
            raise SpecInconsistent("filter_after_hop outside the path")
        if self.well_formed:
            delay = links[self.access_link - 1].delay
            if not TechDelayRanges().contains(self.technology, delay):
                raise SpecInconsistent(f"access link delay {delay} µs outside the "
                                       f"{self.technology.value} range")

    @property
    def cpe_hop(self) -> int:
        """Hop of the device terminating the access link (0: the probe itself)."""
        return self.access_link - 1

    @property
    def gra_hop(self) -> int | None:
        for hop, node in enumerate(self.nodes, start=1):
            if node.nat_role in GRA_ROLES:
                return hop
        return None

    @property
    def cgn_distance(self) -> int | None:
        """ISP hops from the CPE to the CGN (1: first hop past the access link)."""
        if self.truth is not VerdictKind.CARRIER_GRADE_NAT:
            return None
        return self.gra_hop - self.access_link + 1

    def with_faults(self, **changes) -> "SyntheticTopology":
        changes.setdefault("truth", None)
        return replace(self, **changes)

    def filtered_past_cpe(self) -> "SyntheticTopology":
        """Same topology with every ICMP reply beyond the CPE dropped."""
        return self.with_faults(filter_after_hop=self.cpe_hop)


def _yes(value: bool) -> str:
    return "yes" if value else "no"


def serialize_topology(topo: SyntheticTopology) -> str:
    lines = [
        HEADER,
        f"name = {topo.name}",
        f"technology = {topo.technology.value}",
        f"access_link = {topo.access_link}",
        f"gra = {topo.gra}",
        f"probe = {topo.probe}",
        f"upnp = {_yes(topo.upnp)}",
        f"stun = {_yes(topo.stun)}",
        f"filter_after_hop = {'none' if topo.filter_after_hop is None else topo.filter_after_hop}",
        f"well_formed = {_yes(topo.well_formed)}",
        f"truth = {topo.truth.value}",
    ]
    for node in topo.nodes:
        line = (f"node {node.address} {node.realm.value} {node.nat_role.value} "
                f"{node.reply_behavior.token()}")
        if node.wan is not None:
            line += f" wan={node.wan}"
        lines.append(line)
    for link in topo.links:
        lines.append(f"link {link.delay!r} {link.bandwidth!r} {link.loss!r}")
    return "\n".join(lines) + "\n"


_BOOL = {"yes": True, "no": False, "true": True, "false": False}
_HEADER_KEYS = ("name", "technology", "access_link", "gra", "probe", "upnp", "stun",
                "filter_after_hop", "well_formed", "truth")


def build_topology(text: str) -> SyntheticTopology:
    """Parse one topology description; raises SpecParse / SpecInconsistent."""
    header: dict[str, str] = {}
    nodes, links = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        word, _, rest = line.partition(" ")
        try:
            if word == "node":
                parts = rest.split()
                if len(parts) < 4:
                    raise SpecParse("node needs: address realm nat_role reply_behavior", lineno)
                extras = dict(p.split("=", 1) for p in parts[4:])
                unknown = set(extras) - {"wan"}
                if unknown:
                    raise SpecParse(f"unknown node option(s) {sorted(unknown)}", lineno)
                nodes.append(NodeSpec(parts[0], IpClass(parts[1]), NatRole(parts[2]),
                                      ReplyBehavior.from_token(parts[3]), extras.get("wan")))
            elif word == "link":
                parts = rest.split()
                if len(parts) != 3:
                    raise SpecParse("link needs: delay_us bandwidth_Bpus loss", lineno)
                links.append(LinkSpec(*(float(p) for p in parts)))
            elif "=" in line:
                key, _, value = line.partition("=")
                key = key.strip()
                if key not in _HEADER_KEYS:
                    raise SpecParse(f"unknown header key {key!r}", lineno)
                header[key] = value.strip()
            else:
                raise SpecParse(f"cannot parse {line!r}", lineno)
        except SpecParse:
            raise
        except ValueError as exc:
            raise SpecParse(str(exc), lineno) from exc

    for key in ("access_link", "gra", "probe"):
        if key not in header:
            raise SpecParse(f"missing header key {key!r}")
    try:
        flt = header.get("filter_after_hop", "none")
        kwargs = dict(
            name=header.get("name", ""),
            technology=AccessTechnology(header.get("technology", "unknown")),
            access_link=int(header["access_link"]),
            gra=header["gra"],
            probe=header["probe"],
            upnp=_BOOL[header.get("upnp", "yes").lower()],
            stun=_BOOL[header.get("stun", "yes").lower()],
            filter_after_hop=None if flt.lower() == "none" else int(flt),
            well_formed=_BOOL[header.get("well_formed", "no").lower()],
            truth=VerdictKind(header["truth"]) if "truth" in header else None,
        )
    except (KeyError, ValueError) as exc:
        raise SpecParse(f"bad header value: {exc}") from exc
    return SyntheticTopology(tuple(nodes), tuple(links), **kwargs)


def dump_topologies(topologies) -> str:
    return "".join(serialize_topology(t) for t in topologies)


def load_topologies(text: str) -> list[SyntheticTopology]:
    """Parse a file holding several topologies, each opened by the header line."""
    chunks, current = [], []
    for line in text.splitlines(keepends=True):
        if line.strip() == HEADER and current:
            chunks.append("".join(current))
            current = []
        current.append(line)
    if "".join(current).strip():
        chunks.append("".join(current))
    return [build_topology(chunk) for chunk in chunks]
