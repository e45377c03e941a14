"""Labelled topology corpora and a few hand-built reference topologies."""

from __future__ import annotations

import random
from collections import defaultdict

from revelio.simulator.topology import (LinkSpec, NatRole, NodeSpec, ReplyBehavior, ReplyKind,
                                        SyntheticTopology)
from revelio.types import AccessTechnology

TECHNOLOGIES = (AccessTechnology.DSL, AccessTechnology.CABLE, AccessTechnology.FIBER,
                AccessTechnology.SATELLITE)

# addressing used between the CPE and the GRA-NAT
SHARED_THEN_PRIVATE = "shared_then_private"
ALL_PRIVATE = "all_private"
ALL_PUBLIC = "all_public"
ADDRESSING_PATTERNS = (SHARED_THEN_PRIVATE, ALL_PRIVATE, ALL_PUBLIC)

# one-way access delays drawn for well-formed topologies, µs; kept inside the
# default expected ranges and at least a decade above any home link
ACCESS_DELAYS = {
    AccessTechnology.DSL: (3_000.0, 25_000.0),
    AccessTechnology.CABLE: (1_500.0, 25_000.0),
    AccessTechnology.FIBER: (1_000.0, 9_000.0),
    AccessTechnology.SATELLITE: (250_000.0, 650_000.0),
}
ACCESS_BANDWIDTH = {
    AccessTechnology.DSL: (1.0, 3.0),
    AccessTechnology.CABLE: (5.0, 20.0),
    AccessTechnology.FIBER: (12.5, 125.0),
    AccessTechnology.SATELLITE: (0.5, 3.0),
}

# corpus scenarios, cycled in this order
KINDS = ("cgn", "home", "cgn", "home_two_hop", "home_uneven", "no_nat", "cgn", "home")


class _Addresses:
    """Hands out non-colliding addresses per realm."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.used: set[str] = set()

    def _fresh(self, make):
        while True:
            addr = make()
            if addr not in self.used:
                self.used.add(addr)
                return addr

    def private_lan(self):
        r = self.rng
        return self._fresh(lambda: f"192.168.{r.randrange(256)}.1")

    def private(self):
        r = self.rng
        return self._fresh(lambda: f"10.{r.randrange(256)}.{r.randrange(256)}.{r.randrange(1, 255)}")

    def shared(self):
        r = self.rng
        return self._fresh(lambda: f"100.{r.randrange(64, 128)}.{r.randrange(256)}.{r.randrange(1, 255)}")

    def public(self):
        r = self.rng
        # a handful of ordinary unicast /8s, away from every reserved block
        return self._fresh(lambda: f"{r.choice((62, 77, 81, 85, 88, 91, 93, 94, 95, 151, 213, 217))}."
                                   f"{r.randrange(256)}.{r.randrange(256)}.{r.randrange(1, 255)}")

    def in_realm(self, realm):
        return {"private": self.private, "shared": self.shared, "public": self.public}[realm]()


def _isp_realms(pattern: str, count: int) -> list[str]:
    if pattern == SHARED_THEN_PRIVATE:
        return ["shared"] + ["private"] * (count - 1)
    if pattern == ALL_PRIVATE:
        return ["private"] * count
    return ["public"] * count


def make_topology(*, kind: str, technology: AccessTechnology, home_depth: int = 1,
                  cgn_distance: int = 1, pattern: str = ALL_PUBLIC, upnp: bool = True,
                  rng: random.Random | None = None, name: str = "",
                  home_delays: list[float] | None = None,
                  access_delay: float | None = None) -> SyntheticTopology:
    """Build one topology of the given scenario.

    ``kind`` is one of ``home``, ``home_two_hop``, ``home_uneven``, ``cgn``
    or ``no_nat``. Delays not given explicitly are drawn from ``rng``.
    """
    rng = rng or random.Random(0)
    addrs = _Addresses(rng)
    tech = AccessTechnology(technology)
    gra = addrs.public()
    nodes: list[NodeSpec] = []
    links: list[LinkSpec] = []

    if kind == "no_nat":
        home_depth = 0
        probe = gra
    else:
        if kind == "home_uneven" and home_depth < 2:
            home_depth = 2
        if home_delays is None:
            if kind == "home_uneven":
                home_delays = [rng.uniform(30.0, 90.0)] + [rng.uniform(300.0, 600.0)
                                                          for _ in range(home_depth - 1)]
            else:
                lo, hi = rng.choice(((20.0, 90.0), (110.0, 250.0)))
                home_delays = [rng.uniform(lo, hi) for _ in range(home_depth)]
        home_depth = len(home_delays)
        lans = [addrs.private_lan() for _ in range(home_depth)]
        # probe sits on the innermost LAN; lans[0] is the router it talks to
        probe = lans[0].rsplit(".", 1)[0] + f".{rng.randrange(10, 250)}"
        for i in range(home_depth):
            is_cpe = i == home_depth - 1
            if is_cpe:
                if kind == "cgn":
                    role, wan = NatRole.HOME_NAT, None
                else:
                    role, wan = NatRole.GRA_NAT, gra
            else:
                # inner hops: cascaded home NATs or plain routers
                if rng.random() < 0.7:
                    role, wan = NatRole.HOME_NAT, lans[i + 1].rsplit(".", 1)[0] + f".{rng.randrange(2, 250)}"
                else:
                    role, wan = NatRole.NONE, None
            behavior = ReplyBehavior(ReplyKind.TWO_HOP_REPLY) if (is_cpe and kind == "home_two_hop") \
                else ReplyBehavior()
            nodes.append(NodeSpec(lans[i], None, role, behavior, wan))
            links.append(LinkSpec(home_delays[i], rng.choice((12.5, 125.0))))

    if access_delay is None:
        access_delay = rng.uniform(*ACCESS_DELAYS[tech])
    access_bw = rng.uniform(*ACCESS_BANDWIDTH[tech])

    if kind == "cgn":
        realms = _isp_realms(pattern, cgn_distance - 1)
        cpe_wan = addrs.private() if pattern == ALL_PRIVATE else addrs.shared()
        cpe = nodes[-1]
        nodes[-1] = NodeSpec(cpe.address, None, NatRole.HOME_NAT, cpe.reply_behavior, cpe_wan)
        isp = [NodeSpec(addrs.in_realm(r)) for r in realms]
        isp.append(NodeSpec(addrs.private() if pattern != ALL_PUBLIC else addrs.public(),
                            None, NatRole.CGN_NAT, ReplyBehavior(), gra))
    else:
        count = rng.randrange(2, 5)
        isp = [NodeSpec(addrs.in_realm(r)) for r in _isp_realms(pattern, count)]
    internet = [NodeSpec(addrs.public()) for _ in range(rng.randrange(2, 4))]

    for i, node in enumerate(isp + internet):
        nodes.append(node)
        if i == 0:
            links.append(LinkSpec(access_delay, access_bw))
        else:
            links.append(LinkSpec(rng.uniform(200.0, 5_000.0), rng.choice((125.0, 1250.0))))

    return SyntheticTopology(
        nodes=tuple(nodes), links=tuple(links), access_link=home_depth + 1, gra=gra,
        probe=probe, technology=tech, name=name, upnp=upnp, well_formed=True)


def generate_corpus(n: int, seed: int = 0) -> list[SyntheticTopology]:
    """``n`` labelled, well-formed, fault-free topologies.

    Scenarios cycle deterministically so that any corpus of a few dozen
    topologies covers every technology, home depth 1-3, CGN distance 1-6
    and addressing pattern; delays and addresses come from the seed.
    """
    if n < 1:
        raise ValueError("corpus size must be >= 1")
    rng = random.Random(seed)
    counters: dict[str, int] = defaultdict(int)
    out = []
    for i in range(n):
        kind = KINDS[i % len(KINDS)]
        c = counters[kind]
        counters[kind] += 1
        if kind == "home_uneven":
            # a few hundred µs home link would sit inside the fiber range
            tech = (AccessTechnology.DSL, AccessTechnology.CABLE, AccessTechnology.SATELLITE)[c % 3]
        else:
            tech = TECHNOLOGIES[c % 4]
        out.append(make_topology(
            kind=kind,
            technology=tech,
            home_depth=1 + (c // 4) % 3,
            cgn_distance=1 + c % 6,
            pattern=ADDRESSING_PATTERNS[(c // 6) % 3],
            upnp=rng.random() < 0.6,
            rng=random.Random(rng.getrandbits(64)),
            name=f"t{i:04d}-{kind}",
        ))
    return out


def two_hop_cpe_topology(home_delays=(100.0, 100.0), access_delay=9_000.0) -> SyntheticTopology:
    """DSL home whose CPE answers traceroutes to the GRA as two hops."""
    return make_topology(kind="home_two_hop", technology=AccessTechnology.DSL,
                         home_delays=list(home_delays), access_delay=access_delay,
                         upnp=False, rng=random.Random(2), name="two-hop-cpe")


def uneven_home_topology(home_delays=(50.0, 400.0), access_delay=9_000.0) -> SyntheticTopology:
    """DSL home with two home links an order of magnitude apart."""
    return make_topology(kind="home_uneven", technology=AccessTechnology.DSL,
                         home_delays=list(home_delays), access_delay=access_delay,
                         upnp=False, rng=random.Random(3), name="uneven-home")


def scripted_isp_fleet(isp: str, *, inconclusive: int = 0, simple: int = 0, cgn: int = 0,
                       no_home: int = 0, technology=AccessTechnology.DSL, country: str = "",
                       seed: int = 0) -> list[tuple[SyntheticTopology, dict]]:
    """Topologies for one ISP whose verdict counts are fixed in advance.

    Inconclusive probes are CGN subscribers whose path answers no ICMP past
    the CPE and whose CPE offers no UPnP. Returns ``(topology, meta)`` pairs
    with ``meta`` ready for the aggregator.
    """
    rng = random.Random(seed)
    tech = AccessTechnology(technology)
    plan = ([("cgn", False)] * cgn + [("home", False)] * simple
            + [("no_nat", False)] * no_home + [("cgn", True)] * inconclusive)
    out = []
    for i, (kind, hidden) in enumerate(plan):
        topo = make_topology(
            kind=kind, technology=tech, home_depth=1 + i % 2, cgn_distance=1 + i % 6,
            pattern=ADDRESSING_PATTERNS[i % 3], upnp=rng.random() < 0.5 and not hidden,
            rng=random.Random(rng.getrandbits(64)), name=f"{isp}-{i:03d}")
        if hidden:
            topo = topo.filtered_past_cpe()
        out.append((topo, {"isp": isp, "technology": tech, "country": country}))
    return out
