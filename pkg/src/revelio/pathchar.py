"""Per-link delay estimation from sized traceroutes and access-link location.

Every hop's RTT samples are min-filtered per probe size and fitted with a
straight line ``rtt = intercept + slope * size``. The intercept is the
size-independent round-trip latency to that hop, so half the difference of
consecutive intercepts is the one-way propagation delay of the link between
them. The access link is the first link whose delay is an order of magnitude
above everything before it; two corrections guard against home topologies
that fool that rule.

All delays are in microseconds.
"""

from __future__ import annotations

import enum
import math
from array import array
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from revelio import kernels
from revelio.addresses import is_topological
from revelio.errors import InsufficientData, ProfileMismatch
from revelio.types import AccessTechnology, HopObservation

DELAY_FLOOR_US = 10.0
LAN_FLOOR_US = 100.0
MAGNITUDE_RATIO = 10.0
SPURIOUS_RATIO = 10.0
MIN_FIT_SIZES = 3


@dataclass(frozen=True)
class HopFit:
    ttl: int
    intercept: float
    slope: float
    sample_count: int
    residual_rms: float


class DelayConfidence(str, enum.Enum):
    NORMAL = "normal"
    CLAMPED = "clamped"
    SPARSE = "sparse"


@dataclass(frozen=True)
class LinkDelay:
    link_index: int
    delay: float
    confidence: DelayConfidence = DelayConfidence.NORMAL


class AccessRule(str, enum.Enum):
    ORDER_OF_MAGNITUDE = "order_of_magnitude"
    EXPECTED_RANGE_CORRECTED = "expected_range_corrected"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class AccessLinkLocation:
    link_index: int | None
    rule_fired: AccessRule
    delay: float | None = None

    def __post_init__(self):
        if (self.link_index is None) != (self.rule_fired is AccessRule.UNDETERMINED):
            raise ValueError("link_index is undetermined exactly when no rule fired")

    @property
    def determined(self) -> bool:
        return self.link_index is not None


UNDETERMINED = AccessLinkLocation(None, AccessRule.UNDETERMINED, None)


class TechDelayRanges:
    """Expected one-way access-link delay per technology, as (min, max) in µs.

    Only the DSL range comes from field observations; the others are
    defaults meant to be overridden from configuration.
    """

    DEFAULTS = {
        AccessTechnology.DSL: (2_000.0, 30_000.0),
        AccessTechnology.CABLE: (1_000.0, 30_000.0),
        AccessTechnology.FIBER: (300.0, 10_000.0),
        AccessTechnology.SATELLITE: (200_000.0, 700_000.0),
    }

    def __init__(self, ranges: Mapping | None = None):
        merged = dict(self.DEFAULTS)
        unknown = None
        for tech, bounds in (ranges or {}).items():
            tech = AccessTechnology(tech)
            if tech is AccessTechnology.UNKNOWN:
                unknown = bounds
            else:
                merged[tech] = bounds
        for tech, (lo, hi) in merged.items():
            if not lo < hi:
                raise ValueError(f"empty delay range for {tech.value}: {lo}..{hi}")
        if unknown is None:
            unknown = (min(lo for lo, _ in merged.values()),
                       max(hi for _, hi in merged.values()))
        merged[AccessTechnology.UNKNOWN] = unknown
        self._ranges = {k: (float(lo), float(hi)) for k, (lo, hi) in merged.items()}

    def __getitem__(self, tech) -> tuple[float, float]:
        return self._ranges[AccessTechnology(tech)]

    def __eq__(self, other):
        return isinstance(other, TechDelayRanges) and self._ranges == other._ranges

    def __repr__(self):
        return f"TechDelayRanges({ {k.value: v for k, v in self._ranges.items()} })"

    def items(self):
        return self._ranges.items()

    def contains(self, tech, delay: float) -> bool:
        lo, hi = self[tech]
        return lo <= delay <= hi

    @classmethod
    def parse_overrides(cls, specs: Iterable[str]) -> "TechDelayRanges":
        """Build from strings like ``"cable=1000:25000"`` (µs)."""
        ranges = {}
        for spec in specs:
            name, _, bounds = spec.partition("=")
            lo, _, hi = bounds.partition(":")
            try:
                ranges[AccessTechnology(name.strip().lower())] = (float(lo), float(hi))
            except ValueError as exc:
                raise ValueError(f"bad delay range {spec!r}; expected tech=min:max") from exc
        return cls(ranges)


def fit_hops(observations: Iterable[HopObservation], min_sizes: int = MIN_FIT_SIZES,
             backend: str | None = None) -> list[HopFit]:
    """Fit one line per hop over the per-size minimum RTTs.

    Timeouts and replies without topological meaning (loopback, link-local,
    IPv6) are ignored. Hops answered at fewer than ``min_sizes`` distinct
    sizes are left out.
    """
    ttls, sizes, rtts = array("q"), array("d"), array("d")
    target = None
    for obs in observations:
        if target is None:
            target = obs.target
        elif obs.target != target:
            raise ValueError(f"observations mix targets {target} and {obs.target}")
        if obs.rtt is None or not is_topological(obs.responder):
            continue
        ttls.append(obs.ttl)
        sizes.append(float(obs.probe_size))
        rtts.append(float(obs.rtt))
    fits = [HopFit(int(t), a, b, int(n), rms)
            for t, a, b, n, rms in kernels.fit_lines(ttls, sizes, rtts, min_sizes, backend)]
    if not fits:
        raise InsufficientData("no hop answered at enough distinct probe sizes")
    return fits


def link_delays(fits: Sequence[HopFit], delay_floor: float = DELAY_FLOOR_US,
                total_sizes: int | None = None) -> list[LinkDelay]:
    """One-way delay of each link whose two endpoint hops were both fitted.

    Link ``i`` joins hop ``i - 1`` to hop ``i``; hop 0 is the probe itself
    with a zero intercept. Links next to an unfitted hop get no entry.
    """
    if len(fits) < 2:
        raise InsufficientData("need at least two fitted hops")
    fits = sorted(fits, key=lambda f: f.ttl)
    if total_sizes is None:
        total_sizes = max(f.sample_count for f in fits)
    out = []
    prev = None
    for fit in fits:
        if fit.ttl == 1:
            raw = fit.intercept / 2.0
            ends = (fit,)
        elif prev is not None and prev.ttl == fit.ttl - 1:
            raw = (fit.intercept - prev.intercept) / 2.0
            ends = (prev, fit)
        else:
            prev = fit
            continue
        if raw < delay_floor:
            delay, conf = delay_floor, DelayConfidence.CLAMPED
        elif any(f.sample_count < total_sizes / 2 for f in ends):
            delay, conf = raw, DelayConfidence.SPARSE
        else:
            delay, conf = raw, DelayConfidence.NORMAL
        out.append(LinkDelay(fit.ttl, delay, conf))
        prev = fit
    return out


def _decade(value: float) -> int:
    # tolerate float noise right at a power of ten (999.9999999 -> 3)
    return math.floor(math.log10(value) + 1e-9)


def exceeds_by_magnitude(delay: float, base: float, rule: str = "decade",
                         ratio: float = MAGNITUDE_RATIO) -> bool:
    """Is ``delay`` at least one order of magnitude above ``base``?

    ``"decade"`` compares powers of ten (tens of µs vs hundreds of µs),
    ``"ratio"`` requires ``delay >= ratio * base``.
    """
    if rule == "decade":
        return _decade(delay) >= _decade(base) + 1
    if rule == "ratio":
        return delay >= ratio * base
    raise ValueError(f"unknown magnitude rule {rule!r}")


def detect_access_link(delays: Sequence[LinkDelay], lan_floor: float = LAN_FLOOR_US,
                       rule: str = "decade", base: str = "max",
                       ratio: float = MAGNITUDE_RATIO) -> AccessLinkLocation:
    """First link an order of magnitude above all links before it.

    The first link is compared against ``lan_floor``; later links against
    the max (or mean, with ``base="mean"``) of the preceding delays.
    """
    seen: list[float] = []
    for link in sorted(delays, key=lambda d: d.link_index):
        if not seen:
            ref = lan_floor
        elif base == "max":
            ref = max(seen)
        elif base == "mean":
            ref = sum(seen) / len(seen)
        else:
            raise ValueError(f"unknown comparison base {base!r}")
        if exceeds_by_magnitude(link.delay, ref, rule, ratio):
            return AccessLinkLocation(link.link_index, AccessRule.ORDER_OF_MAGNITUDE, link.delay)
        seen.append(link.delay)
    return UNDETERMINED


def correct_with_expected_range(loc: AccessLinkLocation, delays: Sequence[LinkDelay],
                                tech, ranges: TechDelayRanges | None = None
                                ) -> AccessLinkLocation:
    """Replace an out-of-range access-link candidate by the first in-range link.

    An undetermined candidate stays undetermined: the correction re-ranks a
    detection, it does not invent one.
    """
    ranges = ranges or TechDelayRanges()
    if not loc.determined or ranges.contains(tech, loc.delay):
        return loc
    for link in sorted(delays, key=lambda d: d.link_index):
        if ranges.contains(tech, link.delay):
            return AccessLinkLocation(link.link_index, AccessRule.EXPECTED_RANGE_CORRECTED,
                                      link.delay)
    return UNDETERMINED


def _delay_at(profile: Sequence[LinkDelay], index: int) -> float | None:
    for link in profile:
        if link.link_index == index:
            return link.delay
    return None


def detect_spurious_cpe_link(external_profile: Sequence[LinkDelay],
                             gra_profile: Sequence[LinkDelay],
                             external_access: AccessLinkLocation,
                             gra_hop: int | None = None,
                             spurious_ratio: float = SPURIOUS_RATIO) -> bool:
    """Did the CPE answer the GRA traceroute as two hops?

    When the GRA shows up right behind the access link, the link leading to
    it in the GRA-targeted profile should be the access link itself. If it
    is ``spurious_ratio`` times faster than the access link measured toward
    the external target, it is a link internal to the CPE. ``gra_hop`` is
    where the GRA answered; any other position is not a spurious-link case.
    """
    if not external_access.determined:
        raise ProfileMismatch("external access link is undetermined")
    position = external_access.link_index
    if gra_hop is not None and gra_hop != position:
        return False
    access_delay = _delay_at(external_profile, position)
    if access_delay is None:
        raise ProfileMismatch(f"external profile has no link {position}")
    gra_delay = _delay_at(gra_profile, position)
    if gra_delay is None:
        raise ProfileMismatch(f"GRA profile has no link {position}")
    return gra_delay * spurious_ratio <= access_delay


def profile_records(fits: Sequence[HopFit], delays: Sequence[LinkDelay]) -> list[dict]:
    """Flat dicts for the ``--dump-pathchar`` diagnostic output."""
    rows = [{"kind": "fit", "ttl": f.ttl, "intercept_us": f.intercept, "slope_us_per_byte": f.slope,
             "samples": f.sample_count, "residual_rms_us": f.residual_rms} for f in fits]
    rows += [{"kind": "link", "link": d.link_index, "delay_us": d.delay,
              "confidence": d.confidence.value} for d in delays]
    return rows
