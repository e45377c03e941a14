"""Fuse the test results of a run into a verdict on where the GRA-NAT lives.

Positions are hop numbers as seen by traceroute. With the access link at
link ``L`` (joining hop ``L - 1``, the CPE, to hop ``L``), a GRA-NAT at a hop
``< L`` is in the home and one at a hop ``>= L`` is in the ISP.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from revelio.addresses import IpClass, classify_address, is_ipv4, is_topological
from revelio.errors import AccessLinkUndetermined, InsufficientData, ProfileMismatch
from revelio.pathchar import (LAN_FLOOR_US, DELAY_FLOOR_US, MAGNITUDE_RATIO, SPURIOUS_RATIO,
                              UNDETERMINED, AccessLinkLocation, AccessRule, HopFit, LinkDelay,
                              TechDelayRanges, correct_with_expected_range, detect_access_link,
                              detect_spurious_cpe_link, fit_hops, link_delays)
from revelio.probing.records import RawRunRecord
from revelio.probing.traceroute import hops_to
from revelio.types import (AccessTechnology, Correction, Finding, HopObservation, Placement,
                           RevelioState, Verdict, VerdictKind)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassifierInput:
    state: RevelioState
    external_profile: tuple[LinkDelay, ...] = ()
    gra_profile: tuple[LinkDelay, ...] = ()
    access_link: AccessLinkLocation = UNDETERMINED
    gra_trace: tuple[HopObservation, ...] = ()


@dataclass(frozen=True)
class AnalysisOptions:
    """Knobs of the per-run pipeline; the defaults are the evolved method."""

    spurious_purge: bool = True
    expected_range: bool = True
    ranges: TechDelayRanges = field(default_factory=TechDelayRanges)
    delay_floor: float = DELAY_FLOOR_US
    lan_floor: float = LAN_FLOOR_US
    magnitude_rule: str = "decade"
    magnitude_base: str = "max"
    magnitude_ratio: float = MAGNITUDE_RATIO
    spurious_ratio: float = SPURIOUS_RATIO

    @classmethod
    def naive(cls, **kw) -> "AnalysisOptions":
        """The original method: no spurious-link purge, no expected-range check."""
        return cls(spurious_purge=False, expected_range=False, **kw)


def detect_special_addresses(trace: Iterable[HopObservation], access_link: AccessLinkLocation
                             ) -> tuple[frozenset[str], frozenset[str]]:
    """Private and shared responders strictly beyond the access link.

    The hop at the far end of the access link itself is excluded.
    """
    if not access_link.determined:
        raise AccessLinkUndetermined("cannot look past an undetermined access link")
    private, shared = set(), set()
    for obs in trace:
        if obs.ttl <= access_link.link_index or not is_topological(obs.responder):
            continue
        cls = classify_address(obs.responder)
        if cls is IpClass.PRIVATE:
            private.add(obs.responder)
        elif cls is IpClass.SHARED:
            shared.add(obs.responder)
    return frozenset(private), frozenset(shared)


def _chain_gap(profile: Sequence[LinkDelay], upto: int) -> list[int]:
    have = {d.link_index for d in profile}
    return [i for i in range(1, upto) if i not in have]


def _trace_placement(inp: ClassifierInput, gra: str, evidence: list, corrections: set,
                     spurious_purge: bool, spurious_ratio: float) -> Placement | None:
    loc = inp.access_link
    if not loc.determined:
        evidence.append(Finding("access_link", "undetermined"))
        return None
    L = loc.link_index
    gaps = _chain_gap(inp.external_profile, L)
    if gaps:
        evidence.append(Finding("access_link", f"delay chain broken before link {L} at {gaps}"))
        return None

    h = inp.state.hops_to_gra
    if h is None:
        past = sorted({o.ttl for o in inp.gra_trace
                       if o.ttl >= L and is_topological(o.responder) and o.responder != gra})
        if past:
            evidence.append(Finding("traceroute_to_gra",
                                    f"GRA silent but hops {past} past access link {L} answered",
                                    Placement.ISP))
            return Placement.ISP
        evidence.append(Finding("traceroute_to_gra", "GRA never answered"))
        return None

    if spurious_purge and h == L:
        try:
            spurious = detect_spurious_cpe_link(inp.external_profile, inp.gra_profile, loc,
                                                gra_hop=h, spurious_ratio=spurious_ratio)
        except ProfileMismatch as exc:
            evidence.append(Finding("pathchar_to_gra", f"cannot compare profiles: {exc}"))
            return None
        if spurious:
            corrections.add(Correction.SPURIOUS_LINK_PURGE)
            evidence.append(Finding("pathchar_to_gra",
                                    f"link {L} toward the GRA is internal to the CPE; "
                                    f"GRA moved from hop {h} to {h - 1}"))
            h -= 1

    placement = Placement.HOME if h < L else Placement.ISP
    evidence.append(Finding("traceroute_to_gra", f"GRA at hop {h}, access link {L}", placement))
    return placement


def _upnp_placement(state: RevelioState, gra: str, loc: AccessLinkLocation,
                    evidence: list) -> Placement | None:
    wan = state.upnp_wan_ip
    if wan is None:
        return None
    if wan == gra:
        evidence.append(Finding("upnp", f"CPE WAN address {wan} is the GRA", Placement.HOME))
        return Placement.HOME
    cls = classify_address(wan) if is_ipv4(wan) else None
    if cls in (IpClass.PRIVATE, IpClass.SHARED):
        # the device answering UPnP is only known to be the CPE when the
        # access link starts right after hop 1
        if loc.link_index == 2:
            evidence.append(Finding("upnp", f"CPE WAN address {wan} is {cls.value}", Placement.ISP))
            return Placement.ISP
        evidence.append(Finding("upnp", f"{cls.value} WAN address {wan} from a device "
                                        "not known to be the CPE"))
        return None
    evidence.append(Finding("upnp", f"public WAN address {wan} differs from the GRA"))
    return None


def classify(inp: ClassifierInput, spurious_purge: bool = True,
             spurious_ratio: float = SPURIOUS_RATIO) -> Verdict:
    """Verdict for one run. Never raises; missing data yields Inconclusive."""
    state = inp.state
    evidence: list[Finding] = []
    corrections: set[Correction] = set()
    if inp.access_link.rule_fired is AccessRule.EXPECTED_RANGE_CORRECTED:
        corrections.add(Correction.EXPECTED_DELAY_CORRECTION)
        evidence.append(Finding("expected_delay",
                                f"access link moved to link {inp.access_link.link_index} "
                                f"({inp.access_link.delay:.0f} us, within the "
                                f"{state.technology.value} range)"))

    if not state.gra_set:
        evidence.append(Finding("stun", "no GRA observed"))
        return Verdict(VerdictKind.INCONCLUSIVE, evidence, corrections)
    gra = state.gra_set[-1].gra

    if state.local_ip == gra and classify_address(gra) is IpClass.PUBLIC:
        evidence.append(Finding("local_ip", f"local address {gra} is the GRA"))
        return Verdict(VerdictKind.NO_HOME_NAT, evidence, corrections)

    trace = _trace_placement(inp, gra, evidence, corrections, spurious_purge, spurious_ratio)
    upnp = _upnp_placement(state, gra, inp.access_link, evidence)
    placements = {p for p in (trace, upnp) if p is not None}
    if len(placements) > 1:
        evidence.append(Finding("fusion", "tests disagree on the GRA-NAT position"))
        return Verdict(VerdictKind.INCONCLUSIVE, evidence, corrections)
    if placements == {Placement.HOME}:
        return Verdict(VerdictKind.SIMPLE_HOME_NAT, evidence, corrections)
    if placements == {Placement.ISP}:
        return Verdict(VerdictKind.CARRIER_GRADE_NAT, evidence, corrections)
    return Verdict(VerdictKind.INCONCLUSIVE, evidence, corrections)


def fuse_verdicts(verdicts: Sequence[Verdict]) -> Verdict:
    """Per-probe verdict: the definite class if every conclusive run agrees."""
    definite = [v for v in verdicts if v.kind.definite]
    kinds = {v.kind for v in definite}
    corrections = frozenset().union(*(v.corrections_applied for v in verdicts)) if verdicts else frozenset()
    if len(kinds) != 1:
        note = ("runs disagree: " + ", ".join(sorted(k.value for k in kinds))) if kinds \
            else "no conclusive run"
        return Verdict(VerdictKind.INCONCLUSIVE, [Finding("fusion", note)], corrections)
    evidence = list(dict.fromkeys(f for v in definite for f in v.evidence))
    evidence.append(Finding("fusion", f"{len(definite)} of {len(verdicts)} runs conclusive"))
    return Verdict(kinds.pop(), evidence, corrections)


@dataclass(frozen=True)
class RunAnalysis:
    """Everything derived from one raw run record."""

    record: RawRunRecord
    external_fits: tuple[HopFit, ...]
    external_profile: tuple[LinkDelay, ...]
    gra_fits: tuple[HopFit, ...]
    gra_profile: tuple[LinkDelay, ...]
    naive_access_link: AccessLinkLocation
    access_link: AccessLinkLocation
    classifier_input: ClassifierInput
    verdict: Verdict
    state: RevelioState


def _profile(observations, options: AnalysisOptions):
    try:
        fits = fit_hops(observations)
    except InsufficientData:
        return (), ()
    try:
        delays = link_delays(fits, delay_floor=options.delay_floor)
    except InsufficientData:
        delays = []
    return tuple(fits), tuple(delays)


def analyze_record(record: RawRunRecord, technology=AccessTechnology.UNKNOWN, isp_name: str = "",
                   country: str = "", options: AnalysisOptions | None = None) -> RunAnalysis:
    """Pathchar both ways, locate the access link, classify."""
    options = options or AnalysisOptions()
    technology = AccessTechnology(technology)
    ext_fits, ext_profile = _profile(record.sized_traceroutes, options)
    gra_fits, gra_profile = _profile(record.gra_sized_traceroutes, options)
    naive = detect_access_link(ext_profile, lan_floor=options.lan_floor,
                               rule=options.magnitude_rule, base=options.magnitude_base,
                               ratio=options.magnitude_ratio)
    access = naive
    if options.expected_range:
        access = correct_with_expected_range(naive, ext_profile, technology, options.ranges)

    gra = record.gra
    private, shared = frozenset(), frozenset()
    if access.determined:
        private, shared = detect_special_addresses(
            (*record.gra_traceroute, *record.sized_traceroutes), access)
    state = RevelioState(
        device_id=record.device_id,
        isp_name=isp_name,
        technology=technology,
        local_ip=record.gra_observation.local_address if record.gra_observation else None,
        gra_set=(record.gra_observation,) if record.gra_observation else (),
        hops_to_gra=hops_to(record.gra_traceroute, gra) if gra else None,
        access_link_hop=access.link_index,
        private_after_cpe=private,
        shared_after_access=shared,
        upnp_wan_ip=record.upnp_wan_ip,
        run_count=1,
        country=country,
    )
    inp = ClassifierInput(state, ext_profile, gra_profile, access, tuple(record.gra_traceroute))
    verdict = classify(inp, spurious_purge=options.spurious_purge,
                       spurious_ratio=options.spurious_ratio)
    if Correction.SPURIOUS_LINK_PURGE in verdict.corrections_applied:
        state = replace(state, hops_to_gra=state.hops_to_gra - 1)
    return RunAnalysis(record, ext_fits, ext_profile, gra_fits, gra_profile, naive, access,
                       inp, verdict, state)
