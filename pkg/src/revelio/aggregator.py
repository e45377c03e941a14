"""Fold runs into per-probe states and compute fleet-level reports."""

from __future__ import annotations

import csv
import io
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from itertools import combinations
from typing import Iterable, Mapping, Sequence

from revelio.classifier import AnalysisOptions, RunAnalysis, analyze_record, fuse_verdicts
from revelio.errors import MixedDevices
from revelio.probing.records import RawRunRecord
from revelio.types import AccessTechnology, RevelioState, Verdict, VerdictKind

log = logging.getLogger(__name__)


def _consensus(values):
    """Unique most common non-None value; None on a tie or no data."""
    counts = Counter(v for v in values if v is not None).most_common()
    if not counts or (len(counts) > 1 and counts[0][1] == counts[1][1]):
        return None
    return counts[0][0]


def _meta(meta, key, default):
    if meta is None:
        return default
    if isinstance(meta, Mapping):
        return meta.get(key, default)
    return getattr(meta, key, default)


def build_revelio_state(records: Sequence[RawRunRecord], meta=None,
                        analyses: Sequence[RunAnalysis] | None = None,
                        options: AnalysisOptions | None = None) -> RevelioState:
    """One state per probe from all of its runs.

    ``meta`` carries ``isp``, ``technology`` and optionally ``country``.
    Hop positions are the mode over runs; a tie leaves them undetermined.
    """
    if not records:
        raise ValueError("no records to fold")
    devices = {r.device_id for r in records}
    if len(devices) > 1:
        raise MixedDevices(f"records from several devices: {sorted(devices)}")
    tech = AccessTechnology(_meta(meta, "technology", AccessTechnology.UNKNOWN))
    isp = _meta(meta, "isp", "")
    country = _meta(meta, "country", "")
    if analyses is None:
        analyses = [analyze_record(r, tech, isp, country, options) for r in records]
    states = [a.state for a in analyses]

    gra_set = {g for s in states for g in s.gra_set}
    local = _consensus(s.local_ip for s in states)
    upnp = _consensus(s.upnp_wan_ip for s in states)
    return RevelioState(
        device_id=devices.pop(),
        isp_name=isp,
        technology=tech,
        local_ip=local,
        gra_set=tuple(gra_set),
        hops_to_gra=_consensus(s.hops_to_gra for s in states),
        access_link_hop=_consensus(s.access_link_hop for s in states),
        private_after_cpe=frozenset().union(*(s.private_after_cpe for s in states)),
        shared_after_access=frozenset().union(*(s.shared_after_access for s in states)),
        upnp_wan_ip=upnp,
        run_count=len(records),
        country=country,
    )


def classify_probe(records: Sequence[RawRunRecord], meta=None,
                   options: AnalysisOptions | None = None) -> tuple[RevelioState, Verdict]:
    """State plus the verdict fused over every run of one probe."""
    tech = AccessTechnology(_meta(meta, "technology", AccessTechnology.UNKNOWN))
    analyses = [analyze_record(r, tech, _meta(meta, "isp", ""), _meta(meta, "country", ""),
                               options) for r in records]
    state = build_revelio_state(records, meta, analyses)
    return state, fuse_verdicts([a.verdict for a in analyses])


def classify_fleet(records: Iterable[RawRunRecord], meta_by_device: Mapping | None = None,
                   options: AnalysisOptions | None = None) -> list[tuple[RevelioState, Verdict]]:
    by_device = defaultdict(list)
    for r in records:
        by_device[r.device_id].append(r)
    meta_by_device = meta_by_device or {}
    out = []
    for dev in sorted(by_device):
        runs = sorted(by_device[dev], key=lambda r: r.timestamp)
        out.append(classify_probe(runs, meta_by_device.get(dev), options))
    return out


# -- per-ISP table ------------------------------------------------------------

@dataclass(frozen=True)
class IspReport:
    isp_id: str
    country: str
    technology: str
    probes_total: int
    inconclusive: int
    no_home_nat: int
    simple_home_nat: int
    cgn: int

    def __post_init__(self):
        if self.inconclusive + self.no_home_nat + self.simple_home_nat + self.cgn != self.probes_total:
            raise ValueError(f"counts for {self.isp_id} do not sum to {self.probes_total}")

    def row(self) -> tuple[int, int, int, int]:
        """(probes, inconclusive, simple, cgn), the table's numeric columns."""
        return (self.probes_total, self.inconclusive, self.simple_home_nat, self.cgn)


def _label(values) -> str:
    distinct = sorted({v for v in values if v})
    return distinct[0] if len(distinct) == 1 else ("mixed" if distinct else "")


def per_isp_report(probes: Iterable[tuple[RevelioState, Verdict]],
                   table1_compat: bool = False) -> list[IspReport]:
    """Verdict counts per ISP, largest ISP first.

    With ``table1_compat`` probes without a home NAT are counted as simple
    home NAT, giving the three-verdict shape.
    """
    groups = defaultdict(list)
    for state, verdict in probes:
        groups[state.isp_name].append((state, verdict))
    reports = []
    for isp, members in groups.items():
        counts = Counter(v.kind for _, v in members)
        no_home = counts[VerdictKind.NO_HOME_NAT]
        simple = counts[VerdictKind.SIMPLE_HOME_NAT]
        if table1_compat:
            simple, no_home = simple + no_home, 0
        reports.append(IspReport(
            isp_id=isp,
            country=_label(s.country for s, _ in members),
            technology=_label(s.technology.value for s, _ in members),
            probes_total=len(members),
            inconclusive=counts[VerdictKind.INCONCLUSIVE],
            no_home_nat=no_home,
            simple_home_nat=simple,
            cgn=counts[VerdictKind.CARRIER_GRADE_NAT],
        ))
    reports.sort(key=lambda r: (-r.probes_total, r.isp_id))
    return reports


def _report_rows(reports, table1_compat):
    header = ["isp_id", "cc", "tech", "probes", "inconclusive", "simple", "cgn"]
    if not table1_compat:
        header.append("no_home")
    rows = []
    for r in reports:
        row = [r.isp_id, r.country, r.technology, r.probes_total, r.inconclusive,
               r.simple_home_nat, r.cgn]
        if not table1_compat:
            row.append(r.no_home_nat)
        rows.append(row)
    return header, rows


def report_csv(reports: Sequence[IspReport], table1_compat: bool = False) -> str:
    header, rows = _report_rows(reports, table1_compat)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def report_text(reports: Sequence[IspReport], table1_compat: bool = False) -> str:
    header, rows = _report_rows(reports, table1_compat)
    cells = [header] + [[str(c) for c in row] for row in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    lines = []
    for row in cells:
        # text columns left-aligned, counts right-aligned
        parts = [c.ljust(w) if i < 3 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))]
        lines.append("  ".join(parts).rstrip())
    return "\n".join(lines) + "\n"


# -- GRA stability ------------------------------------------------------------

@dataclass(frozen=True)
class SharedGraEvent:
    gra: str
    probes: frozenset[str]
    start: datetime
    end: datetime

    @property
    def overlap(self) -> timedelta:
        return self.end - self.start


@dataclass(frozen=True)
class GraStability:
    gra_counts: dict[str, int]
    mean_all: float | None
    mean_cgn: float | None
    shared_gra_events: tuple[SharedGraEvent, ...]
    excluded_pairs: tuple[tuple[str, str], ...] = field(default=())


def _intervals(states, records):
    spans: dict[tuple[str, str], list[datetime]] = {}
    for dev, obs in ([(s.device_id, g) for s in states for g in s.gra_set]
                     + [(r.device_id, r.gra_observation) for r in records
                        if r.gra_observation is not None]):
        key = (dev, obs.gra)
        span = spans.get(key)
        if span is None:
            spans[key] = [obs.timestamp, obs.timestamp]
        else:
            span[0] = min(span[0], obs.timestamp)
            span[1] = max(span[1], obs.timestamp)
    return spans


def _first_hops(records) -> dict[str, set[str]]:
    out = defaultdict(set)
    for r in records:
        for o in (*r.gra_traceroute, *r.sized_traceroutes):
            if o.ttl == 1 and o.responder is not None:
                out[r.device_id].add(o.responder)
    return out


def _split(items):
    states, kinds = [], {}
    for item in items:
        if isinstance(item, tuple):
            state, verdict = item
            kinds[state.device_id] = verdict.kind
        else:
            state = item
        states.append(state)
    return states, kinds


def gra_stability(states: Iterable = (), records: Iterable[RawRunRecord] = (),
                  exclude_households: bool = True) -> GraStability:
    """Distinct GRAs per probe and GRAs held by two probes at the same time.

    ``states`` may hold plain states or ``(state, verdict)`` pairs; the
    CGN mean only counts probes with a CGN verdict. Each GRA is held by a
    probe over ``[first seen, last seen]``; two probes share it when those
    intervals overlap. Pairs answering traceroute from the same first hop
    are assumed to sit in one household and are skipped.
    """
    states, kinds = _split(states)
    records = list(records)
    spans = _intervals(states, records)
    per_probe: dict[str, set[str]] = defaultdict(set)
    for dev, gra in spans:
        per_probe[dev].add(gra)
    counts = {dev: len(g) for dev, g in sorted(per_probe.items())}
    mean_all = sum(counts.values()) / len(counts) if counts else None
    cgn = [counts[d] for d, k in kinds.items() if k is VerdictKind.CARRIER_GRADE_NAT and d in counts]
    mean_cgn = sum(cgn) / len(cgn) if cgn else None

    holders = defaultdict(list)
    for (dev, gra), (lo, hi) in spans.items():
        holders[gra].append((dev, lo, hi))
    first_hops = _first_hops(records) if exclude_households else {}
    events, excluded = [], set()
    for gra in sorted(holders):
        for (a, alo, ahi), (b, blo, bhi) in combinations(sorted(holders[gra]), 2):
            start, end = max(alo, blo), min(ahi, bhi)
            if start > end:
                continue
            if first_hops.get(a, set()) & first_hops.get(b, set()):
                if (a, b) not in excluded:
                    log.info("skipping %s/%s: same first hop, likely one household", a, b)
                excluded.add((a, b))
                continue
            events.append(SharedGraEvent(gra, frozenset((a, b)), start, end))
    return GraStability(counts, mean_all, mean_cgn, tuple(events), tuple(sorted(excluded)))


# -- CGN placement analyses ---------------------------------------------------

@dataclass(frozen=True)
class HopDistanceReport:
    histogram: dict[str, dict[int, int]]
    skipped: int = 0


def cgn_hop_distance(probes: Iterable[tuple[RevelioState, Verdict]]) -> HopDistanceReport:
    """ISP hops between the CPE and the GRA-NAT for each CGN probe, per ISP."""
    hist: dict[str, Counter] = defaultdict(Counter)
    skipped = 0
    for state, verdict in probes:
        if verdict.kind is not VerdictKind.CARRIER_GRADE_NAT:
            continue
        h, L = state.hops_to_gra, state.access_link_hop
        if h is None or L is None or h < L:
            skipped += 1
            continue
        hist[state.isp_name][h - L + 1] += 1
    return HopDistanceReport({isp: dict(sorted(c.items())) for isp, c in sorted(hist.items())},
                             skipped)


def addressing_realms(probes: Iterable[tuple[RevelioState, Verdict]]) -> dict[str, dict[str, int]]:
    """Per ISP, how CGN probes address the segment behind the CPE.

    Buckets: ``shared`` (100.64/10 seen), ``private`` (only RFC 1918 seen),
    ``both`` and ``public`` (neither).
    """
    out: dict[str, Counter] = defaultdict(Counter)
    for state, verdict in probes:
        if verdict.kind is not VerdictKind.CARRIER_GRADE_NAT:
            continue
        shared, private = bool(state.shared_after_access), bool(state.private_after_cpe)
        bucket = "both" if shared and private else "shared" if shared else \
            "private" if private else "public"
        out[state.isp_name][bucket] += 1
    return {isp: dict(sorted(c.items())) for isp, c in sorted(out.items())}
