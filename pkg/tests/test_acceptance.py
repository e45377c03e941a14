"""Acceptance checks, one per numbered criterion.

Run with ``pytest -s tests/test_acceptance.py`` to see the PASS/FAIL lines.
"""

import contextlib
import random
import sys
import time
import xml.etree.ElementTree as ET
from datetime import timedelta
from itertools import combinations

import pytest

from revelio.addresses import IpClass
from revelio.aggregator import classify_fleet, gra_stability, per_isp_report
from revelio.classifier import AnalysisOptions, analyze_record
from revelio.pathchar import DelayConfidence
from revelio.probing.records import RawRunRecord
from revelio.probing.stun import decode_binding_response, encode_binding_response
from revelio.probing.upnp import build_get_external_ip_request, parse_get_external_ip_response
from revelio.simulator import (two_hop_cpe_topology, uneven_home_topology, generate_corpus, scripted_isp_fleet,
                               sim_config, simulate_session)
from revelio.simulator.network import TARGET_LINK
from revelio.types import (EPOCH, AccessTechnology, Correction, GraObservation, HopObservation,
                           VerdictKind)
from revelio.pathchar import AccessRule

CORPUS_N = 200
RESULTS = []  # collected by conftest for the terminal summary


@contextlib.contextmanager
def criterion(n, title):
    info = {}
    try:
        yield info
    except BaseException as exc:
        line = f"FAIL criterion {n}: {title} ({type(exc).__name__}: {str(exc)[:200]})"
        RESULTS.append(line)
        print("\n" + line)
        raise
    line = f"PASS criterion {n}: {title}" + (f" ({info['detail']})" if "detail" in info else "")
    RESULTS.append(line)
    print("\n" + line)


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(CORPUS_N, seed=2016)


@pytest.fixture(scope="module")
def noiseless(corpus):
    return [analyze_record(simulate_session(t, seed=i, jitter_max=0.0), t.technology)
            for i, t in enumerate(corpus)]


def _realms(t):
    isp = {n.realm for n in t.nodes[t.access_link - 1:]}
    return frozenset(r for r in isp if r in (IpClass.PRIVATE, IpClass.SHARED))


def test_1_oracle_accuracy(corpus):
    with criterion(1, "corpus accuracy 100% in under 60 s") as info:
        assert len(corpus) >= 200
        assert {t.technology for t in corpus} == {AccessTechnology.DSL, AccessTechnology.CABLE,
                                                  AccessTechnology.FIBER, AccessTechnology.SATELLITE}
        assert {t.access_link - 1 for t in corpus} >= {1, 2, 3}
        assert {t.cgn_distance for t in corpus if t.cgn_distance} == set(range(1, 7))
        cgn = [t for t in corpus if t.truth is VerdictKind.CARRIER_GRADE_NAT]
        # shared then private, all private, all public
        assert {_realms(t) for t in cgn} >= {frozenset({IpClass.SHARED, IpClass.PRIVATE}),
                                             frozenset({IpClass.PRIVATE}), frozenset()}
        t0 = time.perf_counter()
        wrong = []
        for i, t in enumerate(corpus):
            v = analyze_record(simulate_session(t, seed=i, jitter_max=0.0), t.technology).verdict
            if v.kind is not t.truth:
                wrong.append((t.name, t.truth.value, v.kind.value))
        elapsed = time.perf_counter() - t0
        info["detail"] = f"{len(corpus) - len(wrong)}/{len(corpus)} correct, {elapsed:.1f} s"
        assert not wrong, wrong[:5]
        assert elapsed < 60


def test_2_two_hop_cpe():
    with criterion(2, "two-hop CPE: naive CGN, purged SimpleHomeNat") as info:
        t = two_hop_cpe_topology()
        rec = simulate_session(t, seed=1)
        naive = analyze_record(rec, t.technology, options=AnalysisOptions.naive()).verdict
        fixed = analyze_record(rec, t.technology).verdict
        info["detail"] = f"naive={naive.kind.value}, corrected={fixed.kind.value}"
        assert naive.kind is VerdictKind.CARRIER_GRADE_NAT
        assert fixed.kind is VerdictKind.SIMPLE_HOME_NAT
        assert Correction.SPURIOUS_LINK_PURGE in fixed.corrections_applied


def test_3_uneven_home_links():
    with criterion(3, "50/400 us home links: link 2 naive, link 3 corrected") as info:
        t = uneven_home_topology()
        rec = simulate_session(t, seed=1)
        naive = analyze_record(rec, t.technology, options=AnalysisOptions.naive())
        fixed = analyze_record(rec, t.technology)
        info["detail"] = (f"naive link {naive.access_link.link_index} -> "
                          f"{naive.verdict.kind.value}; corrected link "
                          f"{fixed.access_link.link_index} -> {fixed.verdict.kind.value}")
        assert naive.access_link.link_index == 2
        assert naive.verdict.kind is VerdictKind.CARRIER_GRADE_NAT
        assert fixed.access_link.link_index == 3
        assert fixed.access_link.rule_fired is AccessRule.EXPECTED_RANGE_CORRECTED
        assert 2_000 <= fixed.access_link.delay <= 30_000
        assert fixed.verdict.kind is VerdictKind.SIMPLE_HOME_NAT


def _errors(analysis, topology):
    truth = [l.delay for l in topology.links] + [TARGET_LINK.delay]
    out = []
    for d in analysis.external_profile:
        if d.confidence is DelayConfidence.CLAMPED:
            continue
        out.append((truth[d.link_index - 1], d.delay))
    return out


def test_4_pathchar_fidelity(corpus, noiseless):
    with criterion(4, "pathchar delays within 1% noiseless, 15%/100 us jittered") as info:
        worst_clean, compared = 0.0, 0
        for t, a in zip(corpus, noiseless):
            pairs = _errors(a, t)
            assert len(pairs) == len(t.links) + 1, t.name
            for true, got in pairs:
                worst_clean = max(worst_clean, abs(got - true) / true)
                compared += 1
        assert worst_clean <= 0.01
        cfg = sim_config(repetitions_per_size=5)
        worst_jit = 0.0
        for i, t in enumerate(corpus):
            a = analyze_record(simulate_session(t, cfg, seed=10_000 + i, jitter_max=200.0),
                               t.technology)
            for true, got in _errors(a, t):
                err = abs(got - true)
                assert err <= max(0.15 * true, 100.0), (t.name, true, got)
                worst_jit = max(worst_jit, err / max(0.15 * true, 100.0))
        info["detail"] = (f"{compared} links, worst noiseless error {worst_clean:.2e}, "
                          f"worst jittered error {worst_jit:.0%} of tolerance")


def test_5_filtering_conservatism(corpus, noiseless):
    with criterion(5, "ICMP filtering past the CPE only moves verdicts to Inconclusive") as info:
        flips, moved = [], 0
        for i, (t, a) in enumerate(zip(corpus, noiseless)):
            f = t.filtered_past_cpe()
            v = analyze_record(simulate_session(f, seed=i, jitter_max=0.0), f.technology).verdict
            if v.kind is not a.verdict.kind:
                if v.kind is VerdictKind.INCONCLUSIVE:
                    moved += 1
                else:
                    flips.append((t.name, a.verdict.kind.value, v.kind.value))
        info["detail"] = f"{moved} moved to Inconclusive, {len(flips)} definite flips"
        assert not flips, flips[:5]


def test_6_table_rows():
    with criterion(6, "scripted fleets reproduce rows 76/0/0/76 and 49/27/14/8") as info:
        fleet = (scripted_isp_fleet("ISP1", cgn=76, technology="satellite", country="US", seed=1)
                 + scripted_isp_fleet("ISP2", inconclusive=27, simple=14, cgn=8,
                                      technology="cable", country="DE", seed=2))
        records, meta = [], {}
        for i, (t, m) in enumerate(fleet):
            meta[t.name] = m
            for k in range(2):
                records.append(simulate_session(t, seed=100 * i + k, device_id=t.name,
                                                start=EPOCH + timedelta(hours=k)))
        reports = per_isp_report(classify_fleet(records, meta), table1_compat=True)
        rows = {r.isp_id: (r.country, r.technology, *r.row()) for r in reports}
        info["detail"] = "; ".join(f"{k}: {v}" for k, v in sorted(rows.items()))
        assert rows["ISP1"] == ("US", "satellite", 76, 0, 0, 76)
        assert rows["ISP2"] == ("DE", "cable", 49, 27, 14, 8)


def _rec(dev, gra, t):
    return RawRunRecord(dev, t, GraObservation(gra, 4000, "192.168.1.20", 5000, t),
                        gra_traceroute=(HopObservation(1, f"10.{dev[1:]}.0.1", 400.0, 120, gra, t),))


def _oracle(records):
    """Shared GRAs by checking every pair of observations directly."""
    seen = {}
    for r in records:
        seen.setdefault(r.device_id, set()).add(r.gra)
    events = set()
    for x, y in combinations(records, 2):
        if x.device_id == y.device_id or x.gra != y.gra:
            continue
        g = x.gra
        # an overlap exists iff some pair of observations of one probe brackets
        # an observation of the other
        a = [r.timestamp for r in records if r.device_id == x.device_id and r.gra == g]
        b = [r.timestamp for r in records if r.device_id == y.device_id and r.gra == g]
        if min(a) <= max(b) and min(b) <= max(a):
            events.add((g, *sorted((x.device_id, y.device_id))))
    return {d: len(g) for d, g in seen.items()}, events


def test_7_gra_stability():
    with criterion(7, "GRA stability matches brute force; 85% single-GRA fleet mean") as info:
        rng = random.Random(7)
        records = []
        for _ in range(1000):
            dev = f"p{rng.randrange(40):03d}"
            records.append(_rec(dev, f"81.2.0.{rng.randrange(30) + 1}",
                                EPOCH + timedelta(minutes=rng.randrange(30 * 24 * 60))))
        res = gra_stability(records=records)
        counts, events = _oracle(records)
        got = {(e.gra, *sorted(e.probes)) for e in res.shared_gra_events}
        assert res.gra_counts == counts
        assert got == events

        rng = random.Random(85)
        fleet, n = [], 2000
        for p in range(n):
            k = 1 if rng.random() < 0.85 else rng.randint(2, 4)
            for j in range(k):
                for rep in range(2):
                    fleet.append(_rec(f"q{p:04d}", f"81.{p // 250}.{p % 250}.{j + 1}",
                                      EPOCH + timedelta(hours=10 * j + rep)))
        analytic = 0.85 * 1 + 0.15 * (2 + 3 + 4) / 3
        mean = gra_stability(records=fleet).mean_all
        info["detail"] = (f"{len(events)} shared events; fleet mean {mean:.3f} "
                          f"vs analytic {analytic:.3f}")
        assert abs(mean - analytic) <= 0.05


def _xor_oracle(addr):
    cookie = (0x21, 0x12, 0xA4, 0x42)
    return ".".join(str(int(o) ^ c) for o, c in zip(addr.split("."), cookie))


def test_8_wire_conformance():
    with criterion(8, "STUN round trip on 10^4 pairs, XOR oracle, UPnP SOAP") as info:
        assert _xor_oracle("225.44.7.76") == "192.62.163.14"
        rng = random.Random(10)
        for _ in range(10_000):
            addr = ".".join(str(rng.randrange(256)) for _ in range(4))
            port = rng.randrange(1, 65536)
            txid = rng.randbytes(12)
            msg = encode_binding_response(txid, addr, port)
            assert decode_binding_response(msg, txid) == (addr, port)
            assert _xor_oracle(".".join(str(b) for b in msg[-4:])) == addr
            assert int.from_bytes(msg[-6:-4], "big") ^ 0x2112 == port
        svc = "urn:schemas-upnp-org:service:WANIPConnection:1"
        body, headers = build_get_external_ip_request(svc)
        action = ET.fromstring(body).find(".//{%s}GetExternalIPAddress" % svc)
        assert action is not None and headers["SOAPAction"] == f'"{svc}#GetExternalIPAddress"'
        for _ in range(500):
            addr = ".".join(str(rng.randrange(1, 255)) for _ in range(4))
            env = ET.Element("{http://schemas.xmlsoap.org/soap/envelope/}Envelope")
            resp = ET.SubElement(ET.SubElement(env, "{http://schemas.xmlsoap.org/soap/envelope/}Body"),
                                 "{%s}GetExternalIPAddressResponse" % svc)
            ET.SubElement(resp, "NewExternalIPAddress").text = addr
            assert parse_get_external_ip_response(ET.tostring(env)) == addr
        info["detail"] = "10000 STUN pairs, 500 SOAP responses"


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-s", "-q"]))
