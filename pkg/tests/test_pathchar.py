import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from revelio.errors import InsufficientData, ProfileMismatch
from revelio.pathchar import (UNDETERMINED, AccessLinkLocation, AccessRule, DelayConfidence,
                              HopFit, LinkDelay, TechDelayRanges, correct_with_expected_range,
                              detect_access_link, detect_spurious_cpe_link, exceeds_by_magnitude,
                              fit_hops, link_delays, profile_records)
from revelio.types import AccessTechnology, HopObservation

T = "8.8.8.8"


def obs(ttl, size, rtt, responder="10.0.0.1", target=T):
    if rtt is None:
        return HopObservation(ttl, None, None, size, target)
    return HopObservation(ttl, responder, rtt, size, target)


def fit(ttl, a, n=21):
    return HopFit(ttl, a, 0.0, n, 0.0)


def delays(*values):
    return [LinkDelay(i, v) for i, v in enumerate(values, start=1)]


def lstsq(xs, ys):
    # independent oracle
    A = np.vstack([np.ones(len(xs)), np.asarray(xs, float)]).T
    (a, b), *_ = np.linalg.lstsq(A, np.asarray(ys, float), rcond=None)
    return a, b


def test_three_point_exact_line():
    hops = [obs(1, s, 1000 + 2.5 * s) for s in (120, 480, 1440)]
    (f,) = fit_hops(hops)
    assert f.intercept == pytest.approx(1000, abs=1e-9)
    assert f.slope == pytest.approx(2.5, abs=1e-12)
    assert f.residual_rms == pytest.approx(0, abs=1e-9)
    assert f.sample_count == 3


def test_flat_line():
    (f,) = fit_hops([obs(2, s, 777.0) for s in (120, 300, 900, 1400)])
    assert f.slope == pytest.approx(0, abs=1e-12)
    assert f.intercept == pytest.approx(777.0)


def test_timed_out_size_dropped():
    hops = [obs(1, s, 50 + s) for s in (120, 240, 360, 480)] + [obs(1, 600, None)] * 3
    (f,) = fit_hops(hops)
    assert f.sample_count == 4


def test_min_filter_uses_per_size_minimum():
    rng = random.Random(0)
    hops = []
    for s in (120, 400, 800, 1200):
        hops.append(obs(1, s, 100 + 0.5 * s))
        hops += [obs(1, s, 100 + 0.5 * s + rng.uniform(1, 500)) for _ in range(4)]
    (f,) = fit_hops(hops)
    assert (f.intercept, f.slope) == pytest.approx((100, 0.5))


def test_hops_with_two_sizes_omitted():
    hops = [obs(1, s, 10 + s) for s in (120, 240, 360)] + [obs(2, s, 10 + s) for s in (120, 240)]
    assert [f.ttl for f in fit_hops(hops)] == [1]


def test_insufficient_and_mixed_targets():
    with pytest.raises(InsufficientData):
        fit_hops([obs(1, 120, 5.0), obs(1, 240, 6.0)])
    with pytest.raises(ValueError):
        fit_hops([obs(1, 120, 5.0), obs(1, 240, 6.0, target="1.1.1.1")])


def test_non_topological_replies_ignored():
    hops = [obs(1, s, 10.0 + s, responder="127.0.0.1") for s in (120, 240, 360)]
    with pytest.raises(InsufficientData):
        fit_hops(hops)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1e5), st.floats(0, 50), st.lists(st.integers(64, 1500), min_size=3,
                                                      max_size=21, unique=True))
def test_fit_matches_lstsq_oracle(alpha, beta, sizes):
    hops = [obs(1, s, alpha + beta * s) for s in sizes]
    (f,) = fit_hops(hops)
    a, b = lstsq(sizes, [alpha + beta * s for s in sizes])
    assert f.intercept == pytest.approx(a, rel=1e-6, abs=1e-6)
    assert f.slope == pytest.approx(b, rel=1e-6, abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.floats(0, 1000))
def test_extra_slower_repetition_is_idempotent(seed, extra):
    rng = random.Random(seed)
    hops = [obs(t, s, rng.uniform(100, 9000)) for t in (1, 2, 3)
            for s in (120, 400, 800, 1200) for _ in range(2)]
    before = fit_hops(hops)
    mins = {}
    for o in hops:
        mins[(o.ttl, o.probe_size)] = min(mins.get((o.ttl, o.probe_size), 1e18), o.rtt)
    (t, s), m = rng.choice(sorted(mins.items()))
    assert fit_hops(hops + [obs(t, s, m + extra)]) == before


def test_noisy_fit_against_oracle_on_minima():
    rng = random.Random(5)
    sizes = [120 + 66 * i for i in range(21)]
    hops = [obs(1, s, 300 + 0.8 * s + rng.uniform(0, 200)) for s in sizes for _ in range(5)]
    mins = {}
    for o in hops:
        mins[o.probe_size] = min(mins.get(o.probe_size, 1e18), o.rtt)
    a, b = lstsq(list(mins), list(mins.values()))
    (f,) = fit_hops(hops)
    assert (f.intercept, f.slope) == pytest.approx((a, b), rel=1e-9)


def test_link_delays_two_hop_profile():
    out = link_delays([fit(1, 200), fit(2, 400), fit(3, 18400)])
    assert [(d.link_index, d.delay) for d in out] == [(1, 100), (2, 100), (3, 9000)]
    assert all(d.confidence is DelayConfidence.NORMAL for d in out)


def test_link_delays_clamped():
    out = link_delays([fit(1, 400), fit(2, 300)])
    assert out[1].delay == 10 and out[1].confidence is DelayConfidence.CLAMPED
    # two fits give link 1 (from the probe) and link 2
    assert len(out) == 2


def test_link_delays_sparse_and_gaps():
    out = link_delays([fit(1, 200, n=21), fit(2, 800, n=6), fit(4, 9000)])
    assert [(d.link_index, d.confidence) for d in out] == [
        (1, DelayConfidence.NORMAL), (2, DelayConfidence.SPARSE)]
    with pytest.raises(InsufficientData):
        link_delays([fit(1, 200)])


def test_clamp_beats_sparse():
    out = link_delays([fit(1, 200, n=21), fit(2, 190, n=3)])
    assert out[1].confidence is DelayConfidence.CLAMPED


@pytest.mark.parametrize("values, expected", [
    ((100, 100, 9000), 3),
    ((50, 400, 9000), 2),
    ((100, 500), None),
    ((2000,), 1),
    ((30, 40, 9000), 3),
])
def test_detect_access_link(values, expected):
    loc = detect_access_link(delays(*values))
    assert loc.link_index == expected
    if expected is None:
        assert loc == UNDETERMINED
    else:
        assert loc.rule_fired is AccessRule.ORDER_OF_MAGNITUDE


def test_magnitude_rules():
    assert exceeds_by_magnitude(400, 50)           # tens vs hundreds
    assert not exceeds_by_magnitude(400, 50, rule="ratio")
    assert exceeds_by_magnitude(500, 50, rule="ratio")
    assert not exceeds_by_magnitude(999, 100)
    assert exceeds_by_magnitude(1000, 100)
    with pytest.raises(ValueError):
        exceeds_by_magnitude(1, 1, rule="vibes")


def test_mean_base_option():
    ds = delays(20, 150, 1000)
    assert detect_access_link(ds, base="max", rule="ratio").link_index is None
    assert detect_access_link(ds, base="mean", rule="ratio").link_index == 3


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(10, 1e6), min_size=1, max_size=8), st.floats(0.01, 100))
def test_ratio_rule_scale_free(values, factor):
    ds = delays(*values)
    scaled = delays(*(v * factor for v in values))
    a = detect_access_link(ds, rule="ratio").link_index
    b = detect_access_link(scaled, lan_floor=100 * factor, rule="ratio").link_index
    # float products can land on the other side of an exact 10x boundary
    ratios = [max([100] + list(values[:i])) for i in range(len(values))]
    if any(abs(v / r - 10) < 1e-9 for v, r in zip(values, ratios)):
        return
    assert a == b


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(10, 1e6), min_size=1, max_size=8), st.integers(-3, 3))
def test_decade_rule_invariant_under_powers_of_ten(values, k):
    ds = delays(*values)
    scaled = delays(*(v * 10.0 ** k for v in values))
    assert detect_access_link(ds).link_index == \
        detect_access_link(scaled, lan_floor=100 * 10.0 ** k).link_index


def test_expected_range_correction():
    ds = delays(50, 400, 9000)
    naive = detect_access_link(ds)
    fixed = correct_with_expected_range(naive, ds, AccessTechnology.DSL)
    assert (fixed.link_index, fixed.rule_fired) == (3, AccessRule.EXPECTED_RANGE_CORRECTED)
    good = AccessLinkLocation(3, AccessRule.ORDER_OF_MAGNITUDE, 9000)
    assert correct_with_expected_range(good, ds, AccessTechnology.DSL) is good


def test_satellite_without_in_range_link():
    ds = delays(50, 9000, 20000)
    loc = correct_with_expected_range(detect_access_link(ds), ds, AccessTechnology.SATELLITE)
    assert loc == UNDETERMINED
    assert correct_with_expected_range(UNDETERMINED, ds, AccessTechnology.DSL) == UNDETERMINED


def test_tech_ranges():
    r = TechDelayRanges()
    assert r[AccessTechnology.DSL] == (2000, 30000)
    assert r[AccessTechnology.UNKNOWN] == (300, 700000)
    o = TechDelayRanges.parse_overrides(["cable=1000:25000"])
    assert o["cable"] == (1000, 25000) and o["dsl"] == (2000, 30000)
    with pytest.raises(ValueError):
        TechDelayRanges({"dsl": (5, 5)})
    with pytest.raises(ValueError):
        TechDelayRanges.parse_overrides(["dsl:1-2"])


def test_spurious_cpe_link():
    ext = delays(100, 100, 9000)
    loc = AccessLinkLocation(3, AccessRule.ORDER_OF_MAGNITUDE, 9000)
    assert detect_spurious_cpe_link(ext, delays(100, 100, 40), loc)
    assert not detect_spurious_cpe_link(ext, delays(100, 100, 8900), loc)
    # the GRA elsewhere is not a spurious-link case
    assert not detect_spurious_cpe_link(ext, delays(100, 100, 40), loc, gra_hop=5)
    with pytest.raises(ProfileMismatch):
        detect_spurious_cpe_link(ext, delays(100, 100), loc)
    with pytest.raises(ProfileMismatch):
        detect_spurious_cpe_link(ext, delays(100, 100, 40), UNDETERMINED)


def test_profile_records():
    fits = [fit(1, 200), fit(2, 400)]
    rows = profile_records(fits, link_delays(fits))
    assert [r["kind"] for r in rows] == ["fit", "fit", "link", "link"]
