from datetime import datetime, timezone

import pytest

from revelio.types import (Finding, GraObservation, HopObservation, Placement, RevelioState,
                           Verdict, VerdictKind)


def test_hop_observation_invariants():
    HopObservation(1, "192.168.1.1", 120.0, 120, "8.8.8.8")
    HopObservation(3, None, None, 1500, "8.8.8.8")
    with pytest.raises(ValueError):
        HopObservation(1, "192.168.1.1", None, 120, "8.8.8.8")
    with pytest.raises(ValueError):
        HopObservation(1, None, 5.0, 120, "8.8.8.8")
    with pytest.raises(ValueError):
        HopObservation(1, None, None, 63, "8.8.8.8")
    with pytest.raises(ValueError):
        HopObservation(0, None, None, 120, "8.8.8.8")


def test_gra_must_be_public_unless_identity():
    GraObservation("8.8.4.4", 5000, "192.168.1.5", 40000)
    # identity mapping on a test LAN is kept as-is
    g = GraObservation("192.168.1.5", 40000, "192.168.1.5", 40000)
    assert g.gra == g.local_address
    with pytest.raises(ValueError):
        GraObservation("100.64.1.1", 5000, "192.168.1.5", 40000)
    with pytest.raises(ValueError):
        GraObservation("8.8.4.4", 0, "192.168.1.5", 40000)


def test_state_realm_checks_and_order():
    t1 = datetime(2016, 8, 1, tzinfo=timezone.utc)
    t2 = datetime(2016, 8, 2, tzinfo=timezone.utc)
    a = GraObservation("8.8.4.4", 1, "10.0.0.2", 1, t2)
    b = GraObservation("9.9.9.9", 1, "10.0.0.2", 1, t1)
    s1 = RevelioState("d", gra_set=(a, b), private_after_cpe={"10.1.1.1"})
    s2 = RevelioState("d", gra_set=(b, a), private_after_cpe={"10.1.1.1"})
    assert s1 == s2
    assert s1.gras == {"8.8.4.4", "9.9.9.9"}
    with pytest.raises(ValueError):
        RevelioState("d", private_after_cpe={"100.64.0.1"})
    with pytest.raises(ValueError):
        RevelioState("d", shared_after_access={"10.0.0.1"})
    with pytest.raises(ValueError):
        RevelioState("d", hops_to_gra=0)


def test_verdict_evidence_invariants():
    with pytest.raises(ValueError):
        Verdict(VerdictKind.NO_HOME_NAT, [Finding("upnp", "x")])
    with pytest.raises(ValueError):
        Verdict(VerdictKind.CARRIER_GRADE_NAT, [Finding("traceroute_to_gra", "x", Placement.HOME)])
    v = Verdict(VerdictKind.CARRIER_GRADE_NAT, [Finding("traceroute_to_gra", "x", Placement.ISP)])
    assert v.kind.definite
    assert not VerdictKind.INCONCLUSIVE.definite
