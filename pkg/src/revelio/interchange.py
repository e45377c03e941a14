"""Line-delimited JSON interchange between CLI runs and the aggregator.

Each line is one object whose first key ``type`` names the record
(``raw_run``, ``state``, ``verdict``, ``probe``). Keys follow dataclass
field order so identical inputs give byte-identical files.
"""

from __future__ import annotations

import json
from datetime import datetime
from typing import IO, Iterable, Iterator

from revelio.probing.records import RawRunRecord
from revelio.types import (EPOCH, AccessTechnology, Correction, Finding, GraObservation,
                           HopObservation, Placement, RevelioState, Verdict, VerdictKind)


def _ts(value: datetime) -> str:
    return value.isoformat()


def _parse_ts(text) -> datetime:
    return datetime.fromisoformat(text) if text else EPOCH


def hop_to_list(o: HopObservation) -> list:
    # compact positional form; traces dominate file size
    return [o.ttl, o.responder, o.rtt, o.probe_size, o.target, _ts(o.timestamp)]


def hop_from_list(row) -> HopObservation:
    ttl, responder, rtt, size, target, ts = row
    return HopObservation(ttl, responder, rtt, size, target, _parse_ts(ts))


def gra_to_dict(g: GraObservation | None):
    if g is None:
        return None
    return {"gra": g.gra, "mapped_port": g.mapped_port, "local_address": g.local_address,
            "local_port": g.local_port, "timestamp": _ts(g.timestamp)}


def gra_from_dict(d) -> GraObservation | None:
    if d is None:
        return None
    return GraObservation(d["gra"], d["mapped_port"], d["local_address"], d["local_port"],
                          _parse_ts(d.get("timestamp")))


def record_to_dict(r: RawRunRecord) -> dict:
    return {
        "type": "raw_run",
        "device_id": r.device_id,
        "timestamp": _ts(r.timestamp),
        "gra_observation": gra_to_dict(r.gra_observation),
        "gra_traceroute": [hop_to_list(o) for o in r.gra_traceroute],
        "sized_traceroutes": [hop_to_list(o) for o in r.sized_traceroutes],
        "gra_sized_traceroutes": [hop_to_list(o) for o in r.gra_sized_traceroutes],
        "upnp_wan_ip": r.upnp_wan_ip,
        "errors": list(r.errors),
    }


def record_from_dict(d: dict) -> RawRunRecord:
    return RawRunRecord(
        device_id=d["device_id"],
        timestamp=_parse_ts(d.get("timestamp")),
        gra_observation=gra_from_dict(d.get("gra_observation")),
        gra_traceroute=tuple(hop_from_list(x) for x in d.get("gra_traceroute", ())),
        sized_traceroutes=tuple(hop_from_list(x) for x in d.get("sized_traceroutes", ())),
        gra_sized_traceroutes=tuple(hop_from_list(x) for x in d.get("gra_sized_traceroutes", ())),
        upnp_wan_ip=d.get("upnp_wan_ip"),
        errors=tuple(d.get("errors", ())),
    )


def state_to_dict(s: RevelioState) -> dict:
    return {
        "type": "state",
        "device_id": s.device_id,
        "isp_name": s.isp_name,
        "technology": s.technology.value,
        "local_ip": s.local_ip,
        "gra_set": [gra_to_dict(g) for g in s.gra_set],
        "hops_to_gra": s.hops_to_gra,
        "access_link_hop": s.access_link_hop,
        "private_after_cpe": sorted(s.private_after_cpe),
        "shared_after_access": sorted(s.shared_after_access),
        "upnp_wan_ip": s.upnp_wan_ip,
        "run_count": s.run_count,
        "country": s.country,
    }


def state_from_dict(d: dict) -> RevelioState:
    return RevelioState(
        device_id=d["device_id"],
        isp_name=d.get("isp_name", ""),
        technology=AccessTechnology(d.get("technology", "unknown")),
        local_ip=d.get("local_ip"),
        gra_set=tuple(gra_from_dict(g) for g in d.get("gra_set", ())),
        hops_to_gra=d.get("hops_to_gra"),
        access_link_hop=d.get("access_link_hop"),
        private_after_cpe=frozenset(d.get("private_after_cpe", ())),
        shared_after_access=frozenset(d.get("shared_after_access", ())),
        upnp_wan_ip=d.get("upnp_wan_ip"),
        run_count=d.get("run_count", 0),
        country=d.get("country", ""),
    )


def verdict_to_dict(v: Verdict, device_id: str | None = None) -> dict:
    out = {"type": "verdict"}
    if device_id is not None:
        out["device_id"] = device_id
    out["kind"] = v.kind.value
    out["evidence"] = [{"test": f.test, "observation": f.observation,
                        "placement": f.placement.value if f.placement else None}
                       for f in v.evidence]
    out["corrections_applied"] = sorted(c.value for c in v.corrections_applied)
    return out


def verdict_from_dict(d: dict) -> Verdict:
    return Verdict(
        VerdictKind(d["kind"]),
        tuple(Finding(f["test"], f["observation"],
                      Placement(f["placement"]) if f.get("placement") else None)
              for f in d.get("evidence", ())),
        frozenset(Correction(c) for c in d.get("corrections_applied", ())),
    )


def probe_to_dict(state: RevelioState, verdict: Verdict) -> dict:
    """State and verdict of one probe on a single line."""
    return {"type": "probe", "state": state_to_dict(state), "verdict": verdict_to_dict(verdict)}


def dumps(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def write_lines(objs: Iterable[dict], fh: IO[str]):
    for obj in objs:
        fh.write(dumps(obj))
        fh.write("\n")


def iter_lines(fh: IO[str]) -> Iterator[dict]:
    for lineno, line in enumerate(fh, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: not valid JSON ({exc.msg})") from None
        if not isinstance(obj, dict) or "type" not in obj:
            raise ValueError(f"line {lineno}: missing record type")
        yield obj


def decode(obj: dict):
    """Turn one parsed line back into its object.

    ``verdict`` lines give ``(device_id, Verdict)``; ``probe`` lines give
    ``(RevelioState, Verdict)``.
    """
    kind = obj["type"]
    if kind == "raw_run":
        return record_from_dict(obj)
    if kind == "state":
        return state_from_dict(obj)
    if kind == "verdict":
        return obj.get("device_id"), verdict_from_dict(obj)
    if kind == "probe":
        return state_from_dict(obj["state"]), verdict_from_dict(obj["verdict"])
    raise ValueError(f"unknown record type {kind!r}")


def read_records(fh: IO[str]) -> list[RawRunRecord]:
    return [record_from_dict(o) for o in iter_lines(fh) if o["type"] == "raw_run"]


def read_probes(fh: IO[str]) -> list[tuple[RevelioState, Verdict]]:
    """Probe lines, plus state lines paired with the verdict line for the same device."""
    probes, states, verdicts = [], {}, {}
    for obj in iter_lines(fh):
        kind = obj["type"]
        if kind == "probe":
            probes.append(decode(obj))
        elif kind == "state":
            st = state_from_dict(obj)
            states[st.device_id] = st
        elif kind == "verdict":
            dev, v = decode(obj)
            verdicts[dev] = v
    for dev, st in states.items():
        if dev not in verdicts:
            raise ValueError(f"state for {dev} has no verdict")
        probes.append((st, verdicts[dev]))
    return probes
