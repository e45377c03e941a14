"""Command-line entry point: ``revelio {run,simulate,classify,report,corpus}``.

Machine-readable output goes to stdout (or ``--output``), logs to stderr.
Exit status: 0 success, 1 operational error, 2 usage error.

Every long flag can also be set in a ``key = value`` config file passed
with ``--config`` or named by ``REVELIO_CONFIG``; command-line flags win.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import os
import sys
from collections import Counter
from dataclasses import replace

from revelio import interchange
from revelio.aggregator import (addressing_realms, cgn_hop_distance, classify_fleet,
                                gra_stability, per_isp_report, report_csv, report_text)
from revelio.classifier import AnalysisOptions, analyze_record, fuse_verdicts
from revelio.errors import ConfigInvalid, RevelioError
from revelio.pathchar import TechDelayRanges, profile_records
from revelio.probing.records import ProbeConfig, even_sizes, parse_hostport
from revelio.simulator import (generate_corpus, load_topologies, dump_topologies, sim_config,
                               simulate_session)
from revelio.simulator.network import JITTER_MAX_US
from revelio.types import EPOCH, AccessTechnology

log = logging.getLogger("revelio")

CONFIG_ENV = "REVELIO_CONFIG"
TRUE = {"1", "yes", "true", "on"}
FALSE = {"0", "no", "false", "off", ""}


class UsageError(Exception):
    pass


# -- argument parsing ---------------------------------------------------------

def _sizes(text: str) -> tuple[int, ...]:
    try:
        if ":" in text:
            lo, hi, count = (int(x) for x in text.split(":"))
            return even_sizes(lo, hi, count)
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}; use a,b,c or lo:hi:count")


def _probe_flags(p):
    g = p.add_argument_group("probing")
    g.add_argument("--stun-server", help="host[:port] of the STUN server")
    g.add_argument("--target", help="external traceroute target (IPv4)")
    g.add_argument("--sizes", type=_sizes, help="probe sizes: a,b,c or lo:hi:count")
    g.add_argument("--reps", type=int, help="repetitions per size")
    g.add_argument("--max-ttl", type=int)
    g.add_argument("--timeout-ms", type=float, help="per-probe timeout")


def _analysis_flags(p):
    g = p.add_argument_group("analysis")
    g.add_argument("--no-corrections", action="store_true",
                   help="disable the spurious-link purge and expected-delay correction")
    g.add_argument("--range", action="append", default=[], metavar="TECH=MIN:MAX",
                   help="override an expected access delay range in us (repeatable)")
    g.add_argument("--dump-pathchar", metavar="FILE", help="write per-hop fits and link delays")


def _common(p):
    p.add_argument("-o", "--output", help="write results here instead of stdout")
    p.add_argument("--deterministic", action="store_true",
                   help="normalize timestamps so reruns are byte-identical")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="revelio", description="Home NAT or carrier-grade NAT?")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--config", help=f"key = value file (default: ${CONFIG_ENV})")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("run", help="measure from this host (needs raw-socket privileges)")
    _probe_flags(p)
    _analysis_flags(p)
    _common(p)
    p.add_argument("--device-id", default="local")
    p.add_argument("--isp", default="")
    p.add_argument("--technology", default="unknown", choices=[t.value for t in AccessTechnology])
    p.add_argument("--classify", action="store_true", help="print a verdict instead of the record")

    p = sub.add_parser("simulate", help="run sessions against synthetic topologies")
    _probe_flags(p)
    _analysis_flags(p)
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--topology", help="topology file (one or more topologies)")
    src.add_argument("--corpus", type=int, metavar="N", help="generate N topologies")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jitter", type=float, default=JITTER_MAX_US, help="max RTT jitter, us")
    p.add_argument("--runs", type=int, default=1, help="runs per topology")
    p.add_argument("--classify", action="store_true", help="print verdicts instead of records")

    p = sub.add_parser("classify", help="raw run records -> per-probe states and verdicts")
    _analysis_flags(p)
    _common(p)
    p.add_argument("input", nargs="?", default="-", help="JSONL raw records (default stdin)")
    p.add_argument("--meta", help="CSV with device_id,isp,technology[,country]")
    p.add_argument("--isp", default="")
    p.add_argument("--technology", default="unknown", choices=[t.value for t in AccessTechnology])

    p = sub.add_parser("report", help="per-ISP tables and GRA analyses")
    _common(p)
    p.add_argument("input", nargs="?", default="-", help="JSONL probe states and verdicts")
    p.add_argument("--records", help="JSONL raw records, for GRA stability")
    p.add_argument("--table1-compat", action="store_true",
                   help="count no-home-NAT probes as simple home NAT")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--analysis", choices=("isp", "hops", "realms", "gra", "all"), default="isp")

    p = sub.add_parser("corpus", help="generate labelled topologies, optionally classify them")
    _probe_flags(p)
    _analysis_flags(p)
    _common(p)
    p.add_argument("-n", type=int, default=200, help="number of topologies")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--run", action="store_true", help="simulate a session on each topology")
    p.add_argument("--score", action="store_true", help="compare verdicts with ground truth")
    p.add_argument("--jitter", type=float, default=0.0, help="max RTT jitter, us")
    p.add_argument("--filter-past-cpe", action="store_true",
                   help="drop every ICMP reply beyond the CPE")
    return parser


def read_config(path: str) -> dict[str, str]:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            values[key.strip().replace("_", "-")] = value.strip()
    return values


def _config_argv(values: dict[str, str], subparser) -> list[str]:
    known = subparser._option_string_actions
    out = []
    for key, value in values.items():
        flag = f"--{key}"
        action = known.get(flag)
        if action is None:
            log.debug("config key %s does not apply here", key)
            continue
        if action.nargs == 0:
            if value.lower() in TRUE:
                out.append(flag)
            elif value.lower() not in FALSE:
                raise UsageError(f"config key {key}: expected yes/no, got {value!r}")
        elif isinstance(action, argparse._AppendAction):
            for item in value.split(","):
                out += [flag, item.strip()]
        else:
            out += [flag, value]
    return out


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    path = args.config or os.environ.get(CONFIG_ENV)
    if not path:
        return args
    values = read_config(path)
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    extra = _config_argv(values, subparser)
    at = argv.index(args.command) + 1
    return parser.parse_args(argv[:at] + extra + argv[at:])


# -- helpers ------------------------------------------------------------------

def probe_config(args, base: ProbeConfig | None = None) -> ProbeConfig:
    cfg = base or ProbeConfig()
    changes = {}
    if getattr(args, "stun_server", None):
        changes["stun_server"] = parse_hostport(args.stun_server)
    if getattr(args, "target", None):
        changes["external_target"] = args.target
    if getattr(args, "sizes", None):
        changes["packet_sizes"] = args.sizes
    if getattr(args, "reps", None) is not None:
        changes["repetitions_per_size"] = args.reps
    if getattr(args, "max_ttl", None) is not None:
        changes["max_ttl"] = args.max_ttl
    if getattr(args, "timeout_ms", None) is not None:
        changes["per_probe_timeout_ms"] = args.timeout_ms
    return replace(cfg, **changes)


def analysis_options(args) -> AnalysisOptions:
    try:
        ranges = TechDelayRanges.parse_overrides(args.range) if args.range else TechDelayRanges()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.no_corrections:
        return AnalysisOptions.naive(ranges=ranges)
    return AnalysisOptions(ranges=ranges)


def _scrub(obj, stamp: str):
    if isinstance(obj, dict):
        return {k: (stamp if k == "timestamp" else _scrub(v, stamp)) for k, v in obj.items()}
    if isinstance(obj, list):
        if len(obj) == 6 and isinstance(obj[0], int) and isinstance(obj[5], str):
            return obj[:5] + [stamp]  # positional hop row
        return [_scrub(v, stamp) for v in obj]
    return obj


class Output:
    def __init__(self, path, deterministic=False):
        self.path = path
        self.deterministic = deterministic
        self._stamp = EPOCH.isoformat()

    def __enter__(self):
        self.fh = open(self.path, "w", encoding="utf-8") if self.path else sys.stdout
        return self

    def __exit__(self, *exc):
        if self.path:
            self.fh.close()
        else:
            self.fh.flush()

    def obj(self, obj: dict):
        if self.deterministic:
            obj = _scrub(obj, self._stamp)
        self.fh.write(interchange.dumps(obj) + "\n")

    def text(self, text: str):
        self.fh.write(text)


def _open_in(path):
    return contextlib.nullcontext(sys.stdin) if path == "-" else open(path, encoding="utf-8")


def _dump_pathchar(fh, device_id, analysis):
    for target, fits, delays in (("external", analysis.external_fits, analysis.external_profile),
                                 ("gra", analysis.gra_fits, analysis.gra_profile)):
        for row in profile_records(fits, delays):
            fh.write(interchange.dumps({"type": "pathchar", "device_id": device_id,
                                        "target": target, **row}) + "\n")


# -- subcommands --------------------------------------------------------------

def cmd_run(args) -> int:
    from revelio.probing.session import LiveNetwork, run_revelio_session
    from revelio.probing.traceroute import can_open_raw_socket

    if not can_open_raw_socket():
        log.error("run needs a raw ICMP socket to read traceroute replies; "
                  "rerun as root or grant CAP_NET_RAW")
        return 1
    cfg = probe_config(args)
    net = LiveNetwork(cfg)
    try:
        record = run_revelio_session(cfg, net, device_id=args.device_id)
    finally:
        net.close()
    for err in record.errors:
        log.warning("%s", err)
    return _emit_runs(args, [(record, AccessTechnology(args.technology),
                              {"isp": args.isp, "technology": args.technology})])


def _emit_runs(args, runs) -> int:
    """Write records, or verdicts when ``--classify`` is set, for (record, tech, meta) runs."""
    options = analysis_options(args)
    dump = open(args.dump_pathchar, "w", encoding="utf-8") if args.dump_pathchar else None
    try:
        with Output(args.output, args.deterministic) as out:
            by_device = {}
            for record, tech, meta in runs:
                if args.classify or dump:
                    analysis = analyze_record(record, tech, meta.get("isp", ""),
                                              meta.get("country", ""), options)
                    if dump:
                        _dump_pathchar(dump, record.device_id, analysis)
                    by_device.setdefault(record.device_id, []).append(analysis.verdict)
                if not args.classify:
                    out.obj(interchange.record_to_dict(record))
            if args.classify:
                for dev, verdicts in by_device.items():
                    out.obj(interchange.verdict_to_dict(fuse_verdicts(verdicts), dev))
    finally:
        if dump:
            dump.close()
    return 0


def cmd_simulate(args) -> int:
    if args.topology:
        with open(args.topology, encoding="utf-8") as fh:
            topologies = load_topologies(fh.read())
    else:
        topologies = generate_corpus(args.corpus, args.seed)
    cfg = probe_config(args, sim_config())
    runs = []
    for i, topo in enumerate(topologies):
        dev = topo.name or f"sim{i:04d}"
        for k in range(args.runs):
            record = simulate_session(topo, cfg, seed=args.seed + 1000 * i + k,
                                      jitter_max=args.jitter, device_id=dev)
            runs.append((record, topo.technology, {"technology": topo.technology}))
    return _emit_runs(args, runs)


def read_meta(path) -> dict[str, dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if rows and "device_id" not in rows[0]:
        raise UsageError(f"{path}: needs a device_id column")
    return {r["device_id"]: {"isp": r.get("isp", ""), "technology": r.get("technology") or "unknown",
                             "country": r.get("country", "")} for r in rows}


def cmd_classify(args) -> int:
    with _open_in(args.input) as fh:
        records = interchange.read_records(fh)
    meta = read_meta(args.meta) if args.meta else {}
    default = {"isp": args.isp, "technology": args.technology, "country": ""}
    devices = {r.device_id for r in records}
    meta = {d: meta.get(d, default) for d in devices}
    options = analysis_options(args)
    probes = classify_fleet(records, meta, options)
    if args.dump_pathchar:
        with open(args.dump_pathchar, "w", encoding="utf-8") as dump:
            for r in records:
                m = meta[r.device_id]
                _dump_pathchar(dump, r.device_id, analyze_record(r, m["technology"], options=options))
    with Output(args.output, args.deterministic) as out:
        for state, verdict in probes:
            out.obj(interchange.probe_to_dict(state, verdict))
    return 0


def _kv_table(title, rows, fmt):
    if fmt == "csv":
        buf = [",".join(rows[0])] + [",".join(str(c) for c in r) for r in rows[1:]]
        return f"# {title}\n" + "\n".join(buf) + "\n"
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    return f"{title}\n" + "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    with _open_in(args.input) as fh:
        probes = interchange.read_probes(fh)
    records = []
    if args.records:
        with open(args.records, encoding="utf-8") as fh:
            records = interchange.read_records(fh)
    wanted = {"isp", "hops", "realms", "gra"} if args.analysis == "all" else {args.analysis}
    parts = []
    if "isp" in wanted:
        reports = per_isp_report(probes, args.table1_compat)
        fmt = report_csv if args.format == "csv" else report_text
        parts.append(fmt(reports, args.table1_compat))
    if "hops" in wanted:
        hd = cgn_hop_distance(probes)
        rows = [("isp", "distance", "probes")] + [
            (isp, d, n) for isp, h in hd.histogram.items() for d, n in h.items()]
        parts.append(_kv_table(f"cgn hop distance (skipped {hd.skipped})", rows, args.format))
    if "realms" in wanted:
        rows = [("isp", "realm", "probes")] + [
            (isp, realm, n) for isp, c in addressing_realms(probes).items() for realm, n in c.items()]
        parts.append(_kv_table("addressing behind the cpe", rows, args.format))
    if "gra" in wanted:
        st = gra_stability(probes, records)
        fmt_mean = lambda m: "n/a" if m is None else f"{m:.3f}"
        rows = [("gra", "probes", "start", "end", "hours")] + [
            (e.gra, "+".join(sorted(e.probes)), e.start.isoformat(), e.end.isoformat(),
             f"{e.overlap.total_seconds() / 3600:.1f}") for e in st.shared_gra_events]
        title = (f"gra stability: mean {fmt_mean(st.mean_all)} per probe, "
                 f"{fmt_mean(st.mean_cgn)} per cgn probe, "
                 f"{len(st.excluded_pairs)} household pairs skipped")
        parts.append(_kv_table(title, rows, args.format))
    with Output(args.output) as out:
        out.text("\n".join(parts))
    return 0


def cmd_corpus(args) -> int:
    topologies = generate_corpus(args.n, args.seed)
    if args.filter_past_cpe:
        topologies = [t.filtered_past_cpe() for t in topologies]
    if not args.run:
        if args.score:
            raise UsageError("--score needs --run")
        with Output(args.output) as out:
            out.text(dump_topologies(topologies))
        return 0
    cfg = probe_config(args, sim_config())
    options = analysis_options(args)
    confusion = Counter()
    dump = open(args.dump_pathchar, "w", encoding="utf-8") if args.dump_pathchar else None
    try:
        with Output(args.output, args.deterministic) as out:
            for i, topo in enumerate(topologies):
                record = simulate_session(topo, cfg, seed=args.seed + i, jitter_max=args.jitter)
                analysis = analyze_record(record, topo.technology, options=options)
                if dump:
                    _dump_pathchar(dump, record.device_id, analysis)
                confusion[(topo.truth.value, analysis.verdict.kind.value)] += 1
                if not args.score:
                    line = interchange.verdict_to_dict(analysis.verdict, record.device_id)
                    line["truth"] = topo.truth.value
                    out.obj(line)
            if args.score:
                correct = sum(n for (t, v), n in confusion.items() if t == v)
                flips = sum(n for (t, v), n in confusion.items()
                            if t != v and v != "inconclusive")
                out.obj({"type": "score", "topologies": len(topologies), "correct": correct,
                         "accuracy": correct / len(topologies), "wrong_definite": flips,
                         "confusion": {f"{t}->{v}": n for (t, v), n in sorted(confusion.items())}})
    finally:
        if dump:
            dump.close()
    return 0


COMMANDS = {"run": cmd_run, "simulate": cmd_simulate, "classify": cmd_classify,
            "report": cmd_report, "corpus": cmd_corpus}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return 0 if exc.code in (0, None) else 2
    except (UsageError, OSError) as exc:
        print(f"revelio: {exc}", file=sys.stderr)
        return 2
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigInvalid) as exc:
        print(f"revelio: {exc}", file=sys.stderr)
        return 2
    except (RevelioError, OSError, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
