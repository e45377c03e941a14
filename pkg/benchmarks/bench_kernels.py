"""Time the pure-Python and compiled kernels on session-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import random
import sys
import timeit
from array import array

from revelio import kernels
from revelio.probing.records import DEFAULT_SIZES


def session_samples(hops=15, reps=5, seed=0):
    rng = random.Random(seed)
    delays = [rng.uniform(20, 5000) for _ in range(hops)]
    bws = [rng.choice((1.0, 12.5, 125.0)) for _ in range(hops)]
    ttls, sizes, rtts = [], [], []
    for size in DEFAULT_SIZES:
        base = kernels.cumulative_rtts(delays, bws, size, backend="python")
        for _ in range(reps):
            for ttl, rtt in enumerate(base, start=1):
                ttls.append(ttl)
                sizes.append(size)
                rtts.append(rtt + rng.uniform(0, 200))
    return delays, bws, ttls, sizes, rtts


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=50)
    args = ap.parse_args(argv)
    delays, bws, ttls, sizes, rtts = session_samples()
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; only the Python backend is available", file=sys.stderr)
    print(f"{len(rtts)} samples, {len(delays)} hops, best of {args.repeat} x {args.number}")
    typed = (array("q", ttls), array("d", sizes), array("d", rtts))
    results = {}
    for name in backends:
        cases = {
            "fit_lines": lambda: kernels.fit_lines(ttls, sizes, rtts, backend=name),
            "fit_lines[arr]": lambda: kernels.fit_lines(*typed, backend=name),
            "cumulative_rtts": lambda: kernels.cumulative_rtts(delays, bws, 1000, backend=name),
        }
        for case, fn in cases.items():
            best = min(timeit.repeat(fn, number=args.number, repeat=args.repeat)) / args.number
            results[(case, name)] = best
            print(f"{case:16s} {name:7s} {best * 1e6:10.1f} us/call")
    for case in ("fit_lines", "fit_lines[arr]", "cumulative_rtts"):
        if (case, "cython") in results:
            print(f"{case:16s} speedup {results[(case, 'python')] / results[(case, 'cython')]:.1f}x")


if __name__ == "__main__":
    main()
