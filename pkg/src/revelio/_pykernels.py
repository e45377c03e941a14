"""Pure-Python kernels. Reference behaviour for ``_ckernels.pyx``."""

import math


def fit_lines(ttls, sizes, rtts, min_sizes):
    """Per-hop min-filter + least-squares line over (size, min RTT).

    Returns a list of ``(ttl, intercept, slope, sample_count, residual_rms)``
    ordered by ttl. Hops with fewer than ``min_sizes`` distinct sizes are
    dropped.
    """
    minima = {}
    for t, s, r in zip(ttls, sizes, rtts):
        key = (t, s)
        cur = minima.get(key)
        if cur is None or r < cur:
            minima[key] = r

    per_hop = {}
    for (t, s) in sorted(minima):
        per_hop.setdefault(t, []).append((s, minima[(t, s)]))

    out = []
    for t in sorted(per_hop):
        pts = per_hop[t]
        n = len(pts)
        if n < min_sizes:
            continue
        sx = 0.0
        sy = 0.0
        for s, r in pts:
            sx += s
            sy += r
        mx = sx / n
        my = sy / n
        sxx = 0.0
        sxy = 0.0
        for s, r in pts:
            dx = s - mx
            sxx += dx * dx
            sxy += dx * (r - my)
        slope = sxy / sxx
        intercept = my - slope * mx
        ss = 0.0
        for s, r in pts:
            e = r - (intercept + slope * s)
            ss += e * e
        out.append((t, intercept, slope, n, math.sqrt(ss / n)))
    return out


def cumulative_rtts(delays, bandwidths, size):
    """Round-trip time to each hop: 2 * running sum of (delay + size / bandwidth)."""
    out = []
    acc = 0.0
    for d, b in zip(delays, bandwidths):
        acc += d + size / b
        out.append(2.0 * acc)
    return out
