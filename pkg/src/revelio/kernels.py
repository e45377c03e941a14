"""Backend selection for the numeric hot loops.

The compiled extension is used when it was built and imports cleanly;
otherwise the pure-Python twin is used. Set ``REVELIO_PURE_PYTHON=1`` to
force the fallback.
"""

import os
from array import array

from revelio import _pykernels

if os.environ.get("REVELIO_PURE_PYTHON", "") not in ("", "0"):
    _ckernels = None
else:
    try:
        from revelio import _ckernels
    except ImportError:
        _ckernels = None

BACKEND = "cython" if _ckernels is not None else "python"


def available_backends():
    return ["python"] + (["cython"] if _ckernels is not None else [])


def get_backend(name=None):
    """Return the kernel module named ``name`` (default: the active one)."""
    name = name or BACKEND
    if name == "python":
        return _pykernels
    if name == "cython":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not built")
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def _typed(values, code):
    # arrays of the right type go to the compiled code without a copy
    if isinstance(values, array) and values.typecode == code:
        return values
    return array(code, values)


def fit_lines(ttls, sizes, rtts, min_sizes=3, backend=None):
    """Per-hop ``(ttl, intercept, slope, n, rms)`` fits; see ``_pykernels``.

    Passing ``array('q')`` / ``array('d')`` inputs avoids a conversion on
    the compiled path.
    """
    impl = get_backend(backend)
    if impl is _ckernels:
        return impl.fit_lines(_typed(ttls, "q"), _typed(sizes, "d"), _typed(rtts, "d"), min_sizes)
    return impl.fit_lines(ttls, sizes, rtts, min_sizes)


def cumulative_rtts(delays, bandwidths, size, backend=None):
    impl = get_backend(backend)
    if impl is _ckernels:
        return impl.cumulative_rtts(_typed(delays, "d"), _typed(bandwidths, "d"), float(size))
    return impl.cumulative_rtts(delays, bandwidths, float(size))
