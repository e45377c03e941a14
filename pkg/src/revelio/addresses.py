"""IPv4 address realm classification."""

from __future__ import annotations

import enum
import ipaddress


class IpClass(str, enum.Enum):
    PUBLIC = "public"
    PRIVATE = "private"
    SHARED = "shared"
    LOOPBACK = "loopback"
    LINK_LOCAL = "link_local"
    UNSPECIFIED = "unspecified"


_BLOCKS = (
    (ipaddress.IPv4Network("10.0.0.0/8"), IpClass.PRIVATE),
    (ipaddress.IPv4Network("172.16.0.0/12"), IpClass.PRIVATE),
    (ipaddress.IPv4Network("192.168.0.0/16"), IpClass.PRIVATE),
    (ipaddress.IPv4Network("100.64.0.0/10"), IpClass.SHARED),
    (ipaddress.IPv4Network("127.0.0.0/8"), IpClass.LOOPBACK),
    (ipaddress.IPv4Network("169.254.0.0/16"), IpClass.LINK_LOCAL),
    (ipaddress.IPv4Network("0.0.0.0/8"), IpClass.UNSPECIFIED),
)


def classify_address(addr) -> IpClass:
    """Return the addressing realm of an IPv4 address.

    ``addr`` may be a dotted-quad string, an int or an ``IPv4Address``.
    Anything outside the reserved blocks above is treated as public.
    """
    ip = addr if isinstance(addr, ipaddress.IPv4Address) else ipaddress.IPv4Address(addr)
    for net, cls in _BLOCKS:
        if ip in net:
            return cls
    return IpClass.PUBLIC


def normalize(addr) -> str:
    """Canonical dotted-quad form; raises ValueError for non-IPv4 input."""
    return str(ipaddress.IPv4Address(addr))


def is_ipv4(addr) -> bool:
    try:
        ipaddress.IPv4Address(addr)
    except (ipaddress.AddressValueError, ValueError, TypeError):
        return False
    return True


def is_topological(addr) -> bool:
    """True when a reply from ``addr`` says something about path position.

    Missing, IPv6, loopback and link-local responders carry no topology and
    are treated as silent hops by the delay and access-link logic.
    """
    if addr is None or not is_ipv4(addr):
        return False
    return classify_address(addr) not in (IpClass.LOOPBACK, IpClass.LINK_LOCAL,
                                          IpClass.UNSPECIFIED)
