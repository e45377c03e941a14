"""Minimal RFC 5389 Binding client: just enough to learn the mapped address."""

from __future__ import annotations

import ipaddress
import os
import socket
import struct

from revelio.addresses import IpClass, classify_address
from revelio.errors import NonPublicMapping, StunMalformed, StunTimeout
from revelio.types import GraObservation, utc_now

MAGIC_COOKIE = 0x2112A442
COOKIE_BYTES = struct.pack("!I", MAGIC_COOKIE)

BINDING_REQUEST = 0x0001
BINDING_SUCCESS = 0x0101

ATTR_MAPPED_ADDRESS = 0x0001
ATTR_XOR_MAPPED_ADDRESS = 0x0020
# pre-standard servers still send the draft code point
ATTR_XOR_MAPPED_ADDRESS_OLD = 0x8020

FAMILY_IPV4 = 0x01
HEADER_LEN = 20
INITIAL_RTO_S = 0.5


def new_transaction_id() -> bytes:
    return os.urandom(12)


def encode_binding_request(txid: bytes) -> bytes:
    if len(txid) != 12:
        raise ValueError("transaction id must be 96 bits")
    return struct.pack("!HHI", BINDING_REQUEST, 0, MAGIC_COOKIE) + txid


def xor_address(addr: str) -> str:
    """XOR an IPv4 address with the magic cookie (its own inverse)."""
    raw = ipaddress.IPv4Address(addr).packed
    return str(ipaddress.IPv4Address(bytes(a ^ c for a, c in zip(raw, COOKIE_BYTES))))


def xor_port(port: int) -> int:
    return port ^ (MAGIC_COOKIE >> 16)


def _attr(attr_type: int, value: bytes) -> bytes:
    pad = (-len(value)) % 4
    return struct.pack("!HH", attr_type, len(value)) + value + b"\x00" * pad


def encode_address_attr(address: str, port: int, xor: bool = True) -> bytes:
    if xor:
        value = struct.pack("!BBH", 0, FAMILY_IPV4, xor_port(port))
        value += ipaddress.IPv4Address(xor_address(address)).packed
        return _attr(ATTR_XOR_MAPPED_ADDRESS, value)
    value = struct.pack("!BBH", 0, FAMILY_IPV4, port) + ipaddress.IPv4Address(address).packed
    return _attr(ATTR_MAPPED_ADDRESS, value)


def encode_binding_response(txid: bytes, address: str, port: int, xor: bool = True,
                            extra_attrs: bytes = b"") -> bytes:
    body = extra_attrs + encode_address_attr(address, port, xor)
    return struct.pack("!HHI", BINDING_SUCCESS, len(body), MAGIC_COOKIE) + txid + body


def iter_attributes(body: bytes):
    pos = 0
    while pos < len(body):
        if len(body) - pos < 4:
            raise StunMalformed("truncated attribute header")
        attr_type, length = struct.unpack_from("!HH", body, pos)
        start = pos + 4
        end = start + length
        if end > len(body):
            raise StunMalformed(f"attribute 0x{attr_type:04x} overruns the message")
        yield attr_type, body[start:end]
        pos = end + (-length) % 4


def _decode_address(value: bytes, xored: bool) -> tuple[str, int]:
    if len(value) < 8:
        raise StunMalformed("address attribute too short")
    _, family, port = struct.unpack_from("!BBH", value)
    if family != FAMILY_IPV4:
        raise StunMalformed(f"unsupported address family {family}")
    addr = str(ipaddress.IPv4Address(value[4:8]))
    if xored:
        return xor_address(addr), xor_port(port)
    return addr, port


def decode_binding_response(data: bytes, txid: bytes | None = None) -> tuple[str, int]:
    """Mapped (address, port) from a Binding success response.

    XOR-MAPPED-ADDRESS is preferred; MAPPED-ADDRESS is the fallback.
    """
    if len(data) < HEADER_LEN:
        raise StunMalformed("message shorter than the STUN header")
    msg_type, length, cookie = struct.unpack_from("!HHI", data)
    if cookie != MAGIC_COOKIE:
        raise StunMalformed(f"bad magic cookie 0x{cookie:08x}")
    if msg_type != BINDING_SUCCESS:
        raise StunMalformed(f"not a binding success response (type 0x{msg_type:04x})")
    if length % 4 or HEADER_LEN + length != len(data):
        raise StunMalformed("message length does not match the datagram")
    if txid is not None and data[8:20] != txid:
        raise StunMalformed("transaction id mismatch")

    mapped = None
    for attr_type, value in iter_attributes(data[HEADER_LEN:]):
        if attr_type in (ATTR_XOR_MAPPED_ADDRESS, ATTR_XOR_MAPPED_ADDRESS_OLD):
            return _decode_address(value, xored=True)
        if attr_type == ATTR_MAPPED_ADDRESS and mapped is None:
            mapped = _decode_address(value, xored=False)
    if mapped is None:
        raise StunMalformed("no mapped address attribute")
    return mapped


class UdpStunTransport:
    """Request/response over a real UDP socket."""

    def __init__(self, server: tuple[str, int], bind: tuple[str, int] = ("0.0.0.0", 0)):
        self.server = server
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind(bind)
        # connect() fixes the local address the kernel will use for the server
        self.sock.connect(server)

    def local_address(self) -> tuple[str, int]:
        return self.sock.getsockname()

    def exchange(self, request: bytes, timeout_s: float) -> bytes | None:
        self.sock.settimeout(timeout_s)
        self.sock.send(request)
        try:
            return self.sock.recv(2048)
        except (socket.timeout, ConnectionRefusedError):
            return None

    def close(self):
        self.sock.close()


def stun_discover_gra(transport, retransmits: int = 3, initial_rto_s: float = INITIAL_RTO_S,
                      clock=utc_now) -> GraObservation:
    """Learn the GRA through ``transport`` (anything with ``exchange`` and
    ``local_address``). The request is resent ``retransmits`` times with a
    doubling timeout before giving up.
    """
    txid = new_transaction_id()
    request = encode_binding_request(txid)
    rto = initial_rto_s
    for _ in range(retransmits + 1):
        reply = transport.exchange(request, rto)
        if reply is not None:
            try:
                address, port = decode_binding_response(reply, txid)
            except StunMalformed as exc:
                if "transaction id" in str(exc):
                    continue
                raise
            local_addr, local_port = transport.local_address()
            if address != local_addr and classify_address(address) is not IpClass.PUBLIC:
                raise NonPublicMapping(address, port)
            return GraObservation(address, port, local_addr, local_port, clock())
        rto *= 2
    raise StunTimeout(f"no STUN response after {retransmits} retransmits")
