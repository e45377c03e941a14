import random
import socket
import struct
import threading

import pytest

from revelio.errors import NonPublicMapping, StunMalformed, StunTimeout
from revelio.probing import stun
from revelio.probing.stun import (MAGIC_COOKIE, UdpStunTransport, decode_binding_response,
                                  encode_binding_request, encode_binding_response,
                                  stun_discover_gra, xor_address)


def oracle_xor(addr: str) -> str:
    # byte-wise XOR against the big-endian cookie, written out by hand
    cookie = [0x21, 0x12, 0xA4, 0x42]
    return ".".join(str(int(o) ^ c) for o, c in zip(addr.split("."), cookie))


def test_xor_example():
    assert oracle_xor("225.44.7.76") == "192.62.163.14"
    assert xor_address("225.44.7.76") == "192.62.163.14"


def test_decode_wire_bytes():
    txid = bytes(range(12))
    # XOR-MAPPED-ADDRESS with x-port 0xA147 and x-address 225.44.7.76, built by hand
    attr = struct.pack("!HHBBH4B", 0x0020, 8, 0, 1, 0xA147, 225, 44, 7, 76)
    msg = struct.pack("!HHI", 0x0101, len(attr), 0x2112A442) + txid + attr
    assert decode_binding_response(msg, txid) == ("192.62.163.14", 0xA147 ^ 0x2112)


def test_round_trip_10k():
    rng = random.Random(8)
    for i in range(10_000):
        addr = ".".join(str(rng.randrange(256)) for _ in range(4))
        port = rng.randrange(1, 65536)
        txid = rng.randbytes(12)
        xor = i % 4 != 0
        msg = encode_binding_response(txid, addr, port, xor=xor)
        assert decode_binding_response(msg, txid) == (addr, port)
        if xor:
            x_addr = ".".join(str(b) for b in msg[-4:])
            assert oracle_xor(x_addr) == addr


def test_request_layout():
    txid = b"\x01" * 12
    req = encode_binding_request(txid)
    assert len(req) == 20
    assert struct.unpack("!HHI", req[:8]) == (0x0001, 0, MAGIC_COOKIE)
    assert req[8:] == txid
    with pytest.raises(ValueError):
        encode_binding_request(b"short")


def test_xor_preferred_over_mapped():
    txid = b"\x02" * 12
    extra = stun.encode_address_attr("1.2.3.4", 99, xor=False)
    msg = encode_binding_response(txid, "5.6.7.8", 1000, extra_attrs=extra)
    assert decode_binding_response(msg) == ("5.6.7.8", 1000)


@pytest.mark.parametrize("mangle", ["cookie", "type", "length", "empty", "short"])
def test_malformed(mangle):
    txid = b"\x03" * 12
    msg = bytearray(encode_binding_response(txid, "5.6.7.8", 1000))
    if mangle == "cookie":
        msg[4] ^= 0xFF
    elif mangle == "type":
        msg[1] = 0x11
    elif mangle == "length":
        msg += b"\x00\x00\x00\x00"
    elif mangle == "empty":
        msg = bytearray(struct.pack("!HHI", 0x0101, 0, MAGIC_COOKIE) + txid)
    else:
        msg = msg[:10]
    with pytest.raises(StunMalformed):
        decode_binding_response(bytes(msg))


class FakeTransport:
    def __init__(self, mapped=None, local=("192.168.1.5", 40000), answer_after=0):
        self.mapped = mapped
        self.local = local
        self.answer_after = answer_after
        self.timeouts = []

    def local_address(self):
        return self.local

    def exchange(self, request, timeout_s):
        self.timeouts.append(timeout_s)
        if self.mapped is None or len(self.timeouts) <= self.answer_after:
            return None
        return encode_binding_response(request[8:20], *self.mapped)


def test_discover_public():
    t = FakeTransport(("81.2.3.4", 51000))
    g = stun_discover_gra(t)
    assert (g.gra, g.mapped_port, g.local_address, g.local_port) == \
        ("81.2.3.4", 51000, "192.168.1.5", 40000)


def test_identity_mapping():
    t = FakeTransport(("192.168.1.5", 40000))
    g = stun_discover_gra(t)
    assert g.gra == g.local_address == "192.168.1.5"


def test_timeout_after_retransmits_with_backoff():
    t = FakeTransport(None)
    with pytest.raises(StunTimeout):
        stun_discover_gra(t, retransmits=3, initial_rto_s=0.5)
    assert t.timeouts == [0.5, 1.0, 2.0, 4.0]


def test_late_answer_is_taken():
    t = FakeTransport(("81.2.3.4", 51000), answer_after=2)
    assert stun_discover_gra(t).gra == "81.2.3.4"


@pytest.mark.parametrize("mapped", ["100.64.3.3", "10.9.9.9"])
def test_non_public_mapping(mapped):
    with pytest.raises(NonPublicMapping) as err:
        stun_discover_gra(FakeTransport((mapped, 7)))
    assert err.value.address == mapped


def test_udp_transport_against_loopback_server():
    srv = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    srv.bind(("127.0.0.1", 0))
    srv.settimeout(5)

    def serve():
        data, addr = srv.recvfrom(2048)
        srv.sendto(encode_binding_response(data[8:20], addr[0], addr[1]), addr)

    th = threading.Thread(target=serve)
    th.start()
    t = UdpStunTransport(srv.getsockname())
    try:
        g = stun_discover_gra(t, retransmits=1)
    finally:
        t.close()
        th.join()
        srv.close()
    # the loopback server sees us unmapped
    assert g.gra == "127.0.0.1" and g.mapped_port == g.local_port
