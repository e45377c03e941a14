import socket
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from revelio.probing.upnp import (IGD_ST, build_get_external_ip_request, build_msearch,
                                  find_wan_services, parse_get_external_ip_response,
                                  parse_ssdp_response, upnp_query_wan_ip)

WANIP = "urn:schemas-upnp-org:service:WANIPConnection:1"

DESCRIPTION = f"""<?xml version="1.0"?>
<root xmlns="urn:schemas-upnp-org:device-1-0">
 <device>
  <deviceType>{IGD_ST}</deviceType>
  <deviceList><device><deviceList><device>
   <serviceList>
    <service>
     <serviceType>urn:schemas-upnp-org:service:WANCommonInterfaceConfig:1</serviceType>
     <controlURL>/ctl/common</controlURL>
    </service>
    <service>
     <serviceType>{WANIP}</serviceType>
     <controlURL>/ctl/ip</controlURL>
    </service>
   </serviceList>
  </device></deviceList></device></deviceList>
 </device>
</root>"""


def soap_ok(addr):
    return (f'<?xml version="1.0"?><s:Envelope xmlns:s="http://schemas.xmlsoap.org/soap/envelope/">'
            f'<s:Body><u:GetExternalIPAddressResponse xmlns:u="{WANIP}">'
            f'<NewExternalIPAddress>{addr}</NewExternalIPAddress>'
            f'</u:GetExternalIPAddressResponse></s:Body></s:Envelope>')


SOAP_FAULT = ('<?xml version="1.0"?><s:Envelope xmlns:s="http://schemas.xmlsoap.org/soap/envelope/">'
              '<s:Body><s:Fault><faultcode>s:Client</faultcode></s:Fault></s:Body></s:Envelope>')


def test_msearch_format():
    msg = build_msearch().decode()
    assert msg.startswith("M-SEARCH * HTTP/1.1\r\n")
    assert "HOST: 239.255.255.250:1900" in msg and f"ST: {IGD_ST}" in msg
    assert msg.endswith("\r\n\r\n")


def test_ssdp_parsing():
    h = parse_ssdp_response(b"HTTP/1.1 200 OK\r\nLOCATION: http://x/d.xml\r\nST: a\r\n\r\n")
    assert h["location"] == "http://x/d.xml"
    assert parse_ssdp_response(b"NOTIFY * HTTP/1.1\r\n\r\n") is None


def test_description_parsing():
    found = find_wan_services(DESCRIPTION, "http://10.0.0.1:5000/desc.xml")
    assert found == [(WANIP, "http://10.0.0.1:5000/ctl/ip")]


def test_soap_request_and_response():
    body, headers = build_get_external_ip_request(WANIP)
    assert b"GetExternalIPAddress" in body
    assert headers["SOAPAction"] == f'"{WANIP}#GetExternalIPAddress"'
    assert parse_get_external_ip_response(soap_ok("100.64.12.3")) == "100.64.12.3"
    assert parse_get_external_ip_response(SOAP_FAULT) is None
    assert parse_get_external_ip_response("<not xml") is None
    assert parse_get_external_ip_response(soap_ok("")) is None


class Gateway:
    """Loopback IGD: an SSDP responder plus the HTTP description/control server."""

    def __init__(self, wan="81.2.3.4", fault=False):
        gw = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *a):
                pass

            def do_GET(self):
                self._send(200, DESCRIPTION)

            def do_POST(self):
                self.rfile.read(int(self.headers["Content-Length"]))
                gw.soap_actions.append(self.headers["SOAPAction"])
                if gw.fault:
                    self._send(500, SOAP_FAULT)
                else:
                    self._send(200, soap_ok(gw.wan))

            def _send(self, code, text):
                data = text.encode()
                self.send_response(code)
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        self.wan, self.fault, self.soap_actions = wan, fault, []
        self.http = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.udp = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.udp.bind(("127.0.0.1", 0))
        self.udp.settimeout(5)
        self.searches = []
        self.threads = [threading.Thread(target=self.http.serve_forever, daemon=True),
                        threading.Thread(target=self._ssdp, daemon=True)]
        for t in self.threads:
            t.start()

    @property
    def ssdp_addr(self):
        return self.udp.getsockname()

    def _ssdp(self):
        try:
            data, addr = self.udp.recvfrom(4096)
        except OSError:
            return
        self.searches.append(data)
        port = self.http.server_address[1]
        self.udp.sendto((f"HTTP/1.1 200 OK\r\nST: {IGD_ST}\r\n"
                         f"LOCATION: http://127.0.0.1:{port}/desc.xml\r\n\r\n").encode(), addr)

    def close(self):
        self.http.shutdown()
        self.http.server_close()
        self.udp.close()


@pytest.fixture
def gateway(request):
    gw = Gateway(**getattr(request, "param", {}))
    yield gw
    gw.close()


def test_query_returns_wan_ip(gateway):
    assert upnp_query_wan_ip(timeout_s=2, ssdp_addr=gateway.ssdp_addr) == "81.2.3.4"
    assert gateway.searches[0].startswith(b"M-SEARCH")
    assert gateway.soap_actions == [f'"{WANIP}#GetExternalIPAddress"']


@pytest.mark.parametrize("gateway", [{"wan": "100.64.12.3"}], indirect=True)
def test_query_returns_shared_address(gateway):
    assert upnp_query_wan_ip(timeout_s=2, ssdp_addr=gateway.ssdp_addr) == "100.64.12.3"


@pytest.mark.parametrize("gateway", [{"fault": True}], indirect=True)
def test_soap_fault_is_unavailable(gateway):
    assert upnp_query_wan_ip(timeout_s=2, ssdp_addr=gateway.ssdp_addr) is None


def test_no_igd_is_unavailable():
    s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    s.bind(("127.0.0.1", 0))  # nobody answers here
    try:
        assert upnp_query_wan_ip(timeout_s=0.2, ssdp_addr=s.getsockname()) is None
    finally:
        s.close()
