"""Ask the home gateway for its WAN address over UPnP IGD.

Every failure (no SSDP answer, no WAN connection service, SOAP fault, HTTP
error, garbage) collapses to ``None``: many CPEs simply do not speak UPnP.
"""

from __future__ import annotations

import logging
import socket
import urllib.error
import urllib.request
import xml.etree.ElementTree as ET
from urllib.parse import urljoin

from revelio.addresses import is_ipv4, normalize

log = logging.getLogger(__name__)

SSDP_ADDR = ("239.255.255.250", 1900)
IGD_ST = "urn:schemas-upnp-org:device:InternetGatewayDevice:1"
WAN_SERVICES = ("WANIPConnection", "WANPPPConnection")


def build_msearch(st: str = IGD_ST, mx: int = 2) -> bytes:
    return ("M-SEARCH * HTTP/1.1\r\n"
            f"HOST: {SSDP_ADDR[0]}:{SSDP_ADDR[1]}\r\n"
            'MAN: "ssdp:discover"\r\n'
            f"MX: {mx}\r\n"
            f"ST: {st}\r\n"
            "\r\n").encode("ascii")


def parse_ssdp_response(data: bytes) -> dict[str, str] | None:
    """Headers of an SSDP ``HTTP/1.1 200 OK`` reply, keys lower-cased."""
    try:
        text = data.decode("utf-8", "replace")
    except AttributeError:
        return None
    lines = text.split("\r\n") if "\r\n" in text else text.split("\n")
    if not lines or not lines[0].upper().startswith("HTTP/") or " 200" not in lines[0]:
        return None
    headers = {}
    for line in lines[1:]:
        name, sep, value = line.partition(":")
        if sep:
            headers[name.strip().lower()] = value.strip()
    return headers


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def find_wan_services(description: bytes | str, base_url: str) -> list[tuple[str, str]]:
    """(serviceType, absolute controlURL) for WAN IP/PPP connection services."""
    root = ET.fromstring(description)
    url_base = base_url
    for el in root.iter():
        if _local(el.tag) == "URLBase" and el.text:
            url_base = el.text.strip()
    found = []
    for service in root.iter():
        if _local(service.tag) != "service":
            continue
        fields = {_local(child.tag): (child.text or "").strip() for child in service}
        stype = fields.get("serviceType", "")
        if any(name in stype for name in WAN_SERVICES) and fields.get("controlURL"):
            found.append((stype, urljoin(url_base, fields["controlURL"])))
    return found


def build_get_external_ip_request(service_type: str) -> tuple[bytes, dict[str, str]]:
    body = ('<?xml version="1.0"?>\r\n'
            '<s:Envelope xmlns:s="http://schemas.xmlsoap.org/soap/envelope/" '
            's:encodingStyle="http://schemas.xmlsoap.org/soap/encoding/">'
            f'<s:Body><u:GetExternalIPAddress xmlns:u="{service_type}"/></s:Body>'
            '</s:Envelope>').encode("utf-8")
    headers = {
        "Content-Type": 'text/xml; charset="utf-8"',
        "SOAPAction": f'"{service_type}#GetExternalIPAddress"',
    }
    return body, headers


def parse_get_external_ip_response(body: bytes | str) -> str | None:
    try:
        root = ET.fromstring(body)
    except ET.ParseError:
        return None
    for el in root.iter():
        if _local(el.tag) == "Fault":
            return None
        if _local(el.tag) == "NewExternalIPAddress":
            text = (el.text or "").strip()
            return normalize(text) if is_ipv4(text) else None
    return None


def discover_igd(timeout_s: float = 2.0, ssdp_addr=SSDP_ADDR) -> str | None:
    """LOCATION URL of the first IGD answering an M-SEARCH, if any."""
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM, socket.IPPROTO_UDP)
    try:
        # one hop only: the gateway must sit on the probe's own link
        sock.setsockopt(socket.IPPROTO_IP, socket.IP_MULTICAST_TTL, 1)
        sock.settimeout(timeout_s)
        sock.sendto(build_msearch(), ssdp_addr)
        while True:
            try:
                data, _ = sock.recvfrom(4096)
            except socket.timeout:
                return None
            headers = parse_ssdp_response(data)
            if headers and headers.get("location"):
                return headers["location"]
    finally:
        sock.close()


def upnp_query_wan_ip(timeout_s: float = 2.0, ssdp_addr=SSDP_ADDR) -> str | None:
    try:
        location = discover_igd(timeout_s, ssdp_addr)
        if location is None:
            return None
        with urllib.request.urlopen(location, timeout=timeout_s) as resp:
            description = resp.read()
        for service_type, control_url in find_wan_services(description, location):
            body, headers = build_get_external_ip_request(service_type)
            req = urllib.request.Request(control_url, data=body, headers=headers, method="POST")
            try:
                with urllib.request.urlopen(req, timeout=timeout_s) as resp:
                    address = parse_get_external_ip_response(resp.read())
            except urllib.error.HTTPError as exc:
                # SOAP faults come back as HTTP 500 with a fault body
                address = parse_get_external_ip_response(exc.read())
            if address is not None:
                return address
    except (OSError, ET.ParseError, ValueError) as exc:
        log.debug("UPnP query failed: %s", exc)
    return None
