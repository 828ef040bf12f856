#!/usr/bin/env python3
"""Generate the bundled NVD-style fixture feeds.

The records are synthetic. Descriptions are assembled from templates for
common vulnerability classes (XSS, SQL injection, overflows, physical USB
attacks, ...), each class carrying a typical CVSS v3.1 vector. Every metric
is resampled with some probability so the labels are noisy, as real NVD
assignments are. Scores come from the `cvss` package, independently of the
Rust scorer.

Usage: python3 scripts/gen_nvd_fixture.py crates/core/tests/fixtures
"""

import gzip
import json
import random
import sys
from pathlib import Path

from cvss import CVSS3

SEED = 20200609
NOISE = 0.12

VENDORS = ["Acme", "Globex", "Initech", "Umbrella", "Hooli", "Vandelay", "Stark", "Wayne",
           "Cyberdyne", "Tyrell", "Soylent", "Wonka", "Aperture", "Massive", "Oscorp"]
PRODUCTS = ["Portal", "CMS", "Router", "Gateway", "Server", "Suite", "Manager", "Player",
            "Browser", "Firmware", "Agent", "Console", "Camera", "Printer", "Controller",
            "Hub", "Mail", "Forum", "Wiki", "Shop"]
PARAMS = ["id", "name", "search", "q", "page", "redirect", "url", "user", "file", "lang",
          "title", "comment", "sort", "category", "token"]
FILES = ["index.php", "admin.php", "login.jsp", "upload.asp", "view.php", "search.cgi",
         "api/v1/users", "settings.html", "export.php", "report.aspx"]
COMPONENTS = ["web interface", "management interface", "parser", "image decoder", "kernel driver",
              "network stack", "update service", "authentication module", "file handler",
              "scripting engine", "font renderer", "RPC service", "DHCP client", "media codec"]
FILETYPES = ["PDF", "image", "document", "spreadsheet", "font", "archive", "video", "project"]
PACKETS = ["packet", "HTTP request", "DNS response", "SNMP message", "TLS handshake",
           "XML document", "JSON payload", "network message"]


def version(rng):
    return f"{rng.randint(1, 12)}.{rng.randint(0, 9)}.{rng.randint(0, 20)}"


def product(rng):
    return f"{rng.choice(VENDORS)} {rng.choice(PRODUCTS)}"


# (name, weight, base vector, template function)
ARCHETYPES = []


def archetype(name, weight, vector):
    def register(fn):
        ARCHETYPES.append((name, weight, vector, fn))
        return fn
    return register


@archetype("xss", 14, "AV:N/AC:L/PR:N/UI:R/S:C/C:L/I:L/A:N")
def xss(rng, p, v):
    return rng.choice([
        f"Cross-site scripting (XSS) vulnerability in {p} {v} allows remote attackers to inject arbitrary web script or HTML via the {rng.choice(PARAMS)} parameter.",
        f"{p} before {v} is vulnerable to stored cross-site scripting in the {rng.choice(COMPONENTS)}, allowing an attacker to inject malicious scripts that execute when a victim views the page.",
        f"A reflected XSS issue was discovered in {rng.choice(FILES)} in {p} {v}. A crafted link can execute JavaScript in the victim's browser if the victim clicks it.",
    ])


@archetype("sqli", 10, "AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H")
def sqli(rng, p, v):
    return rng.choice([
        f"SQL injection vulnerability in {rng.choice(FILES)} in {p} {v} allows remote attackers to execute arbitrary SQL commands via the {rng.choice(PARAMS)} parameter.",
        f"{p} through {v} allows SQL injection via the {rng.choice(PARAMS)} parameter to {rng.choice(FILES)}.",
        f"An unauthenticated SQL injection in {p} {v} lets remote attackers read or modify the database through a crafted request.",
    ])


@archetype("rce_overflow", 10, "AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H")
def rce_overflow(rng, p, v):
    return rng.choice([
        f"A buffer overflow in the {rng.choice(COMPONENTS)} of {p} {v} allows remote attackers to execute arbitrary code via a crafted {rng.choice(PACKETS)}.",
        f"Stack-based buffer overflow in {p} before {v} allows remote attackers to execute arbitrary code or cause a denial of service via a long {rng.choice(PARAMS)} value.",
        f"{p} {v} allows unauthenticated remote code execution because the {rng.choice(COMPONENTS)} does not validate the length of a {rng.choice(PACKETS)}.",
    ])


@archetype("file_open", 8, "AV:L/AC:L/PR:N/UI:R/S:U/C:H/I:H/A:H")
def file_open(rng, p, v):
    ft = rng.choice(FILETYPES)
    return rng.choice([
        f"A use-after-free vulnerability in {p} {v} could allow an attacker to execute arbitrary code if a user opens a crafted {ft} file.",
        f"{p} before {v} has a heap-based buffer overflow in the {rng.choice(COMPONENTS)}. Successful exploitation requires the victim to open a malicious {ft} file.",
        f"An out-of-bounds write in {p} {v} when parsing {ft} files may lead to arbitrary code execution. User interaction is required to exploit this vulnerability.",
    ])


@archetype("dos", 10, "AV:N/AC:L/PR:N/UI:N/S:U/C:N/I:N/A:H")
def dos(rng, p, v):
    return rng.choice([
        f"{p} {v} allows remote attackers to cause a denial of service (application crash) via a crafted {rng.choice(PACKETS)}.",
        f"A NULL pointer dereference in the {rng.choice(COMPONENTS)} of {p} before {v} allows remote attackers to cause a denial of service.",
        f"An infinite loop in {p} {v} can be triggered by a malformed {rng.choice(PACKETS)}, causing the service to hang and resulting in a denial of service.",
        f"Uncontrolled resource consumption in {p} through {v} allows an unauthenticated attacker to exhaust memory and crash the {rng.choice(COMPONENTS)}.",
    ])


@archetype("local_privesc", 9, "AV:L/AC:L/PR:L/UI:N/S:U/C:H/I:H/A:H")
def local_privesc(rng, p, v):
    return rng.choice([
        f"{p} {v} allows local users to gain privileges via a crafted application that exploits improper permissions in the {rng.choice(COMPONENTS)}.",
        f"An elevation of privilege vulnerability exists in {p} before {v} when the {rng.choice(COMPONENTS)} improperly handles objects in memory. A locally authenticated attacker could run arbitrary code with elevated privileges.",
        f"Insecure file permissions in {p} {v} allow a local low privileged user to escalate privileges to SYSTEM.",
    ])


@archetype("info_disclosure", 9, "AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:N/A:N")
def info_disclosure(rng, p, v):
    return rng.choice([
        f"{p} {v} allows remote attackers to obtain sensitive information via a direct request to {rng.choice(FILES)}.",
        f"An information disclosure vulnerability in {p} before {v} exposes credentials in the {rng.choice(COMPONENTS)} to unauthenticated users.",
        f"Directory traversal vulnerability in {p} {v} allows remote attackers to read arbitrary files via a .. (dot dot) in the {rng.choice(PARAMS)} parameter.",
    ])


@archetype("physical", 5, "AV:P/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H")
def physical(rng, p, v):
    return rng.choice([
        f"A logic issue was addressed with improved restrictions. This issue is fixed in {p} {v}. Inserting a USB device that sends invalid messages may cause a kernel panic.",
        f"{p} {v} allows physically proximate attackers to bypass the lock screen and access sensitive data.",
        f"An attacker with physical access to a {p} running {v} can connect a malicious USB device to gain code execution in the {rng.choice(COMPONENTS)}.",
        f"Improper access control in the debug interface of {p} before {v} may allow an unauthenticated user with physical access to enable escalation of privilege.",
    ])


@archetype("adjacent", 5, "AV:A/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H")
def adjacent(rng, p, v):
    return rng.choice([
        f"{p} {v} allows an adjacent attacker on the same Wi-Fi network to execute arbitrary code via crafted frames.",
        f"A Bluetooth pairing flaw in {p} before {v} allows an unauthenticated user within radio range to take over the device.",
        f"Improper input validation in the {rng.choice(COMPONENTS)} of {p} {v} may allow an attacker on the local network segment to crash or control the device via adjacent access.",
    ])


@archetype("csrf", 6, "AV:N/AC:L/PR:N/UI:R/S:U/C:H/I:H/A:H")
def csrf(rng, p, v):
    return rng.choice([
        f"Cross-site request forgery (CSRF) vulnerability in {p} {v} allows remote attackers to hijack the authentication of administrators for requests that change settings.",
        f"{p} before {v} lacks CSRF protection on {rng.choice(FILES)}, so an attacker can convince a victim to visit a crafted link that performs actions as the victim.",
    ])


@archetype("race", 4, "AV:L/AC:H/PR:L/UI:N/S:U/C:H/I:H/A:H")
def race(rng, p, v):
    return rng.choice([
        f"A race condition in the {rng.choice(COMPONENTS)} of {p} {v} allows local users to gain privileges. Exploitation is difficult and requires winning a narrow timing window.",
        f"Time-of-check time-of-use race condition in {p} before {v} could allow a local attacker to escalate privileges under specific conditions.",
    ])


@archetype("admin_rce", 6, "AV:N/AC:L/PR:H/UI:N/S:U/C:H/I:H/A:H")
def admin_rce(rng, p, v):
    return rng.choice([
        f"{p} {v} allows authenticated administrators to execute arbitrary OS commands via the {rng.choice(PARAMS)} field of the {rng.choice(COMPONENTS)}.",
        f"A command injection vulnerability in the administrative console of {p} before {v} allows a high privileged user to run commands as root.",
        f"A vulnerability in the local system administration component of {p} can allow an authenticated, privileged user to gain root privileges. Affected versions include {v}.",
    ])


@archetype("auth_low", 6, "AV:N/AC:L/PR:L/UI:N/S:U/C:H/I:H/A:N")
def auth_low(rng, p, v):
    return rng.choice([
        f"Improper authorization in {p} {v} allows authenticated users with low privileges to modify other users' data via the {rng.choice(PARAMS)} parameter.",
        f"An insecure direct object reference in {p} before {v} lets any logged-in user read and change records belonging to other accounts.",
    ])


@archetype("sandbox_escape", 3, "AV:N/AC:H/PR:N/UI:R/S:C/C:H/I:H/A:H")
def sandbox_escape(rng, p, v):
    return rng.choice([
        f"Type confusion in the JavaScript engine of {p} prior to {v} allowed a remote attacker to potentially perform a sandbox escape via a crafted HTML page.",
        f"A memory corruption issue in {p} {v} may allow a malicious web page to escape the sandbox and execute code on the host.",
    ])


@archetype("mitm", 4, "AV:N/AC:H/PR:N/UI:N/S:U/C:H/I:H/A:N")
def mitm(rng, p, v):
    return rng.choice([
        f"{p} {v} does not verify X.509 certificates from SSL servers, which allows man-in-the-middle attackers to spoof servers and obtain sensitive information.",
        f"{p} before {v} could allow a remote attacker to obtain sensitive information, caused by a man in the middle attack. By SSL striping, an attacker could exploit this vulnerability.",
    ])


@archetype("open_redirect", 4, "AV:N/AC:L/PR:N/UI:R/S:C/C:L/I:L/A:N")
def open_redirect(rng, p, v):
    return rng.choice([
        f"Open redirect vulnerability in {p} {v} allows remote attackers to redirect users to arbitrary web sites and conduct phishing attacks via a URL in the {rng.choice(PARAMS)} parameter.",
        f"An issue was discovered in {p} {v}. The help URL parameter can be changed to embed arbitrary content inside of an iFrame. Attackers may use this with social engineering if they can convince a victim to visit a crafted link.",
    ])


VALUES = {"AV": "NALP", "AC": "LH", "PR": "NLH", "UI": "NR", "S": "UC", "C": "HLN", "I": "HLN", "A": "HLN"}


def noisy(rng, vector):
    parts = dict(p.split(":") for p in vector.split("/"))
    for key, values in VALUES.items():
        if rng.random() < NOISE:
            parts[key] = rng.choice(values)
    return "/".join(f"{k}:{parts[k]}" for k in VALUES)


def score(vector):
    return float(CVSS3("CVSS:3.1/" + vector).scores()[0])


def item(cve_id, description, v3=None, v3_score=None, v3_version="3.1", v2=False):
    impact = {}
    if v3 is not None:
        impact["baseMetricV3"] = {
            "cvssV3": {
                "version": v3_version,
                "vectorString": f"CVSS:{v3_version}/{v3}",
                "baseScore": v3_score,
            }
        }
    if v2:
        impact["baseMetricV2"] = {"cvssV2": {"version": "2.0", "vectorString": "AV:N/AC:L/Au:N/C:P/I:P/A:P", "baseScore": 7.5}}
    return {
        "cve": {
            "data_type": "CVE",
            "data_format": "MITRE",
            "data_version": "4.0",
            "CVE_data_meta": {"ID": cve_id, "ASSIGNER": "cve@mitre.org"},
            "description": {"description_data": [{"lang": "en", "value": description}]},
        },
        "impact": impact,
        "publishedDate": f"{cve_id[4:8]}-06-09T17:15Z",
    }


def feed(items):
    return {
        "CVE_data_type": "CVE",
        "CVE_data_format": "MITRE",
        "CVE_data_version": "4.0",
        "CVE_data_numberOfCVEs": str(len(items)),
        "CVE_Items": items,
    }


def main(out_dir):
    rng = random.Random(SEED)
    weights = [a[1] for a in ARCHETYPES]
    items = []
    serial = {2018: 10000, 2019: 10000, 2020: 10000}
    for n in range(2000):
        year = 2018 + n % 3
        serial[year] += rng.randint(1, 7)
        cve_id = f"CVE-{year}-{serial[year]}"
        name, _, base, fn = rng.choices(ARCHETYPES, weights=weights)[0]
        vector = noisy(rng, base)
        desc = fn(rng, product(rng), version(rng))
        s = score(vector)
        version_tag = "3.0" if rng.random() < 0.15 else "3.1"
        if rng.random() < 0.01 and s < 10.0:
            s = round(s + 0.1, 1)
        items.append(item(cve_id, desc, vector, s, version_tag))
    for k in range(30):
        year = 2018 + k % 3
        serial[year] += 1
        items.append(item(f"CVE-{year}-{serial[year]}",
                          "** REJECT ** DO NOT USE THIS CANDIDATE NUMBER. Reason: This candidate was withdrawn by its CNA."))
    for k in range(30):
        year = 2018 + k % 3
        serial[year] += 1
        items.append(item(f"CVE-{year}-{serial[year]}",
                          f"{product(rng)} {version(rng)} has an unspecified vulnerability.", v2=True))
    rng.shuffle(items)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = json.dumps(feed(items), indent=None, sort_keys=True).encode()
    with open(out / "nvd_synthetic_2018_2020.json.gz", "wb") as f:
        with gzip.GzipFile(fileobj=f, mode="wb", mtime=0, filename="") as gz:
            gz.write(payload)

    mini = [
        item("CVE-2018-4878", "A use-after-free vulnerability was discovered in Adobe Flash Player before 28.0.0.161. This vulnerability occurs due to a dangling pointer in the Primetime SDK related to media player handling of listener objects. A successful attack can lead to arbitrary code execution.",
             "AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H", 9.8),
        item("CVE-2020-9804", "A logic issue was addressed with improved restrictions. This issue is fixed in macOS Catalina 10.15.5. Inserting a USB device that sends invalid messages may cause a kernel panic.",
             "AV:P/AC:L/PR:N/UI:N/S:U/C:N/I:N/A:H", 4.6),
        item("CVE-2019-9964", "XnView MP 0.93.1 on Windows allows remote attackers to cause a denial of service (application crash) or possibly have unspecified other impact via a crafted file, related to ntdll!RtlpNtMakeTemporaryKey.",
             "AV:L/AC:L/PR:N/UI:R/S:U/C:H/I:H/A:H", 7.8, v3_version="3.0"),
        item("CVE-2019-0001", "** REJECT ** DO NOT USE THIS CANDIDATE NUMBER."),
        item("CVE-2018-0002", "An unspecified vulnerability with only legacy scoring.", v2=True),
    ]
    (out / "nvd_mini.json").write_text(json.dumps(feed(mini), indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/fixtures")
