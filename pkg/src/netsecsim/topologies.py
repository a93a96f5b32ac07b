"""Stock topology descriptions used by the attack runners and the stock scenarios.

Each function returns a plain description dict accepted by
:func:`netsecsim.simnet.create_topology`; :func:`netsecsim.stack.build`
turns it into a booted network.
"""

from __future__ import annotations


def basic() -> dict:
    """Two hosts on separate LANs joined by one router."""
    return {
        "nodes": [("A", "host", ["10.0.0.10/24"]),
                  ("R", "router", ["10.0.0.1/24", "10.0.1.1/24"]),
                  ("B", "host", ["10.0.1.20/24"])],
        "lans": {"lan-a": ["R", "A"], "lan-b": ["R", "B"]},
    }


def wiretap() -> dict:
    """A copper link A-B, an optical link A-C, and an unattached observer E."""
    return {
        "nodes": [("A", "host", ["10.1.0.1/30", "10.1.1.1/30"]),
                  ("B", "host", ["10.1.0.2/30"]),
                  ("C", "host", ["10.1.1.2/30"]),
                  ("E", "host", [])],
        "links": [("A", "B"), ("A", "C", {"tappable": False})],
    }


def switched_lan() -> dict:
    """Sender S, victim V and intruder I on one switched domain."""
    return {
        "nodes": [("S", "host", ["10.4.0.1/24"]), ("V", "host", ["10.4.0.2/24"]),
                  ("I", "host", ["10.4.0.66/24"])],
        "lans": {"office": ["S", "V", "I"]},
    }


def hijack() -> dict:
    """Client C behind router R; server S and attacker X share the server LAN."""
    return {
        "nodes": [("C", "host", ["10.0.1.10/24"]),
                  ("R", "router", ["10.0.1.1/24", "10.0.2.1/24"]),
                  ("S", "host", ["10.0.2.20/24"]),
                  ("X", "host", ["10.0.2.66/24"])],
        "lans": {"client-lan": ["R", "C"], "server-lan": ["R", "S", "X"]},
    }


def mitm() -> dict:
    """A and B whose only path runs through router M."""
    return {
        "nodes": [("A", "host", ["10.1.0.2/30"]),
                  ("M", "router", ["10.1.0.1/30", "10.2.0.1/30"]),
                  ("B", "host", ["10.2.0.2/30"])],
        "links": [("A", "M"), ("M", "B")],
    }


def echo_chargen() -> dict:
    return {
        "nodes": [("A", "host", ["10.3.0.1/24"]), ("B", "host", ["10.3.0.2/24"]),
                  ("X", "host", ["10.3.0.66/24"])],
        "lans": {"lan": ["A", "B", "X"]},
    }


def smurf(hosts: int = 5) -> dict:
    """Amplifier LAN with ``hosts`` hosts; victim and attacker on other LANs."""
    nodes = [("R", "router", ["10.5.0.254/24", "10.6.0.1/24", "10.7.0.1/24"]),
             ("V", "host", ["10.6.0.10/24"]), ("X", "host", ["10.7.0.66/24"])]
    amp = ["R"]
    for i in range(1, hosts + 1):
        nodes.append((f"H{i}", "host", [f"10.5.0.{i}/24"]))
        amp.append(f"H{i}")
    return {"nodes": nodes, "lans": {"amp": amp, "victim-lan": ["R", "V"], "attacker-lan": ["R", "X"]}}


def redirect() -> dict:
    """Three core routers with a shared neighbor X; four stub networks behind E."""
    nodes = [("R1", "router", ["10.20.0.1/24", "10.21.1.2/30", "10.11.0.1/24"]),
             ("R2", "router", ["10.20.0.2/24", "10.21.2.2/30"]),
             ("R3", "router", ["10.20.0.3/24", "10.21.3.2/30"]),
             ("C", "router", ["10.20.0.4/24", "10.22.0.1/30"]),
             ("X", "router", ["10.21.1.1/30", "10.21.2.1/30", "10.21.3.1/30"]),
             ("E", "router", ["10.22.0.2/30"] + [f"10.30.{i}.1/24" for i in range(1, 5)]),
             ("S", "host", ["10.11.0.10/24"])]
    lans = {"core": ["R1", "R2", "R3", "C"], "r1-stub": ["R1", "S"]}
    for i in range(1, 5):
        nodes.append((f"H{i}", "host", [f"10.30.{i}.10/24"]))
        lans[f"net{i}"] = ["E", f"H{i}"]
    links = [("X", "R1"), ("X", "R2"), ("X", "R3"), ("C", "E")]
    return {"nodes": nodes, "links": links, "lans": lans}


def dns() -> dict:
    return {
        "nodes": [("D", "host", ["10.8.0.53/24"]), ("C1", "host", ["10.8.0.11/24"]),
                  ("C2", "host", ["10.8.0.12/24"]), ("C3", "host", ["10.8.0.13/24"]),
                  ("X", "host", ["10.8.0.66/24"])],
        "lans": {"lan": ["D", "C1", "C2", "C3", "X"]},
    }


def syn_flood() -> dict:
    return {
        "nodes": [("R", "router", ["10.9.0.1/24"]), ("S", "host", ["10.9.0.80/24"]),
                  ("C", "host", ["10.9.0.10/24"]), ("X", "host", ["10.9.0.66/24"])],
        "lans": {"lan": ["R", "S", "C", "X"]},
    }


def ddos(zombies: int = 4) -> dict:
    nodes = [("R", "router", ["10.12.0.1/24", "10.13.0.1/24"]),
             ("S", "host", ["10.13.0.80/24"]), ("C", "host", ["10.13.0.10/24"]),
             ("X", "host", ["10.12.0.66/24"])]
    zlan = ["R", "X"]
    for i in range(1, zombies + 1):
        nodes.append({"name": f"Z{i}", "kind": "host", "addrs": [f"10.12.0.{10 + i}/24"],
                      "compromised": True})
        zlan.append(f"Z{i}")
    return {"nodes": nodes, "lans": {"zombie-lan": zlan, "server-lan": ["R", "S", "C"]}}


def vpn() -> dict:
    """Two private sites joined across a public core by gateways GA and GB."""
    return {
        "nodes": [("A", "host", ["10.0.0.10/24"]),
                  ("GA", "gateway", ["10.0.0.1/24", "198.51.100.1/30"]),
                  ("P", "router", ["198.51.100.2/30", "203.0.113.1/30"]),
                  ("GB", "gateway", ["203.0.113.2/30", "10.1.0.1/24"]),
                  ("B", "host", ["10.1.0.9/24"])],
        "links": [("GA", "P"), ("P", "GB")],
        "lans": {"site-a": ["GA", "A"], "site-b": ["GB", "B"]},
    }


def exposure() -> dict:
    """The four-node path A-R1-R2-B."""
    return {
        "nodes": [("A", "host", ["10.40.1.2/30"]),
                  ("R1", "router", ["10.40.1.1/30", "10.40.2.1/30"]),
                  ("R2", "router", ["10.40.2.2/30", "10.40.3.1/30"]),
                  ("B", "host", ["10.40.3.2/30"])],
        "links": [("A", "R1"), ("R1", "R2"), ("R2", "B")],
    }


def firewall() -> dict:
    """Outside host O, firewall FW in front of the LAN, and a modem-equipped host M."""
    return {
        "nodes": [("O", "host", ["198.51.100.10/24", "192.0.2.1/30"]),
                  ("FW", "gateway", ["198.51.100.1/24", "10.50.0.1/24"]),
                  ("V", "host", ["10.50.0.20/24"]),
                  {"name": "M", "kind": "host", "addrs": ["10.50.0.30/24", "192.0.2.2/30"],
                   "modem_bypass": True}],
        "links": [("O", "M")],
        "lans": {"outside": ["FW", "O"], "inside": ["FW", "V", "M"]},
    }


STOCK = {
    "basic": basic, "wiretap": wiretap, "switched_lan": switched_lan, "hijack": hijack,
    "mitm": mitm, "echo_chargen": echo_chargen, "smurf": smurf, "redirect": redirect,
    "dns": dns, "syn_flood": syn_flood, "ddos": ddos, "vpn": vpn, "exposure": exposure,
    "firewall": firewall,
}
