"""Fixture networks, scripted runs and the small scenario suites used by the
verification battery and the tests.

Suites are sized so that each one enumerates in well under a second.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .network import Network
from .runtime import (ConwayProtocol, FipProtocol, InputSpec, RelayProtocol, Scenario, Script,
                      send_key)

# ---------------------------------------------------------------------------
# worked examples: Charlie deposits, Bob re-activates, Alice cashes

CHARLIE, BOB, ALICE, SUSAN = 0, 1, 2, 3


def deposit_net() -> Network:
    """Charlie, Bob, Alice plus Bob's supervisor Susan. ``D(C,B) = 9`` via Susan."""
    return Network.build(4, [
        (CHARLIE, BOB, 1, 10),
        (CHARLIE, ALICE, 1, 12),
        (CHARLIE, SUSAN, 1, 5),
        (SUSAN, BOB, 1, 4),
        (SUSAN, ALICE, 1, 5),
    ], labels=["Charlie", "Bob", "Alice", "Susan"])


def cheque_net() -> Network:
    """Charlie, Bob and Alice only."""
    return Network.build(3, [(CHARLIE, BOB, 1, 10), (CHARLIE, ALICE, 1, 12)],
                         labels=["Charlie", "Bob", "Alice"])


def cheque_scenario(horizon: int = 10) -> Scenario:
    """Relay transport; Charlie's deposit ``e`` can only happen at time 0."""
    return Scenario(cheque_net(), RelayProtocol("e"), horizon, (InputSpec(CHARLIE, "e", (0,)),))


def cheque_script() -> Script:
    """Bob hears at 2, Alice at 4."""
    return Script(None, ((CHARLIE, "e", 0),), {
        send_key(CHARLIE, BOB, 0, 0): 2,
        send_key(CHARLIE, ALICE, 0, 0): 4,
    })


def supervisor_scenario(horizon: int = 10, heartbeat: bool = False) -> Scenario:
    hb = ((SUSAN, ALICE),) if heartbeat else ()
    return Scenario(deposit_net(), RelayProtocol("e", hb), horizon, (InputSpec(CHARLIE, "e", (0,)),))


def supervisor_script() -> Script:
    """Bob hears at 2, Susan at 3, Alice at 4; Susan's relay reaches Alice at 7."""
    return Script(None, ((CHARLIE, "e", 0),), {
        send_key(CHARLIE, BOB, 0, 0): 2,
        send_key(CHARLIE, ALICE, 0, 0): 4,
        send_key(CHARLIE, SUSAN, 0, 0): 3,
        send_key(SUSAN, ALICE, 3, 0): 7,
    })


def heartbeat_script() -> Script:
    """Susan hears at 2 and stops her per-round ticks to Alice; every other
    message (including her relay) arrives as late as allowed."""
    return Script(None, ((CHARLIE, "e", 0),), {
        send_key(CHARLIE, SUSAN, 0, 0): 2,
    })


# ---------------------------------------------------------------------------
# leaks: one source, three recipients, one relay


WIKI, NEWS, EDITOR, MIRROR = 0, 1, 2, 3


def leak_net() -> Network:
    return Network.build(4, [
        (WIKI, NEWS, 1, 3),
        (WIKI, EDITOR, 1, 10),
        (WIKI, MIRROR, 1, 7),
        (MIRROR, NEWS, 1, 6),
        (MIRROR, EDITOR, 1, 6),
    ], labels=["W", "N", "E", "M"])


def leak_script(mirror_at: int | None = None) -> Script:
    """Source input at 0; the mirror hears at ``mirror_at`` (default: as late as allowed)."""
    dl = {} if mirror_at is None else {send_key(WIKI, MIRROR, 0, 0): mirror_at}
    return Script(None, ((WIKI, "e", 0),), dl)


def leak_scenario(horizon: int = 10) -> Scenario:
    return Scenario(leak_net(), FipProtocol(), horizon, (InputSpec(WIKI, "e", (0,)),))


# ---------------------------------------------------------------------------
# deep knowledge in one step


def conway_scenario(k_max: int = 7) -> Scenario:
    """V network with base 2 holding ``k`` in ``0..k_max``; trigger at time 0."""
    net = Network.build(3, [(2, 0, 1, 1), (2, 1, 1, 1)])
    initial = ((None,), (None,), tuple(range(k_max + 1)))
    return Scenario(net, ConwayProtocol(2, (0, 1), "e"), 2, (InputSpec(2, "e", (0,)),), initial)


# ---------------------------------------------------------------------------
# the tight gap between E^(M-1) and common knowledge


@dataclass(frozen=True)
class TightBound:
    scenario: Scenario
    script: Script
    group: tuple[int, ...]
    source: int
    depth: int  # d
    layers: dict  # (k, m) -> process id of helper h_{k,m}

    @property
    def m_bound(self) -> int:
        return (self.depth - 1) * (len(self.group) - 1) + 2


def tight_bound(d: int, g: int) -> TightBound:
    """Group ``0..g-1``, source ``g`` and ``d-1`` layers of ``g`` helpers.

    All channels are ``[1, d+1]`` except that helper ``h_{k,m}`` reaches every
    group member other than ``m`` within one round. In the scripted run each
    helper layer hears from the previous one after one round and the last
    layer reaches the group at ``d``.
    """
    if d < 2 or g < 2:
        raise ValueError("need d >= 2 and g >= 2")
    group = tuple(range(g))
    source = g
    layers: dict[tuple[int, int], int] = {}
    n = g + 1
    for k in range(1, d):
        for m in range(g):
            layers[k, m] = n
            n += 1
    fast = {(h, j) for (k, m), h in layers.items() for j in group if j != m}
    edges = [(a, b, 1, 1 if (a, b) in fast else d + 1) for a in range(n) for b in range(n) if a != b]
    net = Network.build(n, edges)
    scenario = Scenario(net, FipProtocol(), d, (InputSpec(source, "e", tuple(range(d + 1))),))
    dl: dict[tuple, int] = {}
    for m in range(g):
        dl[send_key(source, layers[1, m], 0, 0)] = 1
    for k in range(1, d - 1):
        for m in range(g):
            for m2 in range(g):
                dl[send_key(layers[k, m], layers[k + 1, m2], k, 0)] = k + 1
    for m in range(g):
        for j in group:
            dl[send_key(layers[d - 1, m], j, d - 1, 0)] = d
    return TightBound(scenario, Script(None, ((source, "e", 0),), dl), group, source, d, layers)


# ---------------------------------------------------------------------------
# snapshot networks


def asymmetric_star() -> Network:
    """``a`` reaches the hub ``b`` slowly; the hub talks to ``c`` fast."""
    return Network.build(3, [(0, 1, 1, 3), (1, 0, 1, 1), (1, 2, 1, 1), (2, 1, 1, 1)],
                         labels=["a", "b", "c"])


def snapshot_nets() -> dict[str, Network]:
    return {
        "pair": Network.build(2, [(0, 1, 1, 2), (1, 0, 1, 1)]),
        "ring3": Network.build(3, [(0, 1, 1, 2), (1, 2, 1, 1), (2, 0, 1, 2)]),
        "star": asymmetric_star(),
    }


def shortcut_net() -> Network:
    """The direct channel 0->2 is slower than the route through 1."""
    return Network.build(3, [(0, 1, 1, 1), (1, 2, 1, 1), (0, 2, 1, 3), (2, 0, 1, 1)])


# one message on the slow direct channel is still in transit at the snapshot
SHORTCUT_BACKGROUND = ((0, 2, 1), (0, 1, 1), (2, 0, 0))


# ---------------------------------------------------------------------------
# a production line with three simultaneous stages


def munchy_crunchy():
    """Two input streams, two mixing cells and a finishing cell.

    Each cell is a set of events that must happen together; every event
    runs on its own process.
    """
    from .response import Action, GRSpec

    names = ["chocolate", "crunchies", "choc-in1", "crunch-in1", "out1",
             "choc-in2", "out2", "coat", "temper", "wrap"]
    events = tuple(Action(n, k) for k, n in enumerate(names))
    cycle = lambda *xs: [(xs[k], xs[(k + 1) % len(xs)]) for k in range(len(xs))]
    order = (cycle("choc-in1", "crunch-in1", "out1") + cycle("choc-in2", "out2")
             + cycle("coat", "temper", "wrap")
             + [("chocolate", "choc-in1"), ("crunchies", "crunch-in1"), ("chocolate", "choc-in2"),
                ("out1", "coat"), ("out2", "coat")])
    return GRSpec(events, frozenset({"chocolate", "crunchies"}), tuple(order))


# ---------------------------------------------------------------------------
# enumerated suites


def _fip(n: int, edges, horizon: int, times=(0, 1)) -> Scenario:
    return Scenario(Network.build(n, edges), FipProtocol(), horizon, (InputSpec(0, "e", tuple(times)),))


KNOWLEDGE_SUITES: dict[str, Callable[[], Scenario]] = {
    "path3": lambda: _fip(3, [(0, 1, 1, 2), (1, 2, 1, 2)], 4),
    "triangle": lambda: _fip(3, [(0, 1, 1, 2), (1, 2, 1, 2), (0, 2, 1, 3)], 3),
    "cycle3": lambda: _fip(3, [(0, 1, 1, 2), (1, 2, 1, 1), (2, 0, 1, 2)], 4),
    "diamond4": lambda: _fip(4, [(0, 1, 1, 2), (0, 2, 1, 1), (1, 3, 1, 1), (2, 3, 1, 2)], 4),
}

# trigger only at time 0 so that every reference protocol completes in time
RESPONSE_SUITES: dict[str, Callable[[], Scenario]] = {
    "triangle0": lambda: _fip(3, [(0, 1, 1, 2), (1, 2, 1, 2), (0, 2, 1, 3)], 3, (0,)),
    "path3_0": lambda: _fip(3, [(0, 1, 1, 2), (1, 2, 1, 2)], 4, (0,)),
}

ASYNC_SUITES: dict[str, Callable[[], Scenario]] = {
    "async_path": lambda: _fip(3, [(0, 1, 1, None), (1, 2, 1, None)], 3, (0,)),
    "async_fork": lambda: _fip(3, [(0, 1, 1, None), (0, 2, 1, None)], 3, (0, 1)),
}

FIXED_SUITES: dict[str, Callable[[], Scenario]] = {
    "fixed_tri": lambda: _fip(3, [(0, 1, 1, 1), (1, 2, 2, 2), (0, 2, 2, 2), (2, 0, 1, 1)], 6, (0, 1, 2, 3)),
    "fixed_path": lambda: _fip(3, [(0, 1, 2, 2), (1, 2, 1, 1)], 5, (0, 1, 2)),
}

MIN_ONLY_SUITES: dict[str, Callable[[], Scenario]] = {
    "bypass": lambda: _fip(3, [(0, 1, 1, None), (1, 2, 1, None), (0, 2, 3, None)], 3),
    "line": lambda: _fip(3, [(0, 1, 1, None), (1, 2, 1, None)], 3),
}


def staged_scenario() -> Scenario:
    """Two independent triggers feeding a two-process cluster."""
    net = Network.build(4, [(0, 2, 1, 2), (1, 3, 1, 1), (2, 3, 1, 1), (3, 2, 1, 1)])
    return Scenario(net, FipProtocol(), 4, (InputSpec(0, "x", (0,)), InputSpec(1, "y", (0,))))


def suite(name: str) -> Scenario:
    for table in (KNOWLEDGE_SUITES, RESPONSE_SUITES, ASYNC_SUITES, FIXED_SUITES, MIN_ONLY_SUITES):
        if name in table:
            return table[name]()
    raise KeyError(f"unknown suite {name!r}")
