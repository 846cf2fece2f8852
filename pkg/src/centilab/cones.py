"""Causal cones, legal message chains, cuts and causal fronts.

The cone sets describe which nodes a node ``theta`` must, may, or cannot
influence, either a priori or given the part of the run realized by a
current time. Legal chains are the message chains that the lower bounds on
channels permit; they drive the certificates for knowing that one node has
not heard from another, and for knowing that a process is ignorant of an
event.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from .causality import CausalIndex, PreconditionError
from .epistemics import At, K, ModelChecker, Not, Occurred, Reach
from .network import ContextClass, Network, Node, node_order
from .runtime import RunSet


class VacuousCutError(PreconditionError):
    """No legal chain joins the two endpoints, so no set can be a cut of them."""


class ConsistencyError(RuntimeError):
    """A structural certificate disagrees with the epistemic evaluation."""


def _grid(net: Network, horizon: int) -> Iterable[Node]:
    return (Node(j, t) for t in range(horizon + 1) for j in range(net.processes))


def _sorted(nodes: Iterable[Node]) -> list[Node]:
    return sorted(nodes, key=node_order)


# ---------------------------------------------------------------------------
# a-priori cones


def box_aff(net: Network, theta: Node, horizon: int) -> frozenset[Node]:
    """Nodes every run of fip must causally connect to ``theta``: ``t' >= t + D(i,j)``."""
    i, t = theta
    return frozenset(nd for nd in _grid(net, horizon) if nd.time >= t + net.max_distance(i, nd.proc))


def box_unaff(net: Network, theta: Node, horizon: int) -> frozenset[Node]:
    """Nodes no run can connect to ``theta``: ``t' < t + d(i,j)``."""
    i, t = theta
    return frozenset(nd for nd in _grid(net, horizon) if nd.time < t + net.min_distance(i, nd.proc))


# ---------------------------------------------------------------------------
# cones relative to a current time


def fut_at(ix: CausalIndex, theta: Node, t_now: int) -> frozenset[Node]:
    return ix.fut_cone_at(Node(*theta), t_now)


def box_aff_at(ix: CausalIndex, theta: Node, t_now: int) -> frozenset[Node]:
    """Union of the a-priori affected cones of every node realized in
    ``theta``'s future by ``t_now``."""
    out: set[Node] = set()
    for nd in fut_at(ix, theta, t_now):
        out |= box_aff(ix.net, nd, ix.horizon)
    return frozenset(out)


def _earliest_contact(net: Network, realized: frozenset[Node], t_now: int) -> dict[int, int]:
    """Per process, the earliest time after ``t_now`` at which a message
    from a realized node could still arrive, assuming realized nodes send
    on every channel."""
    out: dict[int, int] = {}
    for k, tb in realized:
        if tb == t_now:
            out[k] = min(out.get(k, t_now + 1), t_now + 1)
        for c in net.out_channels(k):
            arrive = max(tb + c.min, t_now + 1)
            out[c.dst] = min(out.get(c.dst, arrive), arrive)
    return out


def diamond_aff_at(ix: CausalIndex, theta: Node, t_now: int) -> frozenset[Node]:
    """Nodes that may still end up in ``theta``'s future given the run up to ``t_now``.

    Up to ``t_now`` that is exactly the realized future. Later nodes are
    potentially affected when some process could still hear from a realized
    node and relay onwards at the lower-bound distances.
    """
    net = ix.net
    realized = fut_at(ix, theta, t_now)
    contact = _earliest_contact(net, realized, t_now)
    out = set(realized)
    for t in range(t_now + 1, ix.horizon + 1):
        for j in range(net.processes):
            if any(a + net.min_distance(m, j) <= t for m, a in contact.items()):
                out.add(Node(j, t))
    return frozenset(out)


def box_unaff_at(ix: CausalIndex, theta: Node, t_now: int) -> frozenset[Node]:
    return frozenset(_grid(ix.net, ix.horizon)) - diamond_aff_at(ix, theta, t_now)


def diamond_unaff_at(ix: CausalIndex, theta: Node, t_now: int) -> frozenset[Node]:
    return frozenset(_grid(ix.net, ix.horizon)) - box_aff_at(ix, theta, t_now)


@dataclass(frozen=True)
class ConeReport:
    origin: Node
    t_now: int
    fut_realized: frozenset[Node]
    box_aff: frozenset[Node]
    box_aff_at: frozenset[Node]
    diamond_aff_at: frozenset[Node]
    box_unaff: frozenset[Node]
    box_unaff_at: frozenset[Node]
    diamond_unaff_at: frozenset[Node]
    processes: int = 0
    horizon: int = 0

    def problems(self) -> list[str]:
        """Violated set identities (empty when consistent)."""
        grid = frozenset(Node(j, t) for t in range(self.horizon + 1) for j in range(self.processes))
        out = []
        if not self.box_aff <= self.box_aff_at <= self.diamond_aff_at:
            out.append("box_aff <= box_aff_at <= diamond_aff_at fails")
        if not self.box_unaff <= self.box_unaff_at:
            out.append("box_unaff <= box_unaff_at fails")
        if self.diamond_aff_at & self.box_unaff_at or self.diamond_aff_at | self.box_unaff_at != grid:
            out.append("diamond_aff_at and box_unaff_at do not partition the grid")
        if self.box_aff_at & self.diamond_unaff_at or self.box_aff_at | self.diamond_unaff_at != grid:
            out.append("box_aff_at and diamond_unaff_at do not partition the grid")
        return out

    def to_json(self) -> dict:
        def nodes(s):
            return [list(n) for n in _sorted(s)]

        return {
            "origin": list(self.origin),
            "t_now": self.t_now,
            "fut_realized": nodes(self.fut_realized),
            "box_aff": nodes(self.box_aff),
            "box_aff_at": nodes(self.box_aff_at),
            "diamond_aff_at": nodes(self.diamond_aff_at),
            "box_unaff": nodes(self.box_unaff),
            "box_unaff_at": nodes(self.box_unaff_at),
            "diamond_unaff_at": nodes(self.diamond_unaff_at),
        }

    def heat_grid(self) -> str:
        """``#`` necessarily affected, ``.`` necessarily unaffected, ``?`` undecided;
        realized future nodes are ``@``."""
        lines = ["    " + "".join(f"{t:>3}" for t in range(self.horizon + 1))]
        for j in range(self.processes):
            row = []
            for t in range(self.horizon + 1):
                nd = Node(j, t)
                if nd in self.fut_realized:
                    c = "@"
                elif nd in self.box_aff_at:
                    c = "#"
                elif nd in self.box_unaff_at:
                    c = "."
                else:
                    c = "?"
                row.append(f"{c:>3}")
            lines.append(f"{j:>3} " + "".join(row))
        return "\n".join(lines)


def cone_report(ix: CausalIndex, theta: Node, t_now: int) -> ConeReport:
    theta = Node(*theta)
    ix.vid(theta)
    if not 0 <= t_now <= ix.horizon:
        raise PreconditionError(f"current time {t_now} outside [0, {ix.horizon}]")
    net, T = ix.net, ix.horizon
    return ConeReport(
        theta, t_now, fut_at(ix, theta, t_now),
        box_aff(net, theta, T), box_aff_at(ix, theta, t_now), diamond_aff_at(ix, theta, t_now),
        box_unaff(net, theta, T), box_unaff_at(ix, theta, t_now), diamond_unaff_at(ix, theta, t_now),
        net.processes, T,
    )


# ---------------------------------------------------------------------------
# legal message chains


@dataclass(frozen=True)
class PotentialGraph:
    """Nodes in the time band ``[theta0.time, theta1.time]``; an edge is one
    legal step of a message chain."""

    net: Network
    theta0: Node
    theta1: Node
    succ: dict[Node, tuple[Node, ...]] = field(repr=False)

    @property
    def nodes(self) -> list[Node]:
        return _sorted(self.succ)

    def edges(self) -> list[tuple[Node, Node]]:
        return [(a, b) for a in self.nodes for b in self.succ[a]]

    def pred(self) -> dict[Node, list[Node]]:
        out: dict[Node, list[Node]] = {v: [] for v in self.succ}
        for a, bs in self.succ.items():
            for b in bs:
                out[b].append(a)
        return out

    def forward(self, start: Node, avoid: frozenset[Node] = frozenset()) -> set[Node]:
        return _bfs(start, self.succ, avoid)

    def backward(self, end: Node, avoid: frozenset[Node] = frozenset()) -> set[Node]:
        return _bfs(end, self.pred(), avoid)

    def on_path(self) -> set[Node]:
        """Nodes on some legal chain from ``theta0`` to ``theta1``."""
        if self.theta0 not in self.succ or self.theta1 not in self.succ:
            return set()
        return self.forward(self.theta0) & self.backward(self.theta1)

    def paths(self, limit: int = 100_000) -> list[tuple[Node, ...]]:
        """Every legal chain from ``theta0`` to ``theta1`` (small graphs only)."""
        if not self.on_path():
            return []
        keep = self.on_path()
        out: list[tuple[Node, ...]] = []

        def walk(prefix: list[Node]) -> None:
            if len(out) >= limit:
                raise PreconditionError(f"more than {limit} legal chains")
            v = prefix[-1]
            if v == self.theta1:
                out.append(tuple(prefix))
                return
            for w in self.succ[v]:
                if w in keep:
                    walk(prefix + [w])

        walk([self.theta0])
        return out


def _bfs(start: Node, adj: dict[Node, Iterable[Node]], avoid: frozenset[Node]) -> set[Node]:
    if start in avoid or start not in adj:
        return set()
    seen = {start}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w not in seen and w not in avoid:
                seen.add(w)
                queue.append(w)
    return seen


def potential_graph(net: Network, theta0: Node, theta1: Node) -> PotentialGraph:
    theta0, theta1 = Node(*theta0), Node(*theta1)
    net.check_proc(theta0.proc)
    net.check_proc(theta1.proc)
    t0, t1 = theta0.time, theta1.time
    succ: dict[Node, tuple[Node, ...]] = {}
    for t in range(t0, max(t0, t1) + 1):
        for i in range(net.processes):
            out = [Node(i, s) for s in range(t + 1, t1 + 1)]
            for c in net.out_channels(i):
                out.extend(Node(c.dst, s) for s in range(t + int(c.min), t1 + 1))
            succ[Node(i, t)] = tuple(_sorted(set(out)))
    return PotentialGraph(net, theta0, theta1, succ)


def legal_chain_exists(net: Network, theta0: Node, theta1: Node) -> bool:
    return bool(potential_graph(net, theta0, theta1).on_path())


def is_legal_chain(net: Network, chain: Iterable[Node]) -> bool:
    chain = [Node(*c) for c in chain]
    for a, b in zip(chain, chain[1:]):
        if b.time <= a.time:
            return False
        if a.proc != b.proc:
            c = net.channel(a.proc, b.proc)
            if c is None or b.time - a.time < c.min:
                return False
    return True


# ---------------------------------------------------------------------------
# cuts and fronts


def cut_status(net: Network, theta0: Node, theta1: Node, cut: Iterable[Node]) -> tuple[bool, bool]:
    """``(is_cut, vacuous)``; ``vacuous`` means there is no legal chain at all."""
    g = potential_graph(net, theta0, theta1)
    on = g.on_path()
    cut = frozenset(Node(*c) for c in cut)
    if not on:
        return True, True
    if not cut <= on:
        return False, False
    return not g.forward(g.theta0, avoid=cut) & {g.theta1}, False


def is_cut(net: Network, theta0: Node, theta1: Node, cut: Iterable[Node]) -> bool:
    """Every node of ``cut`` lies on a legal chain and removing ``cut``
    separates ``theta0`` from ``theta1``."""
    ok, vacuous = cut_status(net, theta0, theta1, cut)
    if vacuous:
        raise VacuousCutError(f"no legal chain from {tuple(theta0)} to {tuple(theta1)}")
    return ok


def is_clean(ix: CausalIndex, theta0: Node, cut: Iterable[Node]) -> bool:
    """``theta0`` happened-before none of the nodes in ``cut``."""
    return not any(ix.lamport_reach(Node(*theta0), Node(*c)) for c in cut)


def causal_front(ix: CausalIndex, net: Network | None, theta2: Node, theta0: Node,
                 theta1: Node) -> frozenset[Node]:
    """Latest contact points of ``theta2``'s past with the legal chains
    from ``theta0`` to ``theta1``.

    A node on such a chain is in the front when it lies in ``theta2``'s
    past and some legal chain from it to ``theta1`` leaves that past right
    after it.
    """
    net = net or ix.net
    g = potential_graph(net, theta0, theta1)
    on = g.on_path()
    if not on:
        return frozenset()
    past = frozenset(ix.nodes(ix.past_mask(Node(*theta2), "lamport")))
    outside = frozenset(g.succ) - past
    # nodes outside the past that reach theta1 without re-entering it
    escape = g.backward(g.theta1, avoid=past) if g.theta1 in outside else set()
    front = set()
    for phi in on & past:
        if phi == g.theta1 or any(w in escape for w in g.succ[phi]):
            front.add(phi)
    return frozenset(front)


@dataclass(frozen=True)
class FrontCertificate:
    theta0: Node
    theta1: Node
    theta2: Node
    front: frozenset[Node]
    is_cut: bool
    is_clean: bool
    vacuous: bool
    epistemic: bool | None = None

    @property
    def verdict(self) -> bool:
        return self.is_cut and self.is_clean

    @property
    def agrees(self) -> bool | None:
        return None if self.epistemic is None else self.epistemic == self.verdict

    def to_json(self) -> dict:
        return {
            "theta0": list(self.theta0),
            "theta1": list(self.theta1),
            "theta2": list(self.theta2),
            "front": [list(n) for n in _sorted(self.front)],
            "is_cut": self.is_cut,
            "is_clean": self.is_clean,
            "vacuous": self.vacuous,
            "verdict": self.verdict,
            "epistemic": self.epistemic,
        }


def _require_fip_min(runset: RunSet) -> None:
    if runset.scenario.protocol.name != "fip":
        raise PreconditionError("knowledge of ignorance is characterized for the full-information protocol")
    if runset.network.classify() not in (ContextClass.MIN_ONLY, ContextClass.ASYNC_DELIVERY):
        raise PreconditionError("knowledge of ignorance is characterized for channels without upper bounds")


def front_certificate(ix: CausalIndex, net: Network | None, theta2: Node, theta0: Node,
                      theta1: Node) -> FrontCertificate:
    net = net or ix.net
    theta0, theta1, theta2 = Node(*theta0), Node(*theta1), Node(*theta2)
    front = causal_front(ix, net, theta2, theta0, theta1)
    cut, vacuous = cut_status(net, theta0, theta1, front)
    return FrontCertificate(theta0, theta1, theta2, front, cut, is_clean(ix, theta0, front), vacuous)


def knows_not_reach(ix: CausalIndex, net: Network | None, runset: RunSet, theta2: Node, theta0: Node,
                    theta1: Node, mc: ModelChecker | None = None, strict: bool = True) -> FrontCertificate:
    """Structural certificate for ``theta2`` knowing that ``theta0`` did not
    happen-before ``theta1``, cross-checked against the model checker."""
    _require_fip_min(runset)
    cert = front_certificate(ix, net, theta2, theta0, theta1)
    mc = mc or ModelChecker(runset)
    f = At(cert.theta2.time, K(cert.theta2.proc, Not(Reach(cert.theta0, cert.theta1))))
    epi = mc.check(ix.run.index, cert.theta2.time, f)
    cert = FrontCertificate(cert.theta0, cert.theta1, cert.theta2, cert.front, cert.is_cut,
                            cert.is_clean, cert.vacuous, epi)
    if strict and not cert.agrees:
        raise ConsistencyError(f"front verdict {cert.verdict} but epistemic value {epi} "
                               f"for {cert.to_json()} in run {ix.run.index}")
    return cert


@dataclass(frozen=True)
class IgnoranceReport:
    theta2: Node
    theta1: Node
    event: tuple
    t_prime: int  # latest time by which theta2 knows the event has not occurred; -1 if none
    certificate: FrontCertificate | None  # None when theta0 falls past the horizon
    direct: bool

    @property
    def theta0(self) -> Node:
        return Node(self.event[1], self.t_prime + 1)

    @property
    def verdict(self) -> bool:
        return True if self.certificate is None else self.certificate.verdict

    @property
    def agrees(self) -> bool:
        return self.verdict == self.direct

    def to_json(self) -> dict:
        return {
            "theta2": list(self.theta2),
            "theta1": list(self.theta1),
            "event": list(self.event),
            "t_prime": self.t_prime,
            "theta0": list(self.theta0),
            "certificate": None if self.certificate is None else self.certificate.to_json(),
            "verdict": self.verdict,
            "direct": self.direct,
        }


def knows_ignorance(ix: CausalIndex, net: Network | None, runset: RunSet, theta2: Node, i0: int,
                    e0: tuple, theta1: Node, t1: int | None = None, mc: ModelChecker | None = None,
                    strict: bool = True) -> IgnoranceReport:
    """Does ``theta2`` know that ``theta1`` does not know ``e0`` occurred by ``t1``?

    ``e0`` is an event of process ``i0`` (an input key). The answer comes
    from the causal front of ``(i0, t'+1)`` and ``theta1``, where ``t'`` is
    the latest time by which ``theta2`` knows ``e0`` has not occurred.
    """
    _require_fip_min(runset)
    theta1, theta2 = Node(*theta1), Node(*theta2)
    t1 = theta1.time if t1 is None else t1
    if e0[1] != i0:
        raise PreconditionError(f"event {e0} is not an event of process {i0}")
    mc = mc or ModelChecker(runset)
    r = ix.run.index
    i2, t2 = theta2

    def knows_not_by(t: int) -> bool:
        return mc.check(r, t2, At(t2, K(i2, Not(At(t, Occurred(e0))))))

    t_prime = -1
    while t_prime + 1 <= ix.horizon and knows_not_by(t_prime + 1):
        t_prime += 1
    cert = None
    if t_prime < ix.horizon:
        cert = knows_not_reach(ix, net, runset, theta2, Node(i0, t_prime + 1), theta1, mc, strict)
    direct = mc.check(r, t2, At(t2, K(i2, Not(At(t1, K(theta1.proc, At(t1, Occurred(e0))))))))
    report = IgnoranceReport(theta2, theta1, tuple(e0), t_prime, cert, direct)
    if strict and not report.agrees:
        raise ConsistencyError(f"front verdict {report.verdict} but direct value {direct}: {report.to_json()}")
    return report


def causal_tr(ix: CausalIndex, mc: ModelChecker, theta0: Node, theta1: Node, theta2: Node) -> tuple[bool, bool]:
    """Both sides of: ``theta2`` knows ``theta0`` happened-before ``theta1``
    iff ``theta0 -> theta1 -> theta2`` in the run."""
    theta0, theta1, theta2 = Node(*theta0), Node(*theta1), Node(*theta2)
    known = mc.check(ix.run.index, theta2.time, At(theta2.time, K(theta2.proc, Reach(theta0, theta1))))
    chain = ix.lamport_reach(theta0, theta1) and ix.lamport_reach(theta1, theta2)
    return known, chain


def contact_chain(ix: CausalIndex, theta0: Node, theta1: Node, theta2: Node) -> bool:
    """``theta0 -> (i1, t) -> theta2`` for some ``t <= t1``.

    This is the chain condition that matches knowledge of ``theta0 -> theta1``
    at ``theta2``: the local edge from ``(i1, t)`` to ``theta1`` is certain,
    so ``theta2`` need not have heard from ``theta1`` itself.
    """
    theta0, theta1, theta2 = Node(*theta0), Node(*theta1), Node(*theta2)
    return any(ix.lamport_reach(theta0, Node(theta1.proc, t)) and ix.lamport_reach(Node(theta1.proc, t), theta2)
               for t in range(theta1.time + 1))
