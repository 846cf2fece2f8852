"""Per-run causal index: happened-before, syncausality, cones and bridges.

Nodes of the grid ``proc x [0, horizon]`` are numbered ``time * n + proc`` and
node sets are Python ints used as bitsets. Every edge strictly increases time,
so reachability closes in one backwards sweep over the rounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Iterator

from .network import INF, Network, Node, node_order
from .runtime import RECV, SEND, NDItem, Run, is_nd_event


class GridError(ValueError):
    """A node lies off the run's process-time grid."""


class PreconditionError(ValueError):
    """An operation's precondition does not hold."""


def iter_bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


@lru_cache(maxsize=64)
def guarantee_tables(net: Network, horizon: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Bitsets ``into[v] = {u : u -> v}`` and ``out[u] = {v : u -> v}`` for the
    bound guarantee on the grid."""
    n = net.processes
    size = n * (horizon + 1)
    into = [0] * size
    out = [0] * size
    for u in range(size):
        tu, i = divmod(u, n)
        for j in range(n):
            d = net.max_dist[i, j]
            if d == INF:
                continue
            for tv in range(tu + int(d), horizon + 1):
                v = tv * n + j
                into[v] |= 1 << u
                out[u] |= 1 << v
    return tuple(into), tuple(out)


@dataclass(frozen=True)
class Edges:
    local: tuple[tuple[Node, Node], ...]
    message: tuple[tuple[Node, Node], ...]
    timeout: tuple[tuple[Node, Node], ...]


def _closure(size: int, n: int, succ: list[list[int]]) -> tuple[list[int], list[int]]:
    fwd = [0] * size
    for v in range(size - 1, -1, -1):
        mask = 1 << v
        for w in succ[v]:
            mask |= fwd[w]
        fwd[v] = mask
    bwd = [0] * size
    for v in range(size):
        for w in iter_bits(fwd[v]):
            bwd[w] |= 1 << v
    return fwd, bwd


@dataclass
class CausalIndex:
    """Reachability for happened-before and syncausality over one run."""

    run: Run
    net: Network
    horizon: int
    edges: Edges
    lam_fwd: list[int]
    lam_bwd: list[int]
    syn_fwd: list[int]
    syn_bwd: list[int]
    nd: dict[Node, frozenset] = field(default_factory=dict)

    # ---- grid helpers -----------------------------------------------------

    @property
    def n(self) -> int:
        return self.net.processes

    def vid(self, node: Node) -> int:
        proc, time = node
        if not (0 <= proc < self.n and 0 <= time <= self.horizon):
            raise GridError(f"node {tuple(node)} is off the grid ({self.n} processes, horizon {self.horizon})")
        return time * self.n + proc

    def node(self, v: int) -> Node:
        t, i = divmod(v, self.n)
        return Node(i, t)

    def nodes(self, mask: int) -> list[Node]:
        return sorted((self.node(v) for v in iter_bits(mask)), key=node_order)

    def mask(self, nodes: Iterable[Node]) -> int:
        m = 0
        for nd in nodes:
            m |= 1 << self.vid(nd)
        return m

    @property
    def grid_mask(self) -> int:
        return (1 << (self.n * (self.horizon + 1))) - 1

    def band_mask(self, t0: int, t1: int) -> int:
        """Nodes with ``t0 <= time <= t1``."""
        t0 = max(t0, 0)
        t1 = min(t1, self.horizon)
        if t1 < t0:
            return 0
        width = self.n
        return ((1 << ((t1 - t0 + 1) * width)) - 1) << (t0 * width)

    def guar_into(self, node: Node) -> int:
        return guarantee_tables(self.net, self.horizon)[0][self.vid(node)]

    def guar_from(self, node: Node) -> int:
        return guarantee_tables(self.net, self.horizon)[1][self.vid(node)]

    # ---- relations --------------------------------------------------------

    def lamport_reach(self, a: Node, b: Node) -> bool:
        return bool(self.lam_fwd[self.vid(a)] >> self.vid(b) & 1)

    def syncausal_reach(self, a: Node, b: Node) -> bool:
        return bool(self.syn_fwd[self.vid(a)] >> self.vid(b) & 1)

    def guarantee(self, a: Node, b: Node) -> bool:
        self.vid(a)
        self.vid(b)
        return self.net.bound_guarantee(a, b)

    # ---- cones ------------------------------------------------------------

    def nd_at(self, node: Node) -> frozenset:
        return self.nd.get(Node(*node), frozenset())

    def past_mask(self, theta: Node, relation: str = "syncausal") -> int:
        table = self.syn_bwd if relation == "syncausal" else self.lam_bwd
        return table[self.vid(theta)]

    def fut_mask(self, theta: Node, relation: str = "syncausal") -> int:
        table = self.syn_fwd if relation == "syncausal" else self.lam_fwd
        return table[self.vid(theta)]

    def past_cone(self, theta: Node, relation: str = "syncausal") -> frozenset:
        """``{(psi, nd(psi)) : psi ~> theta}``."""
        return frozenset((nd, self.nd_at(nd)) for nd in self.nodes(self.past_mask(theta, relation)))

    def fut_cone(self, theta: Node, relation: str = "syncausal") -> frozenset:
        return frozenset((nd, self.nd_at(nd)) for nd in self.nodes(self.fut_mask(theta, relation)))

    def fut_cone_at(self, theta: Node, t_now: int, relation: str = "lamport") -> frozenset[Node]:
        """Realized future of ``theta`` up to ``t_now`` (happened-before by default)."""
        mask = self.fut_mask(theta, relation) & self.band_mask(0, t_now)
        return frozenset(self.nodes(mask))

    def nd_past(self, theta: Node, relation: str = "syncausal") -> frozenset:
        return frozenset(
            (nd, self.nd_at(nd)) for nd in self.nodes(self.past_mask(theta, relation)) if self.nd_at(nd)
        )

    # ---- bridges ----------------------------------------------------------

    def bridges_mask(self, a: Node, b: Node) -> int:
        fa = self.syn_fwd[self.vid(a)]
        cand = fa & self.guar_into(b)
        out = 0
        for v in iter_bits(cand):
            if fa & self.guar_into(self.node(v)) == 1 << v:
                out |= 1 << v
        return out

    def bridges(self, a: Node, b: Node) -> list[Node]:
        """All ``beta`` with ``a ~> beta -> b`` and no other ``beta'`` with
        ``a ~> beta' -> beta``; sorted by (time, proc)."""
        if not self.syncausal_reach(a, b):
            raise PreconditionError(f"{tuple(a)} does not syncausally reach {tuple(b)}")
        return self.nodes(self.bridges_mask(a, b))

    def bridges_node(self, a: Node, beta: Node) -> bool:
        fa = self.syn_fwd[self.vid(a)]
        v = self.vid(beta)
        return bool(fa >> v & 1) and fa & self.guar_into(beta) == 1 << v

    # ---- output -----------------------------------------------------------

    def dump(self) -> dict:
        def pairs(es):
            return [[list(a), list(b)] for a, b in es]

        return {
            "processes": self.n,
            "horizon": self.horizon,
            "edges": {
                "local": pairs(self.edges.local),
                "message": pairs(self.edges.message),
                "timeout": pairs(self.edges.timeout),
            },
            "nd": [
                {"node": list(nd), "items": sorted(repr(x) for x in items)}
                for nd, items in sorted(self.nd.items(), key=lambda kv: node_order(kv[0]))
            ],
        }

    def diagram(self) -> str:
        """Text space-time diagram: rows are processes, columns rounds."""
        width = self.horizon + 1
        lines = ["      " + "".join(f"{t:>4}" for t in range(width))]
        for i in range(self.n):
            cells = []
            for t in range(width):
                mark = "o"
                if self.nd_at(Node(i, t)) - {x for x in self.nd_at(Node(i, t)) if x.kind == "init"}:
                    mark = "*"
                cells.append(f"{mark:>4}")
            lines.append(f"{self.net.name(i):>5} " + "".join(cells))
        for kind, es in (("msg", self.edges.message), ("timeout", self.edges.timeout)):
            for a, b in es:
                lines.append(f"  {kind:<7} {self.net.name(a.proc)}@{a.time} -> {self.net.name(b.proc)}@{b.time}")
        return "\n".join(lines)


def build_edges(run: Run, net: Network | None = None) -> Edges:
    net = net or run.network
    T, n = run.horizon, net.processes
    local = tuple((Node(i, t), Node(i, t + 1)) for t in range(T) for i in range(n))
    sends = {e.key: e for e in run.events if e.kind == SEND}
    message = tuple(
        sorted(
            ((Node(sends[e.link].proc, sends[e.link].time), Node(e.proc, e.time))
             for e in run.events if e.kind == RECV),
            key=lambda ab: (node_order(ab[0]), node_order(ab[1])),
        )
    )
    sent_on = {(e.proc, e.peer, e.time) for e in sends.values()}
    timeout = []
    for ch in net.channels:
        if not ch.bounded:
            continue
        for s in range(T + 1):
            if s + ch.max <= T and (ch.src, ch.dst, s) not in sent_on:
                timeout.append((Node(ch.src, s), Node(ch.dst, s + int(ch.max))))
    timeout.sort(key=lambda ab: (node_order(ab[0]), node_order(ab[1])))
    return Edges(local, message, tuple(timeout))


def _nd_map(run: Run) -> dict[Node, frozenset]:
    items: dict[Node, set] = {}
    for proc, value in enumerate(run.initial):
        node = Node(proc, 0)
        items.setdefault(node, set()).add(NDItem("init", node, value))
    for e in run.events:
        if is_nd_event(run, e):
            ident = e.key if e.kind == RECV else e.payload
            items.setdefault(e.node, set()).add(NDItem(e.kind, e.node, ident))
    return {k: frozenset(v) for k, v in items.items()}


def build_index(run: Run, net: Network | None = None, _reach_cache: dict | None = None) -> CausalIndex:
    net = net or run.network
    T, n = run.horizon, net.processes
    edges = build_edges(run, net)
    key = (edges.message, edges.timeout)
    cached = _reach_cache.get(key) if _reach_cache is not None else None
    if cached is None:
        size = n * (T + 1)
        lam_succ: list[list[int]] = [[] for _ in range(size)]
        for a, b in edges.local + edges.message:
            lam_succ[a.time * n + a.proc].append(b.time * n + b.proc)
        syn_succ = [list(s) for s in lam_succ]
        for a, b in edges.timeout:
            syn_succ[a.time * n + a.proc].append(b.time * n + b.proc)
        lam = _closure(size, n, lam_succ)
        syn = lam if not edges.timeout else _closure(size, n, syn_succ)
        cached = (lam, syn)
        if _reach_cache is not None:
            _reach_cache[key] = cached
    (lam_fwd, lam_bwd), (syn_fwd, syn_bwd) = cached
    return CausalIndex(run, net, T, edges, lam_fwd, lam_bwd, syn_fwd, syn_bwd, _nd_map(run))


class IndexCache:
    """Builds causal indexes for the runs of a run set, sharing reachability
    tables between runs with identical communication patterns."""

    def __init__(self) -> None:
        self._reach: dict = {}
        self._by_run: dict[int, CausalIndex] = {}

    def get(self, run: Run) -> CausalIndex:
        ix = self._by_run.get(id(run))
        if ix is None:
            ix = build_index(run, _reach_cache=self._reach)
            self._by_run[id(run)] = ix
        return ix


def lamport_reach(ix: CausalIndex, a: Node, b: Node) -> bool:
    return ix.lamport_reach(a, b)


def syncausal_reach(ix: CausalIndex, a: Node, b: Node) -> bool:
    return ix.syncausal_reach(a, b)


def past_cone(ix: CausalIndex, theta: Node) -> frozenset:
    return ix.past_cone(theta)


def fut_cone(ix: CausalIndex, theta: Node) -> frozenset:
    return ix.fut_cone(theta)


def fut_cone_at(ix: CausalIndex, theta: Node, t_now: int) -> frozenset[Node]:
    return ix.fut_cone_at(theta, t_now)


def nd_past(ix: CausalIndex, theta: Node) -> frozenset:
    return ix.nd_past(theta)


def bridges(ix: CausalIndex, net: Network, a: Node, b: Node) -> list[Node]:
    return ix.bridges(a, b)
