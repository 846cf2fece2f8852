"""Detectors and certificates for centipedes, centibrooms and their relatives.

All searches run over bitset frontiers on a :class:`CausalIndex`. A frontier
step keeps the nodes syncausally reachable from the previous frontier that
also carry a bound guarantee to the current leg target(s).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .causality import CausalIndex, PreconditionError, iter_bits
from .network import Network, Node, node_order


@dataclass(frozen=True)
class CentipedeWitness:
    body: tuple[Node, ...]
    legs: tuple[Node, ...]  # (i_h, t') for h = 0..k
    t: int
    t_end: int

    def to_json(self) -> dict:
        return {"exists": True, "body": [list(b) for b in self.body],
                "legs": [list(l) for l in self.legs], "interval": [self.t, self.t_end]}


@dataclass(frozen=True)
class CentibroomWitness:
    node: Node
    origin: Node
    group: tuple[int, ...]
    deadline: int

    def to_json(self) -> dict:
        return {"exists": True, "node": list(self.node), "origin": list(self.origin),
                "group": list(self.group), "deadline": self.deadline}


@dataclass(frozen=True)
class GenCentipedeWitness:
    body: tuple[Node, ...]
    groups: tuple[tuple[int, ...], ...]
    t: int
    t_end: int

    def to_json(self) -> dict:
        return {"exists": True, "body": [list(b) for b in self.body],
                "groups": [list(g) for g in self.groups], "interval": [self.t, self.t_end]}


def _reach_of(ix: CausalIndex, mask: int) -> int:
    out = 0
    for v in iter_bits(mask):
        out |= ix.syn_fwd[v]
    return out


def _legs_mask(ix: CausalIndex, group: Sequence[int], t_end: int) -> int:
    mask = ix.grid_mask
    for g in group:
        mask &= ix.guar_into(Node(g, t_end))
    return mask


def _first(ix: CausalIndex, mask: int) -> Node:
    return min((ix.node(v) for v in iter_bits(mask)), key=node_order)


def _frontiers(ix: CausalIndex, start: int, groups: Sequence[Sequence[int]], t_end: int) -> list[int]:
    fronts = [start]
    for group in groups:
        fronts.append(_reach_of(ix, fronts[-1]) & _legs_mask(ix, group, t_end))
        if not fronts[-1]:
            break
    return fronts


def _backtrack(ix: CausalIndex, fronts: list[int], last: int) -> list[int]:
    """Pick one node per frontier, ending at node id ``last``, going backwards."""
    chain = [last]
    for h in range(len(fronts) - 2, -1, -1):
        preds = fronts[h] & ix.syn_bwd[chain[-1]]
        chain.append(min(iter_bits(preds), key=lambda v: node_order(ix.node(v))))
    return chain[::-1]


def _normalize(ix: CausalIndex, chain: list[Node], upto: int) -> list[Node]:
    """Replace ``chain[1:upto]`` by centinodes: each node becomes the first
    bridge between its (already normalized) predecessor and itself."""
    out = [chain[0]]
    for h in range(1, upto):
        out.append(ix.bridges(out[-1], chain[h])[0])
    return out + list(chain[upto:])


def find_centipede(ix: CausalIndex, net: Network | None, seq: Sequence[int], t: int,
                   t_end: int) -> CentipedeWitness | None:
    """A centipede for ``seq = <i_0..i_k>`` in the interval ``t..t_end``.

    The first and last body nodes are ``(i_0, t)`` and ``(i_k, t_end)``; the
    interior nodes are normalized to centinodes.
    """
    if not 0 <= t <= t_end <= ix.horizon:
        raise PreconditionError(f"need 0 <= t <= t' <= horizon, got t={t}, t'={t_end}")
    seq = list(seq)
    origin = Node(seq[0], t)
    legs = tuple(Node(i, t_end) for i in seq)
    if len(seq) == 1:
        return CentipedeWitness((origin,), legs, t, t_end)
    k = len(seq) - 1
    fronts = _frontiers(ix, 1 << ix.vid(origin), [[i] for i in seq[1:k]], t_end)
    if len(fronts) < k or not fronts[-1]:
        return None
    target = ix.vid(Node(seq[k], t_end))
    hits = fronts[-1] & ix.syn_bwd[target]
    if not hits:
        return None
    last = min(iter_bits(hits), key=lambda v: node_order(ix.node(v)))
    chain = [ix.node(v) for v in _backtrack(ix, fronts, last)] + [Node(seq[k], t_end)]
    body = _normalize(ix, chain, k)
    return CentipedeWitness(tuple(body), legs, t, t_end)


def centipede_exists_table(ix: CausalIndex, origin: Node, procs: Sequence[int], depth: int,
                           t_end: int) -> dict[tuple[int, ...], bool]:
    """Existence of centipedes ``<origin.proc, s...>`` for every sequence ``s``
    over ``procs`` of length 1..depth, sharing frontiers along a prefix trie."""
    out: dict[tuple[int, ...], bool] = {}
    start = 1 << ix.vid(origin)
    reach_cache: dict[int, int] = {}

    def reach(mask: int) -> int:
        r = reach_cache.get(mask)
        if r is None:
            r = _reach_of(ix, mask)
            reach_cache[mask] = r
        return r

    def walk(prefix: tuple[int, ...], front: int) -> None:
        if not front:
            for rest in _all_extensions(procs, depth - len(prefix)):
                out[prefix + rest] = False
            return
        r = reach(front)
        for p in procs:
            target = ix.vid(Node(p, t_end))
            out[prefix + (p,)] = bool(r >> target & 1)
            if len(prefix) + 1 < depth:
                walk(prefix + (p,), r & ix.guar_into(Node(p, t_end)))

    walk((), start)
    return out


def _all_extensions(procs: Sequence[int], max_len: int):
    frontier: list[tuple[int, ...]] = [()]
    for _ in range(max_len):
        frontier = [f + (p,) for f in frontier for p in procs]
        yield from frontier


def broom_mask(ix: CausalIndex, origin: Node, group: Sequence[int], t_end: int) -> int:
    return ix.syn_fwd[ix.vid(origin)] & _legs_mask(ix, group, t_end)


def find_centibroom(ix: CausalIndex, net: Network | None, i0: int, t: int, group: Sequence[int],
                    t_end: int) -> CentibroomWitness | None:
    """Earliest node ``theta`` with ``(i0,t) ~> theta`` and ``theta -> (g,t')`` for all g."""
    if not 0 <= t <= t_end <= ix.horizon:
        raise PreconditionError(f"need 0 <= t <= t' <= horizon, got t={t}, t'={t_end}")
    origin = Node(i0, t)
    mask = broom_mask(ix, origin, group, t_end)
    if not mask:
        return None
    return CentibroomWitness(_first(ix, mask), origin, tuple(group), t_end)


def find_bridging_centibroom(ix: CausalIndex, net: Network | None, i0: int, t: int,
                             group: Sequence[int], t_end: int) -> CentibroomWitness | None:
    """A centibroom that also bridges ``(i0,t)`` and every ``(g,t')``."""
    if find_centibroom(ix, net, i0, t, group, t_end) is None:
        return None
    origin = Node(i0, t)
    mask = broom_mask(ix, origin, group, t_end)
    for v in sorted(iter_bits(mask), key=lambda v: node_order(ix.node(v))):
        if ix.bridges_node(origin, ix.node(v)):
            return CentibroomWitness(ix.node(v), origin, tuple(group), t_end)
    return None


def earliest_broom_deadline(ix: CausalIndex, i0: int, t: int, group: Sequence[int]) -> int | None:
    for t_end in range(t, ix.horizon + 1):
        if broom_mask(ix, Node(i0, t), group, t_end):
            return t_end
    return None


def find_generalized_centipede(ix: CausalIndex, net: Network | None, theta0: Node,
                               groups: Sequence[Sequence[int]], t: int | None = None,
                               t_end: int | None = None) -> GenCentipedeWitness | None:
    """Body ``theta_0 ~> ... ~> theta_k`` with ``theta_h -> (i, t')`` for all
    ``i`` in ``groups[h-1]``; interior nodes normalized to bridges."""
    theta0 = Node(*theta0)
    t = theta0.time if t is None else t
    t_end = ix.horizon if t_end is None else t_end
    if not 0 <= t <= t_end <= ix.horizon:
        raise PreconditionError(f"need 0 <= t <= t' <= horizon, got t={t}, t'={t_end}")
    groups = [tuple(g) for g in groups]
    if not groups:
        return GenCentipedeWitness((theta0,), (), t, t_end)
    fronts = _frontiers(ix, 1 << ix.vid(theta0), groups, t_end)
    if len(fronts) < len(groups) + 1 or not fronts[-1]:
        return None
    last = min(iter_bits(fronts[-1]), key=lambda v: node_order(ix.node(v)))
    chain = [ix.node(v) for v in _backtrack(ix, fronts, last)]
    body = _normalize(ix, chain, len(chain))
    return GenCentipedeWitness(tuple(body), tuple(groups), t, t_end)


def centibroom_past(ix: CausalIndex, net: Network | None, t: int, group: Sequence[int]) -> frozenset:
    """Entries of the groups' joint ND past at ``t`` that have a centibroom to
    the whole group by ``t``."""
    if not group:
        raise PreconditionError("group must be nonempty")
    union: dict[Node, frozenset] = {}
    for g in group:
        for node, items in ix.nd_past(Node(g, t)):
            union[node] = items
    legs = _legs_mask(ix, group, t)
    return frozenset(
        (node, items) for node, items in union.items() if ix.syn_fwd[ix.vid(node)] & legs
    )


def nd_past_intersection(ix: CausalIndex, t: int, group: Sequence[int]) -> frozenset:
    sets = [ix.nd_past(Node(g, t)) for g in group]
    out = sets[0]
    for s in sets[1:]:
        out = out & s
    return out


def nd_past_union(ix: CausalIndex, t: int, group: Sequence[int]) -> frozenset:
    out: frozenset = frozenset()
    for g in group:
        out = out | ix.nd_past(Node(g, t))
    return out


# ---- independent re-checks -------------------------------------------------


def validate_centipede(ix: CausalIndex, w: CentipedeWitness, seq: Sequence[int]) -> list[str]:
    """Re-check a centipede witness against the raw relations."""
    problems = []
    body = w.body
    if len(body) != len(seq):
        problems.append("body length differs from sequence length")
        return problems
    if body[0] != Node(seq[0], w.t):
        problems.append("first body node is not (i_0, t)")
    if len(seq) > 1 and body[-1] != Node(seq[-1], w.t_end):
        problems.append("last body node is not (i_k, t')")
    for h in range(len(body) - 1):
        if not ix.syncausal_reach(body[h], body[h + 1]):
            problems.append(f"body[{h}] does not reach body[{h + 1}]")
    for h in range(1, len(body) - 1):
        if not ix.guarantee(body[h], Node(seq[h], w.t_end)):
            problems.append(f"body[{h}] has no guarantee to its leg")
    return problems


def brute_force_centipede(ix: CausalIndex, seq: Sequence[int], t: int, t_end: int) -> bool:
    """Search all node sequences directly (small grids only)."""
    k = len(seq) - 1
    if k == 0:
        return True
    grid = [ix.node(v) for v in range(ix.n * (ix.horizon + 1))]

    def extend(prev: Node, h: int) -> bool:
        if h == k:
            return ix.syncausal_reach(prev, Node(seq[k], t_end))
        for cand in grid:
            if ix.syncausal_reach(prev, cand) and ix.guarantee(cand, Node(seq[h], t_end)):
                if extend(cand, h + 1):
                    return True
        return False

    return extend(Node(seq[0], t), 1)


def is_centinode_chain(ix: CausalIndex, body: Sequence[Node], seq: Sequence[int], t_end: int) -> bool:
    """Interior nodes each bridge their predecessor and their leg."""
    for h in range(1, len(body) - 1):
        leg = Node(seq[h], t_end)
        if not (ix.bridges_node(body[h - 1], body[h]) and ix.guarantee(body[h], leg)):
            return False
    return True
