"""Bounded-delay networks: channels, distance tables and bound guarantees."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

INF = math.inf


class NetworkError(ValueError):
    """Raised for malformed networks or invalid process ids."""


class Node(NamedTuple):
    """A process-time node ``(proc, time)``."""

    proc: int
    time: int

    def __str__(self) -> str:
        return f"({self.proc},{self.time})"


def node_order(node: Node) -> tuple[int, int]:
    """Sort key used for deterministic witnesses: by time, then process."""
    return (node.time, node.proc)


def _as_duration(value: float) -> int | float:
    return INF if value == INF else int(value)


@dataclass(frozen=True)
class ChannelSpec:
    src: int
    dst: int
    min: int = 1
    max: int | float = INF

    def __post_init__(self) -> None:
        if self.src == self.dst:
            raise NetworkError(f"self-channel on process {self.src}")
        if self.src < 0 or self.dst < 0:
            raise NetworkError(f"negative process id in channel {self.src}->{self.dst}")
        if not isinstance(self.min, int) or self.min < 1:
            raise NetworkError(f"channel {self.src}->{self.dst}: min must be an integer >= 1")
        if self.max != INF and (not isinstance(self.max, int) or self.max < self.min):
            raise NetworkError(f"channel {self.src}->{self.dst}: max must be >= min or infinite")

    @property
    def bounded(self) -> bool:
        return self.max != INF

    def to_json(self) -> dict:
        return {
            "src": self.src,
            "dst": self.dst,
            "min": self.min,
            "max": None if self.max == INF else self.max,
        }


class ContextClass(enum.Enum):
    FIXED = "Fixed"
    MAX_ONLY = "MaxOnly"
    ASYNC_DELIVERY = "AsyncDelivery"
    MIN_ONLY = "MinOnly"
    GENERAL_BOUNDED = "GeneralBounded"


def _distance_table(n: int, channels: Sequence[ChannelSpec], weight: str) -> np.ndarray:
    if n == 0:
        return np.zeros((0, 0))
    rows, cols, vals = [], [], []
    for ch in channels:
        w = getattr(ch, weight)
        if w == INF:
            continue
        rows.append(ch.src)
        cols.append(ch.dst)
        vals.append(float(w))
    graph = csr_matrix((vals, (rows, cols)), shape=(n, n))
    return shortest_path(graph, method="D", directed=True)


@dataclass(frozen=True)
class Network:
    """Process count plus at most one channel per ordered pair.

    Distance tables are computed once at construction. ``max_dist`` ignores
    channels with infinite max; ``min_dist`` uses every channel.
    """

    processes: int
    channels: tuple[ChannelSpec, ...] = ()
    labels: tuple[str, ...] | None = None
    _by_pair: dict = field(init=False, repr=False, compare=False, hash=False)
    max_dist: np.ndarray = field(init=False, repr=False, compare=False, hash=False)
    min_dist: np.ndarray = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        if self.processes < 0:
            raise NetworkError("process count must be non-negative")
        chans = tuple(sorted(self.channels, key=lambda c: (c.src, c.dst)))
        object.__setattr__(self, "channels", chans)
        by_pair: dict[tuple[int, int], ChannelSpec] = {}
        for ch in chans:
            if ch.src >= self.processes or ch.dst >= self.processes:
                raise NetworkError(f"channel {ch.src}->{ch.dst} references an unknown process")
            if (ch.src, ch.dst) in by_pair:
                raise NetworkError(f"duplicate channel {ch.src}->{ch.dst}")
            by_pair[(ch.src, ch.dst)] = ch
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != self.processes:
                raise NetworkError("labels must name every process")
            object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_by_pair", by_pair)
        object.__setattr__(self, "max_dist", _distance_table(self.processes, chans, "max"))
        object.__setattr__(self, "min_dist", _distance_table(self.processes, chans, "min"))

    # construction helpers -------------------------------------------------

    @classmethod
    def build(
        cls,
        processes: int,
        edges: Iterable[tuple[int, int, int, int | float | None]],
        labels: Sequence[str] | None = None,
    ) -> "Network":
        """Build from ``(src, dst, min, max)`` tuples; ``None`` max means unbounded."""
        chans = tuple(
            ChannelSpec(s, d, lo, INF if hi is None else hi) for s, d, lo, hi in edges
        )
        return cls(processes, chans, tuple(labels) if labels is not None else None)

    @classmethod
    def from_json(cls, doc: dict | str) -> "Network":
        if isinstance(doc, str):
            doc = json.loads(doc)
        try:
            n = int(doc["processes"])
            edges = [
                (int(c["src"]), int(c["dst"]), int(c.get("min", 1)), c.get("max"))
                for c in doc.get("channels", [])
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise NetworkError(f"malformed network document: {exc}") from exc
        edges = [(s, d, lo, None if hi is None else int(hi)) for s, d, lo, hi in edges]
        return cls.build(n, edges, doc.get("labels"))

    def to_json(self) -> dict:
        doc: dict = {
            "processes": self.processes,
            "channels": [c.to_json() for c in self.channels],
        }
        if self.labels is not None:
            doc["labels"] = list(self.labels)
        return doc

    # queries --------------------------------------------------------------

    def check_proc(self, i: int) -> None:
        if not isinstance(i, (int, np.integer)) or not 0 <= i < self.processes:
            raise NetworkError(f"invalid process id {i!r} (network has {self.processes})")

    def channel(self, src: int, dst: int) -> ChannelSpec | None:
        return self._by_pair.get((src, dst))

    def out_channels(self, src: int) -> list[ChannelSpec]:
        return [c for c in self.channels if c.src == src]

    def in_channels(self, dst: int) -> list[ChannelSpec]:
        return [c for c in self.channels if c.dst == dst]

    def name(self, i: int) -> str:
        return self.labels[i] if self.labels is not None else str(i)

    def max_distance(self, i: int, j: int) -> int | float:
        self.check_proc(i)
        self.check_proc(j)
        return _as_duration(self.max_dist[i, j])

    def min_distance(self, i: int, j: int) -> int | float:
        self.check_proc(i)
        self.check_proc(j)
        return _as_duration(self.min_dist[i, j])

    def bound_guarantee(self, a: Node, b: Node) -> bool:
        """True iff ``a.time + D(a.proc, b.proc) <= b.time``."""
        return a.time + self.max_distance(a.proc, b.proc) <= b.time

    def diameter(self, i: int) -> int | float:
        self.check_proc(i)
        return _as_duration(self.max_dist[i].max()) if self.processes else 0

    def classify(self) -> ContextClass:
        return classify_context(self)


def max_distance(net: Network, i: int, j: int) -> int | float:
    return net.max_distance(i, j)


def min_distance(net: Network, i: int, j: int) -> int | float:
    return net.min_distance(i, j)


def bound_guarantee(net: Network, a: Node, b: Node) -> bool:
    return net.bound_guarantee(a, b)


def diameter(net: Network, i: int) -> int | float:
    return net.diameter(i)


def classify_context(net: Network) -> ContextClass:
    """Classify by channel bounds. An empty channel set counts as Fixed."""
    chans = net.channels
    if all(c.bounded and c.min == c.max for c in chans):
        return ContextClass.FIXED
    if all(c.min == 1 and c.bounded for c in chans):
        return ContextClass.MAX_ONLY
    if all(c.min == 1 and not c.bounded for c in chans):
        return ContextClass.ASYNC_DELIVERY
    if all(not c.bounded for c in chans):
        return ContextClass.MIN_ONLY
    return ContextClass.GENERAL_BOUNDED
