"""Simultaneous global snapshots over bounded-delay channels.

The snapshot protocol runs alongside a fixed background traffic schedule.
An ``"snap"`` input starts it: the initiator proposes a snapshot time ``S``
and floods it. At ``S`` every process records its local state; on each
inbound channel ``h -> j`` it then records background messages arriving in
``(S, S + b_hj)`` that do not carry the ignore bit. A process sets the
ignore bit on background messages it sends on ``j -> h`` during
``[S, S + b_jh)``.

``algo=1`` adopts the first proposal it hears. ``algo=2`` keeps the
minimum of every proposal heard and its own ``t + Diameter_j``, and floods
again whenever its value strictly improves.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping

from .causality import build_index
from .network import INF, ContextClass, Network
from .runtime import (RECV, Actions, ConfigurationError, InputSpec, Protocol, Ref, Run, RunSet, Scenario,
                      View, enumerate_runs, generate_run, register_protocol, Script)
from .structures import earliest_broom_deadline

SNAP = "snap"


def diameter(net: Network, i: int) -> int:
    d = net.diameter(i)
    if d == INF:
        raise ConfigurationError(f"process {i} does not reach every process within a bound")
    return int(d)


@register_protocol
class SnapshotProtocol(Protocol):
    """State data is ``(Ref(prev), S, recorded, records)`` where ``records``
    holds ``(src, (bg_src, bg_time))`` pairs."""

    name = "snapshot"

    def __init__(self, algo: int = 2, background: Iterable[tuple[int, int, int]] = (),
                 window: str = "bound"):
        if algo not in (1, 2):
            raise ConfigurationError("algo must be 1 or 2")
        if window not in ("bound", "distance"):
            raise ConfigurationError("window must be 'bound' or 'distance'")
        self.algo = algo
        self.background = tuple(sorted(tuple(int(x) for x in b) for b in background))
        self.window = window
        self._bg_at: dict[tuple[int, int], list[int]] = {}
        for src, dst, t in self.background:
            self._bg_at.setdefault((src, t), []).append(dst)

    @classmethod
    def from_params(cls, doc: Mapping) -> "SnapshotProtocol":
        return cls(int(doc.get("algo", 2)), [tuple(b) for b in doc.get("background", [])],
                   doc.get("window", "bound"))

    def params(self) -> dict:
        return {"algo": self.algo, "background": [list(b) for b in self.background], "window": self.window}

    def check_network(self, net: Network) -> None:
        if net.classify() not in (ContextClass.MAX_ONLY, ContextClass.FIXED):
            raise ConfigurationError("snapshot protocols need bounded channels with min 1 or fixed delays")
        for i in range(net.processes):
            diameter(net, i)
        for src, dst, _t in self.background:
            if net.channel(src, dst) is None:
                raise ConfigurationError(f"background channel {src}->{dst} not in network")

    def initial(self, net: Network, proc: int, value: Hashable) -> Hashable:
        return (None, None, None, ())

    # ---- rules --------------------------------------------------------------

    def proposal(self, view: View) -> tuple[int | None, bool]:
        """The snapshot time after this round's receipts, and whether it is new."""
        current = view.data[1]
        heard: list[int] = []
        if SNAP in view.inputs():
            heard.append(view.time + diameter(view.net, view.proc))
        for _src, payload in view.messages():
            s = payload[-1] if payload[0] == "bg" else payload[1]
            if s is not None:
                heard.append(s)
        if not heard:
            return current, False
        if self.algo == 1:
            if current is not None:
                return current, False
            return heard[0], True
        best = min(heard + [view.time + diameter(view.net, view.proc)])
        if current is None or best < current:
            return best, True
        return current, False

    def _window(self, net: Network, src: int, dst: int) -> int:
        if self.window == "distance":
            return int(net.max_distance(src, dst))
        return int(net.channel(src, dst).max)

    def act(self, view: View) -> Actions:
        s, fresh = self.proposal(view)
        sends: list[tuple[int, Hashable]] = []
        if fresh:
            sends.extend((c.dst, ("init", s)) for c in view.net.out_channels(view.proc))
        for dst in self._bg_at.get((view.proc, view.time), ()):
            b = view.net.channel(view.proc, dst).max
            ignore = s is not None and s <= view.time < s + b
            sends.append((dst, ("bg", (view.proc, view.time), ignore, s)))
        return Actions(sends=tuple(sends))

    def update(self, view: View, actions: Actions) -> Hashable:
        s, _ = self.proposal(view)
        recorded = view.data[2]
        if s is not None and view.time == s:
            recorded = Ref(view.sid)
        records = list(view.data[3])
        if s is not None:
            for src, payload in view.messages():
                if payload[0] != "bg" or payload[2]:
                    continue
                if s < view.time < s + self._window(view.net, src, view.proc):
                    records.append((src, payload[1]))
        return (Ref(view.sid), s, recorded, tuple(records))


# ---------------------------------------------------------------------------
# records and checks


@dataclass(frozen=True)
class SnapshotRecord:
    t_star: int | None
    states: tuple[int | None, ...]  # recorded local-state id per process
    times: tuple[int | None, ...]  # snapshot time each process believes in
    channels: tuple[tuple[tuple[int, int], tuple], ...]  # ((src, dst), sorted bg ids)

    def channel(self, src: int, dst: int) -> tuple:
        return dict(self.channels).get((src, dst), ())

    def to_json(self) -> dict:
        return {
            "t_star": self.t_star,
            "times": list(self.times),
            "states": list(self.states),
            "channels": [{"src": s, "dst": d, "messages": [list(m) for m in msgs]}
                         for (s, d), msgs in self.channels],
        }


def extract_record(run: Run) -> SnapshotRecord:
    """Read the record from each process's final local state."""
    keys = run.interner.keys
    n = run.network.processes
    times, states = [], []
    chans: dict[tuple[int, int], list] = {(c.src, c.dst): [] for c in run.network.channels}
    for j in range(n):
        data = keys[run.local(j, run.horizon)][2]
        times.append(data[1])
        states.append(None if data[2] is None else int(data[2]))
        for src, ident in data[3]:
            chans[(src, j)].append(tuple(ident))
    distinct = {t for t in times if t is not None}
    t_star = distinct.pop() if len(distinct) == 1 and None not in times else None
    return SnapshotRecord(t_star, tuple(states), tuple(times),
                          tuple((k, tuple(sorted(v))) for k, v in sorted(chans.items())))


def true_cut(run: Run, t_star: int) -> dict[tuple[int, int], tuple]:
    """Background messages sent before ``t_star`` and not yet delivered at it."""
    delivered = {e.link: e.time for e in run.events if e.kind == RECV}
    out: dict[tuple[int, int], list] = {(c.src, c.dst): [] for c in run.network.channels}
    for e in run.sends():
        if e.payload[0] != "bg" or e.time >= t_star:
            continue
        d = delivered.get(e.key)
        if d is None or d > t_star:
            out[(e.proc, e.peer)].append(tuple(e.payload[1]))
    return {k: tuple(sorted(v)) for k, v in out.items()}


def check_snapshot_consistency(run: Run, record: SnapshotRecord) -> bool:
    """The record equals the run's global state at ``t_star``: every local
    state and every channel's in-transit background messages."""
    t = record.t_star
    if t is None or not 0 <= t <= run.horizon:
        return False
    if any(tt != t for tt in record.times):
        return False
    if tuple(record.states) != tuple(run.states[t]):
        return False
    cut = true_cut(run, t)
    return all(record.channel(s, d) == msgs for (s, d), msgs in cut.items())


def consistency_problems(run: Run, record: SnapshotRecord) -> list[str]:
    """Like :func:`check_snapshot_consistency` but says what is wrong."""
    out = []
    t = record.t_star
    if t is None:
        return [f"no common snapshot time: {list(record.times)}"]
    for j, sid in enumerate(record.states):
        if sid != run.states[t][j]:
            out.append(f"process {j}: recorded state is not its state at {t}")
    for (s, d), msgs in true_cut(run, t).items():
        got = record.channel(s, d)
        if got != msgs:
            out.append(f"channel {s}->{d}: recorded {list(got)}, in transit {list(msgs)}")
    return out


def initiation(run: Run) -> tuple[int, int] | None:
    """``(proc, time)`` of the earliest snapshot input."""
    hits = sorted((t, p) for p, tok, t in run.inputs if tok == SNAP)
    return (hits[0][1], hits[0][0]) if hits else None


# ---------------------------------------------------------------------------
# scenarios and probes


def snapshot_scenario(net: Network, algo: int, initiator: int, at: int,
                      background: Iterable[tuple[int, int, int]] = (), horizon: int | None = None,
                      window: str = "bound") -> Scenario:
    """Initiation is an optional input at ``(initiator, at)``; the default
    horizon leaves room for the slowest recording window."""
    proto = SnapshotProtocol(algo, background, window)
    proto.check_network(net)
    if horizon is None:
        bmax = max((int(c.max) for c in net.channels), default=0)
        horizon = at + diameter(net, initiator) + bmax
    return Scenario(net, proto, horizon, (InputSpec(initiator, SNAP, (at,)),))


def default_background(net: Network, until: int) -> list[tuple[int, int, int]]:
    """Every channel carries a background message at every even round below ``until``."""
    return [(c.src, c.dst, t) for c in net.channels for t in range(0, until, 2)]


def run_snapshot(net: Network, algo: int, initiator: int, at: int,
                 background: Iterable[tuple[int, int, int]] = (), script: Script | None = None,
                 window: str = "bound") -> tuple[Run, SnapshotRecord]:
    sc = snapshot_scenario(net, algo, initiator, at, background, window=window)
    script = script or Script(None, ((initiator, SNAP, at),), {}, "max")
    run = generate_run(sc, script)
    return run, extract_record(run)


@dataclass
class ProbeReport:
    checked: int
    violations: list[dict]
    delays: list[int]

    def to_json(self) -> dict:
        return {"checked": self.checked, "violations": self.violations}


def optimality_probe(runset: RunSet) -> ProbeReport:
    """Compare each initiated run's snapshot delay with the earliest deadline
    admitting a centibroom from the initiation node to every process."""
    everyone = list(range(runset.network.processes))
    violations: list[dict] = []
    delays: list[int] = []
    checked = 0
    for r, run in enumerate(runset.runs):
        init = initiation(run)
        if init is None:
            continue
        i0, t0 = init
        rec = extract_record(run)
        if rec.t_star is None:
            violations.append({"run": r, "reason": "no common snapshot time"})
            continue
        checked += 1
        delay = rec.t_star - t0
        delays.append(delay)
        deadline = earliest_broom_deadline(build_index(run), i0, t0, everyone)
        if deadline is None or deadline - t0 != delay:
            violations.append({"run": r, "delay": delay,
                               "broom_delay": None if deadline is None else deadline - t0})
    return ProbeReport(checked, violations, delays)


def enumerate_snapshots(net: Network, algo: int, initiator: int, at: int,
                        background: Iterable[tuple[int, int, int]] = (), window: str = "bound") -> RunSet:
    return enumerate_runs(snapshot_scenario(net, algo, initiator, at, background, window=window))
