"""Synchronous execution of protocols under bounded-delay delivery.

Local states are hash-consed into integer ids by an :class:`Interner`. A local
state is the tuple ``(proc, time, data, inbox)``; ``data`` is whatever the
protocol keeps between rounds and ``inbox`` holds the deliveries and external
inputs that arrived in the current round. Protocols that want perfect recall
store the previous state id in ``data``.

Runs are enumerated depth-first over the per-round environment choices: which
eligible in-transit messages are delivered and which optional inputs occur.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .network import INF, Network, Node

DEFAULT_CAP = 200_000

INPUT = "input"
SEND = "send"
RECV = "recv"
INTERNAL = "internal"
KIND_ORDER = {INPUT: 0, RECV: 1, SEND: 2, INTERNAL: 3}


class ValidationError(ValueError):
    """An environment choice or script violates the delivery rules."""


class SizingError(RuntimeError):
    """Enumeration would exceed the configured run cap."""

    def __init__(self, count: int, cap: int, exact: bool):
        self.count = count
        self.cap = cap
        self.exact = exact
        qual = "" if exact else "at least "
        super().__init__(f"run count {qual}{count} exceeds cap {cap}")


class ConfigurationError(ValueError):
    """A protocol or scenario does not fit the network it was given."""


class Ref(int):
    """An interned local-state id embedded in data or payloads."""

    __slots__ = ()

    def __repr__(self) -> str:
        return f"Ref({int(self)})"


# ---------------------------------------------------------------------------
# events and messages


@dataclass(frozen=True)
class Event:
    """One event of a run.

    ``key`` identifies the event across runs: inputs by (proc, token), message
    events by (src, dst, send_time, seq), internals by (proc, time, token).
    ``uid`` identifies it inside a run.
    """

    kind: str
    proc: int
    time: int
    seq: int
    payload: Hashable
    key: tuple
    link: tuple | None = None
    peer: int | None = None

    @property
    def uid(self) -> tuple:
        return (self.kind, self.proc, self.time, self.seq)

    @property
    def node(self) -> Node:
        return Node(self.proc, self.time)


def input_key(proc: int, token: Hashable) -> tuple:
    return (INPUT, proc, token)


def send_key(src: int, dst: int, send_time: int, seq: int) -> tuple:
    return (SEND, src, dst, send_time, seq)


def recv_key(src: int, dst: int, send_time: int, seq: int) -> tuple:
    return (RECV, src, dst, send_time, seq)


def internal_key(proc: int, time: int, token: Hashable) -> tuple:
    return (INTERNAL, proc, time, token)


@dataclass(frozen=True)
class Pending:
    """A message in transit."""

    src: int
    dst: int
    send_time: int
    seq: int
    payload: Hashable
    min: int
    max: int | float

    @property
    def send_key(self) -> tuple:
        return send_key(self.src, self.dst, self.send_time, self.seq)

    @property
    def earliest(self) -> int:
        return self.send_time + self.min

    @property
    def latest(self) -> int | float:
        return self.send_time + self.max


# ---------------------------------------------------------------------------
# protocols


@dataclass(frozen=True)
class Actions:
    sends: tuple[tuple[int, Hashable], ...] = ()
    internals: tuple[Hashable, ...] = ()


NO_ACTIONS = Actions()


@dataclass(frozen=True)
class View:
    """What a process sees at one round."""

    proc: int
    time: int
    data: Hashable
    inbox: tuple
    sid: int
    net: Network

    def messages(self) -> list[tuple[int, Hashable]]:
        return [(item[1], item[2]) for item in self.inbox if item[0] == "msg"]

    def inputs(self) -> list[Hashable]:
        return [item[1] for item in self.inbox if item[0] == "input"]


class Protocol:
    """Deterministic joint protocol. Subclasses override the three hooks."""

    name = "protocol"

    def params(self) -> dict:
        return {}

    def check_network(self, net: Network) -> None:
        """Raise :class:`ConfigurationError` if the network is unsuitable."""

    def initial(self, net: Network, proc: int, value: Hashable) -> Hashable:
        return ("init", value)

    def act(self, view: View) -> Actions:
        return NO_ACTIONS

    def update(self, view: View, actions: Actions) -> Hashable:
        return Ref(view.sid)

    def to_json(self) -> dict:
        return {"name": self.name, **self.params()}


class SilentProtocol(Protocol):
    """Never sends; keeps perfect recall."""

    name = "silent"


class FipProtocol(Protocol):
    """Full information: every round, send the current local state on every
    outgoing channel and remember the previous state."""

    name = "fip"

    def act(self, view: View) -> Actions:
        sid = Ref(view.sid)
        return Actions(sends=tuple((c.dst, sid) for c in view.net.out_channels(view.proc)))


class SendOnceProtocol(Protocol):
    """Process ``src`` sends ``token`` to every neighbour at round ``at``."""

    name = "send_once"

    def __init__(self, src: int = 0, at: int = 0, token: str = "m"):
        self.src, self.at, self.token = src, at, token

    def params(self) -> dict:
        return {"src": self.src, "at": self.at, "token": self.token}

    def act(self, view: View) -> Actions:
        if view.proc == self.src and view.time == self.at:
            return Actions(sends=tuple((c.dst, self.token) for c in view.net.out_channels(view.proc)))
        return NO_ACTIONS


class RelayProtocol(Protocol):
    """Notice flooding with optional heartbeats.

    A process that sees ``trigger`` as an input, or receives a notice, sends a
    notice once on every outgoing channel except its heartbeat channels. On
    each ``heartbeat`` channel the source sends a tick every round until it
    has seen the trigger, so its silence is informative. State keeps perfect recall plus the informed flag.
    """

    name = "relay"

    def __init__(self, trigger: str = "e", heartbeats: Iterable[tuple[int, int]] = (),
                 stamp: bool = False):
        self.trigger = trigger
        self.heartbeats = tuple(sorted(tuple(h) for h in heartbeats))
        self.stamp = stamp

    def params(self) -> dict:
        return {"trigger": self.trigger, "heartbeats": [list(h) for h in self.heartbeats],
                "stamp": self.stamp}

    def check_network(self, net: Network) -> None:
        for src, dst in self.heartbeats:
            if net.channel(src, dst) is None:
                raise ConfigurationError(f"heartbeat channel {src}->{dst} not in network")

    def initial(self, net, proc, value):
        return ("init", value, False, None)

    def _learned(self, view: View) -> tuple[bool, Hashable, bool]:
        """(informed, origin stamp, informed just now)."""
        if view.data[2]:
            return True, view.data[3], False
        if self.trigger in view.inputs():
            return True, view.time, True
        for _src, payload in view.messages():
            if isinstance(payload, tuple) and payload[0] == "notice":
                return True, payload[1], True
        return False, None, False

    def act(self, view: View) -> Actions:
        informed, origin, fresh = self._learned(view)
        sends: list[tuple[int, Hashable]] = []
        if fresh:
            body = ("notice", origin if self.stamp else None)
            sends.extend((c.dst, body) for c in view.net.out_channels(view.proc)
                         if (view.proc, c.dst) not in self.heartbeats)
        if not informed:
            sends.extend((dst, ("tick",)) for src, dst in self.heartbeats if src == view.proc)
        return Actions(sends=tuple(sends))

    def update(self, view: View, actions: Actions):
        informed, origin, _ = self._learned(view)
        return ("run", Ref(view.sid), informed, origin)


class ConwayProtocol(Protocol):
    """The one-step deep-knowledge protocol on a V-shaped network.

    The base process ``s`` holds a natural number ``k`` as initial value. On
    the trigger input it sends ``("occ", k)`` and ``("occ", k-1)`` to the two
    leaves, with the parity of ``k`` deciding which leaf gets the larger
    value; for ``k = 0`` only leaf 0 hears anything.
    """

    name = "conway"

    def __init__(self, s: int = 2, leaves: tuple[int, int] = (0, 1), trigger: str = "e"):
        self.s, self.leaves, self.trigger = s, tuple(leaves), trigger

    def params(self) -> dict:
        return {"s": self.s, "leaves": list(self.leaves), "trigger": self.trigger}

    def check_network(self, net: Network) -> None:
        want = {(self.s, self.leaves[0]), (self.s, self.leaves[1])}
        have = {(c.src, c.dst) for c in net.channels}
        if have != want or net.processes != 3:
            raise ConfigurationError("conway protocol needs the V network s->0, s->1")
        for src, dst in want:
            ch = net.channel(src, dst)
            if ch.min != 1 or ch.max != 1:
                raise ConfigurationError("conway channels must have min = max = 1")

    def act(self, view: View) -> Actions:
        if view.proc != self.s or self.trigger not in view.inputs():
            return NO_ACTIONS
        k = view.data[1] if view.data[0] == "init" else view.data[2]
        zero, one = self.leaves
        if k == 0:
            return Actions(sends=((zero, ("occ", 0)),))
        if k % 2 == 1:
            return Actions(sends=((one, ("occ", k)), (zero, ("occ", k - 1))))
        return Actions(sends=((zero, ("occ", k)), (one, ("occ", k - 1))))

    def update(self, view: View, actions: Actions):
        # keep k visible without walking the history
        k = view.data[1] if view.data[0] == "init" else view.data[2]
        return ("run", Ref(view.sid), k)


PROTOCOLS: dict[str, type[Protocol]] = {
    "silent": SilentProtocol,
    "fip": FipProtocol,
    "send_once": SendOnceProtocol,
    "relay": RelayProtocol,
    "conway": ConwayProtocol,
}


def fip_protocol() -> FipProtocol:
    return FipProtocol()


def conway_protocol() -> ConwayProtocol:
    """The Conway protocol; ``k`` lives in the base process's initial value."""
    return ConwayProtocol()


def register_protocol(cls: type[Protocol]) -> type[Protocol]:
    PROTOCOLS[cls.name] = cls
    return cls


def protocol_from_json(doc: Mapping | str) -> Protocol:
    if isinstance(doc, str):
        doc = {"name": doc}
    doc = dict(doc)
    name = doc.pop("name", None)
    if name not in PROTOCOLS:
        raise ConfigurationError(f"unknown protocol {name!r}")
    cls = PROTOCOLS[name]
    if hasattr(cls, "from_params"):
        return cls.from_params(doc)
    if "heartbeats" in doc:
        doc["heartbeats"] = [tuple(h) for h in doc["heartbeats"]]
    if "leaves" in doc:
        doc["leaves"] = tuple(doc["leaves"])
    return cls(**doc)


# ---------------------------------------------------------------------------
# interning


class Interner:
    """Hash-conses ``(proc, time, data, inbox)`` tuples into dense ids."""

    def __init__(self) -> None:
        self._ids: dict[tuple, int] = {}
        self.keys: list[tuple] = []

    def intern(self, key: tuple) -> int:
        sid = self._ids.get(key)
        if sid is None:
            sid = len(self.keys)
            self._ids[key] = sid
            self.keys.append(key)
        return sid

    def __len__(self) -> int:
        return len(self.keys)

    def proc(self, sid: int) -> int:
        return self.keys[sid][0]

    def time(self, sid: int) -> int:
        return self.keys[sid][1]

    def refs(self, sid: int) -> list[int]:
        """State ids referenced directly from a state's data and inbox."""
        out: list[int] = []
        _collect_refs(self.keys[sid][2], out)
        _collect_refs(self.keys[sid][3], out)
        return out

    def history_contains(self, sid: int, other: int) -> bool:
        """True iff ``other`` is reachable from ``sid`` through references."""
        seen = {sid}
        stack = [sid]
        while stack:
            cur = stack.pop()
            if cur == other:
                return True
            for nxt in self.refs(cur):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return False


def _collect_refs(obj: Any, out: list[int]) -> None:
    if isinstance(obj, Ref):
        out.append(int(obj))
    elif isinstance(obj, tuple):
        for item in obj:
            _collect_refs(item, out)


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class InputSpec:
    """An optional external input ``token`` at ``proc`` at one of ``times``."""

    proc: int
    token: str
    times: tuple[int, ...]

    def to_json(self) -> dict:
        return {"proc": self.proc, "token": self.token, "times": list(self.times)}


@dataclass
class Scenario:
    """Everything needed to enumerate a bounded set of runs."""

    network: Network
    protocol: Protocol
    horizon: int
    inputs: tuple[InputSpec, ...] = ()
    initial: tuple[tuple[Hashable, ...], ...] | None = None
    cap: int | None = None

    def __post_init__(self) -> None:
        n = self.network.processes
        if self.horizon < 0:
            raise ConfigurationError("horizon must be non-negative")
        if self.initial is None:
            self.initial = tuple((None,) for _ in range(n))
        self.initial = tuple(tuple(v) for v in self.initial)
        if len(self.initial) != n or any(len(v) == 0 for v in self.initial):
            raise ConfigurationError("initial-state space must list values for every process")
        self.inputs = tuple(self.inputs)
        seen = set()
        for spec in self.inputs:
            self.network.check_proc(spec.proc)
            if (spec.proc, spec.token) in seen:
                raise ConfigurationError(f"duplicate input {spec.token!r} at process {spec.proc}")
            seen.add((spec.proc, spec.token))
            if any(t < 0 or t > self.horizon for t in spec.times):
                raise ConfigurationError(f"input window of {spec.token!r} leaves [0, horizon]")
        self.protocol.check_network(self.network)

    @property
    def effective_cap(self) -> int:
        env = os.environ.get("CENTILAB_CAP")
        if env:
            return int(env)
        return self.cap if self.cap is not None else DEFAULT_CAP

    def to_json(self) -> dict:
        return {
            "network": self.network.to_json(),
            "protocol": self.protocol.to_json(),
            "horizon": self.horizon,
            "inputs": [s.to_json() for s in self.inputs],
            "initial": [list(v) for v in self.initial],
            **({"cap": self.cap} if self.cap is not None else {}),
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "Scenario":
        try:
            net = Network.from_json(doc["network"])
            protocol = protocol_from_json(doc.get("protocol", "fip"))
            horizon = int(doc["horizon"])
            inputs = tuple(
                InputSpec(int(s["proc"]), str(s["token"]), tuple(int(t) for t in s["times"]))
                for s in doc.get("inputs", [])
            )
            initial = doc.get("initial")
            if initial is not None:
                initial = tuple(tuple(_freeze(v) for v in vals) for vals in initial)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"malformed scenario document: {exc}") from exc
        return cls(net, protocol, horizon, inputs, initial, doc.get("cap"))


def _freeze(value: Any) -> Hashable:
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


# ---------------------------------------------------------------------------
# the machine


@dataclass(frozen=True)
class GlobalState:
    time: int
    local: tuple[int, ...]
    pending: tuple[Pending, ...]


@dataclass(frozen=True)
class EnvChoice:
    """Environment choice for the next round."""

    deliver: frozenset = frozenset()  # send keys delivered next round
    inputs: Mapping[int, str] = field(default_factory=dict)


class Machine:
    """Executes one scenario's protocol; shared by generation and enumeration."""

    def __init__(self, scenario: Scenario, interner: Interner | None = None):
        self.scenario = scenario
        self.net = scenario.network
        self.protocol = scenario.protocol
        self.interner = interner if interner is not None else Interner()
        self._act_cache: dict[int, Actions] = {}
        self._next_cache: dict[int, Hashable] = {}

    def view(self, sid: int) -> View:
        proc, t, data, inbox = self.interner.keys[sid]
        return View(proc, t, data, inbox, sid, self.net)

    def actions(self, sid: int) -> Actions:
        acts = self._act_cache.get(sid)
        if acts is None:
            acts = self.protocol.act(self.view(sid))
            for dst, _ in acts.sends:
                if self.net.channel(self.interner.proc(sid), dst) is None:
                    raise ConfigurationError(
                        f"protocol {self.protocol.name} sends on missing channel "
                        f"{self.interner.proc(sid)}->{dst}"
                    )
            self._act_cache[sid] = acts
        return acts

    def next_data(self, sid: int) -> Hashable:
        data = self._next_cache.get(sid)
        if data is None:
            data = self.protocol.update(self.view(sid), self.actions(sid))
            self._next_cache[sid] = data
        return data

    def start(self, values: Sequence[Hashable], inputs: Mapping[int, str]) -> tuple[GlobalState, list[Event]]:
        events: list[Event] = []
        local = []
        for proc in range(self.net.processes):
            inbox: tuple = ()
            tok = inputs.get(proc)
            if tok is not None:
                inbox = (("input", tok),)
                events.append(Event(INPUT, proc, 0, 0, tok, input_key(proc, tok)))
            data = self.protocol.initial(self.net, proc, values[proc])
            local.append(self.interner.intern((proc, 0, data, inbox)))
        return GlobalState(0, tuple(local), ()), events

    def emit(self, gs: GlobalState) -> tuple[tuple[Pending, ...], list[Event]]:
        """Run every process's actions at ``gs.time``; return new pending + events."""
        t = gs.time
        events: list[Event] = []
        new: list[Pending] = []
        for proc, sid in enumerate(gs.local):
            acts = self.actions(sid)
            per_channel: dict[int, int] = {}
            for n, (dst, payload) in enumerate(acts.sends):
                seq = per_channel.get(dst, 0)
                per_channel[dst] = seq + 1
                ch = self.net.channel(proc, dst)
                new.append(Pending(proc, dst, t, seq, payload, ch.min, ch.max))
                events.append(Event(SEND, proc, t, n, payload, send_key(proc, dst, t, seq), peer=dst))
            for n, token in enumerate(acts.internals):
                events.append(Event(INTERNAL, proc, t, n, token, internal_key(proc, t, token)))
        return gs.pending + tuple(new), events

    def step(self, gs: GlobalState, pending: tuple[Pending, ...], choice: EnvChoice) -> tuple[GlobalState, list[Event]]:
        """Advance one round. ``pending`` includes this round's sends."""
        t1 = gs.time + 1
        deliver = choice.deliver
        by_key = {p.send_key: p for p in pending}
        for key in deliver:
            p = by_key.get(key)
            if p is None:
                raise ValidationError(f"delivery of unknown or already delivered message {key}")
            if t1 < p.earliest:
                raise ValidationError(
                    f"channel {p.src}->{p.dst} [min {p.min}]: message sent at {p.send_time} "
                    f"delivered early at {t1}"
                )
        for p in pending:
            if p.latest == t1 and p.send_key not in deliver:
                raise ValidationError(
                    f"channel {p.src}->{p.dst} [max {p.max}]: message sent at {p.send_time} "
                    f"must be delivered by {t1}"
                )
        rest = tuple(p for p in pending if p.send_key not in deliver)
        arrived: dict[int, list[Pending]] = {}
        for p in pending:
            if p.send_key in deliver:
                arrived.setdefault(p.dst, []).append(p)
        events: list[Event] = []
        local = []
        for proc, sid in enumerate(gs.local):
            items: list[tuple] = []
            tok = choice.inputs.get(proc)
            if tok is not None:
                items.append(("input", tok))
                events.append(Event(INPUT, proc, t1, 0, tok, input_key(proc, tok)))
            msgs = sorted(arrived.get(proc, ()), key=lambda p: (p.src, p.send_time, p.seq))
            for n, p in enumerate(msgs):
                items.append(("msg", p.src, p.payload))
                events.append(
                    Event(RECV, proc, t1, n, p.payload,
                          recv_key(p.src, p.dst, p.send_time, p.seq), link=p.send_key, peer=p.src)
                )
            data = self.next_data(sid)
            local.append(self.interner.intern((proc, t1, data, tuple(items))))
        return GlobalState(t1, tuple(local), rest), events


# ---------------------------------------------------------------------------
# runs


@dataclass(frozen=True)
class Delivery:
    send: tuple  # send key
    deliver_at: int | None  # None: still in transit at the horizon


@dataclass
class Run:
    """A finite-horizon run: local-state ids per round plus the event log."""

    network: Network
    protocol: str
    horizon: int
    states: tuple[tuple[int, ...], ...] | None
    events: tuple[Event, ...]
    initial: tuple[Hashable, ...]
    inputs: tuple[tuple[int, str, int], ...]
    deliveries: tuple[Delivery, ...]
    interner: Interner | None = field(default=None, repr=False, compare=False)
    index: int = -1
    _lookup: dict | None = field(default=None, repr=False, compare=False)

    def local(self, proc: int, time: int) -> int:
        return self.states[time][proc]

    @property
    def event_index(self) -> dict[tuple, Event]:
        if self._lookup is None:
            self._lookup = {e.key: e for e in self.events}
        return self._lookup

    def occurrence(self, key: tuple) -> Event | None:
        return self.event_index.get(key)

    def sends(self) -> list[Event]:
        return [e for e in self.events if e.kind == SEND]

    def receives(self) -> list[Event]:
        return [e for e in self.events if e.kind == RECV]

    def in_transit(self) -> list[tuple]:
        return [d.send for d in self.deliveries if d.deliver_at is None]

    def comm_signature(self) -> tuple:
        """Everything the causal structure depends on."""
        return tuple((d.send, d.deliver_at) for d in self.deliveries)

    def to_json(self) -> dict:
        return trace_to_json(self)


def _sort_events(events: Iterable[Event]) -> tuple[Event, ...]:
    return tuple(sorted(events, key=lambda e: (e.time, e.proc, KIND_ORDER[e.kind], e.seq, repr(e.key))))


def _finish(scenario: Scenario, machine: Machine, states: list[tuple[int, ...]], events: list[Event],
            initial: tuple, index: int = -1) -> Run:
    evs = _sort_events(events)
    sends = {e.key: e for e in evs if e.kind == SEND}
    recv_at = {e.link: e.time for e in evs if e.kind == RECV}
    deliveries = tuple(Delivery(k, recv_at.get(k)) for k in sorted(sends, key=lambda k: (k[3], k[1], k[2], k[4])))
    inputs = tuple(sorted((e.proc, e.payload, e.time) for e in evs if e.kind == INPUT))
    return Run(scenario.network, scenario.protocol.name, scenario.horizon, tuple(states), evs,
               tuple(initial), inputs, deliveries, machine.interner, index)


def step(machine: Machine, gs: GlobalState, choice: EnvChoice) -> tuple[GlobalState, list[Event]]:
    """Emit this round's actions, then apply the environment choice."""
    pending, evs = machine.emit(gs)
    nxt, evs2 = machine.step(gs, pending, choice)
    return nxt, evs + evs2


@dataclass
class Script:
    """A concrete resolution of every environment choice."""

    initial: tuple[Hashable, ...] | None = None
    inputs: tuple[tuple[int, str, int], ...] = ()
    deliveries: Mapping[tuple, int | None] = field(default_factory=dict)
    default: str = "max"  # unscripted messages: "max" (latest legal) or "min"

    @classmethod
    def from_json(cls, doc: Mapping) -> "Script":
        deliveries: dict[tuple, int | None] = {}
        for d in doc.get("deliveries", []):
            ref = d["send"] if "send" in d else d
            key = send_key(int(ref["src"]), int(ref["dst"]), int(ref["send_time"]), int(ref.get("seq", 0)))
            deliveries[key] = None if d.get("deliver_at") is None else int(d["deliver_at"])
        initial = doc.get("initial")
        return cls(
            tuple(_freeze(v) for v in initial) if initial is not None else None,
            tuple((int(i["proc"]), str(i["token"]), int(i["time"])) for i in doc.get("inputs", [])),
            deliveries,
            doc.get("default", "max"),
        )


def generate_run(scenario: Scenario, script: Script, interner: Interner | None = None,
                 machine: Machine | None = None) -> Run:
    """Build the single run fixed by ``script``.

    Messages the script does not mention arrive at the latest legal round
    (or earliest with ``default="min"``); a scripted ``None`` keeps a message
    in transit, which is legal only while its max has not expired.
    """
    m = machine or Machine(scenario, interner)
    n = scenario.network.processes
    initial = script.initial if script.initial is not None else tuple(v[0] for v in scenario.initial)
    if len(initial) != n:
        raise ValidationError("script initial values must cover every process")
    for proc, value in enumerate(initial):
        if value not in scenario.initial[proc]:
            raise ValidationError(f"initial value {value!r} of process {proc} not in the scenario's space")
    by_time: dict[int, dict[int, str]] = {}
    for proc, token, time in script.inputs:
        if not any(s.proc == proc and s.token == token and time in s.times for s in scenario.inputs):
            raise ValidationError(f"input {token!r} at ({proc},{time}) not allowed by the scenario")
        slot = by_time.setdefault(time, {})
        if proc in slot:
            raise ValidationError(f"two inputs at ({proc},{time})")
        slot[proc] = token
    gs, events = m.start(initial, by_time.get(0, {}))
    states = [gs.local]
    for t in range(scenario.horizon):
        pending, evs = m.emit(gs)
        events.extend(evs)
        deliver = set()
        for p in pending:
            if p.send_key in script.deliveries:
                when = script.deliveries[p.send_key]
            else:
                when = p.earliest if script.default == "min" else p.latest
            if when is not None and when == t + 1:
                deliver.add(p.send_key)
            elif when is not None and when <= t:
                raise ValidationError(
                    f"channel {p.src}->{p.dst}: scripted delivery at {when} precedes send at {p.send_time} + min"
                )
        gs, evs = m.step(gs, pending, EnvChoice(frozenset(deliver), by_time.get(t + 1, {})))
        events.extend(evs)
        states.append(gs.local)
    _, evs = m.emit(gs)
    events.extend(evs)
    return _finish(scenario, m, states, events, initial)


def validate_run(run: Run) -> list[str]:
    """Post-hoc legality audit; an empty list means the run is valid."""
    problems: list[str] = []
    seen: set[tuple] = set()
    for e in run.events:
        if e.uid in seen:
            problems.append(f"duplicate event identity {e.uid}")
        seen.add(e.uid)
        if not 0 <= e.time <= run.horizon:
            problems.append(f"event {e.uid} outside [0, horizon]")
    sends = {e.key: e for e in run.events if e.kind == SEND}
    recvd: set[tuple] = set()
    for e in run.events:
        if e.kind != RECV:
            continue
        s = sends.get(e.link)
        if s is None:
            problems.append(f"receive {e.uid} has no matching send")
            continue
        if e.link in recvd:
            problems.append(f"message {e.link} delivered twice")
        recvd.add(e.link)
        ch = run.network.channel(s.proc, s.peer)
        if ch is None:
            problems.append(f"message on missing channel {s.proc}->{s.peer}")
            continue
        if e.time < s.time:
            problems.append(f"receive precedes send for {e.link}")
        elif e.time < s.time + ch.min:
            problems.append(f"channel {s.proc}->{s.peer} [min {ch.min}]: early delivery of {e.link}")
        if e.time > s.time + ch.max:
            problems.append(f"channel {s.proc}->{s.peer} [max {ch.max}]: late delivery of {e.link}")
    for key, s in sends.items():
        if key in recvd:
            continue
        ch = run.network.channel(s.proc, s.peer)
        if ch is not None and s.time + ch.max <= run.horizon:
            problems.append(f"channel {s.proc}->{s.peer} [max {ch.max}]: message {key} never delivered")
    return problems


@dataclass(frozen=True)
class NDItem:
    """A nondeterministic occurrence attached to a node."""

    kind: str  # "input", "recv" or "init"
    node: Node
    ident: Hashable

    def __repr__(self) -> str:
        return f"{self.kind}{self.node}:{self.ident!r}"


def is_nd_event(run: Run, e: Event) -> bool:
    if e.kind == INPUT:
        return True
    if e.kind == RECV:
        ch = run.network.channel(e.peer, e.proc)
        return e.time < e.key[3] + ch.max
    return False


def nd_events(run: Run) -> list[tuple[Node, NDItem]]:
    """Inputs, initial states, and receives strictly before send + max."""
    out: list[tuple[Node, NDItem]] = []
    for proc, value in enumerate(run.initial):
        node = Node(proc, 0)
        out.append((node, NDItem("init", node, value)))
    for e in run.events:
        if is_nd_event(run, e):
            ident = e.key if e.kind == RECV else e.payload
            out.append((e.node, NDItem(e.kind, e.node, ident)))
    return out


# ---------------------------------------------------------------------------
# enumeration


@dataclass
class RunSet:
    """All runs of a scenario plus dense per-point local-state tables."""

    scenario: Scenario
    runs: list[Run]
    interner: Interner
    observers: tuple[int, ...] | None = None
    _cls: np.ndarray | None = field(default=None, repr=False)

    @property
    def horizon(self) -> int:
        return self.scenario.horizon

    @property
    def network(self) -> Network:
        return self.scenario.network

    def __len__(self) -> int:
        return len(self.runs)

    def __iter__(self) -> Iterator[Run]:
        return iter(self.runs)

    def __getitem__(self, i: int) -> Run:
        return self.runs[i]

    @property
    def state_table(self) -> np.ndarray:
        """``[time, proc, run]`` array of local-state ids."""
        if self._cls is None:
            T, n, R = self.horizon, self.network.processes, len(self.runs)
            arr = np.zeros((T + 1, n, R), dtype=np.int64)
            for r, run in enumerate(self.runs):
                arr[:, :, r] = np.asarray(run.states, dtype=np.int64).reshape(T + 1, n)
            self._cls = arr
        return self._cls


def _round_choices(pending: tuple[Pending, ...], t1: int, spaces: list[list[str | None]]):
    forced = [p.send_key for p in pending if p.latest == t1]
    optional = [p.send_key for p in pending if p.earliest <= t1 < p.latest]
    for bits in itertools.product((False, True), repeat=len(optional)):
        deliver = frozenset(forced + [k for k, b in zip(optional, bits) if b])
        for toks in itertools.product(*spaces):
            yield EnvChoice(deliver, {p: tok for p, tok in enumerate(toks) if tok is not None})


def _input_spaces(scenario: Scenario, t: int, used: frozenset) -> list[list[str | None]]:
    spaces: list[list[str | None]] = []
    for proc in range(scenario.network.processes):
        opts: list[str | None] = [None]
        for spec in scenario.inputs:
            if spec.proc == proc and t in spec.times and (proc, spec.token) not in used:
                opts.append(spec.token)
        spaces.append(opts)
    return spaces


def enumerate_runs(scenario: Scenario, interner: Interner | None = None) -> RunSet:
    """Every run of the scenario up to its horizon, in a deterministic order.

    Messages whose delivery window reaches past the horizon may stay in
    transit; those whose window starts after it never branch.
    """
    m = Machine(scenario, interner)
    cap = scenario.effective_cap
    runs: list[Run] = []
    T = scenario.horizon
    n = scenario.network.processes

    def dfs(gs: GlobalState, states: list, events: list, used: frozenset, initial: tuple) -> None:
        pending, evs = m.emit(gs)
        if gs.time == T:
            if len(runs) >= cap:
                count, exact = _count_runs(scenario, cap)
                raise SizingError(count, cap, exact) from None
            runs.append(_finish(scenario, m, states, events + evs, initial, len(runs)))
            return
        spaces = _input_spaces(scenario, gs.time + 1, used)
        for choice in _round_choices(pending, gs.time + 1, spaces):
            nxt, evs2 = m.step(gs, pending, choice)
            now_used = used | {(p, tok) for p, tok in choice.inputs.items()}
            dfs(nxt, states + [nxt.local], events + evs + evs2, now_used, initial)

    if n == 0:
        gs, events = m.start((), {})
        runs.append(_finish(scenario, m, [gs.local] * (T + 1), events, (), 0))
        return RunSet(scenario, runs, m.interner)
    for initial in itertools.product(*scenario.initial):
        for toks in itertools.product(*_input_spaces(scenario, 0, frozenset())):
            inputs0 = {p: tok for p, tok in enumerate(toks) if tok is not None}
            gs, events = m.start(initial, inputs0)
            dfs(gs, [gs.local], events, frozenset(inputs0.items()), tuple(initial))
    return RunSet(scenario, runs, m.interner)


def _count_runs(scenario: Scenario, cap: int, budget_factor: int = 50) -> tuple[int, bool]:
    """Count runs without storing them; stops after ``budget_factor * cap``.
    Returns the count and whether it is exact."""
    m = Machine(scenario)
    T = scenario.horizon
    limit = budget_factor * cap
    count = 0

    class _Stop(Exception):
        pass

    def dfs(gs: GlobalState, used: frozenset) -> None:
        nonlocal count
        pending, _ = m.emit(gs)
        if gs.time == T:
            count += 1
            if count >= limit:
                raise _Stop
            return
        for choice in _round_choices(pending, gs.time + 1, _input_spaces(scenario, gs.time + 1, used)):
            nxt, _ = m.step(gs, pending, choice)
            dfs(nxt, used | {(p, tok) for p, tok in choice.inputs.items()})

    try:
        for initial in itertools.product(*scenario.initial):
            for toks in itertools.product(*_input_spaces(scenario, 0, frozenset())):
                inputs0 = {p: tok for p, tok in enumerate(toks) if tok is not None}
                gs, _ = m.start(initial, inputs0)
                dfs(gs, frozenset(inputs0.items()))
    except _Stop:
        return count, False
    return count, True


# ---------------------------------------------------------------------------
# trace documents


def _jsonable(obj: Any, canon: dict[int, int]) -> Any:
    if isinstance(obj, Ref):
        return {"ref": canon[int(obj)]}
    if isinstance(obj, tuple):
        return [_jsonable(x, canon) for x in obj]
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        return None if obj == INF else obj
    return repr(obj)


def _canonical_states(run: Run) -> tuple[dict[int, int], list[int]]:
    """Renumber the states reachable from the run's grid in first-visit order."""
    canon: dict[int, int] = {}
    order: list[int] = []
    stack: list[int] = []
    for row in run.states:
        for sid in row:
            stack.append(sid)
            while stack:
                cur = stack.pop()
                if cur in canon:
                    continue
                canon[cur] = len(order)
                order.append(cur)
                stack.extend(reversed(run.interner.refs(cur)))
    return canon, order


def trace_to_json(run: Run) -> dict:
    doc: dict = {"network": run.network.to_json(), "protocol": run.protocol, "horizon": run.horizon}
    canon: dict[int, int] = {}
    if run.states is not None and run.interner is not None:
        canon, order = _canonical_states(run)
        keys = run.interner.keys
        doc["states"] = [
            {"proc": keys[s][0], "time": keys[s][1], "data": _jsonable(keys[s][2], canon),
             "inbox": _jsonable(keys[s][3], canon)}
            for s in order
        ]
        doc["local"] = [[canon[s] for s in row] for row in run.states]
    doc["initial"] = [_jsonable(v, canon) for v in run.initial]
    doc["events"] = [
        {"kind": e.kind, "proc": e.proc, "time": e.time, "seq": e.seq,
         "payload": _jsonable(e.payload, canon),
         "key": _jsonable(e.key, canon),
         "link": _jsonable(e.link, canon) if e.link is not None else None}
        for e in run.events
    ]
    doc["env"] = {
        "inputs": [{"proc": p, "token": tok, "time": t} for p, tok, t in run.inputs],
        "deliveries": [
            {"send_ref": {"src": d.send[1], "dst": d.send[2], "send_time": d.send[3], "seq": d.send[4]},
             "deliver_at": d.deliver_at}
            for d in run.deliveries
        ],
    }
    return doc


def _tuplify(obj: Any) -> Any:
    if isinstance(obj, list):
        return tuple(_tuplify(x) for x in obj)
    if isinstance(obj, dict) and set(obj) == {"ref"}:
        return Ref(obj["ref"])
    return obj


def trace_from_json(doc: Mapping) -> Run:
    """Rebuild a run from a trace document (local states are not restored)."""
    try:
        net = Network.from_json(doc["network"])
        events = []
        for e in doc["events"]:
            link = _tuplify(e.get("link"))
            peer = None
            if e["kind"] == SEND:
                peer = e["key"][2]
            elif e["kind"] == RECV:
                peer = e["key"][1]
            events.append(Event(e["kind"], int(e["proc"]), int(e["time"]), int(e.get("seq", 0)),
                                _tuplify(e.get("payload")), _tuplify(e["key"]), link, peer))
        deliveries = tuple(
            Delivery(send_key(d["send_ref"]["src"], d["send_ref"]["dst"], d["send_ref"]["send_time"],
                              d["send_ref"].get("seq", 0)), d["deliver_at"])
            for d in doc.get("env", {}).get("deliveries", [])
        )
        inputs = tuple((i["proc"], i["token"], i["time"]) for i in doc.get("env", {}).get("inputs", []))
        initial = tuple(_tuplify(v) for v in doc.get("initial", [None] * net.processes))
        return Run(net, doc.get("protocol", "?"), int(doc["horizon"]), None, _sort_events(events),
                   initial, inputs, deliveries)
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ConfigurationError(f"malformed trace document: {exc}") from exc
