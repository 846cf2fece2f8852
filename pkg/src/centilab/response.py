"""Response problems, their checkers, and knowledge-driven reference protocols.

Response actions are internal events whose payload is the action token. The
reference protocols never change communication: they wrap a transport
protocol and add internal actions from a firing table keyed by local-state
id. Because the transport's runs are fixed by the environment alone, the
table can be computed from the transport's run set first and then replayed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .epistemics import And, C, Defined, Formula, ModelChecker, NDOcc, Occurred, nest, nest_common
from .network import Network
from .runtime import (INPUT, INTERNAL, Actions, ConfigurationError, Protocol, Run, RunSet, Scenario,
                      View, enumerate_runs, input_key)


@dataclass(frozen=True)
class Action:
    """An event ``token`` at ``proc``: an input for triggers, an internal
    action for responses."""

    token: str
    proc: int

    def to_json(self) -> dict:
        return {"token": self.token, "proc": self.proc}

    @classmethod
    def from_json(cls, doc: Mapping) -> "Action":
        return cls(str(doc["token"]), int(doc["proc"]))


def _distinct(actions: Sequence[Action]) -> None:
    tokens = [a.token for a in actions]
    if len(set(tokens)) != len(tokens):
        raise ConfigurationError("response tokens must be distinct")


@dataclass(frozen=True)
class ORSpec:
    trigger: Action
    responses: tuple[Action, ...]

    def __post_init__(self) -> None:
        if not self.responses:
            raise ConfigurationError("an ordered response needs at least one response")
        _distinct(self.responses)

    @property
    def sequence(self) -> list[int]:
        """``[i_0, i_1, ..., i_k]``."""
        return [self.trigger.proc] + [a.proc for a in self.responses]


@dataclass(frozen=True)
class SRSpec:
    trigger: Action
    responses: tuple[Action, ...]

    def __post_init__(self) -> None:
        if not self.responses:
            raise ConfigurationError("a simultaneous response needs a nonempty group")
        _distinct(self.responses)

    @property
    def group(self) -> tuple[int, ...]:
        return tuple(sorted({a.proc for a in self.responses}))


@dataclass(frozen=True)
class OGRSpec:
    trigger: Action
    groups: tuple[tuple[Action, ...], ...]

    def __post_init__(self) -> None:
        if not self.groups or any(not g for g in self.groups):
            raise ConfigurationError("ordered group response needs nonempty groups")
        _distinct([a for g in self.groups for a in g])

    @property
    def proc_groups(self) -> list[tuple[int, ...]]:
        return [tuple(sorted({a.proc for a in g})) for g in self.groups]


@dataclass(frozen=True)
class GRSpec:
    """Events, the subset of triggers (inputs), and ordering pairs ``a <= b``.

    The relation is closed reflexively and transitively on construction.
    """

    events: tuple[Action, ...]
    triggers: frozenset[str]
    order: tuple[tuple[str, str], ...]
    closure: np.ndarray = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        _distinct(self.events)
        names = [e.token for e in self.events]
        index = {n: k for k, n in enumerate(names)}
        object.__setattr__(self, "triggers", frozenset(self.triggers))
        for t in self.triggers:
            if t not in index:
                raise ConfigurationError(f"trigger {t!r} is not an event")
        for a, b in self.order:
            if a not in index or b not in index:
                raise ConfigurationError(f"ordering pair ({a!r}, {b!r}) names an unknown event")
        n = len(names)
        reach = np.eye(n, dtype=bool)
        for a, b in self.order:
            reach[index[a], index[b]] = True
        for k in range(n):  # Warshall
            reach |= reach[:, [k]] & reach[[k], :]
        for t in self.triggers:
            below = [names[j] for j in np.flatnonzero(reach[:, index[t]]) if names[j] != t]
            if below:
                raise ConfigurationError(f"trigger {t!r} is not minimal: {below} precede it")
        object.__setattr__(self, "closure", reach)

    @property
    def names(self) -> list[str]:
        return [e.token for e in self.events]

    def event(self, name: str) -> Action:
        return self.events[self.names.index(name)]

    def precedes(self, a: str, b: str) -> bool:
        names = self.names
        return bool(self.closure[names.index(a), names.index(b)])


@dataclass(frozen=True)
class Condensed:
    """A GR instance with every strongly connected component collapsed.

    ``components`` are listed in a topological order; ``order[a, b]`` is the
    reflexive-transitive ordering between component indices.
    """

    base: GRSpec
    components: tuple[tuple[str, ...], ...]
    triggers: frozenset[int]
    order: np.ndarray = field(repr=False, compare=False, hash=False)

    def label(self, c: int) -> str:
        return "{" + ",".join(self.components[c]) + "}"

    def procs(self, c: int) -> tuple[int, ...]:
        return tuple(sorted({self.base.event(n).proc for n in self.components[c]}))

    def predecessors(self, c: int) -> list[int]:
        return [p for p in range(len(self.components)) if p != c and self.order[p, c]]

    def covers(self, c: int) -> list[int]:
        """Immediate predecessors (the Hasse diagram)."""
        preds = self.predecessors(c)
        return [p for p in preds if not any(q != p and self.order[p, q] for q in preds)]


def spec_from_json(doc: Mapping | str):
    """Parse an OR/SR/OGR/GR spec document (``kind`` selects the type)."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    try:
        kind = doc["kind"]
        if kind == "gr":
            events = tuple(Action.from_json(e) for e in doc["events"])
            return GRSpec(events, frozenset(doc.get("triggers", [])),
                          tuple((str(a), str(b)) for a, b in doc.get("order", [])))
        trigger = Action.from_json(doc["trigger"])
        if kind == "or":
            return ORSpec(trigger, tuple(Action.from_json(a) for a in doc["responses"]))
        if kind == "sr":
            return SRSpec(trigger, tuple(Action.from_json(a) for a in doc["responses"]))
        if kind == "ogr":
            return OGRSpec(trigger, tuple(tuple(Action.from_json(a) for a in g) for g in doc["groups"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"malformed response spec: {exc}") from exc
    raise ConfigurationError(f"unknown spec kind {doc.get('kind')!r}")


def spec_to_json(spec) -> dict:
    if isinstance(spec, ORSpec):
        return {"kind": "or", "trigger": spec.trigger.to_json(), "responses": [a.to_json() for a in spec.responses]}
    if isinstance(spec, SRSpec):
        return {"kind": "sr", "trigger": spec.trigger.to_json(), "responses": [a.to_json() for a in spec.responses]}
    if isinstance(spec, OGRSpec):
        return {"kind": "ogr", "trigger": spec.trigger.to_json(),
                "groups": [[a.to_json() for a in g] for g in spec.groups]}
    if isinstance(spec, GRSpec):
        return {"kind": "gr", "events": [e.to_json() for e in spec.events],
                "triggers": sorted(spec.triggers), "order": [list(p) for p in spec.order]}
    raise TypeError(f"not a response spec: {spec!r}")


# ---------------------------------------------------------------------------
# condensation


def condense(spec: GRSpec) -> Condensed:
    names = spec.names
    n = len(names)
    if n == 0:
        return Condensed(spec, (), frozenset(), np.zeros((0, 0), dtype=bool))
    _, labels = connected_components(csr_matrix(spec.closure.astype(np.int8)), directed=True,
                                     connection="strong")
    groups: dict[int, list[int]] = {}
    for k, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(k)
    comps = list(groups.values())
    # topological order: a component precedes every component it reaches;
    # ties broken by the first member's position in the event list
    depth = [int(spec.closure[:, c[0]].sum()) for c in comps]
    order_idx = sorted(range(len(comps)), key=lambda c: (depth[c], comps[c][0]))
    comps = [comps[c] for c in order_idx]
    m = len(comps)
    order = np.zeros((m, m), dtype=bool)
    for a in range(m):
        for b in range(m):
            order[a, b] = bool(spec.closure[comps[a][0], comps[b][0]])
    triggers = frozenset(c for c in range(m) if any(names[k] in spec.triggers for k in comps[c]))
    return Condensed(spec, tuple(tuple(names[k] for k in c) for c in comps), triggers, order)


def component_chains(cond: Condensed, target: int | str) -> list[tuple[int, ...]]:
    """All maximal trigger-rooted chains ending at ``target`` (a component
    index or an event name)."""
    if isinstance(target, str):
        target = next(c for c, members in enumerate(cond.components) if target in members)
    out: list[tuple[int, ...]] = []

    def walk(c: int, suffix: tuple[int, ...]) -> None:
        if c in cond.triggers:
            out.append((c,) + suffix)
            return
        for p in cond.covers(c):
            walk(p, (c,) + suffix)

    walk(target, ())
    return sorted(out)


# ---------------------------------------------------------------------------
# occurrence tables


def _occurrences(run: Run) -> dict[tuple[int, str, str], list[int]]:
    out: dict[tuple[int, str, str], list[int]] = {}
    for e in run.events:
        if e.kind == INPUT:
            out.setdefault((e.proc, INPUT, str(e.payload)), []).append(e.time)
        elif e.kind == INTERNAL:
            out.setdefault((e.proc, INTERNAL, str(e.payload)), []).append(e.time)
    return out


class Occurrences:
    """Occurrence times of triggers and actions in every run of a run set."""

    def __init__(self, runset: RunSet):
        self.runset = runset
        self._per_run = [_occurrences(r) for r in runset.runs]

    def times(self, r: int, a: Action, trigger: bool = False) -> list[int]:
        kind = INPUT if trigger else INTERNAL
        return sorted(self._per_run[r].get((a.proc, kind, a.token), []))

    def first(self, r: int, a: Action, trigger: bool = False) -> int | None:
        ts = self.times(r, a, trigger)
        return ts[0] if ts else None


@dataclass(frozen=True)
class Verdict:
    solves: bool
    clause: str | None = None  # "occurrence", "order", "simultaneity" or "untriggered"
    run: int | None = None
    detail: str = ""

    def to_json(self) -> dict:
        doc: dict = {"solves": self.solves}
        if not self.solves:
            doc["counterexample"] = {"run": self.run, "clause": self.clause, "detail": self.detail}
        return doc


OK = Verdict(True)


def _check_alphabet(runset: RunSet, trigger: Action | None, actions: Sequence[Action]) -> None:
    alphabet = getattr(runset.scenario.protocol, "alphabet", frozenset())
    missing = [a for a in actions if (a.proc, a.token) not in alphabet]
    if missing:
        raise ConfigurationError(
            f"protocol {runset.scenario.protocol.name!r} never performs "
            + ", ".join(f"{a.token}@{a.proc}" for a in missing))
    if trigger is not None and not any(s.proc == trigger.proc and s.token == trigger.token
                                       for s in runset.scenario.inputs):
        raise ConfigurationError(f"trigger {trigger.token}@{trigger.proc} is not an input of the scenario")


# ---------------------------------------------------------------------------
# checkers


def check_solves_or(runset: RunSet, spec: ORSpec) -> Verdict:
    _check_alphabet(runset, spec.trigger, spec.responses)
    occ = Occurrences(runset)
    for r in range(len(runset)):
        triggered = occ.first(r, spec.trigger, trigger=True) is not None
        firsts = [occ.first(r, a) for a in spec.responses]
        if not triggered:
            for a, t in zip(spec.responses, firsts):
                if t is not None:
                    return Verdict(False, "untriggered", r, f"{a.token}@{a.proc} at {t} without trigger")
            continue
        for a, t in zip(spec.responses, firsts):
            if t is None:
                return Verdict(False, "occurrence", r, f"{a.token}@{a.proc} never occurs")
        for h in range(len(firsts) - 1):
            if firsts[h] > firsts[h + 1]:
                a, b = spec.responses[h], spec.responses[h + 1]
                return Verdict(False, "order", r,
                               f"{a.token} at {firsts[h]} after {b.token} at {firsts[h + 1]}")
    return OK


def check_solves_sr(runset: RunSet, spec: SRSpec) -> Verdict:
    return check_solves_ogr(runset, OGRSpec(spec.trigger, (spec.responses,)))


def _weak_ogr(occ: Occurrences, groups: Sequence[Sequence[Action]], r: int) -> Verdict:
    for g in groups:
        sets = [set(occ.times(r, a)) for a in g]
        for a, s in zip(g, sets):
            if s != sets[0]:
                return Verdict(False, "simultaneity", r,
                               f"{a.token} at {sorted(s)} but {g[0].token} at {sorted(sets[0])}")
    for h, g in enumerate(groups):
        for a in g:
            for t in occ.times(r, a):
                for lower in groups[:h]:
                    for b in lower:
                        tb = occ.first(r, b)
                        if tb is None or tb > t:
                            return Verdict(False, "order", r,
                                           f"{a.token} at {t} but {b.token} at {tb}")
    return OK


def check_weakly_solves_ogr(runset: RunSet, spec: OGRSpec) -> Verdict:
    _check_alphabet(runset, spec.trigger, [a for g in spec.groups for a in g])
    occ = Occurrences(runset)
    for r in range(len(runset)):
        v = _weak_ogr(occ, spec.groups, r)
        if not v.solves:
            return v
    return OK


def check_solves_ogr(runset: RunSet, spec: OGRSpec) -> Verdict:
    actions = [a for g in spec.groups for a in g]
    _check_alphabet(runset, spec.trigger, actions)
    occ = Occurrences(runset)
    for r in range(len(runset)):
        triggered = occ.first(r, spec.trigger, trigger=True) is not None
        if not triggered:
            for a in actions:
                t = occ.first(r, a)
                if t is not None:
                    return Verdict(False, "untriggered", r, f"{a.token}@{a.proc} at {t} without trigger")
            continue
        for a in actions:
            if occ.first(r, a) is None:
                return Verdict(False, "occurrence", r, f"{a.token}@{a.proc} never occurs")
        v = _weak_ogr(occ, spec.groups, r)
        if not v.solves:
            return v
    return OK


def check_solves_gr(runset: RunSet, spec: GRSpec | Condensed) -> Verdict:
    """Both clauses of generalized response on every run.

    For a condensed instance a component occurs when all of its members occur
    together; members occurring apart are reported as a simultaneity failure.
    """
    cond = spec if isinstance(spec, Condensed) else None
    base = cond.base if cond else spec
    _check_alphabet(runset, None, [e for e in base.events if e.token not in base.triggers])
    for t in base.triggers:
        _check_alphabet(runset, base.event(t), [])
    occ = Occurrences(runset)
    if cond is None:
        units = [(n,) for n in base.names]
        order = base.closure
        label = lambda u: units[u][0]  # noqa: E731
    else:
        units = list(cond.components)
        order = cond.order
        label = cond.label
    for r in range(len(runset)):
        when: list[int | None] = []
        for u in units:
            ts = [occ.first(r, base.event(n), trigger=n in base.triggers) for n in u]
            if len(set(ts)) > 1:
                return Verdict(False, "simultaneity", r, f"members of {label(len(when))} occur at {ts}")
            when.append(ts[0])
        for a in range(len(units)):
            for b in range(len(units)):
                if a != b and order[a, b] and when[a] is not None and when[b] is not None and when[a] > when[b]:
                    return Verdict(False, "order", r,
                                   f"{label(a)} at {when[a]} after {label(b)} at {when[b]}")
        for b in range(len(units)):
            preds_ok = all(when[a] is not None for a in range(len(units)) if order[a, b])
            if when[b] is not None and not preds_ok:
                return Verdict(False, "untriggered", r, f"{label(b)} occurs without all its predecessors")
            if when[b] is None and preds_ok:
                return Verdict(False, "occurrence", r, f"{label(b)} never occurs")
    return OK


# ---------------------------------------------------------------------------
# firing-table protocols


class FiringTableProtocol(Protocol):
    """A transport protocol plus internal actions fired at listed local states.

    ``table`` maps local-state ids (from the transport run set's interner) to
    action tokens. ``alphabet`` lists every ``(proc, token)`` the protocol may
    perform, fired or not.
    """

    name = "firing"

    def __init__(self, transport: Protocol, table: Mapping[int, tuple[str, ...]],
                 alphabet: frozenset[tuple[int, str]] = frozenset()):
        self.transport = transport
        self.table = dict(table)
        self.alphabet = frozenset(alphabet)

    def params(self) -> dict:
        return {"transport": self.transport.to_json(), "actions": sorted([list(a) for a in self.alphabet])}

    def check_network(self, net: Network) -> None:
        self.transport.check_network(net)

    def initial(self, net: Network, proc: int, value: Hashable) -> Hashable:
        return self.transport.initial(net, proc, value)

    def act(self, view: View) -> Actions:
        base = self.transport.act(view)
        extra = self.table.get(view.sid, ())
        if not extra:
            return base
        return Actions(base.sends, base.internals + tuple(extra))

    def update(self, view: View, actions: Actions) -> Hashable:
        # the transport never sees the response actions
        return self.transport.update(view, self.transport.act(view))


def firing_table(runset: RunSet, schedule: Mapping[Action, np.ndarray]) -> dict[int, tuple[str, ...]]:
    """Turn per-run firing times (``-1`` for never) into a local-state table.

    Raises :class:`ConfigurationError` if the schedule is not a function of
    the acting process's local state.
    """
    table: dict[int, list[str]] = {}
    for action, times in schedule.items():
        fire: set[int] = set()
        for r, run in enumerate(runset.runs):
            t = int(times[r])
            if t >= 0:
                fire.add(run.local(action.proc, t))
        for r, run in enumerate(runset.runs):
            t = int(times[r])
            for u in range(runset.horizon + 1):
                sid = run.local(action.proc, u)
                if sid in fire and u != t:
                    raise ConfigurationError(
                        f"firing rule for {action.token}@{action.proc} is not a function of local state "
                        f"(run {r}, time {u})")
        for sid in sorted(fire):
            table.setdefault(sid, []).append(action.token)
    return {sid: tuple(toks) for sid, toks in table.items()}


def scheduled_protocol(transport_rs: RunSet, schedule: Mapping[Action, np.ndarray],
                       extra_alphabet: Sequence[Action] = ()) -> FiringTableProtocol:
    alphabet = frozenset((a.proc, a.token) for a in list(schedule) + list(extra_alphabet))
    return FiringTableProtocol(transport_rs.scenario.protocol, firing_table(transport_rs, schedule), alphabet)


def response_runset(protocol: FiringTableProtocol, transport_rs: RunSet) -> RunSet:
    """Enumerate the wrapped protocol; runs line up index for index with the
    transport's because the interner is shared."""
    sc = transport_rs.scenario
    wrapped = Scenario(sc.network, protocol, sc.horizon, sc.inputs, sc.initial, sc.cap)
    rs = enumerate_runs(wrapped, interner=transport_rs.interner)
    if len(rs) != len(transport_rs):
        raise AssertionError("response actions changed the run set")
    return rs


def onset(mc: ModelChecker, f: Formula) -> np.ndarray:
    """First time ``f`` holds in each run, ``-1`` if never."""
    tab = mc.table(f)
    hit = tab.any(axis=0)
    return np.where(hit, tab.argmax(axis=0), -1)


@dataclass
class Synthesis:
    protocol: FiringTableProtocol
    schedule: dict[Action, np.ndarray]
    insufficient: list[int]  # triggered runs where some response never fires within the horizon
    runset: RunSet | None = None

    def to_json(self, transport_rs: RunSet) -> dict:
        return {
            "protocol": self.protocol.to_json(),
            "schedule": [
                {"action": a.to_json(), "fires": [int(x) for x in times]}
                for a, times in self.schedule.items()
            ],
            "runs": len(transport_rs),
            "horizon_insufficient": self.insufficient,
        }


def _trigger_fact(spec_trigger: Action) -> Formula:
    return NDOcc(input_key(spec_trigger.proc, spec_trigger.token))


def _finish(transport_rs: RunSet, mc: ModelChecker, trigger: Action,
            schedule: dict[Action, np.ndarray]) -> Synthesis:
    triggered = onset(mc, Occurred(input_key(trigger.proc, trigger.token))) >= 0
    insufficient = sorted({int(r) for times in schedule.values()
                           for r in np.flatnonzero(triggered & (times < 0))})
    proto = scheduled_protocol(transport_rs, schedule)
    return Synthesis(proto, schedule, insufficient)


def non_hesitant_protocol(spec: ORSpec, transport_rs: RunSet, mc: ModelChecker | None = None) -> Synthesis:
    """``i_h`` performs ``alpha_h`` as soon as ``K_{i_h} ... K_{i_1} ndocc(e)`` holds."""
    mc = mc or ModelChecker(transport_rs)
    fact = _trigger_fact(spec.trigger)
    schedule = {}
    for h, a in enumerate(spec.responses):
        schedule[a] = onset(mc, nest([x.proc for x in spec.responses[: h + 1]], fact))
    return _finish(transport_rs, mc, spec.trigger, schedule)


def considerate_protocol(spec: SRSpec, transport_rs: RunSet, mc: ModelChecker | None = None) -> Synthesis:
    """Every responder acts as soon as ``C_G ndocc(e)`` holds."""
    mc = mc or ModelChecker(transport_rs)
    when = onset(mc, C(spec.group, _trigger_fact(spec.trigger)))
    return _finish(transport_rs, mc, spec.trigger, {a: when for a in spec.responses})


def group_considerate_protocol(spec: OGRSpec, transport_rs: RunSet,
                               mc: ModelChecker | None = None) -> Synthesis:
    """Group ``h`` acts as soon as ``C_{I^h} ... C_{I^1} ndocc(e)`` holds."""
    mc = mc or ModelChecker(transport_rs)
    fact = _trigger_fact(spec.trigger)
    groups = spec.proc_groups
    schedule = {}
    for h, g in enumerate(spec.groups):
        when = onset(mc, nest_common(groups[: h + 1], fact))
        for a in g:
            schedule[a] = when
    return _finish(transport_rs, mc, spec.trigger, schedule)


def gr_protocol(spec: GRSpec, transport_rs: RunSet, mc: ModelChecker | None = None) -> Synthesis:
    """Each non-trigger component acts as soon as its processes have common
    knowledge that all of its predecessor components occurred."""
    mc = mc or ModelChecker(transport_rs)
    cond = condense(spec)
    T1 = transport_rs.horizon + 1
    times = np.arange(T1)[:, None]
    occurred: dict[int, Formula] = {}
    schedule: dict[Action, np.ndarray] = {}
    all_preds_ok = {}
    for c, members in enumerate(cond.components):
        if c in cond.triggers:
            trig = spec.event(members[0])
            occurred[c] = Occurred(input_key(trig.proc, trig.token))
            continue
        preds = cond.predecessors(c)
        cond_f = C(cond.procs(c), And(tuple(occurred[p] for p in preds)))
        when = onset(mc, cond_f)
        for name in members:
            schedule[spec.event(name)] = when
        fired = (when[None, :] >= 0) & (when[None, :] <= times)
        occurred[c] = mc.define(f"occurred:{cond.label(c)}", fired)
        all_preds_ok[c] = np.all([onset(mc, occurred[p]) >= 0 for p in preds], axis=0)
    insufficient = sorted({int(r) for c, ok in all_preds_ok.items()
                           for r in np.flatnonzero(ok & (schedule[spec.event(cond.components[c][0])] < 0))})
    return Synthesis(scheduled_protocol(transport_rs, schedule), schedule, insufficient)
