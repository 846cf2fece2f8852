"""The acceptance battery: nine criteria, each checked by two independent
routes wherever a second route exists.

Each criterion function returns a :class:`CriterionResult` made of named
:class:`Check` tallies. A criterion passes when every one of its checks
passes; checks never share a verdict, so a failure in one route is visible
even when the other route succeeds.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .catalog import (ALICE, ASYNC_SUITES, BOB, CHARLIE, FIXED_SUITES, KNOWLEDGE_SUITES, MIN_ONLY_SUITES,
                      RESPONSE_SUITES, SUSAN, cheque_scenario, cheque_script, conway_scenario, deposit_net,
                      heartbeat_script, snapshot_nets, staged_scenario, suite, supervisor_scenario,
                      supervisor_script, tight_bound)
from .causality import build_index
from .cones import causal_tr, contact_chain, knows_ignorance, knows_not_reach
from .epistemics import (And, At, C, Formula, Implies, K, LazyFipOracle, ModelChecker, NDOcc, Not, Occurred,
                         TimeIs, e_power, ev_input, nest, nest_common)
from .network import Node
from .response import (Action, GRSpec, OGRSpec, ORSpec, SRSpec, check_solves_gr, check_solves_ogr,
                       check_solves_or, check_solves_sr, component_chains, condense, considerate_protocol,
                       gr_protocol, group_considerate_protocol, non_hesitant_protocol, onset, response_runset,
                       scheduled_protocol)
from .runtime import INPUT, INTERNAL, RECV, RunSet, enumerate_runs, generate_run, input_key, is_nd_event
from .snapshot import (default_background, diameter, enumerate_snapshots, extract_record, initiation,
                       check_snapshot_consistency, optimality_probe)
from .structures import (brute_force_centipede, centibroom_past, centipede_exists_table, find_centibroom,
                         find_centipede, find_generalized_centipede, validate_centipede)

SCALES = ("small", "full")


# ---------------------------------------------------------------------------
# results


@dataclass
class Check:
    name: str
    checked: int = 0
    failures: int = 0
    examples: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.failures == 0

    def record(self, ok: bool, what: Callable[[], str] | str = "") -> None:
        self.checked += 1
        if not ok:
            self.failures += 1
            if len(self.examples) < 3:
                self.examples.append(what() if callable(what) else what)

    def summary(self) -> str:
        tail = f", e.g. {self.examples[0]}" if self.examples else ""
        return f"{self.name} {self.checked - self.failures}/{self.checked}{tail}"

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "checked": self.checked,
                "failures": self.failures, "examples": self.examples}


@dataclass
class CriterionResult:
    number: int
    name: str
    checks: list[Check]
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        failing = [c.summary() for c in self.checks if not c.passed]
        detail = "; ".join(failing) if failing else f"{len(self.checks)} checks"
        return f"criterion {self.number} {status} {self.name}: {detail} ({self.seconds:.1f}s)"

    def to_json(self) -> dict:
        return {"criterion": self.number, "name": self.name, "passed": self.passed,
                "seconds": round(self.seconds, 2), "checks": [c.to_json() for c in self.checks]}


class Workspace:
    """Enumerated run sets and their model checkers, built once per name."""

    def __init__(self, scale: str = "small"):
        if scale not in SCALES:
            raise ValueError(f"unknown scale {scale!r}; choose from {SCALES}")
        self.scale = scale
        self._cache: dict[str, tuple[RunSet, ModelChecker]] = {}

    def load(self, name: str) -> tuple[RunSet, ModelChecker]:
        got = self._cache.get(name)
        if got is None:
            rs = enumerate_runs(suite(name))
            got = (rs, ModelChecker(rs))
            self._cache[name] = got
        return got

    def sample(self, runs: Sequence, target: int = 60) -> list[int]:
        if self.scale == "full":
            return list(range(len(runs)))
        return list(range(0, len(runs), max(1, len(runs) // target)))


def _seqs(procs: Sequence[int], depth: int) -> list[tuple[int, ...]]:
    return [s for k in range(1, depth + 1) for s in itertools.product(procs, repeat=k)]


def _groups(n: int, least: int = 1) -> list[tuple[int, ...]]:
    return [g for k in range(least, n + 1) for g in itertools.combinations(range(n), k)]


def _iff(a: Formula, b: Formula) -> Formula:
    return And((Implies(a, b), Implies(b, a)))


def _trigger_times(mc: ModelChecker, e: tuple) -> np.ndarray:
    return mc.occurrence_times(e)


# ---------------------------------------------------------------------------
# 1. nested knowledge needs, and under fip is given by, a centipede


def criterion_1(ws: Workspace, depth: int = 3) -> CriterionResult:
    need = Check("knowledge implies centipede")
    enough = Check("centipede implies knowledge under fip")
    witness = Check("per-sequence witnesses match the shared search and validate")
    for name in KNOWLEDGE_SUITES:
        rs, mc = ws.load(name)
        n, T = rs.network.processes, rs.horizon
        e = ev_input(0, "e")
        te = _trigger_times(mc, e)
        seqs = _seqs(range(n), depth)
        know = {s: mc.table(nest(s, NDOcc(e))) for s in seqs}
        starts = sorted({int(v) for v in te if v <= T})
        told = {(v, s): mc.table(nest((0,) + s, At(v, K(0, NDOcc(e))))) for v in starts for s in seqs}
        for r, run in enumerate(rs.runs):
            t0 = int(te[r])
            if t0 > T:
                continue
            ix = mc.indexes.get(run)
            for t in range(t0, T + 1):
                table = centipede_exists_table(ix, Node(0, t0), range(n), depth, t)
                for s in seqs:
                    has = table[s]
                    where = lambda: f"{name} run {r} t={t} seq={(0,) + s}"  # noqa: E731
                    if know[s][t, r]:
                        need.record(has, where)
                    if has:
                        enough.record(bool(told[t0, s][t, r]), where)
                    if len(s) == depth:
                        w = find_centipede(ix, None, (0,) + s, t0, t)
                        witness.record((w is not None) == has and (w is None or not validate_centipede(ix, w, (0,) + s)),
                                       where)
    return CriterionResult(1, "knowledge gain", [need, enough, witness])


# ---------------------------------------------------------------------------
# 2. common knowledge needs, and under fip is given by, a centibroom


def _brute_broom(ix, origin: Node, group: Sequence[int], t_end: int) -> bool:
    legs = [Node(g, t_end) for g in group]
    return any(ix.syncausal_reach(origin, Node(i, t)) and all(ix.guarantee(Node(i, t), leg) for leg in legs)
               for t in range(ix.horizon + 1) for i in range(ix.n))


def criterion_2(ws: Workspace) -> CriterionResult:
    need = Check("common knowledge implies centibroom")
    enough = Check("centibroom implies common knowledge under fip")
    scan = Check("centibroom search matches a node-by-node scan")
    for name in KNOWLEDGE_SUITES:
        rs, mc = ws.load(name)
        n, T = rs.network.processes, rs.horizon
        e = ev_input(0, "e")
        te = _trigger_times(mc, e)
        starts = sorted({int(v) for v in te if v <= T})
        for G in _groups(n):
            ck = mc.table(C(G, NDOcc(e)))
            ck_at = {v: mc.table(C(G, At(v, NDOcc(e)))) for v in starts}
            for r, run in enumerate(rs.runs):
                t0 = int(te[r])
                if t0 > T:
                    continue
                ix = mc.indexes.get(run)
                for t in range(t0, T + 1):
                    w = find_centibroom(ix, None, 0, t0, G, t)
                    where = lambda: f"{name} run {r} G={G} t={t}"  # noqa: E731
                    if ck[t, r]:
                        need.record(w is not None, where)
                    if w is not None:
                        enough.record(bool(ck_at[t0][t, r]), where)
                    if r % 4 == 0:
                        scan.record((w is not None) == _brute_broom(ix, Node(0, t0), G, t), where)
    return CriterionResult(2, "common knowledge", [need, enough, scan])


# ---------------------------------------------------------------------------
# 3. the E^M bound on common knowledge, and its tightness


TIGHT_CASES = ((2, 2), (2, 3), (3, 2))


def criterion_3(ws: Workspace) -> CriterionResult:
    lazy = Check("tight instances by the lazy fip oracle: E^(M-1) holds, C fails")
    struct = Check("tight instances structurally: every length M-1 centipede, no centibroom")
    bound = Check("E^M occurred implies C ndocc at te+d")
    broom = Check("E^M occurred implies a centibroom at te+d")
    for d, g in TIGHT_CASES:
        tb = tight_bound(d, g)
        M = tb.m_bound
        e = input_key(tb.source, "e")
        oracle = LazyFipOracle(tb.scenario, d)
        run = oracle.run(tb.script)
        em1 = oracle.everyone(run, tb.group, M - 1, e)
        ck, _chain = oracle.common(run, tb.group, e)
        lazy.record(em1 and not ck, f"(d,g)=({d},{g}): E^{M - 1}={em1} C={ck}")
        ix = build_index(run)
        every = all(find_centipede(ix, None, (tb.source,) + s, 0, d) is not None
                    for s in itertools.product(tb.group, repeat=M - 1))
        none = find_centibroom(ix, None, tb.source, 0, tb.group, d) is None
        struct.record(every and none, f"(d,g)=({d},{g}): centipedes={every} no broom={none}")
    for name in KNOWLEDGE_SUITES:
        rs, mc = ws.load(name)
        n, T = rs.network.processes, rs.horizon
        e = ev_input(0, "e")
        te = _trigger_times(mc, e)
        for G in _groups(n, 2):
            ck = mc.table(C(G, NDOcc(e)))
            for d in range(1, T + 1):
                M = (d - 1) * (len(G) - 1) + 2
                em = mc.table(e_power(G, M, Occurred(e)))
                for r in np.flatnonzero(te + d <= T):
                    t = int(te[r]) + d
                    if not em[t, r]:
                        continue
                    where = f"{name} run {r} G={G} d={d}"
                    bound.record(bool(ck[t, r]), where)
                    ix = mc.indexes.get(rs.runs[r])
                    broom.record(find_centibroom(ix, None, 0, int(te[r]), G, t) is not None, where)
    return CriterionResult(3, "bound on common knowledge", [lazy, struct, bound, broom])


# ---------------------------------------------------------------------------
# 4. one step of communication yields exactly k levels of knowledge


def _explicit_everyone(states: np.ndarray, group: Sequence[int], base: np.ndarray, m: int) -> np.ndarray:
    """``E_G^m`` over possible worlds: ``states[i, r]`` is process ``i``'s state in run ``r``."""
    cur = base.copy()
    for _ in range(m):
        nxt = np.ones_like(cur)
        for i in group:
            ok: dict[int, bool] = {}
            for r, s in enumerate(states[i]):
                ok[int(s)] = ok.get(int(s), True) and bool(cur[r])
            nxt &= np.array([ok[int(s)] for s in states[i]])
        cur = nxt
    return cur


def criterion_4(ws: Workspace, k_top: int = 5) -> CriterionResult:
    checker = Check("model checker: E^k true and E^(k+1) false at time 1")
    worlds = Check("explicit possible worlds: E^k true and E^(k+1) false at time 1")
    rs = enumerate_runs(conway_scenario(k_max=7))
    mc = ModelChecker(rs)
    G, t = (0, 1), 1
    e = input_key(2, "e")
    base = np.array([any(ev.kind == INPUT and ev.key == e and ev.time <= t for ev in run.events)
                     for run in rs.runs])
    states = rs.state_table[t]
    for k in range(k_top + 1):
        picks = [r for r, run in enumerate(rs.runs) if run.initial[2] == k and base[r]]
        ek = _explicit_everyone(states, G, base, k)
        ek1 = _explicit_everyone(states, G, base, k + 1)
        for r in picks:
            got = (mc.check(r, t, e_power(G, k, Occurred(e))), mc.check(r, t, e_power(G, k + 1, Occurred(e))))
            checker.record(got == (True, False), f"k={k} run {r}: {got}")
            worlds.record((bool(ek[r]), bool(ek1[r])) == (True, False), f"k={k} run {r}")
    return CriterionResult(4, "one-step deep knowledge", [checker, worlds])


# ---------------------------------------------------------------------------
# 5. asynchronous and fixed-delay collapse


def _lamport_chain(ix, origin: Node, seq: Sequence[int], t_end: int) -> bool:
    """Happened-before chain through ``seq`` ending at ``(seq[-1], t_end)``."""
    front = [origin]
    for h, p in enumerate(seq):
        last = h == len(seq) - 1
        times = [t_end] if last else range(t_end + 1)
        front = [Node(p, t) for t in times if any(ix.lamport_reach(a, Node(p, t)) for a in front)]
        if not front:
            return False
    return True


def criterion_5(ws: Workspace, depth: int = 3) -> CriterionResult:
    shape = Check("asynchronous centipedes are happened-before chains")
    chains = Check("asynchronous nested knowledge has a happened-before chain")
    fixed = Check("fixed-delay nested knowledge implies a bound guarantee")
    fixed_ix = Check("fixed-delay nested knowledge implies a guarantee in the run")
    for name in ASYNC_SUITES:
        rs, mc = ws.load(name)
        n, T = rs.network.processes, rs.horizon
        e = ev_input(0, "e")
        te = _trigger_times(mc, e)
        seqs = _seqs(range(n), depth)
        know = {s: mc.table(nest(s, NDOcc(e))) for s in seqs}
        for r, run in enumerate(rs.runs):
            t0 = int(te[r])
            if t0 > T:
                continue
            ix = mc.indexes.get(run)
            for t in range(t0, T + 1):
                for s in seqs:
                    seq = (0,) + s
                    where = f"{name} run {r} t={t} seq={seq}"
                    w = find_centipede(ix, None, seq, t0, t)
                    if w is not None:
                        ok = all(b.proc == p for b, p in zip(w.body, seq)) and all(
                            ix.lamport_reach(a, b) for a, b in zip(w.body, w.body[1:]))
                        shape.record(ok, where)
                    if know[s][t, r]:
                        chains.record(_lamport_chain(ix, Node(0, t0), s, t), where)
    for name in FIXED_SUITES:
        rs, mc = ws.load(name)
        net = rs.network
        n, T = net.processes, rs.horizon
        e = ev_input(0, "e")
        te = _trigger_times(mc, e)
        for s in _seqs(range(n), depth):
            know = mc.table(nest(s, NDOcc(e)))
            for t, r in zip(*np.nonzero(know)):
                a, b = Node(0, int(te[r])), Node(s[-1], int(t))
                where = f"{name} run {r} t={t} seq={(0,) + s}"
                fixed.record(net.bound_guarantee(a, b), where)
                fixed_ix.record(mc.indexes.get(rs.runs[r]).guarantee(a, b), where)
    return CriterionResult(5, "collapse in asynchronous and fixed-delay contexts", [shape, chains, fixed, fixed_ix])


# ---------------------------------------------------------------------------
# 6. response problems


def _raw_firsts(run, token: str, proc: int, kind: str = INTERNAL) -> int | None:
    ts = [e.time for e in run.events if e.kind == kind and e.proc == proc and str(e.payload) == token]
    return min(ts) if ts else None


def _raw_or_ok(run, spec: ORSpec) -> bool:
    trig = _raw_firsts(run, spec.trigger.token, spec.trigger.proc, INPUT)
    firsts = [_raw_firsts(run, a.token, a.proc) for a in spec.responses]
    if trig is None:
        return all(f is None for f in firsts)
    return all(f is not None for f in firsts) and all(a <= b for a, b in zip(firsts, firsts[1:]))


def _raw_ogr_ok(run, spec: OGRSpec) -> bool:
    trig = _raw_firsts(run, spec.trigger.token, spec.trigger.proc, INPUT)
    acts = [[_raw_firsts(run, a.token, a.proc) for a in g] for g in spec.groups]
    if trig is None:
        return all(f is None for g in acts for f in g)
    if any(f is None for g in acts for f in g) or any(len(set(g)) != 1 for g in acts):
        return False
    return all(acts[h][0] <= acts[h + 1][0] for h in range(len(acts) - 1))


def _raw_clause(run, spec: ORSpec | SRSpec, clause: str) -> bool:
    """Independent confirmation that ``run`` breaks ``clause``."""
    trig = _raw_firsts(run, spec.trigger.token, spec.trigger.proc, INPUT)
    firsts = [_raw_firsts(run, a.token, a.proc) for a in spec.responses]
    if clause == "untriggered":
        return trig is None and any(f is not None for f in firsts)
    if clause == "occurrence":
        return trig is not None and any(f is None for f in firsts)
    if clause == "order":
        return any(a is not None and b is not None and a > b for a, b in zip(firsts, firsts[1:]))
    if clause == "simultaneity":
        return len(set(firsts)) > 1
    return False


def staged_gr() -> GRSpec:
    A = Action
    return GRSpec((A("x", 0), A("y", 1), A("p", 2), A("q", 3), A("w", 2)), frozenset({"x", "y"}),
                  (("x", "p"), ("y", "q"), ("p", "q"), ("q", "p"), ("p", "w")))


def criterion_6(ws: Workspace) -> CriterionResult:
    reference = Check("reference protocols pass their checkers")
    raw = Check("reference protocols pass a recheck from raw events")
    or_nk = Check("ordered response: nested knowledge at each response")
    or_sync = Check("ordered response: syncausal path from trigger to each response")
    or_cpede = Check("ordered response: validated centipede for each prefix")
    sr_ck = Check("simultaneous response: common knowledge and centibroom at the response")
    ogr_nck = Check("ordered group response: nested common knowledge at each group")
    ogr_gc = Check("ordered group response: generalized centipede for each prefix")
    gr_gc = Check("generalized response: generalized centipede along every component chain")
    violators = Check("violators are caught with the intended clause")
    recheck = Check("each counterexample is confirmed from raw events")

    trig = Action("e", 0)
    a, b, c = Action("a", 1), Action("b", 2), Action("c", 0)
    e = input_key(0, "e")
    for name in RESPONSE_SUITES:
        rs, mc = ws.load(name)
        te = _trigger_times(mc, e)

        spec = ORSpec(trig, (a, b))
        rrs = response_runset(non_hesitant_protocol(spec, rs, mc).protocol, rs)
        reference.record(check_solves_or(rrs, spec).solves, f"{name} OR")
        rmc = ModelChecker(rrs, mc.indexes)
        for r, run in enumerate(rrs.runs):
            raw.record(_raw_or_ok(run, spec), f"{name} OR run {r}")
            if te[r] > rrs.horizon:
                continue
            ix = rmc.indexes.get(rs.runs[r])
            seq = spec.sequence
            for h, act in enumerate(spec.responses, start=1):
                th = _raw_firsts(run, act.token, act.proc)
                where = f"{name} run {r} h={h}"
                or_nk.record(rmc.check(r, th, nest(seq[1:h + 1], NDOcc(e))), where)
                or_sync.record(ix.syncausal_reach(Node(0, int(te[r])), Node(seq[h], th)), where)
                w = find_centipede(ix, None, seq[:h + 1], int(te[r]), th)
                or_cpede.record(w is not None and not validate_centipede(ix, w, seq[:h + 1]), where)

        sr = SRSpec(trig, (a, b))
        rrs = response_runset(considerate_protocol(sr, rs, mc).protocol, rs)
        reference.record(check_solves_sr(rrs, sr).solves, f"{name} SR")
        rmc = ModelChecker(rrs, mc.indexes)
        as_ogr = OGRSpec(trig, (sr.responses,))
        for r, run in enumerate(rrs.runs):
            raw.record(_raw_ogr_ok(run, as_ogr), f"{name} SR run {r}")
            if te[r] > rrs.horizon:
                continue
            t = _raw_firsts(run, "a", 1)
            ix = rmc.indexes.get(rs.runs[r])
            ok = rmc.check(r, t, C(sr.group, NDOcc(e))) and \
                find_centibroom(ix, None, 0, int(te[r]), sr.group, t) is not None
            sr_ck.record(ok, f"{name} run {r}")

        og = OGRSpec(trig, ((a,), (b, c)))
        rrs = response_runset(group_considerate_protocol(og, rs, mc).protocol, rs)
        reference.record(check_solves_ogr(rrs, og).solves, f"{name} OGR")
        rmc = ModelChecker(rrs, mc.indexes)
        groups = og.proc_groups
        for r, run in enumerate(rrs.runs):
            raw.record(_raw_ogr_ok(run, og), f"{name} OGR run {r}")
            if te[r] > rrs.horizon:
                continue
            ix = rmc.indexes.get(rs.runs[r])
            for h, g in enumerate(og.groups, start=1):
                th = _raw_firsts(run, g[0].token, g[0].proc)
                where = f"{name} run {r} h={h}"
                ogr_nck.record(rmc.check(r, th, nest_common(groups[:h], NDOcc(e))), where)
                w = find_generalized_centipede(ix, rs.network, Node(0, int(te[r])), groups[:h], t_end=th)
                ogr_gc.record(w is not None, where)

        if name == "path3_0":
            _violators(rs, mc, violators, recheck)

    rs = enumerate_runs(staged_scenario())
    gmc = ModelChecker(rs)
    spec = staged_gr()
    cond = condense(spec)
    rrs = response_runset(gr_protocol(spec, rs, gmc).protocol, rs)
    reference.record(check_solves_gr(rrs, spec).solves and check_solves_gr(rrs, cond).solves, "staged GR")
    for r, run in enumerate(rrs.runs):
        when: dict[int, int | None] = {}
        together = True
        for ci, members in enumerate(cond.components):
            ts = {_raw_firsts(run, m, spec.event(m).proc, INPUT if m in spec.triggers else INTERNAL)
                  for m in members}
            together &= len(ts) == 1
            when[ci] = min(ts, key=lambda x: (x is None, x))
        ordered = all(not cond.order[p, q] or when[p] is None or when[q] is None or when[p] <= when[q]
                      for p in when for q in when)
        complete = all((when[q] is not None) == all(when[p] is not None for p in cond.predecessors(q))
                       for q in when if q not in cond.triggers)
        raw.record(together and ordered and complete, f"staged GR run {r}")
        ix = gmc.indexes.get(rs.runs[r])
        for ci in range(len(cond.components)):
            if ci in cond.triggers or when[ci] is None:
                continue
            for chain in component_chains(cond, ci):
                root = spec.event(cond.components[chain[0]][0])
                t0 = when[chain[0]]
                w = find_generalized_centipede(ix, rs.network, Node(root.proc, t0),
                                               [cond.procs(x) for x in chain[1:]], t_end=when[ci])
                gr_gc.record(w is not None, f"staged run {r} chain {chain}")
    checks = [reference, raw, or_nk, or_sync, or_cpede, sr_ck, ogr_nck, ogr_gc, gr_gc, violators, recheck]
    return CriterionResult(6, "response problems", checks)


def _violators(rs: RunSet, mc: ModelChecker, caught: Check, recheck: Check) -> None:
    e = input_key(0, "e")
    trig, a, b = Action("e", 0), Action("a", 1), Action("b", 2)
    spec = ORSpec(trig, (a, b))
    T, R = rs.horizon, len(rs)
    k1 = onset(mc, K(1, NDOcc(e)))
    k2 = onset(mc, K(2, NDOcc(e)))
    k21 = onset(mc, nest([1, 2], NDOcc(e)))
    late = np.where((k1 >= 0) & (k1 + 2 <= T), k1 + 2, -1)
    cases = [
        ("occurrence", spec, {a: k1, b: np.full(R, -1)}, [b]),
        ("order", spec, {a: late, b: k2}, []),
        ("untriggered", spec, {a: np.zeros(R, dtype=int), b: k21}, []),
        ("simultaneity", SRSpec(trig, (a, b)), {a: k1, b: k2}, []),
    ]
    for clause, sp, schedule, extra in cases:
        rrs = response_runset(scheduled_protocol(rs, schedule, extra), rs)
        v = check_solves_or(rrs, sp) if isinstance(sp, ORSpec) else check_solves_sr(rrs, sp)
        caught.record(not v.solves and v.clause == clause, f"{clause}: got {v.clause}")
        recheck.record(v.run is not None and _raw_clause(rrs.runs[v.run], sp, clause),
                       f"{clause}: run {v.run}")


# ---------------------------------------------------------------------------
# 7. simultaneous snapshots


def _transit_from_deliveries(run, t_star: int) -> dict[tuple[int, int], tuple]:
    out: dict[tuple[int, int], list] = {(ch.src, ch.dst): [] for ch in run.network.channels}
    for d in run.deliveries:
        ev = run.event_index[d.send]
        if ev.payload[0] != "bg" or ev.time >= t_star:
            continue
        if d.deliver_at is None or d.deliver_at > t_star:
            out[(d.send[1], d.send[2])].append(tuple(ev.payload[1]))
    return {k: tuple(sorted(v)) for k, v in out.items()}


def _scan_broom_delay(ix, origin: Node, n: int) -> int | None:
    for t_end in range(origin.time, ix.horizon + 1):
        if _brute_broom(ix, origin, range(n), t_end):
            return t_end - origin.time
    return None


def criterion_7(ws: Workspace, until: int = 6) -> CriterionResult:
    consistent = Check("algorithm 1 is consistent")
    transit = Check("algorithm 1 matches states and in-transit messages read from deliveries")
    optimal = Check("algorithm 2 delay equals the centibroom delay")
    optimal_scan = Check("algorithm 2 delay equals a node-by-node broom scan")
    v1_delay = Check("algorithm 1 delay is the initiator's diameter")
    no_worse = Check("algorithm 2 is never slower than algorithm 1")
    faster = Check("algorithm 2 is strictly faster somewhere on the star")
    for name, net in snapshot_nets().items():
        bg = default_background(net, until)
        diam = diameter(net, 0)
        rs1 = enumerate_snapshots(net, 1, 0, 0, bg)
        for r, run in enumerate(rs1.runs):
            init = initiation(run)
            if init is None:
                continue
            rec = extract_record(run)
            where = f"{name} v1 run {r}"
            consistent.record(check_snapshot_consistency(run, rec), where)
            ok = rec.t_star is not None and all(
                rec.states[j] == run.local(j, rec.t_star) for j in range(net.processes)) and all(
                rec.channel(s, d) == msgs for (s, d), msgs in _transit_from_deliveries(run, rec.t_star).items())
            transit.record(ok, where)
            v1_delay.record(rec.t_star is not None and rec.t_star - init[1] == diam, where)
        rs2 = enumerate_snapshots(net, 2, 0, 0, bg)
        probe = optimality_probe(rs2)
        optimal.record(probe.checked > 0 and not probe.violations, f"{name}: {probe.violations[:1]}")
        for r, run in enumerate(rs2.runs):
            init = initiation(run)
            if init is None:
                continue
            rec = extract_record(run)
            delay = None if rec.t_star is None else rec.t_star - init[1]
            where = f"{name} v2 run {r}"
            optimal_scan.record(delay == _scan_broom_delay(build_index(run), Node(*init), net.processes), where)
            no_worse.record(delay is not None and delay <= diam, where)
        if name == "star":
            faster.record(any(d < diam for d in probe.delays), f"star delays {sorted(set(probe.delays))}")
    return CriterionResult(7, "simultaneous snapshots",
                           [consistent, transit, optimal, optimal_scan, v1_delay, no_worse, faster])


# ---------------------------------------------------------------------------
# 8. knowledge of ignorance


def criterion_8(ws: Workspace) -> CriterionResult:
    front = Check("causal-front certificate agrees with knowing no happened-before")
    ignorance = Check("ignorance certificate agrees with the direct knowledge formula")
    literal = Check("knowing a happened-before chain iff the chain reaches the observer")
    contact = Check("knowing a happened-before chain iff a contact chain exists")
    for name in MIN_ONLY_SUITES:
        rs, mc = ws.load(name)
        n, T = rs.network.processes, rs.horizon
        nodes = [Node(i, t) for t in range(T + 1) for i in range(n)]
        e = ev_input(0, "e")
        for r in ws.sample(rs.runs):
            ix = mc.indexes.get(rs.runs[r])
            for a, b, c in itertools.product(nodes, repeat=3):
                where = f"{name} run {r} theta0={tuple(a)} theta1={tuple(b)} theta2={tuple(c)}"
                cert = knows_not_reach(ix, None, rs, c, a, b, mc, strict=False)
                front.record(bool(cert.agrees), where)
                if a.proc != b.proc:
                    known, chain = causal_tr(ix, mc, a, b, c)
                    literal.record(known == chain, where)
                    contact.record(known == contact_chain(ix, a, b, c), where)
            for b, c in itertools.product(nodes, repeat=2):
                rep = knows_ignorance(ix, None, rs, c, 0, e, b, mc=mc, strict=False)
                ignorance.record(rep.agrees, f"{name} run {r} theta1={tuple(b)} theta2={tuple(c)}")
    return CriterionResult(8, "knowledge of ignorance", [front, ignorance, literal, contact])


# ---------------------------------------------------------------------------
# 9. foundational invariants and worked examples


INVARIANT_SUITES = ("path3", "cycle3", "async_path", "fixed_path", "bypass")


def _ts_formulas(e: tuple) -> list[Formula]:
    return [Occurred(e), NDOcc(e), K(1, Occurred(e)), Not(K(2, NDOcc(e))), TimeIs(2), C((0, 1), NDOcc(e))]


def criterion_9(ws: Workspace) -> CriterionResult:
    step = Check("syncausal steps never go back in time nor sideways")
    cones = Check("cone identities")
    local = Check("equal past cones give equal local states")
    exist = Check("bridges exist and a node bridges itself")
    early = Check("nontrivial bridges are entered by an early receive")
    equiv = Check("centipede search matches brute force")
    guar = Check("bound guarantee implies syncausality")
    ts = Check("TS1 to TS3 are valid")
    ts4 = Check("TS4 is valid under fip")
    cp = Check("equal centibroom pasts give equal common knowledge")
    examples = Check("worked examples")

    for name in INVARIANT_SUITES:
        rs, mc = ws.load(name)
        n, T = rs.network.processes, rs.horizon
        nodes = [Node(i, t) for t in range(T + 1) for i in range(n)]
        for r in ws.sample(rs.runs, 120):
            run = rs.runs[r]
            ix = mc.indexes.get(run)
            for a in nodes:
                fa = ix.fut_mask(a)
                for b in nodes:
                    where = f"{name} run {r} {tuple(a)} {tuple(b)}"
                    reach = ix.syncausal_reach(a, b)
                    if reach:
                        step.record(a.time < b.time or (a.time == b.time and a.proc == b.proc), where)
                        bs = ix.bridges(a, b)
                        exist.record(bool(bs) and (a != b or bs == [a]), where)
                        for beta in bs:
                            if beta != a:
                                early.record(any(
                                    ev.kind == RECV and ev.node == beta and is_nd_event(run, ev)
                                    and ix.syncausal_reach(a, Node(ev.peer, ev.key[3])) for ev in run.events), where)
                    cones.record(reach == bool(fa & ix.past_mask(b)), where)
                    if ix.guarantee(a, b):
                        guar.record(reach, where)
                cones.record(fa & ix.past_mask(a) == 1 << ix.vid(a), f"{name} run {r} {tuple(a)}")
        for a in nodes:
            seen: dict = {}
            for r, run in enumerate(rs.runs):
                ix = mc.indexes.get(run)
                key = (ix.past_cone(a), ix.nd_past(a))
                local.record(seen.setdefault(key, run.local(*a)) == run.local(*a), f"{name} run {r} {tuple(a)}")
        e = ev_input(0, "e")
        for f in _ts_formulas(e):
            for t in range(T + 1):
                ts.record(mc.valid(At(t, _iff(f, At(t, f)))), f"{name} TS1 {f} t={t}")
                for t2 in range(T + 1):
                    ts.record(mc.valid(_iff(At(t2, At(t, f)), At(t, f))), f"{name} TS2 {f} {t2} {t}")
                for i in range(n):
                    ts.record(mc.valid(At(t, _iff(K(i, f), K(i, At(t, f))))), f"{name} TS3 {f} {i} t={t}")
                    if rs.scenario.protocol.name == "fip":
                        for t2 in range(t, T + 1):
                            ts4.record(mc.valid(Implies(At(t, K(i, f)), At(t2, K(i, At(t, K(i, f)))))),
                                       f"{name} TS4 {f} {i} {t}->{t2}")

    for name in ("path3", "bypass"):
        rs, mc = ws.load(name)
        T = rs.horizon
        e = ev_input(0, "e")
        seqs = _seqs(range(rs.network.processes), 3)
        for r in ws.sample(rs.runs, 15):
            ix = mc.indexes.get(rs.runs[r])
            for s in seqs:
                for t0 in range(T + 1):
                    for t1 in range(t0, T + 1):
                        got = find_centipede(ix, None, (0,) + s, t0, t1) is not None
                        equiv.record(got == brute_force_centipede(ix, (0,) + s, t0, t1),
                                     f"{name} run {r} seq={(0,) + s} [{t0},{t1}]")
        for G in _groups(rs.network.processes, 2):
            fs = [C(G, NDOcc(e)), C(G, Occurred(e)), C(G, At(1, NDOcc(e)))]
            tables = [mc.table(f) for f in fs]
            for t in range(T + 1):
                seen = {}
                for r, run in enumerate(rs.runs):
                    key = centibroom_past(mc.indexes.get(run), None, t, G)
                    val = tuple(bool(tab[t, r]) for tab in tables)
                    cp.record(seen.setdefault(key, val) == val, f"{name} run {r} G={G} t={t}")

    _examples(examples)
    return CriterionResult(9, "foundational invariants and worked examples",
                           [step, cones, local, exist, early, equiv, guar, ts, ts4, cp, examples])


def _examples(check: Check) -> None:
    d = deposit_net().max_distance(CHARLIE, BOB)
    check.record(d == 9, f"D(Charlie, Bob) = {d}")

    run = generate_run(supervisor_scenario(), supervisor_script())
    ix = build_index(run)
    first = next(((t, w) for t in range(ix.horizon + 1)
                  if (w := find_centipede(ix, None, [CHARLIE, BOB, ALICE], 0, t)) is not None), None)
    want = (Node(CHARLIE, 0), Node(SUSAN, 3), Node(ALICE, 7))
    check.record(first is not None and first[0] == 7 and first[1].body == want,
                 f"first centipede {None if first is None else (first[0], first[1].body)}")

    sc = cheque_scenario()
    rs = enumerate_runs(sc)
    mc = ModelChecker(rs)
    target = generate_run(sc, cheque_script(), interner=rs.interner)
    r = next(k for k, x in enumerate(rs.runs) if x.states == target.states)
    f = nest([BOB, ALICE], NDOcc(input_key(CHARLIE, "e")))
    values = [mc.check(r, t, f) for t in range(rs.horizon + 1)]
    check.record(values == [False] * 10 + [True], f"Alice knows Bob knows at {values}")

    run = generate_run(supervisor_scenario(heartbeat=True), heartbeat_script())
    ix = build_index(run)
    edge = (Node(SUSAN, 2), Node(ALICE, 7))
    check.record(edge in ix.edges.timeout and ix.syncausal_reach(*edge) and not ix.lamport_reach(*edge),
                 "timeout edge from Susan at 2 to Alice at 7")


# ---------------------------------------------------------------------------
# driver


CRITERIA: dict[int, Callable[[Workspace], CriterionResult]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9,
}


def run_criterion(number: int, ws: Workspace | None = None) -> CriterionResult:
    ws = ws or Workspace()
    start = time.perf_counter()
    res = CRITERIA[number](ws)
    res.seconds = time.perf_counter() - start
    return res


def run_battery(numbers: Iterable[int] | None = None, scale: str = "small") -> list[CriterionResult]:
    ws = Workspace(scale)
    return [run_criterion(k, ws) for k in (numbers or sorted(CRITERIA))]
