"""Finite model checking of knowledge formulas over an enumerated run set.

Each formula is evaluated to a boolean table of shape ``[horizon + 1, runs]``.
``K_i`` reduces the operand table over the classes of equal local state of
``i``; ``C_G`` reduces it over connected components of the union of the
members' partitions at each round.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .causality import IndexCache
from .network import Node
from .runtime import (INPUT, RECV, SEND, FipProtocol, Machine, Run, RunSet, Scenario, Script,
                      generate_run, input_key, internal_key, recv_key, send_key)


class FormulaError(ValueError):
    """A formula is ill-formed for the run set it is checked against."""


# ---------------------------------------------------------------------------
# formulas


class Formula:
    def __and__(self, other: "Formula") -> "Formula":
        return And((self, other))

    def __or__(self, other: "Formula") -> "Formula":
        return Or((self, other))

    def __invert__(self) -> "Formula":
        return Not(self)

    def __rshift__(self, other: "Formula") -> "Formula":
        return Implies(self, other)


@dataclass(frozen=True)
class Const(Formula):
    value: bool


TRUE = Const(True)
FALSE = Const(False)


@dataclass(frozen=True)
class Occurred(Formula):
    event: tuple


@dataclass(frozen=True)
class Occurs(Formula):
    event: tuple


@dataclass(frozen=True)
class NDOcc(Formula):
    event: tuple


@dataclass(frozen=True)
class TimeIs(Formula):
    t: int


@dataclass(frozen=True)
class Reach(Formula):
    """``a`` happened-before ``b`` in the run."""

    a: Node
    b: Node


@dataclass(frozen=True)
class Defined(Formula):
    """A proposition whose truth table was supplied with :meth:`ModelChecker.define`."""

    name: str


@dataclass(frozen=True)
class Not(Formula):
    f: Formula


@dataclass(frozen=True)
class And(Formula):
    fs: tuple[Formula, ...]


@dataclass(frozen=True)
class Or(Formula):
    fs: tuple[Formula, ...]


@dataclass(frozen=True)
class Implies(Formula):
    a: Formula
    b: Formula


@dataclass(frozen=True)
class At(Formula):
    t: int
    f: Formula


@dataclass(frozen=True)
class K(Formula):
    i: int
    f: Formula


@dataclass(frozen=True)
class E(Formula):
    group: tuple[int, ...]
    f: Formula


@dataclass(frozen=True)
class C(Formula):
    group: tuple[int, ...]
    f: Formula


def nest(seq: Sequence[int], f: Formula) -> Formula:
    """``K_{i_k} ... K_{i_1} f`` for ``seq = [i_1..i_k]``."""
    for i in seq:
        f = K(i, f)
    return f


def nest_common(groups: Sequence[Sequence[int]], f: Formula) -> Formula:
    """``C_{G_k} ... C_{G_1} f`` for ``groups = [G_1..G_k]``."""
    for g in groups:
        f = C(tuple(g), f)
    return f


def e_power(group: Sequence[int], m: int, f: Formula) -> Formula:
    """``E_G^m f`` with ``E_G^0 f = f``."""
    for _ in range(m):
        f = E(tuple(group), f)
    return f


def occurred_by(event: tuple, t: int) -> Formula:
    return At(t, Occurred(event))


def knows_at(node: Node, f: Formula) -> Formula:
    """Node-indexed knowledge: ``K_(i,t) f`` is ``at[t] K_i f``."""
    return At(node[1], K(node[0], f))


def ev_input(proc: int, token: str) -> tuple:
    return input_key(proc, token)


# ---------------------------------------------------------------------------
# checker


class ModelChecker:
    """Evaluates formulas over every point of a run set."""

    def __init__(self, runset: RunSet, indexes: IndexCache | None = None):
        self.runset = runset
        self.T = runset.horizon
        self.R = len(runset.runs)
        self.n = runset.network.processes
        self.indexes = indexes or IndexCache()
        table = runset.state_table
        self.codes = np.zeros_like(table)
        self.ncls = np.zeros((self.T + 1, self.n), dtype=np.int64)
        for t in range(self.T + 1):
            for i in range(self.n):
                uniq, inv = np.unique(table[t, i], return_inverse=True)
                self.codes[t, i] = inv
                self.ncls[t, i] = len(uniq)
        self._memo: dict[Formula, np.ndarray] = {}
        self._occ: dict[tuple, np.ndarray] = {}
        self._nd: dict[tuple, np.ndarray] = {}
        self._comp: dict[tuple[int, tuple[int, ...]], np.ndarray] = {}

    # ---- public -----------------------------------------------------------

    def table(self, f: Formula) -> np.ndarray:
        got = self._memo.get(f)
        if got is None:
            got = self._eval(f)
            got.setflags(write=False)
            self._memo[f] = got
        return got

    def define(self, name: str, table: np.ndarray) -> Defined:
        """Register a ``[horizon + 1, runs]`` truth table under ``name``."""
        table = np.asarray(table, dtype=bool)
        if table.shape != (self.T + 1, self.R):
            raise FormulaError(f"table for {name!r} has shape {table.shape}, want {(self.T + 1, self.R)}")
        atom = Defined(name)
        if atom in self._memo and not np.array_equal(self._memo[atom], table):
            raise FormulaError(f"proposition {name!r} is already defined differently")
        table = table.copy()
        table.setflags(write=False)
        self._memo[atom] = table
        return atom

    def check(self, run: int | Run, t: int, f: Formula) -> bool:
        r = run.index if isinstance(run, Run) else run
        self._check_time(t)
        return bool(self.table(f)[t, r])

    def valid(self, f: Formula) -> bool:
        return bool(self.table(f).all())

    def g_reachable(self, run: int, t: int, group: Sequence[int]) -> list[int]:
        group = tuple(sorted(set(group)))
        if not group:
            return [run]
        comp = self.components(t, group)
        return [int(r) for r in np.flatnonzero(comp == comp[run])]

    def components(self, t: int, group: tuple[int, ...]) -> np.ndarray:
        key = (t, group)
        comp = self._comp.get(key)
        if comp is None:
            rows, cols = [], []
            offset = self.R
            for i in group:
                rows.append(np.arange(self.R))
                cols.append(offset + self.codes[t, i])
                offset += int(self.ncls[t, i])
            r = np.concatenate(rows)
            c = np.concatenate(cols)
            graph = coo_matrix((np.ones(len(r)), (r, c)), shape=(offset, offset))
            _, labels = connected_components(graph, directed=False)
            comp = labels[: self.R]
            self._comp[key] = comp
        return comp

    # ---- helpers ----------------------------------------------------------

    def _check_time(self, t: int) -> None:
        if not 0 <= t <= self.T:
            raise FormulaError(f"time {t} outside [0, {self.T}]")

    def _check_proc(self, i: int) -> None:
        if not 0 <= i < self.n:
            raise FormulaError(f"process {i} not in the network")

    def occurrence_times(self, key: tuple) -> np.ndarray:
        got = self._occ.get(key)
        if got is None:
            big = self.T + 1
            got = np.full(self.R, big, dtype=np.int64)
            nd = np.full(self.R, big, dtype=np.int64)
            for r, run in enumerate(self.runset.runs):
                e = run.occurrence(key)
                if e is not None:
                    got[r] = e.time
                    if e.kind == INPUT or (e.kind == RECV and e.time < key[3] + run.network.channel(key[1], key[2]).max):
                        nd[r] = e.time
            self._occ[key] = got
            self._nd[key] = nd
        return got

    def nd_times(self, key: tuple) -> np.ndarray:
        self.occurrence_times(key)
        return self._nd[key]

    def _group_all(self, codes: np.ndarray, ncls: int, row: np.ndarray) -> np.ndarray:
        bad = np.bincount(codes, weights=(~row).astype(np.float64), minlength=ncls) > 0
        return ~bad[codes]

    def _eval(self, f: Formula) -> np.ndarray:
        T1, R = self.T + 1, self.R
        times = np.arange(T1)[:, None]
        if isinstance(f, Const):
            return np.full((T1, R), f.value)
        if isinstance(f, Occurred):
            return self.occurrence_times(f.event)[None, :] <= times
        if isinstance(f, Occurs):
            return self.occurrence_times(f.event)[None, :] == times
        if isinstance(f, NDOcc):
            return self.nd_times(f.event)[None, :] <= times
        if isinstance(f, TimeIs):
            self._check_time(f.t)
            return np.broadcast_to(times == f.t, (T1, R)).copy()
        if isinstance(f, Reach):
            for nd in (f.a, f.b):
                self._check_proc(nd[0])
                self._check_time(nd[1])
            row = np.array([self.indexes.get(run).lamport_reach(Node(*f.a), Node(*f.b))
                            for run in self.runset.runs], dtype=bool)
            return np.broadcast_to(row, (T1, R)).copy()
        if isinstance(f, Defined):
            raise FormulaError(f"proposition {f.name!r} was never defined")
        if isinstance(f, Not):
            return ~self.table(f.f)
        if isinstance(f, And):
            out = np.ones((T1, R), dtype=bool)
            for g in f.fs:
                out &= self.table(g)
            return out
        if isinstance(f, Or):
            out = np.zeros((T1, R), dtype=bool)
            for g in f.fs:
                out |= self.table(g)
            return out
        if isinstance(f, Implies):
            return ~self.table(f.a) | self.table(f.b)
        if isinstance(f, At):
            self._check_time(f.t)
            return np.broadcast_to(self.table(f.f)[f.t], (T1, R)).copy()
        if isinstance(f, K):
            self._check_proc(f.i)
            sub = self.table(f.f)
            out = np.empty((T1, R), dtype=bool)
            for t in range(T1):
                out[t] = self._group_all(self.codes[t, f.i], int(self.ncls[t, f.i]), sub[t])
            return out
        if isinstance(f, E):
            out = np.ones((T1, R), dtype=bool)
            for i in f.group:
                out &= self.table(K(i, f.f))
            return out
        if isinstance(f, C):
            group = tuple(sorted(set(f.group)))
            for i in group:
                self._check_proc(i)
            sub = self.table(f.f)
            if not group:
                return sub.copy()
            out = np.empty((T1, R), dtype=bool)
            for t in range(T1):
                comp = self.components(t, group)
                out[t] = self._group_all(comp, int(comp.max()) + 1, sub[t])
            return out
        raise FormulaError(f"unknown formula node {f!r}")


def check(runset: RunSet | ModelChecker, run: int, t: int, f: Formula) -> bool:
    mc = runset if isinstance(runset, ModelChecker) else ModelChecker(runset)
    return mc.check(run, t, f)


def g_reachable(runset: RunSet | ModelChecker, run: int, t: int, group: Sequence[int]) -> list[int]:
    mc = runset if isinstance(runset, ModelChecker) else ModelChecker(runset)
    return mc.g_reachable(run, t, group)


def holds_nested_common(runset: RunSet | ModelChecker, run: int, t: int,
                        groups: Sequence[Sequence[int]], f: Formula) -> bool:
    mc = runset if isinstance(runset, ModelChecker) else ModelChecker(runset)
    return mc.check(run, t, nest_common(groups, f))


# ---------------------------------------------------------------------------
# text syntax


_TOKEN = re.compile(r"\s*(->|<->|K\[|E\[|C\[|at\[|[A-Za-z_][A-Za-z_0-9]*|\d+|[()\[\]{},&|!=:])")


class _Parser:
    def __init__(self, text: str, resolve: Callable[[str, list], tuple]):
        self.text = text
        self.toks: list[tuple[str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m:
                if text[pos:].strip() == "":
                    break
                raise FormulaError(f"unexpected character at position {pos}: {text[pos:pos + 10]!r}")
            self.toks.append((m.group(1), m.start(1)))
            pos = m.end()
        self.i = 0
        self.resolve = resolve

    def peek(self) -> str | None:
        return self.toks[self.i][0] if self.i < len(self.toks) else None

    def take(self, want: str | None = None) -> str:
        if self.i >= len(self.toks):
            raise FormulaError(f"unexpected end of formula, expected {want or 'more input'}")
        tok, pos = self.toks[self.i]
        if want is not None and tok != want:
            raise FormulaError(f"expected {want!r} at position {pos}, found {tok!r}")
        self.i += 1
        return tok

    def number(self) -> int:
        tok = self.take()
        if not tok.isdigit():
            raise FormulaError(f"expected a number, found {tok!r}")
        return int(tok)

    def parse(self) -> Formula:
        f = self.implication()
        if self.peek() is not None:
            raise FormulaError(f"trailing input at position {self.toks[self.i][1]}")
        return f

    def implication(self) -> Formula:
        left = self.disjunction()
        if self.peek() == "->":
            self.take()
            return Implies(left, self.implication())
        return left

    def disjunction(self) -> Formula:
        parts = [self.conjunction()]
        while self.peek() == "|":
            self.take()
            parts.append(self.conjunction())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def conjunction(self) -> Formula:
        parts = [self.unary()]
        while self.peek() == "&":
            self.take()
            parts.append(self.unary())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def group(self) -> tuple[int, ...]:
        self.take("{")
        items: list[int] = []
        while self.peek() != "}":
            items.append(self.number())
            if self.peek() == ",":
                self.take()
        self.take("}")
        self.take("]")
        return tuple(items)

    def unary(self) -> Formula:
        tok = self.peek()
        if tok == "!":
            self.take()
            return Not(self.unary())
        if tok == "K[":
            self.take()
            i = self.number()
            self.take("]")
            return K(i, self.unary())
        if tok in ("E[", "C["):
            self.take()
            g = self.group()
            return (E if tok == "E[" else C)(g, self.unary())
        if tok == "at[":
            self.take()
            t = self.number()
            self.take("]")
            return At(t, self.unary())
        return self.atom()

    def node(self) -> Node:
        self.take("(")
        i = self.number()
        self.take(",")
        t = self.number()
        self.take(")")
        return Node(i, t)

    def args(self) -> list:
        self.take("(")
        out: list = []
        while self.peek() != ")":
            tok = self.take()
            if tok == ":":
                out.append(":")
            elif tok != ",":
                out.append(int(tok) if tok.isdigit() else tok)
        self.take(")")
        return out

    def atom(self) -> Formula:
        tok = self.take()
        if tok == "(":
            f = self.implication()
            self.take(")")
            return f
        if tok == "true":
            return TRUE
        if tok == "false":
            return FALSE
        if tok == "time":
            self.take("=")
            return TimeIs(self.number())
        if tok == "reach":
            self.take("(")
            a = self.node()
            self.take(",")
            b = self.node()
            self.take(")")
            return Reach(a, b)
        if tok in ("occ", "occurred", "occurs", "ndocc"):
            key = self.resolve(tok, self.args())
            return {"occ": Occurred, "occurred": Occurred, "occurs": Occurs, "ndocc": NDOcc}[tok](key)
        raise FormulaError(f"unknown atom {tok!r}")


def event_resolver(runset: RunSet | None) -> Callable[[str, list], tuple]:
    """Resolve event references: ``e`` (unique input token), ``2:e`` (input at
    process 2), ``send(src,dst,t[,seq])``, ``recv(src,dst,t[,seq])``,
    ``internal(proc,t,token)``."""

    def resolve(_atom: str, args: list) -> tuple:
        if len(args) == 3 and args[1] == ":":
            return input_key(int(args[0]), str(args[2]))
        if len(args) == 1 and isinstance(args[0], str):
            token = args[0]
            procs = sorted({s.proc for s in runset.scenario.inputs if s.token == token}) if runset else []
            if len(procs) != 1:
                raise FormulaError(f"input token {token!r} is ambiguous or unknown; use proc:token")
            return input_key(procs[0], token)
        raise FormulaError(f"cannot resolve event reference {args!r}")

    return resolve


def parse_formula(text: str, runset: RunSet | None = None) -> Formula:
    text = _expand_message_refs(text)
    return _Parser(text, _resolver_with_messages(runset)).parse()


_MSG_REF = re.compile(r"\b(send|recv|internal)\(([^()]*)\)")


def _expand_message_refs(text: str) -> str:
    # occ(recv(0,1,2)) -> occ(recv:0:1:2) so the token grammar stays flat
    return _MSG_REF.sub(lambda m: m.group(1) + ":" + ":".join(x.strip() for x in m.group(2).split(",")), text)


def _resolver_with_messages(runset: RunSet | None) -> Callable[[str, list], tuple]:
    base = event_resolver(runset)

    def resolve(atom: str, args: list) -> tuple:
        if args and args[0] in ("send", "recv", "internal"):
            parts = [a for a in args[1:] if a != ":"]
            kind = args[0]
            if kind == "internal":
                if len(parts) != 3:
                    raise FormulaError("internal(proc,t,token) takes three arguments")
                return internal_key(int(parts[0]), int(parts[1]), parts[2])
            if len(parts) not in (3, 4):
                raise FormulaError(f"{kind}(src,dst,t[,seq]) takes three or four arguments")
            src, dst, t = (int(p) for p in parts[:3])
            seq = int(parts[3]) if len(parts) == 4 else 0
            return (send_key if kind == "send" else recv_key)(src, dst, t, seq)
        return base(atom, args)

    return resolve


# ---------------------------------------------------------------------------
# exact nested knowledge under fip at a single point


class LazyFipOracle:
    """Nested and common knowledge of ``occurred(e)`` under fip, without
    enumerating the run set.

    For a run ``r`` and observer ``j`` at time ``t``, the lazy run keeps every
    delivery and input inside the happened-before past of ``(j, t)`` and makes
    every other message arrive as late as its bound allows, dropping inputs
    outside that past. Truth of formulas built from ``occurred`` with ``K``
    and conjunction is preserved when deliveries become earlier or inputs are
    added, so the lazy run is the hardest case: ``K_j phi`` fails at ``r``
    exactly when ``phi`` fails at the lazy run.
    """

    def __init__(self, scenario: Scenario, t_eval: int):
        if not isinstance(scenario.protocol, FipProtocol):
            raise FormulaError("the lazy oracle applies to fip scenarios only")
        if any(len(v) != 1 for v in scenario.initial):
            raise FormulaError("the lazy oracle needs a single initial state per process")
        if not 0 <= t_eval <= scenario.horizon:
            raise FormulaError(f"time {t_eval} outside [0, {scenario.horizon}]")
        self.scenario = scenario
        self.t = t_eval
        self.machine = Machine(scenario)
        self.indexes = IndexCache()
        self._lazy: dict[tuple, Run] = {}
        self._checked = 0

    def run(self, script: Script) -> Run:
        return generate_run(self.scenario, script, machine=self.machine)

    @staticmethod
    def signature(run: Run) -> tuple:
        return (run.inputs, run.comm_signature())

    def lazy(self, run: Run, j: int) -> Run:
        key = (self.signature(run), j)
        got = self._lazy.get(key)
        if got is not None:
            return got
        if run.interner is not self.machine.interner:
            # state ids are only comparable within one interner
            run = self.run(Script(run.initial, run.inputs,
                                  {d.send: d.deliver_at for d in run.deliveries}, "max"))
        ix = self.indexes.get(run)
        past = ix.past_mask(Node(j, self.t), "lamport")
        inside = lambda p, t: bool(past >> ix.vid(Node(p, t)) & 1)  # noqa: E731
        deliveries: dict[tuple, int | None] = {}
        for d in run.deliveries:
            if d.deliver_at is not None and d.deliver_at <= self.t and inside(d.send[2], d.deliver_at):
                deliveries[d.send] = d.deliver_at
        inputs = tuple((p, tok, t) for p, tok, t in run.inputs if t <= self.t and inside(p, t))
        lazy = self.run(Script(run.initial, inputs, deliveries, "max"))
        if lazy.local(j, self.t) != run.local(j, self.t):
            raise AssertionError("lazy run is distinguishable by its observer")
        self._checked += 1
        self._lazy[key] = lazy
        return lazy

    def nested(self, run: Run, seq: Sequence[int], event: tuple) -> bool:
        """``K_{s_k} ... K_{s_1} occurred(e)`` at ``(run, t)``."""
        cur = run
        for j in reversed(list(seq)):
            cur = self.lazy(cur, j)
        e = cur.occurrence(event)
        return e is not None and e.time <= self.t

    def everyone(self, run: Run, group: Sequence[int], m: int, event: tuple) -> bool:
        return all(self.nested(run, seq, event) for seq in itertools.product(group, repeat=m))

    def common(self, run: Run, group: Sequence[int], event: tuple) -> tuple[bool, list[tuple[int, Run]]]:
        """``C_G occurred(e)``; on failure also a chain of (observer, run)
        steps ending in a run where ``e`` has not occurred by ``t``."""
        start = self.signature(run)
        parent: dict[tuple, tuple[tuple, int, Run] | None] = {start: None}
        runs = {start: run}
        queue = [start]
        while queue:
            sig = queue.pop(0)
            cur = runs[sig]
            e = cur.occurrence(event)
            if e is None or e.time > self.t:
                chain: list[tuple[int, Run]] = []
                while parent[sig] is not None:
                    prev, j, r = parent[sig]
                    chain.append((j, r))
                    sig = prev
                return False, chain[::-1]
            for j in group:
                nxt = self.lazy(cur, j)
                ns = self.signature(nxt)
                if ns not in parent:
                    parent[ns] = (sig, j, nxt)
                    runs[ns] = nxt
                    queue.append(ns)
        return True, []
