import itertools
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from centilab.catalog import ALICE, BOB, CHARLIE, cheque_scenario, cheque_script, conway_scenario, suite
from centilab.epistemics import (
    C, E, FALSE, TRUE, At, FormulaError, K, LazyFipOracle, ModelChecker, Not, Occurred, TimeIs,
    e_power, ev_input, g_reachable, holds_nested_common, nest, parse_formula,
)
from centilab.network import Node
from centilab.runtime import Script, enumerate_runs, generate_run


@lru_cache(maxsize=None)
def checker(name):
    return ModelChecker(enumerate_runs(suite(name)))


@lru_cache(maxsize=None)
def conway_checker():
    return ModelChecker(enumerate_runs(conway_scenario()))


E0 = ev_input(0, "e")


def naive_k(mc, i, table):
    """K_i by grouping runs on their raw local-state id."""
    states = mc.runset.state_table
    out = np.zeros_like(table)
    for t in range(mc.T + 1):
        worlds = {}
        for r in range(mc.R):
            worlds.setdefault(int(states[t, i, r]), []).append(r)
        for rs in worlds.values():
            ok = all(table[t, r] for r in rs)
            for r in rs:
                out[t, r] = ok
    return out


def naive_c(mc, group, table):
    """C_G with a union-find over runs sharing some member's local state."""
    states = mc.runset.state_table
    out = np.zeros_like(table)
    for t in range(mc.T + 1):
        parent = list(range(mc.R))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for i in group:
            first = {}
            for r in range(mc.R):
                r0 = first.setdefault(int(states[t, i, r]), r)
                parent[find(r)] = find(r0)
        good = {}
        for r in range(mc.R):
            good[find(r)] = good.get(find(r), True) and bool(table[t, r])
        for r in range(mc.R):
            out[t, r] = good[find(r)]
    return out


def test_occurred_switches_on_at_the_input():
    mc = checker("path3")
    for r, run in enumerate(mc.runset.runs):
        for _, tok, t in run.inputs:
            assert mc.check(r, t, Occurred(E0))
            if t > 0:
                assert not mc.check(r, t - 1, Occurred(E0))


def test_time_travel_collapses():
    mc = checker("path3")
    phi = K(2, Occurred(E0))
    for t, t2 in itertools.product(range(mc.T + 1), repeat=2):
        assert np.array_equal(mc.table(At(t2, At(t, phi))), mc.table(At(t, phi)))


def test_conway_depth_three():
    mc = conway_checker()
    r = next(i for i, run in enumerate(mc.runset.runs) if run.initial[2] == 3 and run.inputs)
    assert mc.check(r, 1, e_power((0, 1), 3, Occurred(ev_input(2, "e"))))
    assert not mc.check(r, 1, e_power((0, 1), 4, Occurred(ev_input(2, "e"))))


def test_cheque_becomes_safe_at_ten():
    mc = ModelChecker(enumerate_runs(cheque_scenario()))
    run = generate_run(cheque_scenario(), cheque_script())
    r = next(i for i, x in enumerate(mc.runset.runs) if x.comm_signature() == run.comm_signature())
    phi = K(ALICE, K(BOB, Occurred(ev_input(CHARLIE, "e"))))
    assert not mc.check(r, 9, phi)
    assert mc.check(r, 10, phi)


def test_g_reachable_edges():
    mc = checker("path3")
    assert g_reachable(mc, 3, 2, []) == [3]
    assert 3 in g_reachable(mc, 3, 2, [0, 1])
    single = ModelChecker(enumerate_runs(conway_scenario(0)))
    assert len(single.runset) == 2
    assert holds_nested_common(single, 0, 1, [], TRUE)


def test_horizon_guard():
    mc = checker("path3")
    with pytest.raises(FormulaError):
        mc.check(0, 0, At(mc.T + 1, TRUE))
    with pytest.raises(FormulaError):
        mc.check(0, mc.T + 1, TRUE)
    with pytest.raises(FormulaError):
        mc.table(K(9, TRUE))
    with pytest.raises(FormulaError):
        mc.table(TimeIs(mc.T + 3))


def test_parser():
    rs = checker("path3").runset
    f = parse_formula("K[2] E[{1,2}] occ(e) -> !C[{0}] at[3] ndocc(0:e) & time=2 | false", rs)
    assert f.a == K(2, E((1, 2), Occurred(E0)))
    assert parse_formula("occurred(recv(0,1,2))", rs) == Occurred(("recv", 0, 1, 2, 0))
    assert parse_formula("reach((0,0),(1,2))").a == Node(0, 0)
    for bad in ("K[2", "occ(zz)", "foo", "occ(e) occ(e)", "K[x] true"):
        with pytest.raises(FormulaError):
            parse_formula(bad, rs)


def test_common_closure_versus_powers():
    mc = checker("path3")
    phi = Occurred(E0)
    c = mc.table(C((1, 2), phi))
    for m in range(1, 6):
        assert not (c & ~mc.table(e_power((1, 2), m, phi))).any()
    assert np.array_equal(mc.table(C((), phi)), mc.table(phi))
    assert np.array_equal(mc.table(C((1,), phi)), mc.table(K(1, phi)))


SUITES = ("path3", "cycle3", "triangle")
BASE = [Occurred(E0), Not(Occurred(E0)), TimeIs(2), K(1, Occurred(E0)), FALSE]


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(SUITES), st.sampled_from(BASE), st.integers(0, 2), st.data())
def test_knowledge_matches_naive_semantics(name, base, i, data):
    mc = checker(name)
    assert np.array_equal(mc.table(K(i, base)), naive_k(mc, i, mc.table(base)))
    group = sorted(data.draw(st.sets(st.integers(0, 2), min_size=1)))
    assert np.array_equal(mc.table(C(tuple(group), base)), naive_c(mc, group, mc.table(base)))


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(SUITES), st.sampled_from(BASE), st.integers(0, 2))
def test_truth_and_introspection(name, base, i):
    mc = checker(name)
    k = mc.table(K(i, base))
    assert not (k & ~mc.table(base)).any()
    assert np.array_equal(k, mc.table(K(i, K(i, base))))
    assert not (~k & ~mc.table(K(i, Not(K(i, base))))).any()


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(SUITES), st.data())
def test_perfect_recall_keeps_knowledge(name, data):
    mc = checker(name)
    i = data.draw(st.integers(0, 2))
    t = data.draw(st.integers(0, mc.T))
    t2 = data.draw(st.integers(t, mc.T))
    known = At(t, K(i, Occurred(E0)))
    assert mc.valid(known >> At(t2, K(i, known)))


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(("path3", "triangle", "cycle3")), st.data())
def test_lazy_oracle_agrees_with_enumeration(name, data):
    mc = checker(name)
    t = data.draw(st.integers(0, mc.T))
    r = data.draw(st.integers(0, mc.R - 1))
    oracle = LazyFipOracle(suite(name), t)
    run = mc.runset.runs[r]
    seq = data.draw(st.lists(st.integers(0, 2), min_size=1, max_size=3))
    assert oracle.nested(run, seq, E0) == mc.check(r, t, nest(seq, Occurred(E0)))
    group = sorted(data.draw(st.sets(st.integers(0, 2), min_size=1)))
    ok, chain = oracle.common(run, group, E0)
    assert ok == mc.check(r, t, C(tuple(group), Occurred(E0)))
    if not ok:
        last = chain[-1][1] if chain else run
        e = last.occurrence(E0)
        assert e is None or e.time > t


def test_lazy_oracle_rejects_other_protocols():
    with pytest.raises(FormulaError):
        LazyFipOracle(cheque_scenario(), 3)
