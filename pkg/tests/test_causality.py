from collections import deque
from functools import lru_cache

import pytest
from hypothesis import given, settings, strategies as st

from centilab.catalog import ALICE, BOB, CHARLIE, SUSAN, supervisor_scenario, supervisor_script, suite
from centilab.causality import GridError, PreconditionError, build_index
from centilab.network import Node
from centilab.runtime import RECV, SEND, enumerate_runs, generate_run


@lru_cache(maxsize=None)
def runs_of(name):
    return enumerate_runs(suite(name)).runs


def supervisor_ix():
    return build_index(generate_run(supervisor_scenario(), supervisor_script()))


def bfs_oracle(run, syncausal):
    """Reachability by breadth-first search over edges read off the event log."""
    net, T, n = run.network, run.horizon, run.network.processes
    succ = {Node(i, t): [] for i in range(n) for t in range(T + 1)}
    for i in range(n):
        for t in range(T):
            succ[Node(i, t)].append(Node(i, t + 1))
    sends = {e.key: e for e in run.events if e.kind == SEND}
    for e in run.events:
        if e.kind == RECV:
            s = sends[e.link]
            succ[Node(s.proc, s.time)].append(Node(e.proc, e.time))
    if syncausal:
        sent = {(e.proc, e.peer, e.time) for e in sends.values()}
        for ch in net.channels:
            if ch.max == float("inf"):
                continue
            for s in range(T + 1 - int(ch.max)):
                if (ch.src, ch.dst, s) not in sent:
                    succ[Node(ch.src, s)].append(Node(ch.dst, s + int(ch.max)))
    reach = {}
    for a in succ:
        seen, todo = {a}, deque([a])
        while todo:
            for b in succ[todo.popleft()]:
                if b not in seen:
                    seen.add(b)
                    todo.append(b)
        reach[a] = seen
    return reach


def test_message_chain_reaches_alice():
    ix = supervisor_ix()
    assert ix.lamport_reach(Node(CHARLIE, 0), Node(SUSAN, 3))
    assert ix.lamport_reach(Node(CHARLIE, 0), Node(ALICE, 7))
    assert not ix.lamport_reach(Node(SUSAN, 3), Node(ALICE, 6))


def test_silence_creates_a_timeout_edge():
    ix = supervisor_ix()
    # Susan is not yet informed at 2, so her silence on a [1,5] channel
    # tells Alice something at 7 without any message
    assert (Node(SUSAN, 2), Node(ALICE, 7)) in ix.edges.timeout
    assert ix.syncausal_reach(Node(SUSAN, 2), Node(ALICE, 7))
    assert (Node(SUSAN, 1), Node(ALICE, 6)) in ix.edges.timeout
    assert ix.syncausal_reach(Node(SUSAN, 1), Node(ALICE, 6))
    assert not ix.lamport_reach(Node(SUSAN, 1), Node(ALICE, 6))
    assert (Node(SUSAN, 3), Node(ALICE, 8)) not in ix.edges.timeout


def test_reflexive_and_off_grid():
    ix = supervisor_ix()
    assert ix.syncausal_reach(Node(BOB, 4), Node(BOB, 4))
    with pytest.raises(GridError):
        ix.syncausal_reach(Node(BOB, 11), Node(BOB, 4))
    with pytest.raises(GridError):
        ix.lamport_reach(Node(7, 0), Node(BOB, 4))


def test_fip_needs_no_timeouts():
    for run in runs_of("cycle3")[:40]:
        ix = build_index(run)
        assert ix.edges.timeout == ()
        assert ix.syn_fwd == ix.lam_fwd


def test_fut_cone_at_current_time_is_the_node():
    ix = supervisor_ix()
    theta = Node(CHARLIE, 0)
    assert ix.fut_cone_at(theta, 0) == {theta}
    assert Node(ALICE, 7) in ix.fut_cone_at(theta, 7)
    assert Node(ALICE, 7) not in ix.fut_cone_at(theta, 6)


def test_nd_past_holds_only_nondeterministic_nodes():
    ix = supervisor_ix()
    past = dict(ix.nd_past(Node(ALICE, 7)))
    assert Node(CHARLIE, 0) in past
    assert {x.kind for x in past[Node(CHARLIE, 0)]} == {"init", "input"}
    assert all(items for items in past.values())
    # Susan's relay lands at 7 < 3 + 5, so the receive is nondeterministic
    assert any(x.kind == "recv" for x in past[Node(ALICE, 7)])


def test_bridges_precondition_and_minimality():
    ix = supervisor_ix()
    with pytest.raises(PreconditionError):
        ix.bridges(Node(ALICE, 7), Node(CHARLIE, 0))
    a, b = Node(CHARLIE, 0), Node(BOB, 9)
    found = ix.bridges(a, b)
    assert found
    for beta in found:
        assert ix.syncausal_reach(a, beta) and ix.guarantee(beta, b)
        others = [v for v in ix.nodes(ix.syn_fwd[ix.vid(a)]) if v != beta and ix.guarantee(v, beta)]
        assert others == []


SUITES = ("cycle3", "bypass", "fixed_path", "async_path")


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(SUITES), st.data())
def test_reachability_matches_search(name, data):
    runs = runs_of(name)
    run = runs[data.draw(st.integers(0, len(runs) - 1))]
    ix = build_index(run)
    for syncausal in (False, True):
        reach = bfs_oracle(run, syncausal)
        rel = ix.syncausal_reach if syncausal else ix.lamport_reach
        for a, seen in reach.items():
            for b in reach:
                assert rel(a, b) == (b in seen)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(SUITES), st.data())
def test_cone_identities(name, data):
    runs = runs_of(name)
    ix = build_index(runs[data.draw(st.integers(0, len(runs) - 1))])
    grid = [ix.node(v) for v in range(ix.n * (ix.horizon + 1))]
    alpha, beta = data.draw(st.sampled_from(grid)), data.draw(st.sampled_from(grid))
    fut = {nd for nd, _ in ix.fut_cone(alpha)}
    past = {nd for nd, _ in ix.past_cone(alpha)}
    assert fut & past == {alpha}
    meets = bool(fut & {nd for nd, _ in ix.past_cone(beta)})
    assert meets == ix.syncausal_reach(alpha, beta)
    assert ix.lamport_reach(alpha, beta) <= ix.syncausal_reach(alpha, beta)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(SUITES), st.data())
def test_reach_moves_forward_and_guarantees_are_realized(name, data):
    runs = runs_of(name)
    ix = build_index(runs[data.draw(st.integers(0, len(runs) - 1))])
    grid = [ix.node(v) for v in range(ix.n * (ix.horizon + 1))]
    for a in grid:
        for b in grid:
            if ix.syncausal_reach(a, b):
                assert a.time < b.time or a == b
            if ix.guarantee(a, b):
                assert ix.syncausal_reach(a, b)


def test_async_runs_have_no_timeouts():
    for run in runs_of("async_path"):
        ix = build_index(run)
        assert ix.edges.timeout == ()


def test_fixed_delays_make_syncausality_the_guarantee():
    for run in runs_of("fixed_path"):
        ix = build_index(run)
        grid = [ix.node(v) for v in range(ix.n * (ix.horizon + 1))]
        for a in grid:
            for b in grid:
                assert ix.syncausal_reach(a, b) == ix.guarantee(a, b)


def test_equal_pasts_mean_equal_states():
    runs = runs_of("cycle3")
    seen = {}
    for run in runs:
        ix = build_index(run)
        for v in range(ix.n * (ix.horizon + 1)):
            theta = ix.node(v)
            key = (theta, ix.past_cone(theta))
            state = seen.setdefault(key, run.local(*theta))
            assert state == run.local(*theta)
