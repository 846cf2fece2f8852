import itertools
from functools import lru_cache

import pytest
from hypothesis import given, settings, strategies as st

from centilab.catalog import (ALICE, BOB, CHARLIE, SUSAN, supervisor_scenario, supervisor_script,
                              suite)
from centilab.causality import PreconditionError, build_index
from centilab.network import Node
from centilab.runtime import enumerate_runs, generate_run
from centilab.structures import (
    brute_force_centipede, centibroom_past, centipede_exists_table, earliest_broom_deadline,
    find_bridging_centibroom, find_centibroom, find_centipede, find_generalized_centipede,
    is_centinode_chain, nd_past_intersection, nd_past_union, validate_centipede,
)


@lru_cache(maxsize=None)
def runs_of(name):
    return enumerate_runs(suite(name)).runs


def supervisor_ix():
    return build_index(generate_run(supervisor_scenario(), supervisor_script()))


def test_cheque_centipede_through_the_supervisor():
    ix = supervisor_ix()
    w = find_centipede(ix, ix.net, [CHARLIE, BOB, ALICE], 0, 7)
    assert w.body == (Node(CHARLIE, 0), Node(SUSAN, 3), Node(ALICE, 7))
    assert validate_centipede(ix, w, [CHARLIE, BOB, ALICE]) == []
    assert is_centinode_chain(ix, w.body, [CHARLIE, BOB, ALICE], 7)
    assert find_centipede(ix, ix.net, [CHARLIE, BOB, ALICE], 0, 6) is None


def test_bad_interval_is_rejected():
    ix = supervisor_ix()
    with pytest.raises(PreconditionError):
        find_centipede(ix, ix.net, [CHARLIE, BOB], 5, 4)
    with pytest.raises(PreconditionError):
        find_centibroom(ix, ix.net, CHARLIE, 0, [BOB], 11)


def test_single_member_broom_is_the_origin():
    ix = supervisor_ix()
    for t_end in range(0, 11):
        w = find_centibroom(ix, ix.net, BOB, 0, [BOB], t_end)
        assert w.node == Node(BOB, 0)
        assert find_bridging_centibroom(ix, ix.net, BOB, 0, [BOB], t_end).node == Node(BOB, 0)


def test_broom_deadline_on_the_supervisor_run():
    ix = supervisor_ix()
    t_end = earliest_broom_deadline(ix, CHARLIE, 0, [BOB, ALICE])
    assert t_end is not None
    assert find_centibroom(ix, ix.net, CHARLIE, 0, [BOB, ALICE], t_end - 1) is None


def test_validator_catches_a_broken_witness():
    ix = supervisor_ix()
    w = find_centipede(ix, ix.net, [CHARLIE, BOB, ALICE], 0, 7)
    bad = type(w)((w.body[0], Node(BOB, 0), w.body[2]), w.legs, w.t, w.t_end)
    assert validate_centipede(ix, bad, [CHARLIE, BOB, ALICE])


SUITES = ("path3", "cycle3", "triangle", "bypass", "fixed_path", "async_path")


def draw_ix(data, name):
    runs = runs_of(name)
    return build_index(runs[data.draw(st.integers(0, len(runs) - 1))])


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(SUITES), st.data())
def test_detector_matches_exhaustive_search(name, data):
    ix = draw_ix(data, name)
    n, T = ix.n, ix.horizon
    seq = data.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=4))
    t = data.draw(st.integers(0, T))
    t_end = data.draw(st.integers(t, T))
    w = find_centipede(ix, ix.net, seq, t, t_end)
    assert (w is not None) == brute_force_centipede(ix, seq, t, t_end)
    if w is not None:
        assert validate_centipede(ix, w, seq) == []
        assert is_centinode_chain(ix, w.body, seq, t_end)
        if t_end < T:
            assert find_centipede(ix, ix.net, seq, t, t_end + 1) is not None


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(SUITES), st.data())
def test_prefix_table_agrees_with_detector(name, data):
    ix = draw_ix(data, name)
    T = ix.horizon
    i0 = data.draw(st.integers(0, ix.n - 1))
    t = data.draw(st.integers(0, T))
    t_end = data.draw(st.integers(t, T))
    table = centipede_exists_table(ix, Node(i0, t), range(ix.n), 3, t_end)
    for rest, ok in table.items():
        assert ok == (find_centipede(ix, ix.net, (i0,) + rest, t, t_end) is not None)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(SUITES), st.data())
def test_broom_relations(name, data):
    ix = draw_ix(data, name)
    n, T = ix.n, ix.horizon
    i0 = data.draw(st.integers(0, n - 1))
    group = sorted(data.draw(st.sets(st.integers(0, n - 1), min_size=1)))
    t = data.draw(st.integers(0, T))
    t_end = data.draw(st.integers(t, T))
    broom = find_centibroom(ix, ix.net, i0, t, group, t_end)
    bridging = find_bridging_centibroom(ix, ix.net, i0, t, group, t_end)
    assert (broom is None) == (bridging is None)
    gen = find_generalized_centipede(ix, ix.net, Node(i0, t), [group], t, t_end)
    assert (gen is None) == (broom is None)
    if broom is not None:
        # a broom node serves as every interior node of a centipede over the group
        for seq in itertools.product(group, repeat=2):
            assert find_centipede(ix, ix.net, (i0,) + seq, t, t_end) is not None


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(SUITES), st.data())
def test_singleton_groups_reduce_to_centipedes(name, data):
    ix = draw_ix(data, name)
    n, T = ix.n, ix.horizon
    seq = data.draw(st.lists(st.integers(0, n - 1), min_size=2, max_size=4))
    t = data.draw(st.integers(0, T))
    t_end = data.draw(st.integers(t, T))
    # a centipede's last leg is the node itself; a generalized one needs a guarantee
    gen = find_generalized_centipede(ix, ix.net, Node(seq[0], t), [[i] for i in seq[1:]], t, t_end)
    cent = find_centipede(ix, ix.net, seq, t, t_end)
    assert (gen is not None) == (cent is not None)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(SUITES), st.data())
def test_nd_past_nesting(name, data):
    ix = draw_ix(data, name)
    group = sorted(data.draw(st.sets(st.integers(0, ix.n - 1), min_size=1)))
    t = data.draw(st.integers(0, ix.horizon))
    inner = centibroom_past(ix, ix.net, t, group)
    assert inner <= nd_past_intersection(ix, t, group) <= nd_past_union(ix, t, group)
