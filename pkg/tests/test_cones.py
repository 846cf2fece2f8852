import itertools
import random
from functools import lru_cache

import pytest
from hypothesis import given, settings, strategies as st

from centilab.catalog import suite
from centilab.causality import PreconditionError, build_index
from centilab.cones import (
    VacuousCutError, box_aff, box_aff_at, box_unaff, box_unaff_at, causal_front, causal_tr,
    cone_report, contact_chain, diamond_aff_at, front_certificate, is_clean, is_cut,
    is_legal_chain, knows_ignorance, knows_not_reach, legal_chain_exists, potential_graph,
)
from centilab.epistemics import ModelChecker, ev_input
from centilab.network import Network, Node
from centilab.runtime import enumerate_runs


@lru_cache(maxsize=None)
def loaded(name):
    rs = enumerate_runs(suite(name))
    return rs, ModelChecker(rs)


def sample(runs, k=12, seed=7):
    return random.Random(seed).sample(range(len(runs)), min(k, len(runs)))


def grid(n, T):
    return [Node(i, t) for t in range(T + 1) for i in range(n)]


def test_a_priori_cones():
    net = Network.build(3, [(0, 1, 1, 2), (1, 2, 1, 2)])
    theta = Node(0, 2)
    assert theta in box_aff(net, theta, 6)
    assert Node(0, 1) in box_unaff(net, theta, 6)
    assert Node(2, 6) in box_aff(net, theta, 6) and Node(2, 5) not in box_aff(net, theta, 6)
    star = Network.build(3, [(0, 1, 2, 4), (0, 2, 2, 4)])
    assert Node(1, 3) in box_unaff(star, theta, 6)
    assert Node(1, 4) not in box_unaff(star, theta, 6)


@pytest.mark.parametrize("edges, gap, want", [
    ([(0, 1, 3, None)], 3, True),
    ([(0, 1, 3, None)], 2, False),
    ([(0, 1, 2, None), (1, 2, 3, None)], 5, True),
    ([(0, 1, 2, None), (1, 2, 3, None)], 4, False),
])
def test_legal_chains(edges, gap, want):
    net = Network.build(3, edges)
    dst = max(b for _, b, _, _ in edges)
    assert legal_chain_exists(net, Node(0, 0), Node(dst, gap)) == want


def test_chain_shape_rules():
    net = Network.build(2, [(0, 1, 2, None)])
    assert is_legal_chain(net, [Node(0, 0), Node(0, 1), Node(1, 3)])
    assert not is_legal_chain(net, [Node(0, 0), Node(1, 1)])
    assert not is_legal_chain(net, [Node(0, 1), Node(0, 1)])
    assert not is_legal_chain(net, [Node(1, 0), Node(0, 5)])


def test_cut_edge_cases():
    net = Network.build(3, [(0, 1, 1, None), (1, 2, 1, None)])
    a, b = Node(0, 0), Node(2, 3)
    assert is_cut(net, a, b, [b])
    assert not is_cut(net, a, b, [])
    assert is_cut(net, a, b, [Node(1, t) for t in range(1, 3)])
    assert not is_cut(net, a, b, [Node(1, 1)])
    with pytest.raises(VacuousCutError):
        is_cut(net, Node(2, 0), Node(0, 3), [])


def test_clean_sets():
    rs, _ = loaded("line")
    run = next(r for r in rs if r.inputs and r.receives())
    ix = build_index(run)
    recv = run.receives()[0]
    src = Node(recv.peer, recv.key[3])
    earlier = [Node(j, t) for j in range(3) for t in range(src.time)]
    assert is_clean(ix, src, earlier)
    assert not is_clean(ix, src, [recv.node])
    assert not is_clean(ix, src, earlier + [recv.node])


def test_front_is_empty_when_the_observer_saw_nothing():
    rs, mc = loaded("bypass")
    for r in sample(rs.runs):
        ix = build_index(rs.runs[r])
        assert causal_front(ix, None, Node(2, 0), Node(0, 1), Node(1, 3)) == frozenset()


def path_cut_oracle(net, a, b, cut):
    """A cut meets every legal chain; checked by listing the chains."""
    g = potential_graph(net, a, b)
    paths = g.paths()
    return all(set(p) & set(cut) for p in paths) and set(cut) <= {x for p in paths for x in p}


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_cut_matches_path_listing(data):
    net = Network.build(3, [(0, 1, 1, None), (1, 2, 1, None), (0, 2, 2, None)])
    a = Node(0, data.draw(st.integers(0, 1)))
    b = Node(data.draw(st.integers(1, 2)), data.draw(st.integers(2, 4)))
    if not legal_chain_exists(net, a, b):
        return
    band = [nd for nd in grid(3, b.time) if nd.time >= a.time]
    cut = data.draw(st.lists(st.sampled_from(band), max_size=4, unique=True))
    assert is_cut(net, a, b, cut) == path_cut_oracle(net, a, b, cut)


@pytest.mark.parametrize("name", ["bypass", "line"])
def test_structural_certificates_match_knowledge(name):
    rs, mc = loaded(name)
    nodes = grid(rs.network.processes, rs.horizon)
    e = ev_input(0, "e")
    for r in sample(rs.runs, 6):
        ix = mc.indexes.get(rs.runs[r])
        for a, b, c in itertools.product(nodes, repeat=3):
            cert = knows_not_reach(ix, None, rs, c, a, b, mc)  # raises on disagreement
            assert cert.verdict == (cert.is_cut and cert.is_clean)
        for b, c in itertools.product(nodes, repeat=2):
            assert knows_ignorance(ix, None, rs, c, 0, e, b, mc=mc).agrees


@pytest.mark.parametrize("name", ["bypass", "line"])
def test_knowing_a_chain_means_a_contact_chain(name):
    rs, mc = loaded(name)
    nodes = grid(rs.network.processes, rs.horizon)
    for r in sample(rs.runs, 6):
        ix = mc.indexes.get(rs.runs[r])
        for a, b, c in itertools.product(nodes, repeat=3):
            if a.proc == b.proc:
                continue
            known, chain = causal_tr(ix, mc, a, b, c)
            assert known == contact_chain(ix, a, b, c)
            assert chain <= known


def test_knowledge_of_a_chain_without_hearing_from_its_end():
    rs, mc = loaded("bypass")
    ix = mc.indexes.get(rs.runs[171])
    a, b, c = Node(1, 0), Node(2, 3), Node(2, 2)
    # (2,2) cannot have heard from (2,3), yet knows (1,0) reaches it
    assert causal_tr(ix, mc, a, b, c) == (True, False)
    assert contact_chain(ix, a, b, c)


def test_certificates_need_fip_without_upper_bounds():
    rs, _ = loaded("path3")
    ix = build_index(rs.runs[0])
    with pytest.raises(PreconditionError):
        knows_not_reach(ix, None, rs, Node(2, 3), Node(0, 0), Node(1, 2))
    with pytest.raises(PreconditionError):
        knows_ignorance(ix, None, loaded("bypass")[0], Node(2, 3), 1, ev_input(0, "e"), Node(1, 2))


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["bypass", "path3", "cycle3", "fixed_path"]), st.data())
def test_cone_report_invariants(name, data):
    rs, mc = loaded(name)
    ix = mc.indexes.get(rs.runs[data.draw(st.integers(0, len(rs) - 1))])
    theta = data.draw(st.sampled_from(grid(ix.n, ix.horizon)))
    t_now = data.draw(st.integers(theta.time, ix.horizon))
    rep = cone_report(ix, theta, t_now)
    assert rep.problems() == []
    if t_now == theta.time:
        assert rep.box_aff_at == rep.box_aff
        assert rep.fut_realized == {theta}
    if t_now < ix.horizon:
        assert box_aff_at(ix, theta, t_now) <= box_aff_at(ix, theta, t_now + 1)
        assert box_unaff_at(ix, theta, t_now) <= box_unaff_at(ix, theta, t_now + 1)
    for nd in grid(ix.n, t_now):
        if nd.time >= theta.time:
            assert nd in rep.box_aff_at or nd in rep.box_unaff_at
    # potentially affected nodes: the realized future, and whatever it may still reach
    for nd in rep.diamond_aff_at:
        assert nd.time > t_now or nd in rep.fut_realized
    assert rep.fut_realized <= diamond_aff_at(ix, theta, t_now)


def test_cone_report_checks_time():
    rs, mc = loaded("bypass")
    ix = mc.indexes.get(rs.runs[0])
    with pytest.raises(PreconditionError):
        cone_report(ix, Node(0, 0), ix.horizon + 1)
    assert "@" in cone_report(ix, Node(0, 0), 1).heat_grid()
    assert front_certificate(ix, None, Node(2, 3), Node(0, 0), Node(2, 3)).theta1 == Node(2, 3)
