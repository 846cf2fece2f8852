from functools import lru_cache

import numpy as np
import pytest

from centilab.battery import staged_gr
from centilab.catalog import munchy_crunchy, staged_scenario, suite
from centilab.causality import build_index
from centilab.epistemics import C, ModelChecker, NDOcc, ev_input, nest
from centilab.network import Node
from centilab.response import (
    Action, GRSpec, OGRSpec, ORSpec, SRSpec, check_solves_gr, check_solves_ogr, check_solves_or,
    check_solves_sr, check_weakly_solves_ogr, component_chains, condense, considerate_protocol,
    gr_protocol, group_considerate_protocol, non_hesitant_protocol, response_runset,
    scheduled_protocol, spec_from_json, spec_to_json,
)
from centilab.runtime import ConfigurationError, enumerate_runs
from centilab.structures import find_centipede

TRIG = Action("e", 0)
A, B, Z = Action("a", 1), Action("b", 2), Action("z", 0)


@lru_cache(maxsize=None)
def transport(name="triangle0"):
    rs = enumerate_runs(suite(name))
    return rs, ModelChecker(rs)


def realize(syn, name="triangle0"):
    return response_runset(syn.protocol, transport(name)[0])


def test_non_hesitant_solves_ordered_response():
    rs, mc = transport()
    spec = ORSpec(TRIG, (A, B))
    syn = non_hesitant_protocol(spec, rs, mc)
    assert syn.insufficient == []
    assert check_solves_or(realize(syn), spec).solves
    fact = NDOcc(ev_input(0, "e"))
    for r, run in enumerate(rs.runs):
        if not run.inputs:
            continue
        t0 = run.inputs[0][2]
        ix = build_index(run)
        for h, act in enumerate(spec.responses):
            t = int(syn.schedule[act][r])
            seq = [x.proc for x in spec.responses[: h + 1]]
            assert mc.check(r, t, nest(seq, fact))
            assert ix.syncausal_reach(Node(0, t0), Node(act.proc, t))
            assert find_centipede(ix, ix.net, [0] + seq, t0, t) is not None


def test_considerate_solves_simultaneous_response():
    rs, mc = transport()
    spec = SRSpec(TRIG, (A, B))
    syn = considerate_protocol(spec, rs, mc)
    assert check_solves_sr(realize(syn), spec).solves
    fired = np.flatnonzero(syn.schedule[A] >= 0)
    assert len(fired) == sum(1 for run in rs if run.inputs)
    for r in fired:
        assert mc.check(int(r), int(syn.schedule[A][r]), C((1, 2), NDOcc(ev_input(0, "e"))))


def test_group_considerate_solves_ordered_groups():
    rs, mc = transport()
    spec = OGRSpec(TRIG, ((A,), (B, Z)))
    syn = group_considerate_protocol(spec, rs, mc)
    got = realize(syn)
    assert check_solves_ogr(got, spec).solves
    assert check_weakly_solves_ogr(got, spec).solves
    assert (syn.schedule[A] <= syn.schedule[B]).all()


def test_never_responding_misses_occurrence():
    rs, _ = transport()
    proto = scheduled_protocol(rs, {}, extra_alphabet=[A, B])
    v = check_solves_or(response_runset(proto, rs), ORSpec(TRIG, (A, B)))
    assert (v.solves, v.clause) == (False, "occurrence")
    # doing nothing is never inconsistent
    assert check_weakly_solves_ogr(response_runset(proto, rs), OGRSpec(TRIG, ((A,), (B,)))).solves


def test_acting_without_a_trigger():
    rs, _ = transport("path3")
    assert any(not run.inputs for run in rs)
    proto = scheduled_protocol(rs, {A: np.zeros(len(rs), dtype=int)})
    v = check_solves_or(response_runset(proto, rs), ORSpec(TRIG, (A,)))
    assert (v.solves, v.clause) == (False, "untriggered")


def test_skewed_responders_break_simultaneity():
    rs, mc = transport()
    when = considerate_protocol(SRSpec(TRIG, (A, B)), rs, mc).schedule[A]
    # b acts as soon as it alone knows, which is earlier in some runs
    eager = non_hesitant_protocol(ORSpec(TRIG, (B,)), rs, mc).schedule[B]
    assert (eager < when).any()
    proto = scheduled_protocol(rs, {A: when, B: eager})
    v = check_solves_sr(response_runset(proto, rs), SRSpec(TRIG, (A, B)))
    assert (v.solves, v.clause) == (False, "simultaneity")


def test_unknown_action_or_trigger_is_a_configuration_error():
    rs, _ = transport()
    proto = scheduled_protocol(rs, {})
    with pytest.raises(ConfigurationError):
        check_solves_or(response_runset(proto, rs), ORSpec(TRIG, (A,)))
    proto = scheduled_protocol(rs, {}, extra_alphabet=[A])
    with pytest.raises(ConfigurationError):
        check_solves_or(response_runset(proto, rs), ORSpec(Action("nope", 0), (A,)))


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        ORSpec(TRIG, ())
    with pytest.raises(ConfigurationError):
        SRSpec(TRIG, (A, Action("a", 2)))
    with pytest.raises(ConfigurationError):
        GRSpec((Action("x", 0), Action("y", 1)), frozenset({"y"}), (("x", "y"),))
    with pytest.raises(ConfigurationError):
        GRSpec((Action("x", 0),), frozenset(), (("x", "q"),))


@pytest.mark.parametrize("spec", [
    ORSpec(TRIG, (A, B)), SRSpec(TRIG, (A, B)), OGRSpec(TRIG, ((A,), (B, Z))), munchy_crunchy(),
])
def test_spec_json_round_trip(spec):
    assert spec_to_json(spec_from_json(spec_to_json(spec))) == spec_to_json(spec)


def test_condense_two_cycle():
    spec = GRSpec((Action("x", 0), Action("p", 1), Action("q", 2)), frozenset({"x"}),
                  (("x", "p"), ("p", "q"), ("q", "p")))
    cond = condense(spec)
    assert cond.components == (("x",), ("p", "q"))
    assert cond.triggers == {0}
    assert cond.procs(1) == (1, 2)


def test_production_line_structure():
    cond = condense(munchy_crunchy())
    assert sorted(len(c) for c in cond.components) == [1, 1, 2, 3, 3]
    finish = next(c for c, m in enumerate(cond.components) if set(m) == {"coat", "temper", "wrap"})
    chains = component_chains(cond, "wrap")
    assert len(chains) == 3
    assert all(ch[-1] == finish and ch[0] in cond.triggers for ch in chains)
    choc = next(c for c, m in enumerate(cond.components) if m == ("chocolate",))
    assert component_chains(cond, "chocolate") == [(choc,)]
    # the ordering is a partial order between components
    assert all(cond.order[c, c] for c in range(len(cond.components)))
    for a in range(5):
        for b in range(5):
            if a != b:
                assert not (cond.order[a, b] and cond.order[b, a])


def test_reference_protocol_for_general_response():
    rs = enumerate_runs(staged_scenario())
    spec = staged_gr()
    syn = gr_protocol(spec, rs)
    assert syn.insufficient == []
    got = response_runset(syn.protocol, rs)
    assert check_solves_gr(got, spec).solves
    assert check_solves_gr(got, condense(spec)).solves
    assert (syn.schedule[spec.event("p")] == syn.schedule[spec.event("q")]).all()


def test_split_cycle_fails_both_ways():
    rs = enumerate_runs(staged_scenario())
    spec = staged_gr()
    sched = dict(gr_protocol(spec, rs).schedule)
    q = spec.event("q")
    sched[q] = np.where(sched[q] >= 0, np.minimum(sched[q] + 1, rs.horizon), -1)
    got = response_runset(scheduled_protocol(rs, sched), rs)
    assert check_solves_gr(got, spec).clause == "order"
    assert check_solves_gr(got, condense(spec)).clause == "simultaneity"


def test_empty_instance_is_solved():
    rs, _ = transport()
    empty = GRSpec((), frozenset(), ())
    assert check_solves_gr(rs, empty).solves
    assert condense(empty).components == ()
