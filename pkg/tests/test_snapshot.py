import dataclasses

import pytest

from centilab.catalog import SHORTCUT_BACKGROUND, asymmetric_star, shortcut_net, snapshot_nets
from centilab.network import Network
from centilab.runtime import ConfigurationError, Script, generate_run
from centilab.snapshot import (
    SnapshotProtocol, check_snapshot_consistency, consistency_problems, default_background,
    diameter, enumerate_snapshots, extract_record, initiation, optimality_probe, run_snapshot,
    snapshot_scenario, true_cut,
)


@pytest.mark.parametrize("name", sorted(snapshot_nets()))
def test_first_proposal_is_consistent_everywhere(name):
    net = snapshot_nets()[name]
    rs = enumerate_snapshots(net, 1, 0, 0, default_background(net, 6))
    started = 0
    for run in rs:
        if initiation(run) is None:
            assert extract_record(run).t_star is None
            continue
        started += 1
        rec = extract_record(run)
        assert check_snapshot_consistency(run, rec), consistency_problems(run, rec)
        assert rec.t_star == diameter(net, 0)
    assert started > 0


@pytest.mark.parametrize("name", sorted(snapshot_nets()))
def test_minimum_proposal_is_consistent_and_optimal(name):
    net = snapshot_nets()[name]
    rs = enumerate_snapshots(net, 2, 0, 0, default_background(net, 6))
    probe = optimality_probe(rs)
    assert probe.checked > 0 and probe.violations == []
    for run in rs:
        if initiation(run) is not None:
            assert check_snapshot_consistency(run, extract_record(run))
    assert max(probe.delays) <= diameter(net, 0)


def test_star_gets_faster_with_minimum_proposals():
    net = asymmetric_star()
    delays = optimality_probe(enumerate_snapshots(net, 2, 0, 0, default_background(net, 6))).delays
    assert min(delays) < diameter(net, 0)


def test_distance_window_misses_a_message_on_the_shortcut():
    net = shortcut_net()
    run, rec = run_snapshot(net, 1, 0, 0, SHORTCUT_BACKGROUND, window="distance")
    problems = consistency_problems(run, rec)
    assert problems == ["channel 0->2: recorded [], in transit [(0, 1)]"]
    run, rec = run_snapshot(net, 1, 0, 0, SHORTCUT_BACKGROUND)
    assert check_snapshot_consistency(run, rec)


def test_tampered_records_are_caught():
    net = snapshot_nets()["ring3"]
    run, rec = run_snapshot(net, 1, 0, 0, default_background(net, 6))
    assert check_snapshot_consistency(run, rec)
    cut = true_cut(run, rec.t_star)
    busy = next(k for k, v in cut.items() if v)
    dropped = dataclasses.replace(rec, channels=tuple((k, () if k == busy else v) for k, v in rec.channels))
    assert not check_snapshot_consistency(run, dropped)
    assert any(p.startswith(f"channel {busy[0]}->{busy[1]}") for p in consistency_problems(run, dropped))
    skewed = dataclasses.replace(rec, times=(rec.t_star + 1,) + rec.times[1:])
    assert not check_snapshot_consistency(run, skewed)
    wrong_state = dataclasses.replace(rec, states=(run.local(0, rec.t_star - 1),) + rec.states[1:])
    assert not check_snapshot_consistency(run, wrong_state)


def test_post_snapshot_messages_carry_the_ignore_bit():
    net = Network.build(2, [(0, 1, 1, 2), (1, 0, 1, 2)])
    bg = [(0, 1, t) for t in range(6)]
    run, rec = run_snapshot(net, 1, 0, 0, bg)
    s = rec.t_star
    flagged = [e for e in run.sends() if e.payload[0] == "bg" and e.payload[2]]
    assert {e.time for e in flagged} == {s, s + 1}
    recorded = set(rec.channel(0, 1))
    assert all(e.payload[1] not in recorded for e in flagged)
    assert check_snapshot_consistency(run, rec)


def test_no_initiation_means_no_snapshot():
    net = snapshot_nets()["pair"]
    run = generate_run(snapshot_scenario(net, 2, 0, 0), Script())
    rec = extract_record(run)
    assert rec.t_star is None
    assert not check_snapshot_consistency(run, rec)
    assert consistency_problems(run, rec)[0].startswith("no common snapshot time")


def test_rejects_unsuitable_settings():
    with pytest.raises(ConfigurationError):
        SnapshotProtocol(algo=3)
    with pytest.raises(ConfigurationError):
        SnapshotProtocol(window="other")
    with pytest.raises(ConfigurationError):
        SnapshotProtocol().check_network(Network.build(2, [(0, 1, 1, None), (1, 0, 1, None)]))
    with pytest.raises(ConfigurationError):
        SnapshotProtocol().check_network(Network.build(2, [(0, 1, 1, 2)]))
