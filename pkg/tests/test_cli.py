import json

import pytest

from centilab.cli import main, run_command


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_unknown_verb_is_a_usage_error(capsys):
    code, _, err = run(capsys, "frobnicate")
    assert code == 2
    assert "frobnicate" in err


def test_detect_cheque_centipede(capsys):
    spec = json.dumps({"seq": [0, 1, 2], "t": 0, "t_end": 7})
    code, out, _ = run(capsys, "detect", "centipede", "--trace", "builtin:supervisor", "--spec", spec)
    assert code == 0
    assert json.loads(out)["body"] == [[0, 0], [3, 3], [2, 7]]
    spec = json.dumps({"seq": [0, 1, 2], "t": 0, "t_end": 6})
    code, out, _ = run(capsys, "detect", "centipede", "--trace", "builtin:supervisor", "--spec", spec)
    assert code == 1 and json.loads(out) == {"exists": False}


def test_detect_broom_and_generalized(capsys):
    spec = json.dumps({"i0": 0, "t": 0, "group": [1, 2], "t_end": 10})
    code, out, _ = run(capsys, "detect", "centibroom", "--trace", "builtin:supervisor", "--spec", spec)
    assert code == 0 and json.loads(out)["exists"]
    spec = json.dumps({"theta0": [0, 0], "groups": [[3], [1, 2]], "t_end": 10})
    code, out, _ = run(capsys, "detect", "gencentipede", "--trace", "builtin:supervisor", "--spec", spec)
    assert code in (0, 1)
    assert "exists" in json.loads(out)


def test_malformed_json_reports_its_position(capsys, tmp_path):
    path = tmp_path / "spec.json"
    path.write_text('{"seq": [0, 1,\n  "t": }')
    code, _, err = run(capsys, "detect", "centipede", "--trace", "builtin:supervisor", "--spec", str(path))
    assert code == 2
    assert f"{path}:2:" in err and "malformed" in err
    code, _, err = run(capsys, "detect", "centipede", "--trace", "builtin:supervisor", "--spec", '{"seq": ')
    assert code == 2 and "<inline>:1:" in err


def test_missing_file_and_bad_node(capsys):
    assert run(capsys, "causal", "--trace", "/nonexistent/trace.json")[0] == 2
    assert run(capsys, "cones", "--trace", "builtin:cheque", "--node", "zero", "--at", "3")[0] == 2
    assert run(capsys, "cones", "--trace", "builtin:cheque", "--node", "(9,0)", "--at", "3")[0] == 2


def test_check_exit_code_follows_the_verdict(capsys):
    args = ["check", "--scenario", "builtin:cheque", "--trace", "builtin:cheque", "--formula", "K[2] K[1] occ(e)"]
    code, out, _ = run(capsys, *args, "--at", "9")
    assert code == 1
    doc = json.loads(out)
    assert doc["value"] is False
    code, out, _ = run(capsys, *args, "--at", "10")
    assert code == 0 and json.loads(out)["value"] is True
    assert run(capsys, "check", "--scenario", "builtin:cheque", "--run", "0", "--at", "11",
               "--formula", "true")[0] == 2
    assert run(capsys, "check", "--scenario", "builtin:cheque", "--run", "0", "--at", "1",
               "--formula", "K[2")[0] == 2


def test_simulate_is_deterministic(capsys):
    first = run(capsys, "simulate", "--scenario", "builtin:path3", "--seed", "11")
    second = run(capsys, "simulate", "--scenario", "builtin:path3", "--seed", "11")
    assert first[0] == 0 and first == second
    other = run(capsys, "simulate", "--scenario", "builtin:path3", "--seed", "12")
    assert json.loads(other[1])["horizon"] == 4
    assert run(capsys, "simulate", "--scenario", "builtin:supervisor", "--diagram")[1].count("\n") > 4


def test_trace_round_trips_through_causal(capsys, tmp_path):
    _, out, _ = run(capsys, "simulate", "--scenario", "builtin:supervisor", "--json")
    path = tmp_path / "trace.json"
    path.write_text(out)
    code, out, _ = run(capsys, "causal", "--trace", str(path), "--node", "(0,0)")
    assert code == 0
    doc = json.loads(out)
    assert doc["cones"]["past"] == [{"node": [0, 0], "nd": ["init(0,0):None", "input(0,0):'e'"]}]
    assert {"local", "message", "timeout"} <= set(doc["edges"])


def test_enumerate_and_cap(capsys, monkeypatch):
    code, out, _ = run(capsys, "enumerate", "--scenario", "builtin:path3")
    assert code == 0 and json.loads(out)["runs"] == 768
    monkeypatch.setenv("CENTILAB_CAP", "10")
    code, _, err = run(capsys, "enumerate", "--scenario", "builtin:path3")
    assert code == 2 and "exceeds cap 10" in err


def test_snapshot_window_choice(capsys):
    bg = json.dumps([[0, 2, 1], [0, 1, 1], [2, 0, 0]])
    args = ["snapshot", "--net", "builtin:shortcut", "--init", "(0,0)", "--algo", "1", "--background", bg]
    code, out, _ = run(capsys, *args)
    assert code == 0 and json.loads(out)["consistent"]
    code, out, _ = run(capsys, *args, "--window", "distance")
    assert code == 1
    assert json.loads(out)["problems"] == ["channel 0->2: recorded [], in transit [(0, 1)]"]


def test_respond_synthesize_then_check(capsys, tmp_path):
    spec = json.dumps({"trigger": {"token": "e", "proc": 0},
                       "responses": [{"token": "a", "proc": 1}, {"token": "b", "proc": 2}]})
    code, out, _ = run(capsys, "respond", "synthesize", "--kind", "or", "--scenario", "builtin:triangle0",
                       "--spec", spec)
    assert code == 0 and json.loads(out)["verdict"] == {"solves": True}
    path = tmp_path / "syn.json"
    path.write_text(out)
    code, out, _ = run(capsys, "respond", "check", "--kind", "or", "--scenario", "builtin:triangle0",
                       "--spec", spec, "--schedule", str(path))
    assert code == 0
    # the same schedule does not solve the simultaneous version
    code, out, _ = run(capsys, "respond", "check", "--kind", "sr", "--scenario", "builtin:triangle0",
                       "--spec", spec, "--schedule", str(path))
    assert code == 1 and json.loads(out)["counterexample"]["clause"] == "simultaneity"
    assert run(capsys, "respond", "check", "--kind", "sr", "--scenario", "builtin:triangle0",
               "--spec", json.dumps({"kind": "or"}))[0] == 2


def test_ignorance_certificates(capsys):
    base = ["ignorance", "--scenario", "builtin:bypass", "--run", "171", "--theta2", "(2,3)", "--theta1", "(1,2)"]
    code, out, _ = run(capsys, *base, "--theta0", "(0,0)")
    doc = json.loads(out)
    assert code == (0 if doc["verdict"] else 1)
    assert doc["verdict"] == doc["epistemic"]
    code, out, _ = run(capsys, *base, "--event", "0:e")
    doc = json.loads(out)
    assert doc["verdict"] == doc["direct"]
    assert run(capsys, *base)[0] == 2


def test_cones_report(capsys):
    code, out, _ = run(capsys, "cones", "--trace", "builtin:supervisor", "--node", "(0,0)", "--at", "3")
    assert code == 0
    assert json.loads(out)["fut_realized"][0] == [0, 0]


def test_verify_single_criterion(capsys):
    code, out, err = run(capsys, "verify", "--criterion", "4")
    assert code == 0
    assert json.loads(out)["criteria"][0]["criterion"] == 4
    assert err.startswith("criterion 4 PASS")


def test_run_command_alias(capsys):
    assert run_command(["enumerate", "--scenario", "builtin:conway"]) == 0
    assert json.loads(capsys.readouterr().out)["runs"] == 16
