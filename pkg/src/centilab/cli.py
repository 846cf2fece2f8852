"""Command-line interface.

Structured output goes to stdout as JSON (or text with ``--diagram``);
diagnostics go to stderr. Exit codes: 0 for success or a true verdict, 1 for
a false verdict, 2 for usage and configuration errors.

Wherever a scenario, trace or network is expected, ``builtin:NAME`` selects
one of the bundled fixtures instead of a file.
"""

from __future__ import annotations

import json
import re
import sys
from pathlib import Path
from typing import Any, Callable

import click
import numpy as np

from . import catalog
from .causality import GridError, PreconditionError, build_index
from .cones import cone_report, knows_ignorance, knows_not_reach
from .epistemics import At, FormulaError, K, ModelChecker, parse_formula
from .network import Network, NetworkError, Node
from .response import (Action, GRSpec, OGRSpec, ORSpec, SRSpec, check_solves_gr, check_solves_ogr, check_solves_or,
                       check_solves_sr, considerate_protocol, gr_protocol, group_considerate_protocol,
                       non_hesitant_protocol, response_runset, scheduled_protocol, spec_from_json, spec_to_json)
from .runtime import (ConfigurationError, Run, Scenario, Script, SizingError, ValidationError, enumerate_runs,
                      generate_run, input_key, trace_from_json, trace_to_json)
from .snapshot import consistency_problems, default_background, run_snapshot, snapshot_scenario
from .structures import find_centibroom, find_centipede, find_generalized_centipede

TRUE, FALSE, USAGE = 0, 1, 2


class UsageFailure(Exception):
    """Bad input: reported on stderr with exit code 2."""


# ---------------------------------------------------------------------------
# inputs


def _read_json(value: str, what: str) -> Any:
    text = value.strip()
    source = "<inline>"
    if not text.startswith(("{", "[")):
        path = Path(value)
        if not path.is_file():
            raise UsageFailure(f"{what}: no such file {value!r}")
        text, source = path.read_text(), str(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageFailure(f"{source}:{exc.lineno}:{exc.colno}: malformed {what} JSON: {exc.msg}") from exc


BUILTIN_SCENARIOS: dict[str, Callable[[], Scenario]] = {
    "cheque": catalog.cheque_scenario,
    "supervisor": catalog.supervisor_scenario,
    "heartbeat": lambda: catalog.supervisor_scenario(heartbeat=True),
    "leak": catalog.leak_scenario,
    "conway": catalog.conway_scenario,
    "staged": catalog.staged_scenario,
}

BUILTIN_TRACES: dict[str, Callable[[], Run]] = {
    "cheque": lambda: generate_run(catalog.cheque_scenario(), catalog.cheque_script()),
    "supervisor": lambda: generate_run(catalog.supervisor_scenario(), catalog.supervisor_script()),
    "heartbeat": lambda: generate_run(catalog.supervisor_scenario(heartbeat=True), catalog.heartbeat_script()),
    "leak": lambda: generate_run(catalog.leak_scenario(), catalog.leak_script()),
}


def _builtin_nets() -> dict[str, Network]:
    nets = dict(catalog.snapshot_nets())
    nets.update(shortcut=catalog.shortcut_net(), deposit=catalog.deposit_net(), cheque=catalog.cheque_net(),
                leak=catalog.leak_net())
    return nets


def _builtin(value: str) -> str | None:
    return value[len("builtin:"):] if value.startswith("builtin:") else None


def load_scenario(value: str, horizon: int | None = None, cap: int | None = None) -> Scenario:
    name = _builtin(value)
    if name is not None:
        if name in BUILTIN_SCENARIOS:
            sc = BUILTIN_SCENARIOS[name]()
        else:
            try:
                sc = catalog.suite(name)
            except KeyError:
                raise UsageFailure(f"unknown builtin scenario {name!r}") from None
    else:
        sc = Scenario.from_json(_read_json(value, "scenario"))
    if horizon is not None or cap is not None:
        h = sc.horizon if horizon is None else horizon
        inputs = tuple(type(s)(s.proc, s.token, tuple(t for t in s.times if t <= h)) for s in sc.inputs)
        sc = Scenario(sc.network, sc.protocol, h, inputs, sc.initial, sc.cap if cap is None else cap)
    return sc


def load_trace(value: str) -> Run:
    name = _builtin(value)
    if name is not None:
        if name not in BUILTIN_TRACES:
            raise UsageFailure(f"unknown builtin trace {name!r}")
        return BUILTIN_TRACES[name]()
    return trace_from_json(_read_json(value, "trace"))


def load_net(value: str) -> Network:
    name = _builtin(value)
    if name is not None:
        nets = _builtin_nets()
        if name not in nets:
            raise UsageFailure(f"unknown builtin network {name!r}")
        return nets[name]
    return Network.from_json(_read_json(value, "network"))


_NODE = re.compile(r"^\(?\s*(-?\d+)\s*,\s*(-?\d+)\s*\)?$")


def parse_node(text: str) -> Node:
    m = _NODE.match(text.strip())
    if not m:
        raise UsageFailure(f"expected a node like (i,t), got {text!r}")
    return Node(int(m.group(1)), int(m.group(2)))


def _find_run(runset, trace: Run) -> int:
    want = (tuple(trace.inputs), trace.comm_signature(), tuple(trace.initial))
    for r, run in enumerate(runset.runs):
        if (tuple(run.inputs), run.comm_signature(), tuple(run.initial)) == want:
            return r
    raise UsageFailure("the trace is not a run of the scenario")


def _pick_run(runset, run_index: int | None, trace: str | None) -> int:
    if trace is not None:
        return _find_run(runset, load_trace(trace))
    if run_index is None:
        raise UsageFailure("give --run or --trace")
    if not 0 <= run_index < len(runset):
        raise UsageFailure(f"run {run_index} out of range 0..{len(runset) - 1}")
    return run_index


def emit(doc: Any) -> None:
    click.echo(json.dumps(doc, indent=2))


def _verdict(ok: bool) -> int:
    return TRUE if ok else FALSE


# ---------------------------------------------------------------------------
# commands


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def cli() -> None:
    """Knowledge, causality and coordination in bounded-delay networks."""


@cli.command()
@click.option("--scenario", required=True, help="Scenario JSON file, inline JSON or builtin:NAME.")
@click.option("--script", "script_src", help="Script JSON fixing every environment choice.")
@click.option("--seed", type=int, help="Pick a run uniformly from the enumeration.")
@click.option("--horizon", type=int)
@click.option("--cap", type=int)
@click.option("--diagram/--json", default=False, help="Text space-time diagram or JSON trace (default).")
def simulate(scenario, script_src, seed, horizon, cap, diagram):
    """Generate one run and emit its trace."""
    sc = load_scenario(scenario, horizon, cap)
    if script_src is not None and seed is not None:
        raise UsageFailure("--script and --seed are exclusive")
    if seed is not None:
        rs = enumerate_runs(sc)
        run = rs.runs[int(np.random.default_rng(seed).integers(len(rs)))]
    else:
        if script_src is not None:
            script = Script.from_json(_read_json(script_src, "script"))
        else:
            script = Script(None, tuple((s.proc, s.token, s.times[0]) for s in sc.inputs if s.times))
        run = generate_run(sc, script)
    if diagram:
        click.echo(build_index(run).diagram())
    else:
        emit(trace_to_json(run))
    return TRUE


@cli.command("enumerate")
@click.option("--scenario", required=True)
@click.option("--horizon", type=int)
@click.option("--cap", type=int)
@click.option("--traces", is_flag=True, help="Include every run's trace.")
def enumerate_cmd(scenario, horizon, cap, traces):
    """Enumerate every run of a scenario up to its horizon."""
    sc = load_scenario(scenario, horizon, cap)
    rs = enumerate_runs(sc)
    doc: dict = {"runs": len(rs), "horizon": rs.horizon, "processes": rs.network.processes,
                 "local_states": len(rs.interner.keys),
                 "context": rs.network.classify().name}
    if traces:
        doc["traces"] = [trace_to_json(r) for r in rs.runs]
    emit(doc)
    return TRUE


@cli.command()
@click.option("--trace", required=True)
@click.option("--dump", "--json", "mode", flag_value="dump", default=True, help="Edge lists and ND sets as JSON.")
@click.option("--diagram", "mode", flag_value="diagram", help="Text space-time diagram.")
@click.option("--node", help="Also report the past and future cones of this node.")
def causal(trace, mode, node):
    """Causal structure of a trace: local, message and timeout edges."""
    ix = build_index(load_trace(trace))
    if mode == "diagram":
        click.echo(ix.diagram())
        return TRUE
    doc = ix.dump()
    if node is not None:
        theta = parse_node(node)
        ix.vid(theta)
        def entries(cone):
            return [{"node": list(nd), "nd": sorted(repr(x) for x in items)}
                    for nd, items in sorted(cone, key=lambda e: (e[0].time, e[0].proc))]

        doc["cones"] = {"node": list(theta), "past": entries(ix.past_cone(theta)),
                        "future": entries(ix.fut_cone(theta))}
    emit(doc)
    return TRUE


@cli.command()
@click.argument("kind", type=click.Choice(["centipede", "centibroom", "gencentipede"]))
@click.option("--trace", required=True)
@click.option("--spec", "spec_src", required=True,
              help='centipede: {"seq":[..],"t":0,"t_end":7}; centibroom: {"i0":0,"t":0,"group":[..],"t_end":5}; '
                   'gencentipede: {"theta0":[i,t],"groups":[[..],..],"t_end":5}')
def detect(kind, trace, spec_src):
    """Search a trace for a centipede, centibroom or generalized centipede."""
    ix = build_index(load_trace(trace))
    spec = _read_json(spec_src, "detector spec")
    try:
        if kind == "centipede":
            t_end = int(spec.get("t_end", ix.horizon))
            w = find_centipede(ix, None, [int(x) for x in spec["seq"]], int(spec.get("t", 0)), t_end)
        elif kind == "centibroom":
            w = find_centibroom(ix, None, int(spec["i0"]), int(spec.get("t", 0)), [int(x) for x in spec["group"]],
                                int(spec.get("t_end", ix.horizon)))
        else:
            w = find_generalized_centipede(ix, None, Node(*spec["theta0"]), [list(g) for g in spec["groups"]],
                                           t_end=spec.get("t_end"))
    except (KeyError, TypeError) as exc:
        raise UsageFailure(f"detector spec is missing or mistypes a field: {exc}") from exc
    emit(w.to_json() if w is not None else {"exists": False})
    return _verdict(w is not None)


def _knowledge_witness(mc: ModelChecker, r: int, t: int, f) -> dict | None:
    """For a failing ``K_i phi`` (possibly under ``at``), a run the observer
    cannot tell apart in which ``phi`` fails."""
    while isinstance(f, At):
        t, f = f.t, f.f
    if not isinstance(f, K):
        return None
    inner = mc.table(f.f)
    states = mc.runset.state_table[t, f.i]
    for r2 in range(mc.R):
        if states[r2] == states[r] and not inner[t, r2]:
            return {"run": r2, "observer": f.i, "time": t, "trace": trace_to_json(mc.runset.runs[r2])}
    return None


@cli.command()
@click.option("--scenario", required=True)
@click.option("--run", "run_index", type=int)
@click.option("--trace", help="Locate the run by its trace instead of by index.")
@click.option("--at", "at_time", type=int, required=True)
@click.option("--formula", required=True)
@click.option("--horizon", type=int)
@click.option("--cap", type=int)
def check(scenario, run_index, trace, at_time, formula, horizon, cap):
    """Evaluate a formula at one point of an enumerated scenario."""
    rs = enumerate_runs(load_scenario(scenario, horizon, cap))
    r = _pick_run(rs, run_index, trace)
    f = parse_formula(formula, rs)
    mc = ModelChecker(rs)
    value = mc.check(r, at_time, f)
    doc: dict = {"run": r, "time": at_time, "formula": formula, "value": value}
    if not value:
        witness = _knowledge_witness(mc, r, at_time, f)
        if witness is not None:
            doc["witness"] = witness
    emit(doc)
    return _verdict(value)


KIND_TYPES = {"or": ORSpec, "sr": SRSpec, "ogr": OGRSpec, "gr": GRSpec}


def _synthesize(spec, rs, mc):
    if isinstance(spec, ORSpec):
        return non_hesitant_protocol(spec, rs, mc)
    if isinstance(spec, SRSpec):
        return considerate_protocol(spec, rs, mc)
    if isinstance(spec, OGRSpec):
        return group_considerate_protocol(spec, rs, mc)
    return gr_protocol(spec, rs, mc)


def _check_spec(rrs, spec):
    if isinstance(spec, ORSpec):
        return check_solves_or(rrs, spec)
    if isinstance(spec, SRSpec):
        return check_solves_sr(rrs, spec)
    if isinstance(spec, OGRSpec):
        return check_solves_ogr(rrs, spec)
    return check_solves_gr(rrs, spec)


@cli.command()
@click.argument("action", type=click.Choice(["check", "synthesize"]))
@click.option("--kind", type=click.Choice(sorted(KIND_TYPES)), required=True)
@click.option("--scenario", required=True, help="The transport scenario (typically fip).")
@click.option("--spec", "spec_src", required=True, help="Response spec JSON.")
@click.option("--schedule", "schedule_src",
              help="check only: a schedule as emitted by synthesize; default is the reference protocol.")
@click.option("--horizon", type=int)
@click.option("--cap", type=int)
def respond(action, kind, scenario, spec_src, schedule_src, horizon, cap):
    """Synthesize the knowledge-based response protocol, or check a schedule."""
    doc_spec = _read_json(spec_src, "response spec")
    doc_spec.setdefault("kind", kind)
    if doc_spec["kind"] != kind:
        raise UsageFailure(f"--kind {kind} but the spec says {doc_spec['kind']!r}")
    spec = spec_from_json(doc_spec)
    rs = enumerate_runs(load_scenario(scenario, horizon, cap))
    mc = ModelChecker(rs)
    if action == "synthesize":
        if schedule_src is not None:
            raise UsageFailure("--schedule applies to check only")
        syn = _synthesize(spec, rs, mc)
        verdict = _check_spec(response_runset(syn.protocol, rs), spec)
        emit({"spec": spec_to_json(spec), "synthesis": syn.to_json(rs), "verdict": verdict.to_json()})
        return _verdict(verdict.solves)
    if schedule_src is None:
        proto = _synthesize(spec, rs, mc).protocol
    else:
        proto = _schedule_protocol(_read_json(schedule_src, "schedule"), rs)
    verdict = _check_spec(response_runset(proto, rs), spec)
    emit(verdict.to_json())
    return _verdict(verdict.solves)


def _schedule_protocol(doc: Any, rs):
    entries = doc.get("synthesis", doc).get("schedule", doc) if isinstance(doc, dict) else doc
    try:
        schedule = {Action.from_json(e["action"]): np.asarray(e["fires"], dtype=int) for e in entries}
    except (KeyError, TypeError) as exc:
        raise UsageFailure(f"malformed schedule: {exc}") from exc
    if any(len(v) != len(rs) for v in schedule.values()):
        raise UsageFailure(f"schedule lists must have one entry per run ({len(rs)})")
    return scheduled_protocol(rs, schedule)


@cli.command()
@click.option("--net", required=True)
@click.option("--init", "init_node", required=True, help="Initiator and time, as (i,t).")
@click.option("--algo", type=click.Choice(["1", "2"]), default="2")
@click.option("--background", "bg_src", help="JSON list of [src,dst,time] background sends.")
@click.option("--window", type=click.Choice(["bound", "distance"]), default="bound")
@click.option("--script", "script_src", help="Script JSON for delivery times; default is the latest allowed.")
def snapshot(net, init_node, algo, bg_src, window, script_src):
    """Run a snapshot protocol and check the record against the true global state."""
    network = load_net(net)
    i0, t0 = parse_node(init_node)
    network.check_proc(i0)
    sc = snapshot_scenario(network, int(algo), i0, t0, window=window)
    if bg_src is None:
        background = default_background(network, sc.horizon)
    else:
        background = [tuple(int(x) for x in b) for b in _read_json(bg_src, "background")]
    script = None
    if script_src is not None:
        script = Script.from_json(_read_json(script_src, "script"))
    run, record = run_snapshot(network, int(algo), i0, t0, background, script, window)
    problems = consistency_problems(run, record)
    emit({"record": record.to_json(), "consistent": not problems, "problems": problems,
          "delay": None if record.t_star is None else record.t_star - t0})
    return _verdict(not problems)


@cli.command()
@click.option("--trace", required=True)
@click.option("--node", "node_text", required=True, help="The origin node (i,t).")
@click.option("--at", "at_time", type=int, required=True, help="The current time t'.")
@click.option("--diagram/--json", default=False, help="Text heat grid or JSON report (default).")
def cones(trace, node_text, at_time, diagram):
    """Causal cones of a node as seen at a given time."""
    rep = cone_report(build_index(load_trace(trace)), parse_node(node_text), at_time)
    if diagram:
        click.echo(rep.heat_grid())
    else:
        emit(rep.to_json())
    return _verdict(not rep.problems())


@cli.command()
@click.option("--scenario", required=True, help="A fip scenario over channels with no upper bounds.")
@click.option("--run", "run_index", type=int)
@click.option("--trace")
@click.option("--theta2", required=True, help="The knower (i,t).")
@click.option("--theta1", required=True, help="The node whose past is in question (i,t).")
@click.option("--theta0", help="Does theta2 know theta0 did not happen-before theta1?")
@click.option("--event", help="Or: does theta2 know theta1 does not know this input (proc:token) occurred?")
@click.option("--horizon", type=int)
@click.option("--cap", type=int)
def ignorance(scenario, run_index, trace, theta2, theta1, theta0, event, horizon, cap):
    """Causal-front certificate for knowledge of ignorance."""
    if (theta0 is None) == (event is None):
        raise UsageFailure("give exactly one of --theta0 and --event")
    rs = enumerate_runs(load_scenario(scenario, horizon, cap))
    r = _pick_run(rs, run_index, trace)
    mc = ModelChecker(rs)
    ix = mc.indexes.get(rs.runs[r])
    if theta0 is not None:
        cert = knows_not_reach(ix, None, rs, parse_node(theta2), parse_node(theta0), parse_node(theta1),
                               mc, strict=False)
        emit(cert.to_json())
        return _verdict(cert.verdict)
    proc, _, token = event.partition(":")
    if not proc.isdigit() or not token:
        raise UsageFailure(f"expected --event PROC:TOKEN, got {event!r}")
    rep = knows_ignorance(ix, None, rs, parse_node(theta2), int(proc), input_key(int(proc), token),
                          parse_node(theta1), mc=mc, strict=False)
    emit(rep.to_json())
    return _verdict(rep.verdict)


@cli.command()
@click.option("--suite", type=click.Choice(["theorems"]), default="theorems")
@click.option("--scale", type=click.Choice(["small", "full"]), default="small")
@click.option("--criterion", "numbers", type=click.IntRange(1, 9), multiple=True,
              help="Run only these criteria (repeatable).")
def verify(suite, scale, numbers):
    """Run the acceptance battery."""
    from .battery import run_battery

    results = run_battery(numbers or None, scale)
    for res in results:
        click.echo(res.line(), err=True)
    emit({"suite": suite, "scale": scale, "passed": all(r.passed for r in results),
          "criteria": [r.to_json() for r in results]})
    return _verdict(all(r.passed for r in results))


# ---------------------------------------------------------------------------
# entry point

_CONFIG_ERRORS = (UsageFailure, ConfigurationError, ValidationError, NetworkError, PreconditionError, GridError,
                  FormulaError, SizingError)


def main(argv: list[str] | None = None) -> int:
    try:
        code = cli.main(args=argv, prog_name="centilab", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return USAGE
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return USAGE
    except _CONFIG_ERRORS as exc:
        click.echo(f"centilab: {exc}", err=True)
        return USAGE
    return TRUE if code is None else int(code)


def run_command(argv: list[str]) -> int:
    """Run one command; documents go to stdout."""
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
