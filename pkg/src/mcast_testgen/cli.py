"""mcast-testgen: state-space search and fault-oriented test synthesis for PIM-DM.

Exit status: 0 clean, 10 errors found (tests generated), 1 usage or model failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from . import analytics, fitg, fotg, traceio
from .gfsm import Engine, FaultSpec, GlobalState
from .model import ModelError, load_model
from .pimdm import crash_extension, model_path

EXIT_CLEAN = 0
EXIT_FAILURE = 1
EXIT_FOUND = 10

BUNDLED = "pim-dm.json"
MODEL_PATH_ENV = "STRESS_MODEL_PATH"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2; usage failures here map to 1
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def resolve_model(name: str | None) -> str:
    """Path as given, then each STRESS_MODEL_PATH entry, then the bundled model."""
    name = name or BUNDLED
    candidates = [Path(name)]
    for d in filter(None, os.environ.get(MODEL_PATH_ENV, "").split(os.pathsep)):
        candidates += [Path(d) / name, Path(d) / f"{name}.json"]
    for p in candidates:
        if p.is_file():
            return str(p)
    if name in (BUNDLED, "pim-dm"):
        return model_path()
    raise UsageError(f"model {name!r} not found (searched {', '.join(map(str, candidates))})")


def open_model(name: str | None, crash: bool = False):
    path = resolve_model(name)
    try:
        model = load_model(path, [crash_extension()] if crash else [])
    except (OSError, ValueError, ModelError) as exc:
        raise ModelError(f"cannot load {path}: {exc}") from exc
    return model, path


def _stimulus(model, name: str) -> str:
    try:
        return model.stimulus(name).name
    except ModelError:
        valid = ", ".join(s.name for s in model.stimuli)
        raise UsageError(f"unknown stimulus {name!r}; valid: {valid}") from None


def _state(model, name: str) -> str:
    if name not in model.alphabet:
        raise UsageError(f"unknown state {name!r}; valid: {', '.join(model.alphabet)}")
    return name


def parse_fault(model, text: str | None) -> FaultSpec | None:
    """``loss:STIM`` or ``crash[:STATE]``."""
    if not text or text == "none":
        return None
    kind, _, arg = text.partition(":")
    if kind == "loss":
        if not arg:
            raise UsageError("loss fault needs a stimulus, e.g. loss:Prune")
        return FaultSpec.loss(_stimulus(model, arg))
    if kind == "crash":
        return FaultSpec.crash(_state(model, arg) if arg and arg != "*" else None)
    raise UsageError(f"unknown fault {text!r}; valid: loss:STIM, crash:STATE")


def _wants_crash(args) -> bool:
    fault = getattr(args, "fault", None) or ""
    return bool(getattr(args, "enable_crash", False)) or fault.startswith("crash")


class Output:
    """Report lines to stdout, files under ``--out`` when given."""

    def __init__(self, out_dir: str | None):
        self.dir = Path(out_dir) if out_dir else None
        self.files: list[str] = []
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def line(self, text: str = ""):
        print(text)

    def write(self, name: str, text: str):
        if self.dir is None:
            return
        with open(self.dir / name, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.files.append(name)

    def manifest(self, command: str, model: str, params: dict):
        if self.dir is None:
            return
        doc = {
            "subcommand": command,
            "model": model,
            "parameters": params,
            "deterministic": True,
            "outputs": sorted(self.files),
            "version": __version__,
        }
        self.write("manifest.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _fmt(g, model) -> str:
    return traceio.format_state(g, model)


# --- fitg --------------------------------------------------------------------

FITG_COLUMNS = ["n", "algorithm", "expanded", "forwards", "transitions", "errors"]


def cmd_fitg(args) -> int:
    if args.routers < 1:
        raise UsageError(f"--routers must be at least 1, got {args.routers}")
    model, _ = open_model(args.model, _wants_crash(args))
    fault = parse_fault(model, args.fault)
    config = fitg.SearchConfig(args.routers, args.algorithm, fault=fault, definition=args.definition)
    res = fitg.expand_space(Engine(model), config)
    out = Output(args.out)

    out.line(f"fitg model={model.name} routers={args.routers} algorithm={config.algorithm} "
             f"fault={fault or 'none'} definition={args.definition}")
    st = res.stats
    out.line(f"expanded={st.expanded_states} forwards={st.forwards} transitions={st.transitions}")
    records = []
    for label, traces in (("error", res.errors), ("false-error", res.false_errors),
                          ("superseded", res.superseded)):
        for t in sorted(traces, key=lambda t: _fmt(t.final, model)):
            out.line(f"{label} {_fmt(t.final, model)} {t.verdict}")
            records.append(traceio.from_search_trace(t, model, label))
    if res.partial:
        out.line("partial: state limit reached")
    out.line(f"errors={len(res.errors)} false-errors={len(res.false_errors)} superseded={len(res.superseded)}")

    row = {"n": args.routers, "algorithm": config.algorithm, "expanded": st.expanded_states,
           "forwards": st.forwards, "transitions": st.transitions, "errors": len(res.errors)}
    out.write("traces.txt", traceio.dumps(records, model, {"definition": args.definition}))
    out.write("stats.csv", traceio.write_csv([row], FITG_COLUMNS))
    out.manifest("fitg", args.model or BUNDLED, {
        "routers": args.routers, "algorithm": config.algorithm,
        "fault": str(fault or "none"), "definition": args.definition})
    return EXIT_FOUND if res.errors else EXIT_CLEAN


# --- fotg --------------------------------------------------------------------

FOTG_COLUMNS = ["target", "candidate", "status", "backwardCalls", "rewindCalls", "backtracks", "reachable"]
CRASH_COLUMNS = ["symbol", "before", "trigger", "crashed", "probes", "final", "verdict"]


def _chain(outcome, model) -> str:
    parts = []
    for state, stim in outcome.chain():
        if stim is not None:
            parts.append(stim)
        parts.append(_fmt(state, model))
    return " <- ".join(parts)


def cmd_fotg(args) -> int:
    crash = args.fault == "crash"
    model, _ = open_model(args.model, crash or args.enable_crash)
    engine = Engine(model)
    out = Output(args.out)
    params = {"target": args.target, "fault": args.fault or "none", "interleave": args.interleave,
              "budget": args.budget, "definition": args.definition}
    if crash:
        found = _fotg_crash(engine, args, out)
    else:
        tables = fotg.Tables(engine)
        target = _stimulus(model, args.target)
        if args.interleave:
            found = _fotg_interleave(tables, target, args, out)
        else:
            found = _fotg_targets(tables, target, args, out)
    out.manifest("fotg", args.model or BUNDLED, params)
    return EXIT_FOUND if found else EXIT_CLEAN


def _fotg_targets(tables, target, args, out) -> bool:
    engine, model, d = tables.engine, tables.model, args.definition
    kind = "loss" if args.fault == "loss" else "none"
    lossy = kind == "loss" and tables.kind(target) not in ("orig", "Ext")
    if kind == "loss" and not lossy:
        out.line(f"note: {target} is not a message; loss does not apply")
    rows = fotg.case_study(tables, [target], kind, args.budget)
    out.line(f"fotg model={model.name} target={target} fault={'loss' if lossy else 'none'} candidates={len(rows)}")
    records, stats, found = [], [], False
    for row in rows:
        g_i = row.candidate
        oc = row.outcome
        out.line(f"candidate {_fmt(g_i, model)} {oc.status}")
        for imp in row.implications:
            tag = f" fault={imp.completion.fault}" if imp.faulted else ""
            out.line(f"  forward{tag} -> {_fmt(imp.stable, model)} {imp.verdict(d)}")
            if oc.reached and not imp.verdict(d).ok:
                found = True
            if oc.reached:
                actor = fotg.originator(engine, GlobalState(tuple(g_i)), target)
                records.append(traceio.implication_record(
                    oc.raw, g_i, target, actor, imp.stable,
                    FaultSpec.loss(target) if imp.faulted else None,
                    model, str(imp.verdict(d)), "forward"))
        if oc.reached:
            out.line(f"  backward {_chain(oc, model)}")
        stats.append({"target": target, "candidate": _fmt(g_i, model), "status": oc.status,
                      "backwardCalls": oc.stats.backward_calls, "rewindCalls": oc.stats.rewind_calls,
                      "backtracks": oc.stats.backtracks, "reachable": oc.reached})
    out.write("traces.txt", traceio.dumps(records, model, {"definition": d}))
    out.write("stats.csv", traceio.write_csv(stats, FOTG_COLUMNS))
    return found


def _fotg_interleave(tables, target, args, out) -> bool:
    model = tables.model
    scenarios = fotg.graft_scenarios(tables, target, args.definition, args.budget)
    out.line(f"fotg model={model.name} target={target} interleave scenarios={len(scenarios)}")
    records, found = [], False
    for s in scenarios:
        out.line(f"scenario {s.name} {_fmt(s.trace.final, model)} {s.verdict}: {s.note}")
        if s.raw:
            records.append(traceio.from_raw_steps(s.raw, model, str(s.verdict), s.name))
        else:
            records.append(traceio.from_search_trace(s.trace, model, s.name))
        for st, step in zip(s.trace.states, s.trace.steps):
            out.line(f"  {_fmt(st, model)} --{step.stimulus}-->")
        out.line(f"  {_fmt(s.trace.final, model)}")
        found = found or not s.verdict.ok
    if not scenarios:
        out.line(f"note: {target} has no timer-protected send to interleave")
    out.write("traces.txt", traceio.dumps(records, model, {"definition": args.definition}))
    return found


def _fotg_crash(engine, args, out) -> bool:
    model = engine.model
    target = args.target
    symbol = None if target in (None, "Crash", "all", "*") else _state(model, target)
    found = fotg.crash_analysis(engine, symbol, definition=args.definition)
    out.line(f"fotg model={model.name} fault=crash state={symbol or 'all'} scenarios={len(found)}")
    rows = []
    for sc in found:
        trig = sc.trigger or "rest"
        out.line(f"crash {sc.symbol} from {_fmt(sc.before, model)} during {trig} -> "
                 f"{_fmt(sc.crashed, model)}; probes {' '.join(sc.probes) or '-'} -> "
                 f"{_fmt(sc.final, model)} {sc.label}")
        rows.append({"symbol": sc.symbol, "before": _fmt(sc.before, model), "trigger": trig,
                     "crashed": _fmt(sc.crashed, model), "probes": " ".join(sc.probes),
                     "final": _fmt(sc.final, model), "verdict": sc.label})
    persistent = sum(sc.persistent for sc in found)
    out.line(f"recovered={len(found) - persistent} persistent={persistent}")
    out.write("crash.csv", traceio.write_csv(rows, CRASH_COLUMNS))
    return persistent > 0


# --- count -------------------------------------------------------------------

COUNT_COLUMNS = ["n", "definition", "total", "correct", "error", "correctPct"]
ORACLE_COLUMNS = ["oracleTotal", "oracleCorrect", "oracleError", "agree"]


def cmd_count(args) -> int:
    if args.routers_max < 1:
        raise UsageError(f"--routers-max must be at least 1, got {args.routers_max}")
    defs = (1, 2) if args.definition == "both" else (int(args.definition),)
    model = open_model(args.model)[0] if args.oracle else None
    s = len(model.alphabet) if model else 10
    rows, disagree = [], 0
    for n in range(1, args.routers_max + 1):
        for d in defs:
            c = analytics.closed_form(n, s, d)
            row = {"n": n, "definition": d, "total": c.total, "correct": c.correct,
                   "error": c.error, "correctPct": f"{c.correct_pct:.4f}"}
            if model is not None:
                b = analytics.brute_force_classify(n, model, d)
                agree = (b.total, b.correct, b.error) == (c.total, c.correct, c.error)
                disagree += not agree
                row.update(oracleTotal=b.total, oracleCorrect=b.correct, oracleError=b.error,
                           agree=str(agree).lower())
            rows.append(row)
    text = traceio.write_csv(rows, COUNT_COLUMNS + (ORACLE_COLUMNS if model else []))
    sys.stdout.write(text)
    out = Output(args.out)
    out.write("counts.csv", text)
    out.manifest("count", args.model or BUNDLED if args.oracle else "-",
                 {"routers_max": args.routers_max, "definition": args.definition, "oracle": args.oracle})
    if disagree:
        print(f"warning: closed form and oracle disagree on {disagree} row(s)", file=sys.stderr)
    return EXIT_CLEAN


# --- replay ------------------------------------------------------------------


def _header(text: str) -> dict:
    out = {}
    for line in text.splitlines()[1:]:
        if not line.startswith("# "):
            break
        k, _, v = line[2:].partition(":")
        out[k.strip()] = v.strip()
    return out


def cmd_replay(args) -> int:
    try:
        text = Path(args.traces).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {args.traces}: {exc}") from None
    head = _header(text)
    crash = args.enable_crash or "crash:" in text or "STEP Crash@" in text
    model, _ = open_model(args.model or head.get("model"), crash)
    d = args.definition or int(head.get("definition", 2))
    engine = Engine(model)
    failed = 0
    records = traceio.loads(text, model)
    for i, rec in enumerate(records, 1):
        try:
            v = traceio.replay_record(engine, rec, d)
            print(f"TRACE {i} ok {v}")
        except AssertionError as exc:
            failed += 1
            print(f"TRACE {i} FAILED {exc}")
    print(f"replayed {len(records)} trace(s), {failed} failed")
    return EXIT_FAILURE if failed else EXIT_CLEAN


# --- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mcast-testgen", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fitg", help="forward search for error states")
    f.add_argument("--model", help=f"model file (default: bundled {BUNDLED})")
    f.add_argument("--routers", type=int, required=True, help="routers on the LAN")
    f.add_argument("--algorithm", default="reduced", choices=["exhaustive", "equiv", "equiv+", "reduced"])
    f.add_argument("--fault", help="loss:STIM or crash:STATE")
    f.add_argument("--definition", type=int, default=2, choices=[1, 2])
    f.add_argument("--enable-crash", action="store_true", help="add the crash rule to the model")
    f.add_argument("--out", help="directory for traces.txt, stats.csv, manifest.json")
    f.set_defaults(func=cmd_fitg)

    o = sub.add_parser("fotg", help="synthesize topologies around a target stimulus")
    o.add_argument("--model")
    o.add_argument("--target", required=True, help="stimulus, or a state to crash with --fault crash")
    o.add_argument("--fault", choices=["loss", "crash"])
    o.add_argument("--interleave", action="store_true", help="interleave a timer-clearing adversary")
    o.add_argument("--budget", type=int, default=1_000_000, help="rewind calls per candidate")
    o.add_argument("--definition", type=int, default=2, choices=[1, 2])
    o.add_argument("--enable-crash", action="store_true")
    o.add_argument("--out")
    o.set_defaults(func=cmd_fotg)

    c = sub.add_parser("count", help="state-space counts from the closed forms")
    c.add_argument("--routers-max", type=int, required=True)
    c.add_argument("--definition", default="both", choices=["1", "2", "both"])
    c.add_argument("--oracle", action="store_true", help="add brute-force columns")
    c.add_argument("--model", help="model classified by --oracle")
    c.add_argument("--out")
    c.set_defaults(func=cmd_count)

    r = sub.add_parser("replay", help="re-execute a traces file and confirm its verdicts")
    r.add_argument("traces")
    r.add_argument("--model")
    r.add_argument("--definition", type=int, choices=[1, 2])
    r.add_argument("--enable-crash", action="store_true")
    r.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (ModelError, traceio.TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
