"""Command-line entry points.

Exit codes: 0 all requested properties hold, 1 a property fails,
2 usage / parse / I/O error, 3 exploration state cap exceeded.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path as FsPath
from typing import Optional, Sequence

from . import harness, scenario as scn
from .explore import StateCapExceeded, explore, majority_quorums
from .scheduler import IllFormedScenario
from .trace import TraceFormatError, read_trace, replay

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CAP = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _count(text: str) -> int:
    """Integers, also written as 10^6 or 1e6."""
    t = text.replace("_", "")
    try:
        if "^" in t:
            base, exp = t.split("^")
            return int(base) ** int(exp)
        if "e" in t.lower():
            return int(float(t))
        return int(t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a count: {text!r}") from None


def _seeds(text: str) -> list[int]:
    try:
        if ".." in text:
            a, b = text.split("..")
            lo, hi = int(a), int(b)
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds are N or A..B, got {text!r}") from None


def _load(path: str):
    try:
        text = scn.scenario_text(path)
        return scn.parse_scenario(text, FsPath(path).stem), text
    except scn.ScenarioParseError as e:
        raise UsageError(f"{path}: {e}") from None
    except IllFormedScenario as e:
        raise UsageError(f"{path}: scenario invariant violated: {e}") from None
    except OSError as e:
        raise UsageError(f"{path}: {e}") from None


def cmd_run(args) -> int:
    scenario, text = _load(args.scenario)
    try:
        checks = harness.parse_checks(args.check)
    except ValueError as e:
        raise UsageError(str(e)) from None
    seeds = args.seeds if args.seeds is not None else [scenario.seed]
    code = EXIT_OK
    for seed in seeds:
        s = harness.with_overrides(scenario, seed, args.budget)
        try:
            out = harness.execute(s, checks)
        except IllFormedScenario as e:
            raise UsageError(f"{args.scenario}: scenario invariant violated: {e}") from None
        harness.write_outputs(out, FsPath(args.out), args.scenario, text, checks, args.budget)
        for v in out.verdicts:
            w = "-" if v.witness_index is None else v.witness_index
            print(f"{harness.stem(s)}\t{v.property.value}\t{'holds' if v.holds else 'FAILS'}"
                  f"\twitness={w}\t{v.detail}")
        if not out.ok:
            code = EXIT_FAIL
    return code


def cmd_explore(args) -> int:
    scenario, _ = _load(args.scenario)
    initial = scenario.initial()
    names = scenario.names()
    default = majority_quorums(initial.acceptors())
    quorums = {names[a.id]: ([frozenset(names[q] for q in a.quorum)] if a.quorum else default)
               for a in scenario.proposers()}
    try:
        report = explore(initial, args.depth, scenario.fairness_bound,
                         state_cap=args.state_cap, quorums=quorums,
                         max_proposals=args.max_proposals)
    except StateCapExceeded as e:
        _emit_report(e.report.summary(), args)
        print(f"state cap exceeded: {e}", file=sys.stderr)
        return EXIT_CAP
    _emit_report(report.summary(), args)
    if not report.safety_holds:
        return EXIT_FAIL
    if args.require_progress and report.progress_paths != report.paths:
        return EXIT_FAIL
    return EXIT_OK


def _emit_report(text: str, args) -> None:
    sys.stdout.write(text)
    if args.out:
        out = FsPath(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{FsPath(args.scenario).stem}.d{args.depth}.report").write_text(text)


def cmd_replay(args) -> int:
    try:
        with open(args.trace) as f:
            parsed = read_trace(f)
    except OSError as e:
        raise UsageError(f"{args.trace}: {e}") from None
    except TraceFormatError as e:
        raise UsageError(f"{args.trace}: {e}") from None
    result = replay(parsed)
    if result.ok:
        print(f"replayed {result.steps_checked} steps: all digests match")
        return EXIT_OK
    print(f"divergence at index {result.divergent_index}: {result.reason}")
    return EXIT_FAIL


def cmd_rerun(args) -> int:
    mpath = FsPath(args.manifest)
    try:
        m = harness.read_manifest(mpath)
    except (OSError, harness.ManifestError) as e:
        raise UsageError(str(e)) from None
    src = m["scenario"]
    if not FsPath(src).exists() and (mpath.parent / src).exists():
        src = str(mpath.parent / src)
    scenario, text = _load(src)
    if hashlib.sha256(text.encode()).hexdigest() != m["scenario_sha256"]:
        print("scenario file changed since the manifest was written")
        return EXIT_FAIL
    checks = harness.parse_checks(",".join(m["checks"]))
    out = harness.execute(harness.with_overrides(scenario, m["seed"], m["budget"]), checks)
    same = True
    for key, fresh in (("trace", out.trace), ("verdicts", out.verdict_text)):
        recorded = (mpath.parent / m[key]).read_text()
        if recorded != fresh:
            print(f"{m[key]}: differs from re-run")
            same = False
    if same:
        print("re-run reproduces trace and verdicts byte for byte")
    return EXIT_OK if same else EXIT_FAIL


def cmd_scenarios(args) -> int:
    for name in scn.CANNED:
        if args.export:
            out = FsPath(args.export)
            out.mkdir(parents=True, exist_ok=True)
            (out / f"{name}.scn").write_text(scn.canned_text(name))
        print(f"{name}.scn")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="synodsim", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and check properties")
    r.add_argument("scenario")
    r.add_argument("--check", default="safety",
                   help="comma list of safety,theorem1,lemma1,lemma2,livelock")
    r.add_argument("--seeds", type=_seeds, help="N or A..B, overrides the scenario seed")
    r.add_argument("--budget", type=_count)
    r.add_argument("--out", default="out")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("explore", help="exhaustively explore all schedules up to a depth")
    e.add_argument("scenario")
    e.add_argument("--depth", type=int, default=40)
    e.add_argument("--state-cap", type=_count, default=10**6)
    e.add_argument("--max-proposals", type=int)
    e.add_argument("--require-progress", action="store_true")
    e.add_argument("--out")
    e.set_defaults(func=cmd_explore)

    p = sub.add_parser("replay", help="verify a trace's digests by re-applying its steps")
    p.add_argument("trace")
    p.set_defaults(func=cmd_replay)

    m = sub.add_parser("rerun", help="re-run from a manifest and compare outputs byte for byte")
    m.add_argument("manifest")
    m.set_defaults(func=cmd_rerun)

    s = sub.add_parser("scenarios", help="list or export the bundled scenarios")
    s.add_argument("--export", metavar="DIR")
    s.set_defaults(func=cmd_scenarios)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
