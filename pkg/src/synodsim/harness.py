"""Running a scenario end to end: path, verdicts, files, and manifests."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path as FsPath
from typing import Optional, Sequence

from . import checker
from .checker import Property, Verdict
from .fam import Path, StepKind
from .scheduler import Scenario, Variant, run
from .synod import ActorName
from .trace import trace_text

VERDICT_HEADER = "synodsim-verdicts 1"
MANIFEST_FORMAT = "synodsim-manifest 1"
PROPERTIES = {p.value.lower(): p for p in Property}


class ManifestError(ValueError):
    pass


def parse_checks(text: str) -> list[Property]:
    out = []
    for name in (x.strip().lower() for x in text.split(",") if x.strip()):
        if name not in PROPERTIES:
            raise ValueError(f"unknown property {name!r}; choose from {', '.join(PROPERTIES)}")
        if PROPERTIES[name] not in out:
            out.append(PROPERTIES[name])
    return out


def protected_proposal(path: Path, scenario: Scenario) -> Optional[tuple[ActorName, int, frozenset[ActorName]]]:
    """(proposer, ballot, quorum) of the proposal made when the Cnd window opened."""
    pol = scenario.policy
    if pol.variant is not Variant.CND:
        return None
    for i, (step, _) in enumerate(path.steps):
        if (i >= pol.activation and step.kind is StepKind.PRP
                and step.actor.id == pol.proposer
                and {a.id for a in step.quorum} == set(pol.quorum)):
            return step.actor, step.ballot, step.quorum
    return None


def evaluate(path: Path, scenario: Scenario, checks: Sequence[Property],
             livelock_threshold: int = checker.DEFAULT_LIVELOCK_THRESHOLD) -> list[Verdict]:
    target = protected_proposal(path, scenario)
    out = []
    for prop in checks:
        if prop is Property.SAFETY:
            v = checker.check_safety(path)
        elif prop is Property.THEOREM1:
            v = checker.check_theorem1(path)
        elif prop is Property.LIVELOCK:
            v = checker.detect_livelock(path, livelock_threshold)
        elif target is None:
            v = Verdict(prop, False, detail="no protected proposal in this run")
        elif prop is Property.LEMMA1:
            v = checker.check_lemma1(path, *target)
        else:
            v = checker.check_lemma2(path, *target)
        v.params.setdefault("fairness_bound", scenario.fairness_bound)
        out.append(v)
    return out


def render_verdicts(scenario: Scenario, verdicts: Sequence[Verdict], steps: int) -> str:
    lines = [VERDICT_HEADER, f"scenario\t{scenario.name}", f"seed\t{scenario.seed}",
             f"steps\t{steps}"]
    for v in verdicts:
        w = "-" if v.witness_index is None else str(v.witness_index)
        params = ",".join(f"{k}={v.params[k]}" for k in sorted(v.params))
        lines.append(f"{v.property.value}\t{'holds' if v.holds else 'fails'}\t"
                     f"witness={w}\t{params}\t{v.detail}")
    return "\n".join(lines) + "\n"


@dataclass
class RunOutput:
    scenario: Scenario
    path: Path
    verdicts: list[Verdict]
    trace: str
    verdict_text: str

    @property
    def ok(self) -> bool:
        return all(v.holds for v in self.verdicts)


def execute(scenario: Scenario, checks: Sequence[Property]) -> RunOutput:
    path = run(scenario)
    verdicts = evaluate(path, scenario, checks)
    return RunOutput(scenario, path, verdicts, trace_text(path),
                     render_verdicts(scenario, verdicts, len(path)))


def stem(scenario: Scenario) -> str:
    return f"{scenario.name or 'scenario'}.s{scenario.seed}"


def write_outputs(out: RunOutput, out_dir: FsPath, scenario_path: str,
                  scenario_text: str, checks: Sequence[Property],
                  budget_override: Optional[int]) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    base = stem(out.scenario)
    trace_file = out_dir / f"{base}.trace"
    verdict_file = out_dir / f"{base}.verdict"
    trace_file.write_text(out.trace)
    verdict_file.write_text(out.verdict_text)
    for v in out.verdicts:
        if not v.holds and v.counterexample is not None and v.property is not Property.LIVELOCK:
            (out_dir / f"{base}.{v.property.value.lower()}.cex.trace").write_text(
                trace_text(v.counterexample))
    manifest = {
        "format": MANIFEST_FORMAT,
        "scenario": scenario_path,
        "scenario_sha256": hashlib.sha256(scenario_text.encode()).hexdigest(),
        "seed": out.scenario.seed,
        "budget": budget_override,
        "checks": [p.value.lower() for p in checks],
        "trace": trace_file.name,
        "verdicts": verdict_file.name,
    }
    (out_dir / f"{base}.manifest").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def read_manifest(path: FsPath) -> dict:
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: not JSON: {e}") from None
    if data.get("format") != MANIFEST_FORMAT:
        raise ManifestError(f"{path}: expected format {MANIFEST_FORMAT!r}, got {data.get('format')!r}")
    return data


def with_overrides(scenario: Scenario, seed: Optional[int], budget: Optional[int]) -> Scenario:
    if seed is not None:
        scenario = replace(scenario, seed=seed)
    if budget is not None:
        scenario = replace(scenario, budget=budget)
    return scenario
