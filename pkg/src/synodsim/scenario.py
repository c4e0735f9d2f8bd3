"""Reading and writing ``.scn`` scenario files.

::

    # comments and blank lines are ignored
    [roster]
    P1 proposer value=apple quorum=A1,A2
    A1 acceptor
    [nonfaulty]
    P1 A1
    [policy]
    variant = cnd            # fair | roundrobin | duel | cnd
    proposer = P1            # cnd only
    ballot = auto            # cnd only: a number or auto
    quorum = A1,A2           # cnd only
    activation = 10          # cnd only
    prelude = fair           # cnd only, optional
    [failures]
    3 stp A2
    40 bgn A2
    [limits]
    budget = 5000
    patience = 40
    fairness_bound = 64
    seed = 7

Every section is mandatory except ``[failures]``.
"""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path as FsPath
from typing import Optional

from .fam import StepKind
from .scheduler import (ActorSpec, FailureEvent, Policy, Scenario, Variant,
                        validate)
from .synod import Role

SECTIONS = ("roster", "nonfaulty", "policy", "failures", "limits")
LIMITS = ("budget", "patience", "fairness_bound", "seed")
CANNED = ("single", "duel", "cnd", "crashq")
_ID = re.compile(r"^[A-Za-z0-9_.-]+$")


class ScenarioParseError(ValueError):
    def __init__(self, line: int, field: str, msg: str):
        super().__init__(f"line {line}: {field}: {msg}")
        self.line = line
        self.field = field


def _ident(text: str, line: int, field: str) -> str:
    if not _ID.match(text):
        raise ScenarioParseError(line, field, f"bad actor id {text!r}")
    return text


def _int(text: str, line: int, field: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ScenarioParseError(line, field, f"expected an integer, got {text!r}") from None


def _id_list(text: str, line: int, field: str) -> frozenset[str]:
    return frozenset(_ident(x.strip(), line, field) for x in text.split(",") if x.strip())


def parse_scenario(text: str, name: str = "") -> Scenario:
    """Parse and validate; raises ScenarioParseError or IllFormedScenario."""
    section: Optional[str] = None
    seen: dict[str, int] = {}
    roster: list[ActorSpec] = []
    nonfaulty: set[str] = set()
    policy: dict[str, tuple[str, int]] = {}
    failures: list[FailureEvent] = []
    limits: dict[str, tuple[str, int]] = {}
    n = 0
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or line[1:-1] not in SECTIONS:
                raise ScenarioParseError(n, "section", f"unknown section {line}")
            section = line[1:-1]
            if section in seen:
                raise ScenarioParseError(n, "section", f"duplicate section [{section}]")
            seen[section] = n
            continue
        if section is None:
            raise ScenarioParseError(n, "section", "content before the first section")
        if section == "roster":
            roster.append(_roster_line(line, n))
        elif section == "nonfaulty":
            nonfaulty.update(_ident(x, n, "nonfaulty") for x in line.split())
        elif section == "failures":
            parts = line.split()
            if len(parts) != 3 or parts[1] not in ("stp", "bgn"):
                raise ScenarioParseError(n, "failures", "expected '<index> stp|bgn <actor>'")
            kind = StepKind.STP if parts[1] == "stp" else StepKind.BGN
            failures.append(FailureEvent(_int(parts[0], n, "failures"), _ident(parts[2], n, "failures"), kind))
        else:
            if "=" not in line:
                raise ScenarioParseError(n, section, "expected 'key = value'")
            k, v = (x.strip() for x in line.split("=", 1))
            target = policy if section == "policy" else limits
            if k in target:
                raise ScenarioParseError(n, k, "duplicate key")
            target[k] = (v, n)
    for s in SECTIONS:
        if s != "failures" and s not in seen:
            raise ScenarioParseError(n, s, f"missing section [{s}]")
    for k in limits:
        if k not in LIMITS:
            raise ScenarioParseError(limits[k][1], k, "unknown limit")
    vals = {}
    for k in LIMITS:
        if k not in limits:
            raise ScenarioParseError(seen["limits"], k, "missing limit")
        vals[k] = _int(limits[k][0], limits[k][1], k)
    scenario = Scenario(tuple(roster), frozenset(nonfaulty), _policy(policy, seen["policy"]),
                        tuple(failures), vals["budget"], vals["patience"],
                        vals["fairness_bound"], vals["seed"], name)
    validate(scenario)
    return scenario


def _roster_line(line: str, n: int) -> ActorSpec:
    parts = line.split()
    if len(parts) < 2:
        raise ScenarioParseError(n, "roster", "expected '<id> proposer|acceptor [key=value ...]'")
    ident = _ident(parts[0], n, "roster")
    try:
        role = Role(parts[1])
    except ValueError:
        raise ScenarioParseError(n, "role", f"unknown role {parts[1]!r}") from None
    opts = {}
    for kv in parts[2:]:
        if "=" not in kv:
            raise ScenarioParseError(n, "roster", f"expected key=value, got {kv!r}")
        k, v = kv.split("=", 1)
        if k not in ("value", "quorum") or role is Role.ACCEPTOR:
            raise ScenarioParseError(n, k, f"option not allowed for {role.value}")
        opts[k] = v
    quorum = _id_list(opts["quorum"], n, "quorum") if "quorum" in opts else None
    return ActorSpec(ident, role, opts.get("value"), quorum)


def _policy(raw: dict[str, tuple[str, int]], section_line: int) -> Policy:
    if "variant" not in raw:
        raise ScenarioParseError(section_line, "variant", "missing policy variant")

    def variant(key: str) -> Variant:
        v, n = raw[key]
        try:
            return Variant(v)
        except ValueError:
            raise ScenarioParseError(n, key, f"unknown policy {v!r}") from None

    allowed = {"variant"}
    v = variant("variant")
    if v is not Variant.CND:
        extra = set(raw) - allowed
        if extra:
            k = sorted(extra)[0]
            raise ScenarioParseError(raw[k][1], k, f"not a {v.value} policy field")
        return Policy(v)
    allowed |= {"proposer", "ballot", "quorum", "activation", "prelude"}
    for k in raw:
        if k not in allowed:
            raise ScenarioParseError(raw[k][1], k, "unknown policy field")
    for k in ("proposer", "ballot", "quorum", "activation"):
        if k not in raw:
            raise ScenarioParseError(section_line, k, "missing cnd policy field")
    ballot_s, bn = raw["ballot"]
    ballot = None if ballot_s == "auto" else _int(ballot_s, bn, "ballot")
    return Policy(Variant.CND,
                  proposer=_ident(raw["proposer"][0], raw["proposer"][1], "proposer"),
                  ballot=ballot,
                  quorum=_id_list(*raw["quorum"], "quorum"),
                  activation=_int(*raw["activation"], "activation"),
                  prelude=variant("prelude") if "prelude" in raw else Variant.FAIR)


def dump_scenario(s: Scenario) -> str:
    out = ["[roster]"]
    for a in s.roster:
        line = f"{a.id} {a.role.value}"
        if a.value is not None:
            line += f" value={a.value}"
        if a.quorum is not None:
            line += " quorum=" + ",".join(sorted(a.quorum))
        out.append(line)
    out += ["[nonfaulty]", " ".join(sorted(s.nonfaulty))]
    p = s.policy
    out += ["[policy]", f"variant = {p.variant.value}"]
    if p.variant is Variant.CND:
        out += [f"proposer = {p.proposer}",
                f"ballot = {'auto' if p.ballot is None else p.ballot}",
                f"quorum = {','.join(sorted(p.quorum))}",
                f"activation = {p.activation}",
                f"prelude = {p.prelude.value}"]
    out.append("[failures]")
    out += [f"{e.index} {e.kind.value.lower()} {e.actor}" for e in s.failures]
    out += ["[limits]", f"budget = {s.budget}", f"patience = {s.patience}",
            f"fairness_bound = {s.fairness_bound}", f"seed = {s.seed}"]
    return "\n".join(out) + "\n"


def canned_text(name: str) -> str:
    return resources.files("synodsim.scenarios").joinpath(f"{name}.scn").read_text()


def load_canned(name: str) -> Scenario:
    return parse_scenario(canned_text(name), name)


def scenario_text(path: str | FsPath) -> str:
    """File contents; a bare canned name such as ``duel.scn`` that does not
    exist on disk falls back to the packaged copy."""
    p = FsPath(path)
    if not p.exists() and p.parent == FsPath(".") and p.stem in CANNED and p.suffix == ".scn":
        return canned_text(p.stem)
    return p.read_text()


def load_scenario(path: str | FsPath) -> Scenario:
    return parse_scenario(scenario_text(path), FsPath(path).stem)
