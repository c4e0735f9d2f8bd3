"""Scenario model and the policies that drive a configuration along a path.

Policies:

``fair``        uniform random choice among enabled steps, with bounded aging:
                a step left enabled for ``fairness_bound`` selections is forced.
``roundrobin``  actors take turns; each turn runs the actor's oldest step.
``duel``        the two-proposer interleaving that preempts every Phase 2.
``cnd``         from ``activation`` on, a nonfaulty proposer runs ballot ``b``
                against a nonfaulty quorum while higher ballots toward that
                quorum are held back, until the proposer learns.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from enum import Enum
from typing import Mapping, Optional, Sequence

from . import synod
from .fam import (Configuration, Path, StepKind, TransitionStep, apply,
                  base_steps, well_formed)
from .synod import ActorName, Kind, ProposerState, Role
from .trace import RosterEntry, initial_configuration

DEFAULT_FAIRNESS_BOUND = 64


class IllFormedScenario(ValueError):
    def __init__(self, invariant: str, detail: str):
        super().__init__(f"{invariant}: {detail}")
        self.invariant = invariant


class DuelImpossible(IllFormedScenario):
    def __init__(self, detail: str):
        super().__init__("duel-needs-two-proposers", detail)


class Variant(str, Enum):
    FAIR = "fair"
    ROUND_ROBIN = "roundrobin"
    DUEL = "duel"
    CND = "cnd"


@dataclass(frozen=True)
class Policy:
    variant: Variant = Variant.FAIR
    # Cnd only.  ballot=None picks the smallest ballot of the proposer's class
    # above every ballot in the configuration when the window opens.
    proposer: Optional[str] = None
    ballot: Optional[int] = None
    quorum: frozenset[str] = frozenset()
    activation: int = 0
    prelude: Variant = Variant.FAIR


@dataclass(frozen=True)
class ActorSpec:
    id: str
    role: synod.Role
    value: Optional[str] = None
    quorum: Optional[frozenset[str]] = None


@dataclass(frozen=True)
class FailureEvent:
    index: int
    actor: str
    kind: StepKind


@dataclass(frozen=True)
class Scenario:
    roster: tuple[ActorSpec, ...]
    nonfaulty: frozenset[str]
    policy: Policy = Policy()
    failures: tuple[FailureEvent, ...] = ()
    budget: int = 10_000
    patience: int = 50
    fairness_bound: int = DEFAULT_FAIRNESS_BOUND
    seed: int = 0
    name: str = ""

    def names(self) -> dict[str, ActorName]:
        return {a.id: ActorName(a.id, a.role) for a in self.roster}

    def proposers(self) -> list[ActorSpec]:
        return [a for a in self.roster if a.role is Role.PROPOSER]

    def acceptors(self) -> list[ActorSpec]:
        return [a for a in self.roster if a.role is Role.ACCEPTOR]

    def roster_entries(self) -> list[RosterEntry]:
        props = [a.id for a in self.proposers()]
        out = []
        for a in self.roster:
            name = ActorName(a.id, a.role)
            if a.role is Role.PROPOSER:
                out.append(RosterEntry(name, a.value or f"v-{a.id}",
                                       len(props), props.index(a.id)))
            else:
                out.append(RosterEntry(name))
        return out

    def initial(self) -> Configuration:
        return initial_configuration(self.roster_entries())

    def with_policy(self, policy: Policy) -> "Scenario":
        return replace(self, policy=policy)


def is_majority(quorum: frozenset[str], acceptors: Sequence[str]) -> bool:
    return quorum <= set(acceptors) and 2 * len(quorum) > len(acceptors)


def validate(s: Scenario) -> None:
    ids = [a.id for a in s.roster]
    if len(set(ids)) != len(ids):
        raise IllFormedScenario("unique-actor-names", "duplicate actor id in roster")
    acceptors = [a.id for a in s.acceptors()]
    if not s.proposers() or not acceptors:
        raise IllFormedScenario("roles-present", "need at least one proposer and one acceptor")
    if not s.nonfaulty <= set(ids):
        raise IllFormedScenario("nonfaulty-in-roster",
                                f"unknown actors {sorted(s.nonfaulty - set(ids))}")
    if s.budget < 0:
        raise IllFormedScenario("positive-limits", "budget must be >= 0")
    for what, v in (("patience", s.patience), ("fairness_bound", s.fairness_bound)):
        if v <= 0:
            raise IllFormedScenario("positive-limits", f"{what} must be > 0")
    if not 0 <= s.seed < 2**64:
        raise IllFormedScenario("seed-64-bit", "seed must fit in 64 bits")
    for a in s.proposers():
        if a.value is not None and (a.value == synod.NULL_VALUE or set(a.value) & set("|\t,;:\n")):
            raise IllFormedScenario("value-syntax", f"bad value for {a.id}")
        if a.quorum is not None and not is_majority(a.quorum, acceptors):
            raise IllFormedScenario("quorum-is-majority",
                                    f"{a.id} quorum {sorted(a.quorum)} is not a majority of acceptors")
    _validate_failures(s, set(ids))
    _validate_policy(s, acceptors)


def _validate_failures(s: Scenario, ids: set[str]) -> None:
    down: dict[str, bool] = {}
    last: dict[str, int] = {}
    for ev in sorted(s.failures, key=lambda e: e.index):
        if ev.actor not in ids:
            raise IllFormedScenario("failures-in-roster", f"unknown actor {ev.actor}")
        if ev.index < 0:
            raise IllFormedScenario("failures-index", "negative failure index")
        if ev.kind not in (StepKind.STP, StepKind.BGN):
            raise IllFormedScenario("failures-kind", "failure events are stp or bgn")
        is_down = down.get(ev.actor, False)
        if (ev.kind is StepKind.STP) == is_down:
            raise IllFormedScenario("failures-alternate",
                                    f"{ev.actor}: {ev.kind.value} at {ev.index} is never enabled")
        down[ev.actor] = not is_down
        last[ev.actor] = ev.index
    for actor, is_down in down.items():
        if is_down and actor in s.nonfaulty:
            raise IllFormedScenario(
                "nonfaulty-recovers",
                f"{actor} is declared nonfaulty but stops at {last[actor]} with no later bgn")


def _validate_policy(s: Scenario, acceptors: list[str]) -> None:
    p = s.policy
    if p.variant is Variant.DUEL or (p.variant is Variant.CND and p.prelude is Variant.DUEL):
        if len(s.proposers()) != 2:
            raise DuelImpossible(f"duel needs exactly 2 proposers, roster has {len(s.proposers())}")
    if p.variant is not Variant.CND:
        return
    if p.prelude is Variant.CND:
        raise IllFormedScenario("cnd-prelude", "prelude cannot itself be cnd")
    props = [a.id for a in s.proposers()]
    if p.proposer not in props:
        raise IllFormedScenario("cnd-proposer", f"{p.proposer!r} is not a proposer")
    if p.proposer not in s.nonfaulty:
        raise IllFormedScenario("cnd-proposer-nonfaulty", f"{p.proposer} must be nonfaulty")
    if not p.quorum or not is_majority(p.quorum, acceptors):
        raise IllFormedScenario("cnd-quorum-is-majority",
                                f"{sorted(p.quorum)} is not a majority of acceptors")
    if not p.quorum <= s.nonfaulty:
        raise IllFormedScenario("cnd-quorum-nonfaulty",
                                f"{sorted(p.quorum - s.nonfaulty)} not nonfaulty")
    if p.ballot is not None:
        i = props.index(p.proposer)
        if p.ballot <= 0 or p.ballot % len(props) != i:
            raise IllFormedScenario("cnd-ballot-unique",
                                    f"ballot {p.ballot} is not in {p.proposer}'s class {i} mod {len(props)}")
    if p.activation < 0:
        raise IllFormedScenario("cnd-activation", "activation must be >= 0")


def random_failure_plan(actors: Sequence[str], nonfaulty: frozenset[str],
                        seed: int, horizon: int, max_events: int = 6) -> tuple[FailureEvent, ...]:
    """A valid failure plan drawn from its own seed.

    Each chosen actor alternates stp/bgn at increasing indices below
    ``horizon``; nonfaulty actors always end with a bgn.
    """
    rng = random.Random(seed)
    plan = []
    for a in actors:
        if rng.random() < 0.5:
            continue
        n = rng.randint(1, max_events)
        if a in nonfaulty and n % 2:
            n += 1
        for k, index in enumerate(sorted(rng.sample(range(horizon), min(n, horizon)))):
            plan.append(FailureEvent(index, a, StepKind.STP if k % 2 == 0 else StepKind.BGN))
    return tuple(sorted(plan, key=lambda e: (e.index, e.actor)))


# Picking ---------------------------------------------------------------------

Ages = dict[TransitionStep, int]


def fair_pick(pending: Sequence[TransitionStep], ages: Ages, rng: random.Random,
              fairness_bound: int = DEFAULT_FAIRNESS_BOUND) -> TransitionStep:
    """Uniform choice, except a step waiting ``fairness_bound`` picks is forced."""
    if not pending:
        raise ValueError("nothing to pick from")
    overdue = [s for s in pending if ages.get(s, 0) >= fairness_bound]
    if overdue:
        return max(overdue, key=lambda s: ages[s])
    return pending[rng.randrange(len(pending))]


def update_ages(ages: Ages, pending: Sequence[TransitionStep], chosen: TransitionStep) -> None:
    keep = {}
    for s in pending:
        if s != chosen:
            keep[s] = ages.get(s, 0) + 1
    ages.clear()
    ages.update(keep)


def round_robin_pick(pending: Sequence[TransitionStep], ages: Ages,
                     order: Sequence[ActorName], turn: int,
                     fairness_bound: int = DEFAULT_FAIRNESS_BOUND) -> tuple[TransitionStep, int]:
    overdue = [s for s in pending if ages.get(s, 0) >= fairness_bound]
    if overdue:
        return max(overdue, key=lambda s: ages[s]), turn
    by_actor: dict[ActorName, list[TransitionStep]] = {}
    for s in pending:
        by_actor.setdefault(s.actor, []).append(s)
    for k in range(len(order)):
        a = order[(turn + k) % len(order)]
        if a in by_actor:
            # Oldest first; max() keeps the first of equals, i.e. canonical order.
            return max(by_actor[a], key=lambda s: ages.get(s, 0)), (turn + k + 1) % len(order)
    raise ValueError("nothing to pick from")


def cnd_filter(pending: Sequence[TransitionStep], policy: Policy, clock: int,
               config: Configuration, quorum: frozenset[ActorName],
               ballot: int) -> list[TransitionStep]:
    """Hold back Snd/Rcv of messages above the protected ballot toward its quorum.

    Identity before ``policy.activation`` and once the protected proposer has
    learned.
    """
    if clock < policy.activation:
        return list(pending)
    p = next((a for a in config.actors() if a.id == policy.proposer), None)
    if p is not None and config.state(p).learned is not None:
        return list(pending)
    return [s for s in pending
            if s.message is None
            or not (s.message.ballot > ballot and s.message.receiver in quorum)]


@dataclass
class DuelState:
    first: ActorName
    second: ActorName
    quorums: Mapping[ActorName, frozenset[ActorName]]
    active: Optional[ActorName] = None
    held: Optional[int] = None

    def other(self, p: ActorName) -> ActorName:
        return self.second if p == self.first else self.first


def _max_ballot(config: Configuration) -> int:
    top = 0
    for _, st in config.states():
        if isinstance(st, ProposerState):
            top = max(top, st.current_ballot)
        else:
            top = max(top, st.highest_seen)
        for m in st.outbox:
            top = max(top, m.ballot)
    for m in config.in_flight:
        top = max(top, m.ballot)
    return top


def ballot_above(p: ProposerState, floor: int) -> int:
    """Smallest ballot of ``p``'s class strictly above ``floor``."""
    return synod.next_ballot(replace(p, current_ballot=max(floor, p.current_ballot)))


def adversarial_duel_pick(pending: Sequence[TransitionStep], duel: DuelState,
                          config: Configuration) -> Optional[TransitionStep]:
    """Deterministic interleaving that completes each proposer's Phase 1
    between the other's Phase 1 and Phase 2.

    The proposer currently running Phase 1 is ``active``.  When it gathers
    its promises, the other proposer starts a higher ballot and the active
    proposer's accepts (ballot ``held``) wait until that Phase 1 completes.
    Released accepts then reach acceptors that have promised higher.
    """
    if duel.active is None:
        duel.active = duel.first
    a = duel.active
    st = config.state(a)
    if st.current_ballot == 0:
        if not config.is_available(a):
            return None
        return TransitionStep.prp(a, ballot_above(st, 0), duel.quorums[a])
    if synod.quorum_predicates(st)[0]:
        o = duel.other(a)
        ost = config.state(o)
        if not config.is_available(o) or ost.learned is not None:
            return None
        duel.held = st.current_ballot
        duel.active = o
        return TransitionStep.prp(o, ballot_above(ost, _max_ballot(config)), duel.quorums[o])
    allowed = [s for s in pending
               if not (s.message.kind in (Kind.ACCEPT, Kind.VOTED)
                       and s.message.ballot == duel.held)]
    stale = [s for s in allowed if s.message.ballot < st.current_ballot]
    if stale:
        return stale[0]
    current = [s for s in allowed if s.message.ballot == st.current_ballot]
    if current:
        return current[0]
    return allowed[0] if allowed else None


# Running ---------------------------------------------------------------------

def first_majority(acceptors: Sequence[ActorName]) -> frozenset[ActorName]:
    return frozenset(sorted(acceptors)[: len(acceptors) // 2 + 1])


def _progress_key(st: ProposerState) -> tuple:
    return (st.current_ballot, st.promises, st.votes, st.learned)


def run(scenario: Scenario, *, debug: bool = False) -> Path:
    """Drive the scenario's initial configuration until quiescence or budget.

    A run is a pure function of the scenario: same scenario and seed give
    the same path.
    """
    validate(scenario)
    rng = random.Random(scenario.seed)
    names = scenario.names()
    config = scenario.initial()
    acceptors = [names[a.id] for a in scenario.acceptors()]
    proposers = [names[a.id] for a in scenario.proposers()]
    fixed_quorums = {names[a.id]: frozenset(names[q] for q in a.quorum)
                     for a in scenario.proposers() if a.quorum is not None}
    order = [names[a.id] for a in scenario.roster]
    policy = scenario.policy
    prelude = policy.prelude if policy.variant is Variant.CND else policy.variant

    duel = None
    if Variant.DUEL in (policy.variant, prelude):
        duel = DuelState(proposers[0], proposers[1],
                         {p: fixed_quorums.get(p, first_majority(acceptors)) for p in proposers})

    cnd_p = names[policy.proposer] if policy.variant is Variant.CND else None
    cnd_q = frozenset(names[q] for q in policy.quorum) if cnd_p else frozenset()
    cnd_ballot: Optional[int] = None
    cnd_started = False

    plan = sorted(scenario.failures, key=lambda e: e.index)
    steps: list[tuple[TransitionStep, Configuration]] = []
    ages: Ages = {}
    turn = 0
    last_progress = {p: 0 for p in proposers}

    def resolve(step: TransitionStep) -> TransitionStep:
        if step.kind is not StepKind.PRP or step.quorum:
            return step
        q = fixed_quorums.get(step.actor)
        if q is None:
            q = frozenset(rng.sample(acceptors, len(acceptors) // 2 + 1))
        return TransitionStep.prp(step.actor, step.ballot, q)

    def candidates(clock: int, idle: bool) -> list[TransitionStep]:
        out = []
        for p in proposers:
            if not config.is_available(p):
                continue
            st = config.state(p)
            if st.learned is not None:
                continue
            if p == cnd_p and clock >= policy.activation:
                continue
            if st.current_ballot == 0 or idle or clock - last_progress[p] > scenario.patience:
                out.append(TransitionStep.prp(p, synod.next_ballot(st), frozenset()))
        return out

    while len(steps) < scenario.budget:
        clock = len(steps)
        step = None
        if plan and plan[0].index <= clock:
            ev = plan.pop(0)
            a = names[ev.actor]
            step = TransitionStep(ev.kind, a)
        elif cnd_p is not None and not cnd_started and clock >= policy.activation:
            st = config.state(cnd_p)
            if st.learned is not None:
                cnd_started = True
            elif config.is_available(cnd_p):
                cnd_ballot = _open_window(config, st, policy, cnd_q)
                cnd_started = True
                step = TransitionStep.prp(cnd_p, cnd_ballot, cnd_q)
        if step is None:
            in_window = cnd_started and cnd_ballot is not None
            picker = Variant.FAIR if (prelude is Variant.DUEL and cnd_started) else prelude
            pending = base_steps(config)
            if in_window:
                pending = cnd_filter(pending, policy, clock, config, cnd_q, cnd_ballot)
            if picker is Variant.DUEL:
                step = adversarial_duel_pick(pending, duel, config)
            else:
                pending += candidates(clock, idle=False)
                if not pending and not plan:
                    pending = candidates(clock, idle=True)
                if pending:
                    if picker is Variant.ROUND_ROBIN:
                        step, turn = round_robin_pick(pending, ages, order, turn,
                                                      scenario.fairness_bound)
                    else:
                        step = fair_pick(pending, ages, rng, scenario.fairness_bound)
                    update_ages(ages, pending, step)
            if step is None:
                if not plan:
                    break
                ev = plan.pop(0)
                step = TransitionStep(ev.kind, names[ev.actor])
        step = resolve(step)
        before = config
        config = apply(config, step)
        if debug and not well_formed(config):
            raise AssertionError(f"ill-formed configuration after step {clock}")
        steps.append((step, config))
        if step.actor.role is Role.PROPOSER and step.kind in (StepKind.RCV, StepKind.PRP):
            if _progress_key(before.state(step.actor)) != _progress_key(config.state(step.actor)):
                last_progress[step.actor] = clock + 1
    return Path(scenario.initial(), steps)


def _open_window(config: Configuration, st: ProposerState, policy: Policy,
                 quorum: frozenset[ActorName]) -> int:
    if policy.ballot is None:
        return ballot_above(st, _max_ballot(config))
    b = policy.ballot
    seen = max([config.state(a).highest_seen for a in quorum] + [st.current_ballot])
    if b <= seen:
        raise IllFormedScenario(
            "cnd-ballot-fresh",
            f"protected ballot {b} is not above ballot {seen} already seen when the window opens")
    return b
