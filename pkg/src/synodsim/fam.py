"""Failure-aware actor configurations and their transition rules.

A configuration is the triple (available actors, failed actors, messages en
route).  Five step kinds move between configurations:

* ``Snd``/``Rcv`` -- base-level message send and receipt,
* ``Prp``        -- a proposer starting a round (the local computation the
                    protocol leaves unscheduled),
* ``Stp``/``Bgn`` -- meta-level stop and restart over stable storage.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from . import synod
from .synod import (ActorName, ActorState, Message, ProposerState, Role,
                    bag_add, bag_remove)


class NotEnabled(Exception):
    """The step cannot be taken in the given configuration."""


class StepKind(str, Enum):
    SND = "Snd"
    RCV = "Rcv"
    PRP = "Prp"
    STP = "Stp"
    BGN = "Bgn"


BASE_KINDS = (StepKind.SND, StepKind.RCV, StepKind.PRP)


@dataclass(frozen=True)
class TransitionStep:
    kind: StepKind
    actor: ActorName
    message: Optional[Message] = None
    ballot: int = 0
    quorum: frozenset[ActorName] = frozenset()

    def __post_init__(self):
        has_message = self.kind in (StepKind.SND, StepKind.RCV)
        if has_message != (self.message is not None):
            raise ValueError(f"{self.kind.value} step message presence is wrong")
        if self.kind is StepKind.SND and self.message.sender != self.actor:
            raise ValueError("a Snd step is taken by the message sender")
        if self.kind is StepKind.RCV and self.message.receiver != self.actor:
            raise ValueError("a Rcv step is taken by the message receiver")

    @classmethod
    def snd(cls, actor: ActorName, m: Message) -> "TransitionStep":
        return cls(StepKind.SND, actor, m)

    @classmethod
    def rcv(cls, actor: ActorName, m: Message) -> "TransitionStep":
        return cls(StepKind.RCV, actor, m)

    @classmethod
    def prp(cls, actor: ActorName, ballot: int,
            quorum: Iterable[ActorName]) -> "TransitionStep":
        return cls(StepKind.PRP, actor, ballot=ballot, quorum=frozenset(quorum))

    @classmethod
    def stp(cls, actor: ActorName) -> "TransitionStep":
        return cls(StepKind.STP, actor)

    @classmethod
    def bgn(cls, actor: ActorName) -> "TransitionStep":
        return cls(StepKind.BGN, actor)

    @property
    def is_base(self) -> bool:
        return self.kind in BASE_KINDS

    def sort_key(self) -> tuple:
        m = self.message.sort_key() if self.message is not None else ()
        return (self.kind.value, self.actor.id, m, self.ballot,
                tuple(sorted(a.id for a in self.quorum)))


def _freeze(states: Mapping[ActorName, ActorState]) -> Mapping[ActorName, ActorState]:
    return MappingProxyType(dict(sorted(states.items())))


@dataclass(frozen=True, eq=False)
class Configuration:
    available: Mapping[ActorName, ActorState]
    failed: Mapping[ActorName, ActorState]
    in_flight: tuple[Message, ...] = ()
    _key: Optional[tuple] = field(default=None, repr=False, compare=False)

    @classmethod
    def of(cls, available: Mapping[ActorName, ActorState],
           failed: Mapping[ActorName, ActorState] | None = None,
           in_flight: Iterable[Message] = ()) -> "Configuration":
        return cls(_freeze(available), _freeze(failed or {}),
                   synod.bag_of(in_flight))

    def key(self) -> tuple:
        if self._key is None:
            k = (tuple(self.available.items()), tuple(self.failed.items()),
                 self.in_flight)
            object.__setattr__(self, "_key", k)
        return self._key

    def __eq__(self, other) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def messages(self) -> tuple[Message, ...]:
        return self.in_flight

    def is_available(self, a: ActorName) -> bool:
        return a in self.available

    def state(self, a: ActorName) -> ActorState:
        if a in self.available:
            return self.available[a]
        return self.failed[a]

    def actors(self) -> list[ActorName]:
        return sorted([*self.available, *self.failed])

    def proposers(self) -> list[ActorName]:
        return [a for a in self.actors() if a.role is Role.PROPOSER]

    def acceptors(self) -> list[ActorName]:
        return [a for a in self.actors() if a.role is Role.ACCEPTOR]

    def states(self) -> Iterator[tuple[ActorName, ActorState]]:
        for a in self.actors():
            yield a, self.state(a)


def well_formed(config: Configuration) -> bool:
    known = set(config.available) | set(config.failed)
    if set(config.available) & set(config.failed):
        return False
    for name, state in (*config.available.items(), *config.failed.items()):
        if state.name != name:
            return False
        if not synod.referenced_names(state) <= known:
            return False
    return all(m.sender in known and m.receiver in known for m in config.in_flight)


def enabled(config: Configuration, step: TransitionStep) -> bool:
    a = step.actor
    if step.kind is StepKind.STP:
        return a in config.available
    if step.kind is StepKind.BGN:
        return a in config.failed
    if a not in config.available:
        return False
    state = config.available[a]
    if step.kind is StepKind.SND:
        return step.message in state.outbox
    if step.kind is StepKind.RCV:
        return step.message.receiver == a and synod.bag_contains(config.in_flight, step.message)
    # Prp
    known = set(config.available) | set(config.failed)
    return (isinstance(state, ProposerState)
            and state.learned is None
            and step.ballot > state.current_ballot
            and bool(step.quorum)
            and all(q.role is Role.ACCEPTOR and q in known for q in step.quorum))


def apply(config: Configuration, step: TransitionStep) -> Configuration:
    if not enabled(config, step):
        raise NotEnabled(f"{step.kind.value} by {step.actor} is not enabled")
    a = step.actor
    available = dict(config.available)
    failed = dict(config.failed)
    in_flight = config.in_flight
    if step.kind is StepKind.STP:
        failed[a] = available.pop(a)
    elif step.kind is StepKind.BGN:
        available[a] = failed.pop(a)
    elif step.kind is StepKind.SND:
        available[a] = synod.consume_outbox(available[a], step.message)
        in_flight = bag_add(in_flight, step.message)
    elif step.kind is StepKind.RCV:
        in_flight = bag_remove(in_flight, step.message)
        available[a] = synod.on_receive(available[a], step.message)
    else:
        available[a] = synod.propose(available[a], step.ballot, step.quorum)
    return Configuration(_freeze(available), _freeze(failed), in_flight)


def base_steps(config: Configuration) -> list[TransitionStep]:
    """Every enabled Snd and Rcv step, in canonical order."""
    steps = []
    for a, state in config.available.items():
        seen = None
        for m in state.outbox:
            if m != seen:
                steps.append(TransitionStep(StepKind.SND, a, m))
                seen = m
    # Plain string ids keep this loop cheap when many messages wait on
    # failed receivers.
    up = {a.id for a in config.available}
    seen = None
    for m in config.in_flight:
        if m.receiver.id in up and m != seen:
            steps.append(TransitionStep(StepKind.RCV, m.receiver, m))
            seen = m
    return steps


class Path:
    """An initial configuration followed by (step, resulting configuration) pairs.

    Positions are logical time: index ``i`` is the configuration after the
    ``i``-th step, and ``config_at(-1)`` is the initial configuration.
    """

    __slots__ = ("initial", "steps")

    def __init__(self, initial: Configuration,
                 steps: Sequence[tuple[TransitionStep, Configuration]] = ()):
        self.initial = initial
        self.steps = tuple(steps)

    def __len__(self) -> int:
        return len(self.steps)

    def last(self) -> Configuration:
        return self.steps[-1][1] if self.steps else self.initial

    def prefix(self, n: int) -> "Path":
        """The path through step index ``n`` inclusive."""
        return Path(self.initial, self.steps[: n + 1])

    def extend(self, step: TransitionStep) -> "Path":
        return Path(self.initial, (*self.steps, (step, apply(self.last(), step))))

    def config_at(self, i: int) -> Configuration:
        return self.initial if i < 0 else self.steps[i][1]

    def configs(self) -> Iterator[Configuration]:
        yield self.initial
        for _, c in self.steps:
            yield c

    def step_list(self) -> list[TransitionStep]:
        return [s for s, _ in self.steps]

    @classmethod
    def replay(cls, initial: Configuration, steps: Iterable[TransitionStep]) -> "Path":
        out = []
        config = initial
        for s in steps:
            config = apply(config, s)
            out.append((s, config))
        return cls(initial, out)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Path) and self.initial == other.initial
                and self.steps == other.steps)

    def __hash__(self) -> int:
        return hash((self.initial, self.steps))
