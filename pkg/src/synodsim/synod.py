"""Proposer and acceptor state machines for the single-decree Synod protocol.

All handlers are pure: they take an immutable actor state and a delivered
message and return a new state.  Anything an actor is obliged to send is
queued in its ``outbox`` and leaves it only through a ``Snd`` transition.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Optional, Union

NULL_VALUE = ""

Ballot = int
Accepted = tuple[int, str]


class Role(str, Enum):
    PROPOSER = "proposer"
    ACCEPTOR = "acceptor"


class Kind(str, Enum):
    PREPARE = "1a"
    PROMISE = "1b"
    ACCEPT = "2a"
    VOTED = "2b"


class StaleBallot(ValueError):
    """A proposal was attempted with a ballot not above the current one."""


@dataclass(frozen=True, order=True)
class ActorName:
    id: str
    role: Role

    def __str__(self) -> str:
        return self.id


@dataclass(frozen=True)
class Message:
    kind: Kind
    sender: ActorName
    receiver: ActorName
    ballot: int
    value: str = NULL_VALUE
    prior: Optional[Accepted] = None

    def __post_init__(self):
        if self.ballot < 0:
            raise ValueError(f"negative ballot {self.ballot}")
        if self.kind is Kind.PREPARE and self.value != NULL_VALUE:
            raise ValueError("prepare messages carry the null value")
        if self.kind in (Kind.ACCEPT, Kind.VOTED) and self.value == NULL_VALUE:
            raise ValueError(f"{self.kind.value} messages carry a non-null value")
        if self.prior is not None and self.kind is not Kind.PROMISE:
            raise ValueError("only promises carry a prior accept")

    def sort_key(self) -> tuple:
        prior = self.prior if self.prior is not None else (-1, "")
        return (self.kind.value, self.sender.id, self.receiver.id,
                self.ballot, self.value, prior)


def bag_add(bag: tuple[Message, ...], m: Message) -> tuple[Message, ...]:
    """Insert into a sorted-tuple multiset, keeping duplicates."""
    i = bisect.bisect_right(bag, m.sort_key(), key=Message.sort_key)
    return bag[:i] + (m,) + bag[i:]


def bag_remove(bag: tuple[Message, ...], m: Message) -> tuple[Message, ...]:
    """Remove exactly one instance of ``m``; KeyError if absent."""
    i = bisect.bisect_left(bag, m.sort_key(), key=Message.sort_key)
    if i < len(bag) and bag[i] == m:
        return bag[:i] + bag[i + 1:]
    raise KeyError(m)


def bag_contains(bag: tuple[Message, ...], m: Message) -> bool:
    i = bisect.bisect_left(bag, m.sort_key(), key=Message.sort_key)
    return i < len(bag) and bag[i] == m


def bag_of(messages: Iterable[Message]) -> tuple[Message, ...]:
    return tuple(sorted(messages, key=Message.sort_key))


@dataclass(frozen=True)
class AcceptorState:
    name: ActorName
    highest_seen: int = 0
    accepted: Optional[Accepted] = None
    # Messages received but not yet responded to.  Receipt and response are
    # one atomic handler step, so this is empty between transitions.
    unresponded: frozenset[Message] = frozenset()
    outbox: tuple[Message, ...] = ()


@dataclass(frozen=True)
class ProposerState:
    name: ActorName
    own_value: str
    ballot_stride: int = 1
    ballot_offset: int = 0
    current_ballot: int = 0
    target_quorum: frozenset[ActorName] = frozenset()
    # One entry per sender, sorted by sender id.
    promises: tuple[Message, ...] = ()
    votes: tuple[Message, ...] = ()
    learned: Optional[Accepted] = None
    outbox: tuple[Message, ...] = ()

    def __post_init__(self):
        if self.own_value == NULL_VALUE:
            raise ValueError("a proposer needs a non-null value of its own")
        if not 0 <= self.ballot_offset < self.ballot_stride:
            raise ValueError("ballot offset must lie in [0, stride)")


ActorState = Union[AcceptorState, ProposerState]


def next_ballot(p: ProposerState) -> int:
    """Smallest ballot above the current one in this proposer's residue class."""
    n, i = p.ballot_stride, p.ballot_offset
    k = (p.current_ballot - i) // n + 1
    b = k * n + i
    return b if b > 0 else b + n


def propose(p: ProposerState, b: int, quorum: Iterable[ActorName]) -> ProposerState:
    quorum = frozenset(quorum)
    if b <= p.current_ballot:
        raise StaleBallot(f"ballot {b} is not above current ballot {p.current_ballot}")
    if not quorum or any(a.role is not Role.ACCEPTOR for a in quorum):
        raise ValueError("a quorum is a non-empty set of acceptors")
    outbox = p.outbox
    for a in sorted(quorum):
        outbox = bag_add(outbox, Message(Kind.PREPARE, p.name, a, b))
    return replace(p, current_ballot=b, target_quorum=quorum,
                   promises=(), votes=(), outbox=outbox)


def _senders(messages: tuple[Message, ...]) -> frozenset[ActorName]:
    return frozenset(m.sender for m in messages)


def _record(messages: tuple[Message, ...], m: Message) -> tuple[Message, ...]:
    kept = [x for x in messages if x.sender != m.sender]
    kept.append(m)
    return tuple(sorted(kept, key=lambda x: x.sender.id))


def handle_prepare(a: AcceptorState, m: Message) -> AcceptorState:
    a = replace(a, unresponded=a.unresponded | {m})
    if m.ballot > a.highest_seen:
        promise = Message(Kind.PROMISE, a.name, m.sender, m.ballot, prior=a.accepted)
        a = replace(a, highest_seen=m.ballot, outbox=bag_add(a.outbox, promise))
    return replace(a, unresponded=a.unresponded - {m})


def would_vote(a: AcceptorState, m: Message) -> bool:
    """True iff delivering accept ``m`` to ``a`` makes it vote."""
    return m.kind is Kind.ACCEPT and m.ballot >= a.highest_seen


def handle_accept(a: AcceptorState, m: Message) -> AcceptorState:
    a = replace(a, unresponded=a.unresponded | {m})
    if would_vote(a, m):
        vote = Message(Kind.VOTED, a.name, m.sender, m.ballot, m.value)
        a = replace(a, accepted=(m.ballot, m.value), highest_seen=m.ballot,
                    outbox=bag_add(a.outbox, vote))
    return replace(a, unresponded=a.unresponded - {m})


def decide_value(p: ProposerState) -> str:
    """Value of the highest-numbered prior accept among the promises,
    or the proposer's own value when every promise reports none."""
    priors = [m.prior for m in p.promises if m.prior is not None]
    if not priors:
        return p.own_value
    return max(priors, key=lambda bv: bv[0])[1]


def handle_promise(p: ProposerState, m: Message) -> ProposerState:
    if m.ballot != p.current_ballot or p.learned is not None:
        return p
    had_quorum = _senders(p.promises) >= p.target_quorum
    p = replace(p, promises=_record(p.promises, m))
    if had_quorum or not _senders(p.promises) >= p.target_quorum:
        return p
    value = decide_value(p)
    outbox = p.outbox
    for a in sorted(p.target_quorum):
        outbox = bag_add(outbox, Message(Kind.ACCEPT, p.name, a, p.current_ballot, value))
    return replace(p, outbox=outbox)


def handle_voted(p: ProposerState, m: Message) -> ProposerState:
    if m.ballot != p.current_ballot or p.learned is not None:
        return p
    p = replace(p, votes=_record(p.votes, m))
    if _senders(p.votes) >= p.target_quorum:
        p = replace(p, learned=(p.current_ballot, m.value))
    return p


def quorum_predicates(p: ProposerState) -> tuple[bool, bool, bool]:
    """(has promises from its quorum, has votes from its quorum, has learned)."""
    q = p.target_quorum
    has_promises = bool(q) and _senders(p.promises) >= q
    has_votes = bool(q) and _senders(p.votes) >= q
    return has_promises, has_votes, p.learned is not None


def on_receive(state: ActorState, m: Message) -> ActorState:
    """Atomic handler run by a ``Rcv`` step.  Misrouted kinds are dropped."""
    if isinstance(state, AcceptorState):
        if m.kind is Kind.PREPARE:
            return handle_prepare(state, m)
        if m.kind is Kind.ACCEPT:
            return handle_accept(state, m)
        return state
    if m.kind is Kind.PROMISE:
        return handle_promise(state, m)
    if m.kind is Kind.VOTED:
        return handle_voted(state, m)
    return state


def consume_outbox(state: ActorState, m: Message) -> ActorState:
    return replace(state, outbox=bag_remove(state.outbox, m))


def referenced_names(state: ActorState) -> set[ActorName]:
    names = {state.name}
    for m in state.outbox:
        names.update((m.sender, m.receiver))
    if isinstance(state, AcceptorState):
        for m in state.unresponded:
            names.update((m.sender, m.receiver))
    else:
        names.update(state.target_quorum)
        for m in state.promises + state.votes:
            names.update((m.sender, m.receiver))
    return names


def fresh_state(name: ActorName, *, value: Optional[str] = None,
                stride: int = 1, offset: int = 0) -> ActorState:
    if name.role is Role.ACCEPTOR:
        return AcceptorState(name)
    return ProposerState(name, own_value=value or f"v-{name.id}",
                         ballot_stride=stride, ballot_offset=offset)
