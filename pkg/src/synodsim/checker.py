"""Trace predicates: safety, phase progress, eventual learning, livelock."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Optional

from .fam import Configuration, Path, StepKind
from .synod import AcceptorState, ActorName, Kind, ProposerState, would_vote

DEFAULT_LIVELOCK_THRESHOLD = 10


class Property(str, Enum):
    SAFETY = "Safety"
    LEMMA1 = "Lemma1"
    LEMMA2 = "Lemma2"
    THEOREM1 = "Theorem1"
    LIVELOCK = "Livelock"


@dataclass
class Verdict:
    property: Property
    holds: bool
    witness_index: Optional[int] = None
    counterexample: Optional[Path] = None
    params: dict = field(default_factory=dict)
    detail: str = ""


# Logical time: index -1 is the initial configuration, index i the state after
# step i.

def _indexed(path: Path) -> Iterator[tuple[int, Configuration]]:
    for i, config in enumerate(path.configs(), start=-1):
        yield i, config


def votes_cast(path: Path) -> Iterator[tuple[int, ActorName, int, str]]:
    """(index, acceptor, ballot, value) for every vote in the trace."""
    for i, (step, _) in enumerate(path.steps):
        if step.kind is not StepKind.RCV or step.message.kind is not Kind.ACCEPT:
            continue
        before = path.config_at(i - 1).state(step.actor)
        if isinstance(before, AcceptorState) and would_vote(before, step.message):
            yield i, step.actor, step.message.ballot, step.message.value


def chosen_events(path: Path) -> list[tuple[int, int, str]]:
    """(index, ballot, value) at which a majority of acceptors has voted (ballot, value).

    Evaluated over the whole trace, independently of what any proposer knows.
    """
    n = len(path.initial.acceptors())
    voters: dict[tuple[int, str], set[ActorName]] = {}
    out = []
    for i, a, b, v in votes_cast(path):
        s = voters.setdefault((b, v), set())
        if a in s:
            continue
        s.add(a)
        if 2 * len(s) > n and 2 * (len(s) - 1) <= n:
            out.append((i, b, v))
    return out


def check_safety(path: Path) -> Verdict:
    chosen: dict[int, str] = {}
    for i, b, v in chosen_events(path):
        clash = [(b2, v2) for b2, v2 in chosen.items() if v2 != v]
        if clash:
            b2, v2 = clash[0]
            return Verdict(Property.SAFETY, False, i, path.prefix(i),
                           detail=f"chosen ({b2},{v2}) and ({b},{v})")
        chosen[b] = v
    return Verdict(Property.SAFETY, True, detail=f"{len(chosen)} chosen ballots")


def learned_at(config: Configuration, p: Optional[ActorName] = None,
               b: Optional[int] = None) -> bool:
    for name, st in config.states():
        if not isinstance(st, ProposerState) or st.learned is None:
            continue
        if (p is None or name == p) and (b is None or st.learned[0] == b):
            return True
    return False


def check_theorem1(path: Path, p: Optional[ActorName] = None,
                   b: Optional[int] = None) -> Verdict:
    """Some proposer (``p`` if given) learns some ballot (``b`` if given)."""
    for i, config in _indexed(path):
        if learned_at(config, p, b):
            return Verdict(Property.THEOREM1, True, i)
    return Verdict(Property.THEOREM1, False, counterexample=path)


def promises_from(st: ProposerState, b: int, quorum: frozenset[ActorName]) -> bool:
    return (st.current_ballot == b
            and quorum <= {m.sender for m in st.promises if m.ballot == b})


def votes_from(st: ProposerState, b: int, quorum: frozenset[ActorName]) -> bool:
    return (st.current_ballot == b
            and quorum <= {m.sender for m in st.votes if m.ballot == b})


def _first(path: Path, start: int, pred) -> Optional[int]:
    for i, config in _indexed(path):
        if i >= start and pred(config):
            return i
    return None


def check_lemma1(path: Path, p: ActorName, b: int, quorum: Iterable[ActorName]) -> Verdict:
    quorum = frozenset(quorum)
    i = _first(path, -1, lambda c: promises_from(c.state(p), b, quorum))
    return Verdict(Property.LEMMA1, i is not None, i,
                   None if i is not None else path)


def check_lemma2(path: Path, p: ActorName, b: int, quorum: Iterable[ActorName]) -> Verdict:
    quorum = frozenset(quorum)
    l1 = check_lemma1(path, p, b, quorum)
    if not l1.holds:
        return Verdict(Property.LEMMA2, False, counterexample=path,
                       detail="promises from the quorum never gathered")
    j = _first(path, l1.witness_index, lambda c: votes_from(c.state(p), b, quorum))
    return Verdict(Property.LEMMA2, j is not None, j,
                   None if j is not None else path)


def reproposals(path: Path) -> int:
    """Proposals made by a proposer that had already proposed before."""
    n = 0
    for i, (step, _) in enumerate(path.steps):
        if step.kind is StepKind.PRP and path.config_at(i - 1).state(step.actor).current_ballot > 0:
            n += 1
    return n


def detect_livelock(path: Path, threshold: int = DEFAULT_LIVELOCK_THRESHOLD) -> Verdict:
    """Holds when at least ``threshold`` re-proposals happen and nobody learns."""
    n = reproposals(path)
    learned = check_theorem1(path).holds
    holds = n >= threshold and not learned
    return Verdict(Property.LIVELOCK, holds, len(path) - 1 if holds else None,
                   path if holds else None, {"threshold": threshold},
                   detail=f"{n} re-proposals, learned={learned}")
