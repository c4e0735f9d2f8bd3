"""Bounded exhaustive exploration of every schedule from a configuration.

Each node is a configuration plus the votes cast so far (needed to judge
which ballots were chosen) and, when the fairness bound can bite within the
depth limit, the wait counters of the enabled steps.  Path counts are
accumulated bottom-up over the memoized DAG, so the number of maximal paths
may be astronomically larger than the number of nodes.
"""

from __future__ import annotations

import itertools
import sys
import time
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional, Sequence

from . import synod
from .checker import check_safety, check_theorem1, learned_at
from .fam import Configuration, Path, StepKind, TransitionStep, apply, base_steps
from .synod import AcceptorState, ActorName, Kind, ProposerState, would_vote
from .trace import digest


class StateCapExceeded(Exception):
    def __init__(self, report: "ExplorationReport"):
        super().__init__(f"state cap {report.state_cap} exceeded after {report.states} states")
        self.report = report


@dataclass
class ExplorationReport:
    max_depth: int
    fairness_bound: int
    state_cap: int
    states: int = 0
    transitions: int = 0
    max_depth_reached: int = 0
    paths: int = 0
    progress_paths: int = 0
    unsafe_paths: int = 0
    terminal: set[str] = field(default_factory=set)
    replayed_paths: int = 0
    replay_failures: int = 0
    complete: bool = True
    elapsed: float = 0.0

    @property
    def safety_holds(self) -> bool:
        return self.unsafe_paths == 0 and self.replay_failures == 0

    @property
    def progress_fraction(self) -> float:
        return self.progress_paths / self.paths if self.paths else 0.0

    def summary(self) -> str:
        """Plain-text report; everything but ``elapsed`` is deterministic."""
        lines = [
            "synodsim-report 1",
            f"complete\t{str(self.complete).lower()}",
            f"max_depth\t{self.max_depth}",
            f"fairness_bound\t{self.fairness_bound}",
            f"state_cap\t{self.state_cap}",
            f"states\t{self.states}",
            f"transitions\t{self.transitions}",
            f"max_depth_reached\t{self.max_depth_reached}",
            f"maximal_paths\t{self.paths}",
            f"progress_paths\t{self.progress_paths}",
            f"progress_coverage\t{self.progress_fraction:.6f}",
            f"unsafe_paths\t{self.unsafe_paths}",
            f"safety\t{'holds' if self.safety_holds else 'violated'}",
            f"terminal_configurations\t{len(self.terminal)}",
            f"replayed_paths\t{self.replayed_paths}",
            f"replay_failures\t{self.replay_failures}",
            f"elapsed_seconds\t{self.elapsed:.3f}",
        ]
        return "\n".join(lines) + "\n"


Votes = frozenset  # of (acceptor id, ballot, value)


@dataclass(frozen=True)
class _Node:
    config: Configuration
    votes: Votes
    ages: tuple = ()


def majority_quorums(acceptors: Sequence[ActorName]) -> list[frozenset[ActorName]]:
    k = len(acceptors) // 2 + 1
    return [frozenset(c) for c in itertools.combinations(sorted(acceptors), k)]


def proposals_made(p: ProposerState) -> int:
    if p.current_ballot == 0:
        return 0
    return (p.current_ballot - p.ballot_offset - 1) // p.ballot_stride + 1


def round_stalled(config: Configuration, p: ActorName) -> bool:
    """No message of ``p``'s current round is still queued or en route."""
    b = config.state(p).current_ballot

    def mine(m) -> bool:
        return m.ballot == b and p in (m.sender, m.receiver)

    if any(mine(m) for m in config.in_flight):
        return False
    return not any(mine(m) for _, st in config.states() for m in st.outbox)


def moves(config: Configuration,
          quorums: Mapping[ActorName, Sequence[frozenset[ActorName]]],
          max_proposals: Optional[int] = None) -> list[TransitionStep]:
    """Enabled Snd/Rcv steps, plus proposals by proposers that are idle."""
    out = base_steps(config)
    for p in config.proposers():
        if not config.is_available(p):
            continue
        st = config.state(p)
        if st.learned is not None:
            continue
        if st.current_ballot and not round_stalled(config, p):
            continue
        if max_proposals is not None and proposals_made(st) >= max_proposals:
            continue
        b = synod.next_ballot(st)
        out.extend(TransitionStep.prp(p, b, q) for q in quorums[p])
    return out


def _conflict(votes: Votes, n_acceptors: int) -> bool:
    tally: dict[tuple[int, str], int] = {}
    for _, b, v in votes:
        tally[(b, v)] = tally.get((b, v), 0) + 1
    chosen = {v for (b, v), c in tally.items() if 2 * c > n_acceptors}
    return len(chosen) > 1


def explore(initial: Configuration, max_depth: int,
            fairness_bound: int = 64, *, state_cap: int = 10**6,
            quorums: Optional[Mapping[ActorName, Sequence[frozenset[ActorName]]]] = None,
            max_proposals: Optional[int] = None,
            replay_limit: int = 100_000) -> ExplorationReport:
    """Enumerate every maximal path of at most ``max_depth`` steps.

    A path is maximal when it reaches a configuration with no enabled move or
    hits the depth limit.  Scheduling respects ``fairness_bound``: once a step
    has stayed enabled for that many moves, only such overdue steps may go
    next.  When the number of maximal paths is at most ``replay_limit`` every
    path is materialized and replayed through :func:`fam.apply`, and the
    trace checkers must agree with the explorer's own classification.
    """
    started = time.perf_counter()
    report = ExplorationReport(max_depth, fairness_bound, state_cap)
    if quorums is None:
        qs = majority_quorums(initial.acceptors())
        quorums = {p: qs for p in initial.proposers()}
    n_acc = len(initial.acceptors())
    track_ages = fairness_bound <= max_depth
    memo: dict[tuple[_Node, int], tuple[int, int, int, list]] = {}
    seen_nodes: set[_Node] = set()
    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 4 * max_depth + 1000))

    def successors(node: _Node) -> list[tuple[TransitionStep, _Node]]:
        steps = moves(node.config, quorums, max_proposals)
        ages = dict(node.ages)
        candidates = steps
        if track_ages:
            overdue = [s for s in steps if ages.get(s, 0) >= fairness_bound]
            if overdue:
                candidates = overdue
        out = []
        for s in candidates:
            votes = node.votes
            if s.kind is StepKind.RCV and s.message.kind is Kind.ACCEPT:
                acc = node.config.state(s.actor)
                if isinstance(acc, AcceptorState) and would_vote(acc, s.message):
                    votes = votes | {(s.actor.id, s.message.ballot, s.message.value)}
            nxt = apply(node.config, s)
            new_ages: tuple = ()
            if track_ages:
                new_ages = _age(steps, ages, s, moves(nxt, quorums, max_proposals))
            out.append((s, _Node(nxt, votes, new_ages)))
        return out

    def visit(node: _Node, left: int, depth: int) -> tuple[int, int, int]:
        key = (node, left)
        hit = memo.get(key)
        if hit is not None:
            return hit[:3]
        if node not in seen_nodes:
            seen_nodes.add(node)
            report.states = len(seen_nodes)
            if report.states > state_cap:
                raise _Abort()
        report.max_depth_reached = max(report.max_depth_reached, depth)
        children = successors(node) if left > 0 else []
        if not children:
            report.terminal.add(digest(node.config))
            progress = 1 if learned_at(node.config) else 0
            unsafe = 1 if _conflict(node.votes, n_acc) else 0
            memo[key] = (1, progress, unsafe, [])
            return 1, progress, unsafe
        report.transitions += len(children)
        paths = progress = unsafe = 0
        links = []
        for s, child in children:
            a, b, c = visit(child, left - 1, depth + 1)
            paths += a
            progress += b
            unsafe += c
            links.append((s, (child, left - 1)))
        memo[key] = (paths, progress, unsafe, links)
        return paths, progress, unsafe

    root = _Node(initial, frozenset(), ())
    if track_ages:
        root = _Node(initial, frozenset(),
                     tuple((s, 0) for s in moves(initial, quorums, max_proposals)))
    try:
        report.paths, report.progress_paths, report.unsafe_paths = visit(root, max_depth, 0)
    except _Abort:
        report.complete = False
        report.elapsed = time.perf_counter() - started
        sys.setrecursionlimit(old_limit)
        raise StateCapExceeded(report) from None
    sys.setrecursionlimit(old_limit)

    if report.paths <= replay_limit:
        for steps, configs, progress, unsafe in _enumerate(memo, (root, max_depth)):
            report.replayed_paths += 1
            if not _replays(initial, steps, configs, progress, unsafe):
                report.replay_failures += 1
    report.elapsed = time.perf_counter() - started
    return report


class _Abort(Exception):
    pass


def _age(steps_all, ages, chosen, enabled_next) -> tuple:
    """Wait counters after ``chosen`` is taken: steps still enabled and not
    taken age by one; newly enabled steps start at zero."""
    prev = set(steps_all)
    out = []
    for t in enabled_next:
        if t in prev and t != chosen:
            out.append((t, ages.get(t, 0) + 1))
        else:
            out.append((t, 0))
    return tuple(sorted(out, key=lambda ta: ta[0].sort_key()))


def _enumerate(memo, key) -> Iterator[tuple[list, list, int, int]]:
    stack = [(key, [], [])]
    while stack:
        k, steps, configs = stack.pop()
        _, progress, unsafe, links = memo[k]
        if not links:
            yield steps, configs, progress, unsafe
            continue
        for s, child in reversed(links):
            stack.append((child, steps + [s], configs + [child[0].config]))


def _replays(initial: Configuration, steps, configs, progress: int, unsafe: int) -> bool:
    config = initial
    out = []
    for s, expected in zip(steps, configs):
        config = apply(config, s)
        if digest(config) != digest(expected):
            return False
        out.append((s, config))
    path = Path(initial, out)
    if check_theorem1(path).holds != bool(progress):
        return False
    return check_safety(path).holds != bool(unsafe)
