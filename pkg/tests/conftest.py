"""Shared builders for the test suite."""

from __future__ import annotations

import random

import pytest

from synodsim.fam import (Configuration, StepKind, TransitionStep, apply,
                          base_steps, enabled)
from synodsim.synod import ActorName, Role, next_ballot
from synodsim.trace import RosterEntry, initial_configuration


def P(i) -> ActorName:
    return ActorName(f"P{i}", Role.PROPOSER)


def A(i) -> ActorName:
    return ActorName(f"A{i}", Role.ACCEPTOR)


def roster(n_prop: int, n_acc: int) -> list[RosterEntry]:
    out = [RosterEntry(P(i + 1), f"v{i + 1}", n_prop, i) for i in range(n_prop)]
    return out + [RosterEntry(A(i + 1)) for i in range(n_acc)]


def initial(n_prop: int = 1, n_acc: int = 3) -> Configuration:
    return initial_configuration(roster(n_prop, n_acc))


def random_moves(config: Configuration, rng: random.Random) -> list[TransitionStep]:
    """Every kind of step that could apply here, enabled or not."""
    steps = base_steps(config)
    accs = config.acceptors()
    for a in config.actors():
        steps.append(TransitionStep.stp(a) if config.is_available(a) else TransitionStep.bgn(a))
    for p in config.proposers():
        st = config.state(p)
        if config.is_available(p) and st.learned is None:
            q = frozenset(rng.sample(accs, rng.randint(1, len(accs))))
            steps.append(TransitionStep.prp(p, next_ballot(st), q))
    return [s for s in steps if enabled(config, s)]


def random_walk(rng: random.Random, max_walk: int = 40):
    """Reachable configurations along one random walk from a random roster.

    The walk mixes failures, recoveries, proposals and deliveries.
    """
    config = initial(rng.randint(1, 3), rng.randint(1, 5))
    yield config
    for _ in range(rng.randint(0, max_walk)):
        steps = random_moves(config, rng)
        if not steps:
            return
        # Favor base steps so walks get past Phase 1.
        base = [s for s in steps if s.kind in (StepKind.SND, StepKind.RCV)]
        pool = base if base and rng.random() < 0.8 else steps
        config = apply(config, rng.choice(pool))
        yield config


def random_configuration(rng: random.Random, max_walk: int = 40) -> Configuration:
    *_, last = random_walk(rng, max_walk)
    return last


@pytest.fixture
def rng():
    return random.Random(20261019)


def check_contracts(config: Configuration, rng: random.Random) -> None:
    """Transition contracts that must hold at any reachable configuration."""
    from collections import Counter
    from synodsim.fam import well_formed

    assert well_formed(config)
    assert not set(config.available) & set(config.failed)
    for a in config.actors():
        stp, bgn = TransitionStep.stp(a), TransitionStep.bgn(a)
        assert enabled(config, stp) != enabled(config, bgn)
        flip = stp if enabled(config, stp) else bgn
        back = bgn if flip is stp else stp
        assert apply(apply(config, flip), back) == config
    for s in base_steps(config):
        assert config.is_available(s.actor)
        nxt = apply(config, s)
        before = Counter(config.in_flight)
        after = Counter(nxt.in_flight)
        if s.kind is StepKind.SND:
            # Snd moves exactly one copy from the outbox into the network.
            assert after - before == Counter([s.message])
            assert before - after == Counter()
            assert (Counter(config.state(s.actor).outbox)
                    - Counter(nxt.state(s.actor).outbox)) == Counter([s.message])
        else:
            assert before - after == Counter([s.message])
            assert after - before == Counter()
        for other in config.actors():
            if other != s.actor:
                assert nxt.state(other) == config.state(other)
        assert set(nxt.available) == set(config.available)
    for a in config.failed:
        st = config.state(a)
        for m in st.outbox:
            assert not enabled(config, TransitionStep.snd(a, m))
        for m in config.in_flight:
            if m.receiver == a:
                assert not enabled(config, TransitionStep.rcv(a, m))
