import random
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from synodsim import checker
from synodsim.fam import StepKind, TransitionStep, apply, base_steps
from synodsim.scenario import load_canned
from synodsim.scheduler import (ActorSpec, DuelImpossible, FailureEvent,
                                IllFormedScenario, Policy, Scenario, Variant,
                                cnd_filter, fair_pick, round_robin_pick, run,
                                update_ages, validate)
from synodsim.synod import Kind, Message, Role
from synodsim.trace import trace_text

from conftest import A, P, initial


def roster(n_prop=1, n_acc=3):
    return (tuple(ActorSpec(f"P{i}", Role.PROPOSER, f"v{i}") for i in range(1, n_prop + 1))
            + tuple(ActorSpec(f"A{i}", Role.ACCEPTOR) for i in range(1, n_acc + 1)))


def everyone(r):
    return frozenset(a.id for a in r)


def rcv(b, to=1, kind=Kind.PREPARE, v=""):
    m = Message(kind, P(1), A(to), b, v)
    return TransitionStep.rcv(A(to), m)


# Picking

def test_single_pending_step_is_chosen():
    s = rcv(1)
    assert fair_pick([s], {}, random.Random(0)) is s


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_overdue_step_is_forced(seed, bound):
    """A step kept pending for ``bound`` picks is taken on the next one."""
    rng = random.Random(seed)
    target = rcv(99)
    ages: dict = {}
    for clock in range(bound + 1):
        pending = [target] + [rcv(rng.randint(1, 50), rng.randint(1, 3)) for _ in range(rng.randint(0, 5))]
        chosen = fair_pick(pending, ages, rng, bound)
        if chosen == target:
            return
        assert clock < bound
        update_ages(ages, pending, chosen)
    pytest.fail("overdue step never forced")


def test_round_robin_rotates_over_actors():
    steps = [rcv(1, 1), rcv(1, 2), rcv(2, 1)]
    order = [A(1), A(2)]
    s, turn = round_robin_pick(steps, {}, order, 0)
    assert s.actor == A(1) and turn == 1
    s, turn = round_robin_pick(steps, {}, order, turn)
    assert s.actor == A(2) and turn == 0


def test_failed_actor_steps_never_pending():
    c = apply(initial(), TransitionStep.prp(P(1), 1, frozenset({A(1), A(2)})))
    c = apply(c, base_steps(c)[0])
    c = apply(c, TransitionStep.stp(A(1)))
    assert all(s.actor != A(1) for s in base_steps(c))


# Cnd window

def _cnd(b=5, activation=0):
    return Policy(Variant.CND, "P1", b, frozenset({"A1", "A2"}), activation)


def test_cnd_filter_holds_higher_ballots_toward_quorum():
    c = initial()
    q = frozenset({A(1), A(2)})
    high, equal, outside = rcv(7, 1), rcv(5, 1, Kind.ACCEPT, "x"), rcv(7, 3)
    kept = cnd_filter([high, equal, outside], _cnd(), 3, c, q, 5)
    assert kept == [equal, outside]


def test_cnd_filter_is_identity_before_activation():
    c = initial()
    pending = [rcv(7, 1)]
    assert cnd_filter(pending, _cnd(activation=10), 3, c, frozenset({A(1)}), 5) == pending


@given(st.lists(st.tuples(st.integers(0, 12), st.integers(1, 3)), max_size=15), st.integers(1, 10))
def test_cnd_filter_keeps_ballots_up_to_protected(msgs, b):
    pending = [rcv(x, to) for x, to in msgs]
    kept = cnd_filter(pending, _cnd(b), 0, initial(), frozenset({A(1), A(2)}), b)
    assert [s for s in pending if s.message.ballot <= b] == [s for s in kept if s.message.ballot <= b]


# Runs

def fair(n_prop=1, n_acc=3, seed=1, **kw):
    r = roster(n_prop, n_acc)
    return Scenario(r, everyone(r), seed=seed, **kw)


def test_single_proposer_fair_run_learns():
    path = run(fair(budget=10_000))
    assert checker.check_theorem1(path).holds
    assert not base_steps(path.last())


def test_run_is_deterministic():
    s = fair(3, 5, seed=42, budget=3000)
    assert trace_text(run(s)) == trace_text(run(s))


def test_round_robin_run_learns():
    path = run(fair(2, 3, policy=Policy(Variant.ROUND_ROBIN)))
    assert checker.check_theorem1(path).holds
    assert checker.check_safety(path).holds


def test_duel_never_learns():
    path = run(load_canned("duel"))
    assert len(path) == 10_000
    assert not any(checker.learned_at(c) for c in path.configs())
    assert checker.reproposals(path) >= 10


def test_duel_then_cnd_learns_after_switch():
    s = load_canned("duel")
    k = 300
    s = s.with_policy(Policy(Variant.CND, "P1", None, frozenset({"A1", "A2"}), k, Variant.DUEL))
    path = run(s)
    v = checker.check_theorem1(path)
    assert v.holds and v.witness_index > k
    assert not any(checker.learned_at(path.config_at(i)) for i in range(k))


def test_failure_plan_fires_at_index():
    s = fair(failures=(FailureEvent(3, "A2", StepKind.STP), FailureEvent(20, "A2", StepKind.BGN)))
    path = run(s)
    assert path.steps[3][0] == TransitionStep.stp(A(2))
    assert TransitionStep.bgn(A(2)) in path.step_list()


def test_nonfaulty_actors_end_available():
    s = load_canned("cnd")
    for seed in range(20):
        last = run(replace(s, seed=seed)).last()
        assert all(last.is_available(a) for a in last.actors() if a.id in s.nonfaulty)


# Validation

@pytest.mark.parametrize("mutate,invariant", [
    (lambda s: replace(s, roster=s.roster + (ActorSpec("A1", Role.ACCEPTOR),)), "unique-actor-names"),
    (lambda s: replace(s, roster=s.acceptors()), "roles-present"),
    (lambda s: replace(s, nonfaulty=s.nonfaulty | {"Z9"}), "nonfaulty-in-roster"),
    (lambda s: replace(s, budget=-1), "positive-limits"),
    (lambda s: replace(s, seed=2**64), "seed-64-bit"),
    (lambda s: replace(s, roster=(ActorSpec("P1", Role.PROPOSER, "a", frozenset({"A1"})),) + s.roster[1:]),
     "quorum-is-majority"),
    (lambda s: replace(s, failures=(FailureEvent(3, "A1", StepKind.STP),)), "nonfaulty-recovers"),
    (lambda s: replace(s, failures=(FailureEvent(3, "A1", StepKind.BGN),)), "failures-alternate"),
    (lambda s: s.with_policy(replace(_cnd(5), quorum=frozenset({"A1"}))), "cnd-quorum-is-majority"),
    (lambda s: s.with_policy(Policy(Variant.CND, "P9", None, frozenset({"A1", "A2"}))), "cnd-proposer"),
    (lambda s: replace(s, nonfaulty=s.nonfaulty - {"A2"}).with_policy(_cnd(None)), "cnd-quorum-nonfaulty"),
])
def test_validator_names_invariant(mutate, invariant):
    with pytest.raises(IllFormedScenario) as e:
        validate(mutate(fair()))
    assert e.value.invariant == invariant


def test_cnd_ballot_must_be_in_class():
    s = fair(2, 3).with_policy(_cnd(5))
    with pytest.raises(IllFormedScenario) as e:
        validate(s)
    assert e.value.invariant == "cnd-ballot-unique"
    validate(s.with_policy(_cnd(4)))


def test_stale_explicit_cnd_ballot_rejected_at_activation():
    s = fair(2, 3, seed=3).with_policy(_cnd(2, activation=10))
    with pytest.raises(IllFormedScenario) as e:
        run(s)
    assert e.value.invariant == "cnd-ballot-fresh"


def test_duel_needs_two_proposers():
    with pytest.raises(DuelImpossible):
        validate(fair(1, 3, policy=Policy(Variant.DUEL)))
