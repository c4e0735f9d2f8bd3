from dataclasses import replace

from synodsim import checker
from synodsim.checker import Property
from synodsim.fam import Path, StepKind, TransitionStep
from synodsim.harness import protected_proposal
from synodsim.scenario import load_canned
from synodsim.scheduler import Policy, Variant, run
from synodsim.synod import Kind, Message

from conftest import A, P, initial


def synthetic(votes):
    """A path of bare accept deliveries; every config is the initial one, so
    each delivery counts as a vote."""
    c0 = initial(2, 3)
    steps = []
    for acc, b, v in votes:
        m = Message(Kind.ACCEPT, P(1), A(acc), b, v)
        steps.append((TransitionStep.rcv(A(acc), m), c0))
    return Path(c0, steps)


def test_same_value_at_higher_ballot_is_safe():
    path = synthetic([(1, 2, "x"), (2, 2, "x"), (1, 5, "x"), (3, 5, "x")])
    assert [b for _, b, _ in checker.chosen_events(path)] == [2, 5]
    assert checker.check_safety(path).holds


def test_conflicting_choice_is_flagged_at_second_choice():
    path = synthetic([(1, 2, "x"), (2, 2, "x"), (1, 5, "y"), (3, 5, "y")])
    v = checker.check_safety(path)
    assert not v.holds
    assert v.witness_index == 3
    assert len(v.counterexample) == 4


def test_minority_votes_are_not_choices():
    path = synthetic([(1, 2, "x"), (2, 5, "y")])
    assert checker.chosen_events(path) == []


def test_empty_path_is_safe_and_learns_nothing():
    path = Path(initial())
    assert checker.check_safety(path).holds
    assert not checker.check_theorem1(path).holds


def test_theorem1_on_fair_single_proposer():
    s = load_canned("single")
    v = checker.check_theorem1(run(s))
    assert v.holds and v.witness_index is not None


def test_theorem1_fails_with_zero_budget():
    path = run(replace(load_canned("single"), budget=0))
    assert len(path) == 0
    assert not checker.check_theorem1(path).holds


def _lemmas(path, s):
    p, b, q = protected_proposal(path, s)
    return (checker.check_lemma1(path, p, b, q), checker.check_lemma2(path, p, b, q),
            checker.check_theorem1(path, p, b))


def test_lemma_witnesses_are_ordered_on_cnd():
    s = load_canned("cnd")
    for seed in range(10):
        path = run(replace(s, seed=seed))
        l1, l2, t1 = _lemmas(path, s)
        assert l1.holds and l2.holds and t1.holds
        assert l1.witness_index <= l2.witness_index == t1.witness_index
        # Promises gather strictly before the first accept of the ballot leaves.
        p, b, _ = protected_proposal(path, s)
        first_2a = next(i for i, (st, _) in enumerate(path.steps)
                        if st.kind is StepKind.SND and st.message.kind is Kind.ACCEPT
                        and st.message.ballot == b)
        assert l1.witness_index < first_2a


def test_lemma1_fails_when_quorum_member_never_returns():
    s = load_canned("crashq")
    # A2 stays down, so promises from {A1, A2} never gather.
    s = replace(s, nonfaulty=s.nonfaulty - {"A2"}, failures=s.failures[:1],
                policy=Policy(Variant.FAIR))
    path = run(s)
    p = path.initial.proposers()[0]
    b = next(st.ballot for st, _ in path.steps if st.kind is StepKind.PRP)
    v = checker.check_lemma1(path, p, b, {A(1), A(2)})
    assert not v.holds and v.counterexample is not None
    assert not checker.check_lemma2(path, p, b, {A(1), A(2)}).holds


def test_livelock_detected_on_duel_only():
    duel = run(load_canned("duel"))
    v = checker.detect_livelock(duel)
    assert v.holds and v.property is Property.LIVELOCK
    assert not checker.check_theorem1(duel).holds
    assert not checker.detect_livelock(run(load_canned("single"))).holds
    cnd = load_canned("duel").with_policy(
        Policy(Variant.CND, "P1", None, frozenset({"A1", "A2"}), 200, Variant.DUEL))
    assert not checker.detect_livelock(run(cnd)).holds


def test_learning_implies_votes_imply_promises():
    s = load_canned("cnd")
    path = run(s)
    for c in path.configs():
        for p in c.proposers():
            st = c.state(p)
            if st.learned is not None:
                assert checker.votes_from(st, st.current_ballot, st.target_quorum)
            if checker.votes_from(st, st.current_ballot, st.target_quorum) and st.target_quorum:
                assert checker.promises_from(st, st.current_ballot, st.target_quorum)
