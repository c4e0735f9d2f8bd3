import pytest

from synodsim.explore import (StateCapExceeded, explore, majority_quorums,
                              moves)
from synodsim.fam import StepKind

from conftest import A, P, initial


def test_depth_zero_is_the_initial_state():
    r = explore(initial(), 0)
    assert (r.states, r.paths, r.progress_paths) == (1, 1, 0)
    assert r.progress_fraction == 0.0
    assert r.safety_holds and r.complete


def test_majority_quorums_of_three():
    assert majority_quorums([A(1), A(2), A(3)]) == [
        frozenset({A(1), A(2)}), frozenset({A(1), A(3)}), frozenset({A(2), A(3)})]


def test_initial_moves_are_one_proposal_per_quorum():
    c = initial()
    qs = {P(1): majority_quorums(c.acceptors())}
    ms = moves(c, qs)
    assert [m.kind for m in ms] == [StepKind.PRP] * 3
    assert moves(c, qs, max_proposals=0) == []


def test_shallow_exploration_replays_every_path():
    r = explore(initial(), 12)
    assert r.paths == r.replayed_paths > 0
    assert r.replay_failures == 0
    assert r.safety_holds


def test_two_proposers_have_paths_that_never_learn():
    c = initial(2, 3)
    q = frozenset({A(1), A(2)})
    r = explore(c, 24, quorums={P(1): [q], P(2): [q]}, replay_limit=0)
    assert r.safety_holds
    assert 0 < r.paths - r.progress_paths


def test_fairness_bound_prunes_schedules():
    c = initial(1, 2)
    q = [frozenset({A(1), A(2)})]
    free = explore(c, 10, 64, quorums={P(1): q})
    fair = explore(c, 10, 1, quorums={P(1): q})
    assert fair.paths < free.paths
    assert fair.replay_failures == 0 and fair.safety_holds


def test_state_cap_raises_with_partial_report():
    with pytest.raises(StateCapExceeded) as e:
        explore(initial(3, 5), 40, state_cap=500)
    assert not e.value.report.complete
    assert e.value.report.states == 501
    assert e.value.report.summary().startswith("synodsim-report 1\ncomplete\tfalse")
