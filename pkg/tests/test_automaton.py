import numpy as np
import pytest

from iccert import load_config
from iccert.automaton import Nba, ProductSystem, monitor_buchi, product_step, run_subsets
from iccert.config import fixture_path
from iccert.geometry import Box
from iccert.system import LabelingMap

Q1, Q2, Q3, Q4 = range(4)


@pytest.fixture(scope="module")
def nba():
    return Nba.load(fixture_path("fig2_nba.json"))


@pytest.fixture(scope="module")
def heat():
    return load_config("heat_transfer")


def test_fig2_transitions(nba):
    assert nba.successors(Q1, "a") == {Q1}
    assert nba.successors(Q1, "d") == {Q4}
    assert nba.successors(Q3, "b") == {Q3}
    assert nba.successors(Q1, "c") == {Q3}
    assert all(nba.successors(Q4, a) == {Q4} for a in nba.alphabet)
    assert len(nba.edges()) == 16


def test_undeclared_state_or_letter():
    with pytest.raises(ValueError):
        Nba(("a",), 1, {0}, {0}, {(0, "a", 1)})
    with pytest.raises(ValueError):
        Nba(("a",), 1, {0}, {0}, {(0, "z", 0)})


def test_empty_initial_warns():
    with pytest.warns(UserWarning):
        Nba(("a",), 1, set(), {0}, {(0, "a", 0)})


def test_labels_must_be_in_alphabet(heat, nba):
    lab = LabelingMap(((Box([0, 0], [1, 1]), "e"),), "a")
    with pytest.raises(ValueError):
        ProductSystem(heat.system, nba, lab)


def test_product_step(heat):
    succ = product_step(heat.product, (np.array([11.0, 9.0]), Q1))
    assert [q for _, q in succ] == [Q1]
    # 11 - 4.9 - 0.49*1 - 0.5*2 and 9 - 3.23 + 0.323 + 0.667*2
    np.testing.assert_allclose(succ[0][0], [4.61, 7.427], atol=1e-12)
    assert all(q == Q4 for _, q in product_step(heat.product, (np.array([11.0, 5.0]), Q4)))


def test_monitor_examples(nba, heat):
    good = monitor_buchi(heat.product, list("aabcc"))
    assert not good.ever_visits(Q4)
    assert monitor_buchi(heat.product, []).state_sets == (frozenset(nba.initial),)
    bad = run_subsets(nba, "dddd")
    assert bad.first_visit(Q4) == 1
    assert all(Q4 in s for s in bad.state_sets[1:])


def test_dict_round_trip(nba):
    assert Nba.from_dict(nba.to_dict()).transitions == nba.transitions
