import numpy as np
import pytest

from iccert import load_config
from iccert.geometry import Box
from iccert.poly import parse_polynomial
from iccert.system import System, label_trace, monitor_persistence, monitor_safety, simulate, step


def line_system(expr, lo=0.0, hi=10.0, x0=(0.0, 0.0), unsafe=None, maps=None):
    f = maps or [(parse_polynomial(expr, ["x1"]),)]
    return System(1, Box([lo], [hi]), Box([x0[0]], [x0[1]]), tuple(f), unsafe_set=unsafe)


@pytest.fixture(scope="module")
def heat():
    return load_config("heat_transfer")


@pytest.fixture(scope="module")
def lv():
    return load_config("lotka_volterra").system


def test_step_examples(heat, lv):
    np.testing.assert_allclose(step(heat.system, [10, 8]), [4.1, 6.75], atol=1e-9)
    np.testing.assert_allclose(step(lv, [6, 4, 1]), [6.0412, 3.1676, 1.007], atol=1e-9)
    ident = line_system("x1")
    assert step(ident, [3.25])[0] == 3.25


def test_branch_out_of_range():
    with pytest.raises((IndexError, ValueError)):
        step(line_system("x1"), [0.0], branch=1)


def test_validation():
    with pytest.raises(ValueError, match="disjoint"):
        line_system("x1", x0=(4, 6), unsafe=Box([5], [10]))
    with pytest.raises(ValueError):
        System(1, Box([0], [1]), Box([0], [2]), ((parse_polynomial("x1", ["x1"]),),))


def test_simulate_records_consistent_steps():
    maps = [(parse_polynomial("0.5*x1", ["x1"]),), (parse_polynomial("0.5*x1 + 0.25", ["x1"]),)]
    S = System(1, Box([-1], [1]), Box([0.1], [0.2]), tuple(maps))
    tr = simulate(S, [0.15], 200, seed=3)
    for t, b in enumerate(tr.branches):
        assert abs(step(S, tr.states[t], int(b))[0] - tr.states[t + 1][0]) <= 1e-12
    assert set(tr.branches.tolist()) == {0, 1}
    again = simulate(S, [0.15], 200, seed=3)
    assert np.array_equal(tr.states, again.states)


def test_simulate_edges(lv):
    assert len(simulate(lv, [6.5, 4.5, 1.5], 1)) == 2
    const = simulate(line_system("x1", x0=(0, 1)), [0.5], 20)
    assert np.all(const.states == 0.5)
    with pytest.raises(ValueError):
        simulate(lv, [0.0, 0.0, 0.0], 5)


def test_exit_is_flagged_not_raised():
    S = line_system("x1 + 1", x0=(0, 0))
    tr = simulate(S, [0.0], 50)
    assert tr.exited and tr.exit_index == 11 and len(tr) == 12
    cont = simulate(S, [0.0], 50, on_exit="continue")
    assert cont.exited and len(cont) == 51


def test_labeling_examples(heat):
    L = heat.labeling
    assert L.label([11, 9]) == "a"
    assert L.label([5, 7.5]) == "b"
    assert L.label([11, 5]) == "d"


def test_persistence_monitor(lv):
    assert monitor_persistence(np.array([[0.0, 0, 0], [1, 1, 1]]), lv.visit_set) is None
    assert monitor_persistence(np.array([[6.5, 2.5, 1.2], [0, 0, 0]]), lv.visit_set) == 0
    tr = simulate(lv, [6.5, 4.5, 1.5], 3000, on_exit="continue")
    last = monitor_persistence(tr, lv.visit_set)
    assert last is None or last < 3000


def test_safety_monitor():
    S = line_system("x1 + 1", unsafe=Box([5], [10]))
    assert monitor_safety(simulate(S, [0.0], 12), S.unsafe_set) == 5
    assert monitor_safety(np.array([[0.0], [1.0]]), S.unsafe_set) is None
    assert monitor_safety(np.array([[0.0], [6.0]]), S.unsafe_set) == 1


def test_label_trace_length(heat):
    tr = simulate(heat.system, [11, 9], 10, on_exit="continue")
    assert len(label_trace(heat.labeling, tr)) == len(tr)
