import numpy as np
import pytest

from lexrank.core import RulebookError
from lexrank.rules_av import KMH
from lexrank.scenarios import (
    SCENARIOS,
    build_scenario,
    compare_solvers,
    receding_horizon_run,
    scenario_settings,
)
from lexrank.vehicle import step_dynamics, VehicleState


def test_presets():
    inf = build_scenario("jaywalker_infeasible")
    assert inf.start.v == pytest.approx(50 * KMH, abs=1e-2)
    feas = build_scenario("jaywalker_feasible")
    assert feas.start.v == pytest.approx(5.0)
    post = build_scenario("post_overtake")
    assert post.start.y == pytest.approx(3.5)
    assert post.visible_obstacles(0.0) == () and post.visible_obstacles(100.0) == ()


def test_pedestrian_appears_at_trigger():
    sc = build_scenario("jaywalker_infeasible")
    assert sc.visible_obstacles(0.5) == ()
    assert len(sc.visible_obstacles(1.0)) == 1


def test_unknown_names_and_bad_settings():
    with pytest.raises(RulebookError):
        build_scenario("roundabout")
    with pytest.raises(RulebookError):
        scenario_settings("jaywalker_feasible", {"no_such_key": 1})
    with pytest.raises(RulebookError):
        scenario_settings("jaywalker_feasible", {"initial_lane": "shoulder"})
    with pytest.raises(RulebookError):
        receding_horizon_run(build_scenario("jaywalker_feasible", {"max_steps": 2}), "simplex")


@pytest.mark.parametrize("solver", ["central_path", "timescale", "preemptive", "dws_ascent"])
def test_closed_loop_bookkeeping(solver):
    sc = build_scenario("jaywalker_feasible", {"max_steps": 4})
    lg = receding_horizon_run(sc, solver)
    assert lg.steps == 4 and lg.states.shape == (5, 4)
    for k in range(lg.steps):
        a, d = lg.controls[k]
        nxt = step_dynamics(VehicleState(*lg.states[k]), a, d, sc.dt, sc.params)
        np.testing.assert_allclose(nxt.as_array(), lg.states[k + 1], atol=1e-12)
        # the applied control is the first control of that replan's plan
        np.testing.assert_allclose(lg.plans[k][:2], lg.controls[k])
    assert np.all(lg.step_violations >= 0)
    assert len(lg.traces) == len(lg.inner_steps) == lg.steps


def test_runs_are_deterministic():
    sc = build_scenario("jaywalker_infeasible", {"max_steps": 4, "random_start": True})
    rep = compare_solvers(sc, ["timescale", "timescale"])
    a, b = rep.logs.values()
    np.testing.assert_array_equal(a.states, b.states)
    assert not rep.rank_disagreement
    assert len(rep.table()) == 2


def test_comparison_needs_two_solvers():
    with pytest.raises(RulebookError):
        compare_solvers(build_scenario("post_overtake"), ["timescale"])


def test_post_overtake_returns_to_own_lane():
    lg = receding_horizon_run(build_scenario("post_overtake"), "timescale")
    assert lg.step_violations[-1, 1] == 0.0
    assert abs(lg.states[-1, 1]) < 0.5


def test_every_scenario_builds():
    for name in SCENARIOS:
        sc = build_scenario(name)
        assert sc.problem(sc.start, 0.0).steps == sc.horizon_steps
