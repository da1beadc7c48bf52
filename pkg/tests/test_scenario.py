import json
import math
from dataclasses import replace

import pytest

from daruma_sim import (
    ActorScript,
    ControlCommand,
    ObjectClass,
    ParseError,
    SchemaError,
    UnknownScenario,
    builtin_scenario,
    detect_hazards,
    ground_truth_view,
    initial_state,
    load_scenario,
    step,
)
from daruma_sim.scenario import BUILTIN_NAMES, dump_scenario
from daruma_sim.types import LightState, Pose2D

from helpers import obj

MINIMAL = {
    "name": "minimal",
    "ego_init": {"id": 0, "pose": [0, 0, 0], "velocity": [0, 0]},
    "route": [[0, 0], [100, 0]],
    "drivable_space": [[-10, -5], [110, -5], [110, 5], [-10, 5]],
}


def doc(**changes):
    d = json.loads(json.dumps(MINIMAL))
    d.update(changes)
    return d


def test_minimal_document():
    sc = load_scenario(MINIMAL)
    assert sc.actors == () and sc.tick_dt == 0.1 and sc.duration == 30.0
    assert load_scenario(json.dumps(MINIMAL)) == sc


def test_spawn_after_despawn_is_schema_error():
    bad = doc(actors=[{"template": {"id": 1, "pose": [5, 0, 0]}, "spawn_t": 3.0, "despawn_t": 3.0}])
    with pytest.raises(SchemaError) as err:
        load_scenario(bad)
    assert "actors[0]" in str(err.value)


@pytest.mark.parametrize("mutation, where", [
    ({"tick_dt": 0}, "tick_dt"),
    ({"route": [[0, 0]]}, "route"),
    ({"drivable_space": [[0, 0], [1, 0]]}, "drivable_space"),
    ({"bogus": 1}, "bogus"),
    ({"duration": 0.05}, "duration"),
])
def test_schema_errors_carry_path(mutation, where):
    with pytest.raises(SchemaError) as err:
        load_scenario(doc(**mutation))
    assert where in str(err.value)


def test_malformed_json_is_parse_error():
    with pytest.raises(ParseError):
        load_scenario("{not json")


def test_builtin_catalogue():
    assert set(BUILTIN_NAMES) >= {"cyclist_crossing", "front_vehicle_left_turn", "pedestrian_t_intersection",
                                  "table3_timeline", "random_crossing"}
    with pytest.raises(UnknownScenario):
        builtin_scenario("nonexistent")
    for name in BUILTIN_NAMES:
        sc = builtin_scenario(name)
        assert load_scenario(dump_scenario(sc)) == sc


def test_cyclist_fixture_crosses_route():
    sc = builtin_scenario("cyclist_crossing")
    (cyc,) = sc.all_actors
    assert cyc.template.cls is ObjectClass.CYCLIST
    start = cyc.state_at(0.0).pose
    later = cyc.state_at(8.0).pose
    assert start.y < 0 < later.y  # moves across the route y = 0


def test_left_turn_fixture_lead_vehicle_turns():
    sc = builtin_scenario("front_vehicle_left_turn")
    (lead,) = sc.all_actors
    assert lead.template.pose.x > sc.ego_init.pose.x
    h0 = lead.state_at(0.0).pose.heading
    h1 = lead.state_at(sc.duration).pose.heading
    assert h1 - h0 > math.radians(60)  # turned left


def test_table3_fixture_grid():
    sc = builtin_scenario("table3_timeline")
    assert len(sc.channels) == 3 and sc.duration == pytest.approx(7.0)
    grid = {c.channel_id: [any(e.active(step_ + 0.5) for e in c.oi_schedule.entries) for step_ in range(7)]
            for c in sc.channels}
    assert grid == {
        1: [False, False, False, True, True, False, False],
        2: [False, False, False, True, False, False, True],
        3: [False, False, True, True, False, False, True],
    }


def test_random_crossing_is_seeded():
    a, b = builtin_scenario("random_crossing", seed=1), builtin_scenario("random_crossing", seed=2)
    assert a.all_actors != b.all_actors
    assert builtin_scenario("random_crossing", seed=1).all_actors == a.all_actors


def _scene(ego_speed=0.0, actors=(), lights=()):
    sc = load_scenario(doc(ego_init={"id": 0, "pose": [0, 0, 0], "velocity": [ego_speed, 0]}))
    return initial_state(replace(sc, actors=tuple(actors), light_schedule=tuple(lights)))


def test_step_examples():
    s = _scene()
    assert step(s, 0.1, ControlCommand()).ego.pose == s.ego.pose
    s = _scene(10.0)
    assert step(s, 0.1, ControlCommand()).ego.pose.x == pytest.approx(1.0)


def test_step_unicycle_curvature():
    s = _scene(10.0)
    n = step(s, 0.1, ControlCommand(acceleration=2.0, curvature=0.1))
    assert n.ego.speed == pytest.approx(10.2)
    assert n.ego.pose.heading == pytest.approx(0.1)  # theta' = v * kappa


def test_waypoint_actor_interpolates():
    wp = ((0.0, Pose2D(10, 0, 0)), (2.0, Pose2D(20, 4, 0)))
    actor = ActorScript(obj(3, 10, 0), "waypoints", wp)
    p = actor.state_at(0.5).pose
    assert (p.x, p.y) == pytest.approx((12.5, 1.0))


def test_ground_truth_view():
    actors = [ActorScript(obj(i, 20 * i, 0)) for i in (1, 2, 3)]
    actors.append(ActorScript(obj(4, 5, 0), despawn_t=0.05))
    s = _scene(actors=actors, lights=((0.0, LightState.RED),))
    w = ground_truth_view(step(s, 0.1))
    assert [o.id for o in w.objects] == [1, 2, 3]
    assert w.traffic.light_state is LightState.RED


def test_actor_motion_independent_of_ego():
    actors = [ActorScript(obj(1, 30, -10, vel=(0.0, 2.0)))]
    slow, fast = _scene(0.0, actors), _scene(15.0, actors)
    for _ in range(20):
        slow, fast = step(slow, 0.1), step(fast, 0.1)
    assert ground_truth_view(slow).objects == ground_truth_view(fast).objects


def test_detect_hazards_examples():
    far = _scene(actors=[ActorScript(obj(1, 100, 0))])
    assert detect_hazards(far) == []
    same = _scene(actors=[ActorScript(obj(1, 0, 0))])
    (hz,) = detect_hazards(same)
    assert hz.kind == "collision" and hz.participants == (0, 1)


def test_corner_on_polygon_edge_is_not_off_road():
    # ego 4.5 x 2 at the origin; polygon edge runs exactly through the left corners
    sc = load_scenario(doc(drivable_space=[[-10, -5], [110, -5], [110, 1], [-10, 1]]))
    assert detect_hazards(initial_state(sc)) == []
    sc = load_scenario(doc(drivable_space=[[-10, -5], [110, -5], [110, 0.999], [-10, 0.999]]))
    assert [h.kind for h in detect_hazards(initial_state(sc))] == ["off_drivable_space"]


def test_hazards_ignore_distant_objects():
    base = _scene(actors=[ActorScript(obj(1, 2, 0))])
    extra = _scene(actors=[ActorScript(obj(1, 2, 0)), ActorScript(obj(2, 500, 0))])
    assert detect_hazards(base) == detect_hazards(extra)


def test_step_determinism():
    sc = builtin_scenario("random_crossing", seed=4)
    a = b = initial_state(sc)
    for _ in range(30):
        a, b = step(a, sc.tick_dt, ControlCommand(0.5, 0.01)), step(b, sc.tick_dt, ControlCommand(0.5, 0.01))
    assert a == b and ground_truth_view(a) == ground_truth_view(b)
