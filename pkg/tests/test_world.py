"""Gridworld simulator: scenario loading, stepping, observation."""

from __future__ import annotations

import random

import pytest

from conftest import scenario_path
from gridmind.world import (
    Action,
    ScenarioError,
    WorldState,
    load_scenario,
    parse_scenario,
)

MINIMAL = """
grid 6 6
region room 0 0 5 5
agent robot1 0 0
entity cup1 2 2 category=cup flags=fragile
entity plate1 2 3 category=plate size=3
entity table1 4 4 category=table
"""


def world(text=MINIMAL, seed=0, noise=False):
    return WorldState(parse_scenario(text), seed=seed, noise=noise)


class TestLoading:
    def test_bundled_arrange_scenario_loads(self):
        scenario = load_scenario(scenario_path("arrange"))
        sized = [
            e for e, s in scenario.entities.items()
            if "color" in s.attributes and "size" in s.attributes
        ]
        assert len(sized) >= 5
        assert scenario.agent == "robot1"
        assert scenario.tasks[0].kind == "arrange"

    def test_out_of_grid_position_rejected(self):
        with pytest.raises(ScenarioError):
            parse_scenario("grid 4 4\nagent robot1 0 0\nentity x1 -1 0\n")

    def test_empty_scenario_rejected(self):
        with pytest.raises(ScenarioError) as exc:
            parse_scenario("")
        assert "grid" in str(exc.value)

    def test_agent_required(self):
        with pytest.raises(ScenarioError) as exc:
            parse_scenario("grid 4 4\nentity x1 0 0\n")
        assert "agent" in str(exc.value)

    def test_duplicate_entity_id_rejected(self):
        text = "grid 4 4\nagent robot1 0 0\nentity x1 1 1\nentity x1 2 2\n"
        with pytest.raises(ScenarioError) as exc:
            parse_scenario(text)
        assert ":4:" in str(exc.value)

    def test_unknown_attribute_rejected(self):
        with pytest.raises(ScenarioError) as exc:
            parse_scenario("grid 4 4\nagent robot1 0 0\nentity x1 1 1 weight=9\n")
        assert "weight" in str(exc.value)

    def test_event_on_unknown_entity_rejected(self):
        with pytest.raises(ScenarioError):
            parse_scenario("grid 4 4\nagent robot1 0 0\nat 3 set ghost hot\n")

    def test_support_cycle_rejected(self):
        text = (
            "grid 4 4\nagent robot1 0 0\n"
            "entity a 1 1 on=b\nentity b 1 1 on=a\n"
        )
        with pytest.raises(ScenarioError):
            parse_scenario(text)


class TestStep:
    def test_pickup_out_of_range_fails_world_unchanged(self):
        w = world()
        before = {e: s.position for e, s in w.entities.items()}
        _, result = w.step(Action("PickUp", ("table1",)))
        assert result.failed and result.reason == "out_of_range"
        assert w.tick == 1
        assert {e: s.position for e, s in w.entities.items()} == before

    def test_place_on_extends_stack(self):
        w = world()
        w.entities["robot1"].position = (2, 2)
        w.step(Action("PickUp", ("cup1",)))
        assert w.carrying == "cup1"
        w.entities["robot1"].position = (4, 4)
        events, result = w.step(Action("PlaceOn", ("cup1", "table1")))
        assert result.status == "ok"
        assert w.entities["cup1"].on == "table1"
        assert w.stacks_on("table1") == [["cup1"]]
        assert any(e.kind == "placed" and e.entity == "cup1" for e in events)

    def test_heavy_on_fragile_breaks_and_wobbles(self):
        w = world()
        w.entities["robot1"].position = (2, 2)
        w.step(Action("PickUp", ("cup1",)))
        w.entities["robot1"].position = (4, 4)
        w.step(Action("PlaceOn", ("cup1", "table1")))
        w.entities["robot1"].position = (2, 3)
        w.step(Action("PickUp", ("plate1",)))
        w.entities["robot1"].position = (4, 4)
        _, result = w.step(Action("PlaceOn", ("plate1", "cup1")))
        assert w.entities["plate1"].on == "cup1"
        assert "broken" in w.entities["cup1"].flags
        assert "instability" in result.flags

    def test_wait_changes_only_tick(self):
        w = world()
        before = {e: (s.position, set(s.flags)) for e, s in w.entities.items()}
        events, result = w.step(Action("Wait"))
        assert result.status == "ok"
        assert w.tick == 1
        assert events == []
        assert {e: (s.position, set(s.flags)) for e, s in w.entities.items()} == before

    def test_move_out_of_bounds_fails(self):
        w = world()
        _, result = w.step(Action("Move", ("N",)))
        assert result.failed and result.reason == "out_of_bounds"

    def test_pickup_under_stack_fails(self):
        w = world()
        w.entities["robot1"].position = (2, 2)
        w.step(Action("PickUp", ("cup1",)))
        w.entities["robot1"].position = (4, 4)
        w.step(Action("PlaceOn", ("cup1", "table1")))
        w.entities["robot1"].position = (3, 4)
        w.step(Action("PickUp", ("table1",)))
        _, result = w.step(Action("PickUp", ("table1",)))
        assert result.failed and result.reason == "stacked_under"

    def test_cutpower_mop_fixleak(self):
        text = (
            "grid 6 6\nagent robot1 1 1\n"
            "entity wire1 1 2 category=wire flags=powered\n"
            "entity water1 2 1 category=water flags=wet\n"
            "entity sink1 0 1 category=sink flags=leaking\n"
        )
        w = world(text)
        _, r1 = w.step(Action("CutPower", ("wire1",)))
        assert r1.status == "ok" and "powered" not in w.entities["wire1"].flags
        _, r2 = w.step(Action("Mop", ("2", "1")))
        assert r2.status == "ok" and "wet" not in w.entities["water1"].flags
        _, r3 = w.step(Action("FixLeak", ("sink1",)))
        assert r3.status == "ok" and "leaking" not in w.entities["sink1"].flags
        _, r4 = w.step(Action("CutPower", ("wire1",)))
        assert r4.failed and r4.reason == "not_powered"

    def test_scripted_events_fire_after_action(self):
        text = MINIMAL + "at 2 set cup1 hot\nat 3 teleport cup1 5 5\n"
        w = world(text)
        w.step(Action("Wait"))
        assert "hot" not in w.entities["cup1"].flags
        events, _ = w.step(Action("Wait"))
        assert "hot" in w.entities["cup1"].flags
        assert any(e.kind == "flag_set" and e.detail == "hot" for e in events)
        w.step(Action("Wait"))
        assert w.entities["cup1"].position == (5, 5)
        assert "moving" in w.entities["cup1"].flags

    def test_conservation_of_entities(self):
        w = world(MINIMAL + "at 1 velocity cup1 1 0\n")
        count = len(w.entities)
        rng = random.Random(0)
        for _ in range(15):
            direction = rng.choice(["N", "E", "S", "W", "NE", "SW"])
            w.step(Action("Move", (direction,)))
            assert len(w.entities) == count

    def test_unknown_action_fails(self):
        w = world()
        _, result = w.step(Action("Fly", ("up",)))
        assert result.failed and result.reason.startswith("unknown_action")


class TestDeterminism:
    def _run(self, seed, noise=False):
        w = world(MINIMAL + "at 1 velocity plate1 1 0\nat 4 set cup1 hot\n", seed, noise)
        seen = []
        for i in range(8):
            events, result = w.step(Action("Move", ("E" if i % 2 else "S",)))
            obs = w.observe()
            seen.append((tuple(events), result.status, tuple(sorted(
                (e, r.position) for e, r in obs.readings.items()
            ))))
        return seen

    def test_identical_runs_identical_streams(self):
        assert self._run(7) == self._run(7)

    def test_noisy_observation_deterministic_given_seed(self):
        assert self._run(7, noise=True) == self._run(7, noise=True)

    def test_noise_actually_perturbs(self):
        clean = self._run(7, noise=False)
        noisy = self._run(7, noise=True)
        assert clean != noisy


class TestObservation:
    def test_noise_off_positions_are_ground_truth(self):
        w = world()
        obs = w.observe()
        for entity, reading in obs.readings.items():
            assert reading.position == w.entities[entity].position

    def test_stacked_under_entity_occluded(self):
        w = world()
        w.entities["robot1"].position = (2, 2)
        w.step(Action("PickUp", ("cup1",)))
        w.entities["robot1"].position = (4, 4)
        w.step(Action("PlaceOn", ("cup1", "table1")))
        # nothing on the cup yet: visible; table has the cup on it: occluded
        obs = w.observe()
        assert not obs.readings["cup1"].occluded
        assert obs.readings["table1"].occluded

    def test_contained_entity_occluded_with_position_only(self):
        text = (
            "grid 6 6\nagent robot1 0 0\n"
            "entity cup1 2 2 category=cup contains=liq1\n"
            "entity liq1 2 2 category=liquid\n"
        )
        obs = world(text).observe()
        assert obs.readings["liq1"].occluded
        assert obs.readings["liq1"].attributes is None
        assert obs.readings["liq1"].flags is None
        assert obs.readings["cup1"].contains == ("liq1",)

    def test_sensing_radius_limits_readings(self):
        w = world()
        obs = w.observe(radius=2.0)
        assert "robot1" in obs.readings
        assert "table1" not in obs.readings


def test_stack_wellformedness_under_random_action_stream():
    rng = random.Random(11)
    w = world()
    actions = ["Move", "PickUp", "PlaceOn", "Wait"]
    names = list(w.entities)
    for _ in range(300):
        kind = rng.choice(actions)
        if kind == "Move":
            action = Action("Move", (rng.choice(["N", "E", "S", "W"]),))
        elif kind == "PickUp":
            action = Action("PickUp", (rng.choice(names),))
        elif kind == "PlaceOn":
            action = Action("PlaceOn", (rng.choice(names), rng.choice(names)))
        else:
            action = Action("Wait")
        w.step(action)
        # every stacked entity has exactly one support; no cycles
        for entity, state in w.entities.items():
            if state.on is not None:
                assert state.on in w.entities
                seen = {entity}
                cursor = state.on
                while cursor is not None:
                    assert cursor not in seen
                    seen.add(cursor)
                    cursor = w.entities[cursor].on
        for base in names:
            for chain in w.stacks_on(base):
                assert len(chain) == len(set(chain))


def test_scenario_fact_with_bad_confidence_rejected():
    text = "grid 4 4\nagent robot1 0 0\nfact a isa b 1.5\n"
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(text)
    assert ":3:" in str(exc.value)


def test_contents_travel_with_their_container():
    text = (
        "grid 8 8\nagent robot1 2 2\n"
        "entity cup1 2 3 category=cup contains=liq1\n"
        "entity liq1 2 3 category=liquid\n"
        "entity box1 5 5 category=box\n"
    )
    w = world(text)
    w.step(Action("PickUp", ("cup1",)))
    w.step(Action("Move", ("SE",)))
    assert w.entities["liq1"].position == w.entities["cup1"].position
    assert w.entities["cup1"].position == w.entities["robot1"].position


def test_contained_entity_cannot_be_picked_up():
    text = (
        "grid 8 8\nagent robot1 2 2\n"
        "entity cup1 2 3 category=cup contains=liq1\n"
        "entity liq1 2 3 category=liquid\n"
    )
    w = world(text)
    _, result = w.step(Action("PickUp", ("liq1",)))
    assert result.failed and result.reason == "contained"
