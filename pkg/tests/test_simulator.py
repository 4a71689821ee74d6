import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reactree.simulator import (
    CommandError,
    Environment,
    GoalCondition,
    GoalError,
    WorldFileError,
    available_skills,
    canonical_class,
    evaluate_goal,
    load_world,
    parse_command,
    parse_predicate,
    step,
    world_from_dict,
)
from reactree.simulator.core import aggregate
from reactree.simulator.world import HAND, HOUSEHOLD_VERBS

from support import WAH_HOUSE, check_sightings, check_state, small_env, small_world_dict, snapshot


def test_initial_observation_of_shipped_house():
    env = Environment.from_file(WAH_HOUSE)
    assert env.observe().text == (
        "You are in the house, and there are 4 rooms: bathroom (1), bedroom (1), kitchen (1), living room (1). "
        "You are in the middle of a bathroom (1). Looking quickly around the room, you see bathroom cabinet (1), "
        "bathroom counter (1), faucet (1), sink (1), toilet (1), towel rack (1), washing machine (1)."
    )


def test_aggregate_groups_and_sorts_instances():
    assert aggregate([("chair", 2), ("bed", 1), ("chair", 1)]) == "bed (1), chair (1, 2)"
    assert aggregate([]) == ""


def test_canonical_class():
    assert canonical_class("Coffee Table") == "coffeetable"
    assert canonical_class("cutlery_fork") == "cutleryfork"


def test_parse_command():
    cmd = parse_command("  Go to  Kitchen Cabinet 3 ", HOUSEHOLD_VERBS)
    assert (cmd.verb, cmd.target) == ("go to", "kitchen cabinet 3")
    with pytest.raises(CommandError):
        parse_command("fly to the moon 1", HOUSEHOLD_VERBS)
    with pytest.raises(CommandError, match="instance number"):
        parse_command("go to kitchen", HOUSEHOLD_VERBS)


def test_closed_receptacle_hides_contents_until_opened():
    env = Environment.from_file(WAH_HOUSE)
    env.act("go to kitchen 1")
    arrive = env.act("go to fridge 2")
    assert arrive.text == "You arrive at the fridge (2). The fridge (2) is closed. You see bench (1), fridge (1, 2)"
    assert arrive.sightings == ()
    opened = env.act("open fridge 2")
    assert opened.text == "You open fridge. You see bench (1), fridge (1, 2), juice (1)."
    assert [(s.cls, s.id, s.receptacle) for s in opened.sightings] == [("juice", 1, "fridge 2")]


def test_pick_up_and_put_down_cycle():
    env = small_env()
    s = env.state
    assert env.act("pick up mug 1").error  # not near the counter yet
    env.act("go to counter 1")
    obs = env.act("pick up mug 1")
    assert obs.text == "You pick up mug. You hold mug (1)." and s.objects["mug 1"].location == HAND
    full = env.act("pick up bread 1")
    assert full.error and "hands are full" in full.text
    env.act("go to fridge 1")
    closed = env.act("put down mug 1")
    assert closed.error and "closed" in closed.text
    env.act("open fridge 1")
    assert env.act("put down mug 1").text == "You put down mug in fridge."
    assert s.objects["mug 1"].location == "fridge 1" and s.held == []


def test_entering_a_room_clears_proximity():
    env = small_env()
    env.act("go to counter 1")
    assert env.state.near == "counter 1"
    env.act("go to living room 1")
    assert env.state.near is None
    assert env.act("go to counter 1").error  # other room


def test_go_to_object_resolves_to_its_receptacle():
    env = small_env()
    obs = env.act("go to mug 1")
    assert not obs.error and env.state.near == "counter 1"
    floor = small_env()
    floor.act("go to living room 1")
    assert not floor.act("go to ball 1").error and floor.state.near is None


def test_errors_leave_state_untouched():
    env = small_env()
    before = snapshot(env.state)
    for cmd in ("go to moon 1", "open sofa 1", "turn on fridge 1", "dance", "slice apple 1"):
        obs = env.act(cmd)
        assert obs.error
        assert obs.text.startswith("Action is not executable, since ")
        assert obs.text.endswith(f'when executing "{cmd}".')
    assert snapshot(env.state) == before


def test_switching_appliances():
    env = small_env()
    env.act("go to stove 1")
    assert env.act("turn on stove 1").text == "You turn on stove."
    assert env.act("turn on stove 1").error
    assert env.act("turn off stove 1").error  # not a household verb
    ext = small_env("extended")
    ext.act("go to stove 1")
    ext.act("turn on stove 1")
    assert ext.act("turn off stove 1").text == "You turn off stove."


def test_slice_needs_a_knife_and_makes_new_pieces():
    env = small_env("extended")
    s = env.state
    env.act("go to counter 1")
    assert "knife" in env.act("slice bread 1").text
    env.act("go to living room 1")
    env.act("go to drawer 1")
    env.act("pick up knife 1")
    env.act("go to kitchen 1")
    env.act("go to counter 1")
    obs = env.act("slice bread 1")
    assert obs.text == "You slice bread. bread (2, 3, 4) are sliced."
    assert "bread 1" not in s.objects
    assert all(s.objects[f"bread {i}"].sliced for i in (2, 3, 4))
    assert not check_state(s) and not check_sightings(s, obs)


def test_household_profile_has_no_slice():
    env = small_env()
    assert env.act("slice apple 1").error


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=10_000), min_size=1, max_size=60))
def test_available_skills_never_error(choices):
    env = small_env("extended")
    for c in choices:
        skills = available_skills(env.state)
        cmd = skills[c % len(skills)]
        _, obs = step(env.state, cmd)
        assert not obs.error, (cmd, obs.text)
        assert not check_state(env.state)
        assert not check_sightings(env.state, obs)


# -- world files ------------------------------------------------------------------------------


def test_world_file_errors_name_the_field(tmp_path):
    data = small_world_dict()
    data["objects"][0]["location"] = "garage 1"
    with pytest.raises(WorldFileError, match=r"objects\[0\]\.location"):
        world_from_dict(data)
    data = small_world_dict()
    data["receptacles"][1]["nearby"] = ["sofa 1"]
    with pytest.raises(WorldFileError, match="nearby"):
        world_from_dict(data)
    data = small_world_dict()
    data["profile"] = "spaceship"
    with pytest.raises(WorldFileError, match="profile"):
        world_from_dict(data)
    bad = tmp_path / "w.json"
    bad.write_text("{not json")
    with pytest.raises(WorldFileError):
        load_world(bad)


def test_world_round_trips_through_a_file(tmp_path):
    path = tmp_path / "w.json"
    path.write_text(json.dumps(small_world_dict()))
    state = load_world(path)
    assert state.agent_room == "kitchen 1" and len(state.objects) == 6


def test_template_override(tmp_path):
    data = small_world_dict()
    data["templates"] = {"close": "Closed the {cls}."}
    env = Environment(world_from_dict(data))
    env.act("go to fridge 1")
    env.act("open fridge 1")
    assert env.act("close fridge 1").text == "Closed the fridge."


# -- goals ---------------------------------------------------------------------------------------


def test_parse_predicate():
    p = parse_predicate("on_juice_coffeetable")
    assert (p.kind, p.obj, p.receptacle) == ("on", "juice", "coffeetable")
    assert parse_predicate("turnOn_dishwasher").kind == "turnon"
    assert parse_predicate("hold_mug").obj == "mug"
    for bad in ("under_mug_table", "on_mug", "turnOn_", "hold"):
        with pytest.raises(GoalError):
            parse_predicate(bad)


def test_goal_condition_validation():
    with pytest.raises(GoalError):
        GoalCondition({})
    with pytest.raises(GoalError):
        GoalCondition({"on_mug_sofa": 0})
    with pytest.raises(GoalError, match="does not exist"):
        GoalCondition({"on_unicorn_sofa": 1}).validate(small_env().state)
    GoalCondition({"on_mug_sofa": 1}).validate(small_env().state)


def test_goal_counts_are_capped_per_predicate():
    env = small_env()
    s = env.state
    goal = GoalCondition({"on_mug_sofa": 1, "on_book_sofa": 2, "hold_apple": 1})
    success, ssr, per = evaluate_goal(s, goal)
    assert (success, per) == (False, {"on_mug_sofa": 0, "on_book_sofa": 1, "hold_apple": 0})
    assert ssr == pytest.approx(1 / 4)
    s.objects["mug 1"].location = "sofa 1"
    s.objects["apple 1"].location = HAND
    s.held.append("apple 1")
    assert evaluate_goal(s, goal)[1] == pytest.approx(3 / 4)


def test_relation_must_match_receptacle():
    s = small_env().state
    s.objects["mug 1"].location = "fridge 1"
    assert evaluate_goal(s, GoalCondition({"inside_mug_fridge": 1}))[0]
    assert not evaluate_goal(s, GoalCondition({"on_mug_fridge": 1}))[0]


def test_turn_on_goal_requires_closed_door():
    s = small_env().state
    mw = s.receptacles["microwave 1"]
    mw.is_on = True
    mw.is_open = True
    assert not evaluate_goal(s, GoalCondition({"turnOn_microwave": 1}))[0]
    mw.is_open = False
    assert evaluate_goal(s, GoalCondition({"turnOn_microwave": 1}))[0]
