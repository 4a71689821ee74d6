"""Shared fixtures for the test suite: random policies, small worlds, invariant checks."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from reactree.engine import Engine, EngineConfig
from reactree.harness import data_path
from reactree.policy import ScriptedPolicy
from reactree.simulator import Environment, world_from_dict
from reactree.simulator.world import HAND
from reactree.trace import TraceRecorder

WAH_HOUSE = data_path("worlds", "wah_house.json")
WORKED_TRANSCRIPT = data_path("transcripts", "wine_and_juice.txt")
WORKED_GOAL = "Make sure there is a wine and a juice on the coffee table."


def run_worked_example(config: EngineConfig | None = None):
    env = Environment.from_file(WAH_HOUSE)
    recorder = TraceRecorder()
    engine = Engine(ScriptedPolicy.from_file(WORKED_TRANSCRIPT), env, config, trace=recorder)
    status, budget = engine.run(WORKED_GOAL)
    return engine, env, recorder.events, status, budget


# -- worlds ----------------------------------------------------------------------------------


def small_world_dict(profile: str = "household") -> dict:
    """Two rooms, a handful of receptacles of every kind, a knife and sliceable food."""
    return {
        "name": "fuzz",
        "profile": profile,
        "hand_capacity": 1,
        "rooms": ["kitchen 1", "living room 1"],
        "agent": {"room": "kitchen 1"},
        "receptacles": [
            {"class": "fridge", "id": 1, "room": "kitchen 1", "openable": True},
            {"class": "counter", "id": 1, "room": "kitchen 1", "nearby": ["fridge 1"]},
            {"class": "microwave", "id": 1, "room": "kitchen 1", "openable": True, "switchable": True},
            {"class": "stove", "id": 1, "room": "kitchen 1", "switchable": True},
            {"class": "drawer", "id": 1, "room": "living room 1", "openable": True, "open": True},
            {"class": "sofa", "id": 1, "room": "living room 1"},
        ],
        "objects": [
            {"class": "apple", "id": 1, "location": "fridge 1", "sliceable": True},
            {"class": "bread", "id": 1, "location": "counter 1", "sliceable": True},
            {"class": "knife", "id": 1, "location": "drawer 1"},
            {"class": "mug", "id": 1, "location": "counter 1"},
            {"class": "book", "id": 1, "location": "sofa 1"},
            {"class": "ball", "id": 1, "location": "living room 1"},
        ],
    }


def small_env(profile: str = "household") -> Environment:
    return Environment(world_from_dict(small_world_dict(profile)))


# -- random policy -----------------------------------------------------------------------------


_FLOWS = ("sequence", "fallback", "parallel", "loop")
_WORDS = ("find", "the", "mug", "apple", "go", "kitchen", "open", "fridge", "wash", "carry", "sofa", "and")


@dataclass
class RandomPolicy:
    """Seeded stand-in for a language model that emits any kind of line, including malformed ones.

    Consumes its generator strictly in call order, so two engines fed the same
    seed see the same outputs for as long as they make the same calls.
    """

    seed: int
    labels: Sequence[str] = ("fridge 1", "apple 1", "mug 1", "kitchen 1", "sofa 1", "book 1")
    verbs: Sequence[str] = ("go to", "pick up", "put down", "open", "close", "turn on", "recall location of")
    p_done: float = 0.12
    p_failure: float = 0.08
    p_expand: float = 0.1
    p_garbage: float = 0.05
    name: str = "random"

    def __post_init__(self):
        self.rng = random.Random(self.seed)

    def _subgoal(self) -> str:
        return " ".join(self.rng.choice(_WORDS) for _ in range(self.rng.randint(1, 4)))

    def complete(self, bundle, feedback=()) -> str:
        r = self.rng.random()
        if r < self.p_done:
            return "Act: done"
        r -= self.p_done
        if r < self.p_failure:
            return "Act: failure"
        r -= self.p_failure
        if r < self.p_expand:
            flow = self.rng.choice(_FLOWS)
            subgoals = ", ".join(self._subgoal() for _ in range(self.rng.randint(1, 3)))
            return f"Expand: {{'control_flow': '{flow}', 'conditions': '{subgoals}'}}"
        r -= self.p_expand
        if r < self.p_garbage:
            return self.rng.choice(["", "Plan: go", "Act:", "Expand: not a dict", "Think:"])
        if self.rng.random() < 0.3:
            return f"Think: {self._subgoal()}"
        return f"Act: {self.rng.choice(self.verbs)} {self.rng.choice(self.labels)}"


# -- simulator invariants ------------------------------------------------------------------------


def snapshot(state) -> tuple:
    # dict order is insertion order, so no sorting is needed to compare two snapshots
    return (
        state.agent_room,
        state.near,
        tuple(state.held),
        tuple((k, o.location, o.sliced) for k, o in state.objects.items()),
        tuple((r.is_open, r.is_on) for r in state.receptacles.values()),
    )


def check_state(state) -> list[str]:
    """Location and proximity invariants that hold after every step."""
    problems = []
    receptacles, rooms = state.receptacles, state.rooms
    in_hand = []
    for label, item in state.objects.items():
        loc = item.location
        if item.label != label:
            problems.append(f"{label} stored under the wrong key")
        if loc == HAND:
            in_hand.append(label)
        elif loc not in receptacles and loc not in rooms:
            problems.append(f"{label} is at unknown place {loc!r}")
    if sorted(in_hand) != sorted(state.held):
        problems.append(f"held list {state.held} disagrees with objects in hand {in_hand}")
    if len(state.held) > state.hand_capacity:
        problems.append("holding more than the hand capacity")
    if state.agent_room not in rooms:
        problems.append("agent is outside every room")
    if state.near is not None:
        rec = receptacles.get(state.near)
        if rec is None or rec.room != state.agent_room:
            problems.append(f"agent is near {state.near} which is not in {state.agent_room}")
    return problems


def check_sightings(state, obs) -> list[str]:
    """Every reported sighting names a visible object where it really is."""
    problems = []
    for s in obs.sightings:
        label = f"{s.cls} {s.id}"
        item = state.objects.get(label)
        if item is None:
            problems.append(f"sighting of missing object {label}")
            continue
        if s.receptacle is not None:
            if item.location != s.receptacle:
                problems.append(f"{label} reported at {s.receptacle}, is at {item.location}")
            elif state.receptacles[s.receptacle].hides_contents:
                problems.append(f"{label} reported inside closed {s.receptacle}")
        elif item.location != s.room:
            problems.append(f"{label} reported on the floor of {s.room}, is at {item.location}")
    return problems
