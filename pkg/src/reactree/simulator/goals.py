"""Goal predicates in the ``on_juice_coffeetable`` key format and their scoring."""

from __future__ import annotations

from dataclasses import dataclass

from reactree.simulator.world import HAND, WorldState, canonical_class


class GoalError(ValueError):
    pass


@dataclass(frozen=True)
class Predicate:
    key: str
    kind: str  # on | inside | turnon | hold
    obj: str | None
    receptacle: str | None


def parse_predicate(key: str) -> Predicate:
    parts = key.split("_")
    head = parts[0].lower()
    if head in ("on", "inside") and len(parts) == 3 and all(parts):
        return Predicate(key, head, canonical_class(parts[1]), canonical_class(parts[2]))
    if head == "turnon" and len(parts) == 2 and parts[1]:
        return Predicate(key, "turnon", None, canonical_class(parts[1]))
    if head == "hold" and len(parts) == 2 and parts[1]:
        return Predicate(key, "hold", canonical_class(parts[1]), None)
    raise GoalError(f"malformed goal predicate {key!r}")


@dataclass(frozen=True)
class GoalCondition:
    predicates: dict[str, int]

    def __post_init__(self):
        if not self.predicates:
            raise GoalError("a goal needs at least one predicate")
        for key, count in self.predicates.items():
            parse_predicate(key)
            if not isinstance(count, int) or count < 1:
                raise GoalError(f"{key}: required count must be a positive integer")

    def validate(self, state: WorldState) -> None:
        vocab = state.vocabulary()
        for key in self.predicates:
            pred = parse_predicate(key)
            for name in (pred.obj, pred.receptacle):
                if name is not None and name not in vocab:
                    raise GoalError(f"{key}: class {name!r} does not exist in world {state.name or '?'}")

    @property
    def units(self) -> int:
        return sum(self.predicates.values())


def count_satisfying(state: WorldState, pred: Predicate) -> int:
    if pred.kind == "turnon":
        return sum(
            1
            for r in state.receptacles.values()
            if canonical_class(r.cls) == pred.receptacle
            and r.is_on
            and not (state.turn_on_requires_closed and r.openable and r.is_open)
        )
    if pred.kind == "hold":
        return sum(1 for h in state.held if canonical_class(state.objects[h].cls) == pred.obj)
    n = 0
    for item in state.objects.values():
        if canonical_class(item.cls) != pred.obj or item.location == HAND:
            continue
        rec = state.receptacles.get(item.location)
        if rec is not None and canonical_class(rec.cls) == pred.receptacle and rec.relation == pred.kind:
            n += 1
    return n


def evaluate_goal(state: WorldState, goal: GoalCondition) -> tuple[bool, float, dict[str, int]]:
    """Return (success, subgoal success ratio, satisfied units per predicate)."""
    per_predicate = {}
    for key, required in goal.predicates.items():
        per_predicate[key] = min(count_satisfying(state, parse_predicate(key)), required)
    satisfied = sum(per_predicate.values())
    ssr = satisfied / goal.units
    return satisfied == goal.units, ssr, per_predicate
