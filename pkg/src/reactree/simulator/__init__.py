from reactree.simulator.core import (
    CommandError,
    Environment,
    Observation,
    Sighting,
    SkillCommand,
    available_skills,
    describe,
    parse_command,
    reset,
    step,
)
from reactree.simulator.goals import GoalCondition, GoalError, evaluate_goal, parse_predicate
from reactree.simulator.world import (
    WorldFileError,
    WorldState,
    canonical_class,
    load_world,
    world_from_dict,
)

__all__ = [
    "CommandError",
    "Environment",
    "GoalCondition",
    "GoalError",
    "Observation",
    "Sighting",
    "SkillCommand",
    "WorldFileError",
    "WorldState",
    "available_skills",
    "canonical_class",
    "describe",
    "evaluate_goal",
    "load_world",
    "parse_command",
    "parse_predicate",
    "reset",
    "step",
    "world_from_dict",
]
