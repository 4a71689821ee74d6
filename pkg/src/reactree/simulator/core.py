"""Skill execution and the partially observable observation protocol.

The agent sees receptacles of its current room, and objects only when it is
near the receptacle holding them (or they lie on the floor). Anything inside
a closed receptacle is invisible until the receptacle is opened. Inapplicable
skills never change the state; they come back as error-flagged observations.
"""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional

from reactree.simulator.world import (
    HAND,
    Item,
    Receptacle,
    WorldState,
    load_world,
    make_label,
    split_label,
)


@dataclass(frozen=True)
class Sighting:
    cls: str
    id: int
    room: str
    receptacle: Optional[str]


@dataclass(frozen=True)
class Observation:
    text: str
    sightings: tuple[Sighting, ...] = ()
    error: bool = False


@dataclass(frozen=True)
class SkillCommand:
    verb: str
    target: str

    @property
    def text(self) -> str:
        return f"{self.verb} {self.target}"


class CommandError(ValueError):
    pass


@lru_cache(maxsize=None)
def _command_pattern(verbs: tuple[str, ...]) -> re.Pattern:
    alternatives = "|".join(re.escape(v) for v in sorted(verbs, key=len, reverse=True))
    return re.compile(rf"({alternatives}) (.+)")


def parse_command(text: str, verbs: Iterable[str]) -> SkillCommand:
    cleaned = " ".join(text.strip().lower().split())
    m = _command_pattern(tuple(verbs)).fullmatch(cleaned)
    if m is None:
        raise CommandError(f"unknown action {cleaned!r}")
    try:
        cls, ident = split_label(m.group(2))
    except ValueError as exc:
        raise CommandError(str(exc)) from None
    return SkillCommand(m.group(1), make_label(cls, ident))


# -- rendering -------------------------------------------------------------------


def aggregate(labels: Iterable[tuple[str, int]]) -> str:
    """``[("chair", 2), ("chair", 1), ("bed", 1)]`` -> ``"bed (1), chair (1, 2)"``."""
    groups: dict[str, set[int]] = defaultdict(set)
    for cls, ident in labels:
        groups[cls].add(ident)
    return ", ".join(f"{cls} ({', '.join(map(str, sorted(ids)))})" for cls, ids in sorted(groups.items()))


def _paren(label: str) -> str:
    cls, ident = split_label(label)
    return f"{cls} ({ident})"


def _things(state: WorldState, pairs) -> str:
    return aggregate(pairs) or state.templates["nothing"]


def _hold_suffix(state: WorldState) -> str:
    if not state.held:
        return ""
    held = aggregate((state.objects[h].cls, state.objects[h].id) for h in state.held)
    return state.templates["hold"].format(held=held)


def _floor_items(state: WorldState, room: str) -> list[Item]:
    return [o for o in state.objects.values() if o.location == room]


def _room_view(state: WorldState):
    room = state.agent_room
    pairs = [(r.cls, r.id) for r in state.receptacles_in(room)]
    floor = _floor_items(state, room)
    pairs += [(o.cls, o.id) for o in floor]
    sightings = tuple(Sighting(o.cls, o.id, room, None) for o in floor)
    return pairs, sightings


def visible_at(state: WorldState, rec: Receptacle) -> list[Item]:
    if rec.hides_contents:
        return []
    return [o for o in state.objects.values() if o.location == rec.label]


def _receptacle_view(state: WorldState, rec: Receptacle):
    pairs = [(rec.cls, rec.id)]
    pairs += [(state.receptacles[n].cls, state.receptacles[n].id) for n in rec.nearby]
    items = visible_at(state, rec)
    pairs += [(o.cls, o.id) for o in items]
    sightings = tuple(Sighting(o.cls, o.id, rec.room, rec.label) for o in sorted(items, key=lambda o: (o.cls, o.id)))
    return pairs, sightings


def _room_count(n: int) -> str:
    return "is 1 room" if n == 1 else f"are {n} rooms"


def describe(state: WorldState) -> Observation:
    """Whole-house orientation plus a quick look around the current room."""
    pairs, sightings = _room_view(state)
    rooms = aggregate(split_label(r) for r in state.rooms)
    text = state.templates["house"].format(
        room_count=_room_count(len(state.rooms)),
        rooms=rooms,
        room=_paren(state.agent_room),
        things=_things(state, pairs),
    )
    return Observation(text + _hold_suffix(state), sightings)


def reset(world_file) -> tuple[WorldState, Observation]:
    state = load_world(world_file)
    return state, describe(state)


# -- skills ------------------------------------------------------------------------


class _Inapplicable(Exception):
    pass


def _error(state: WorldState, cmd_text: str, reason: str) -> Observation:
    return Observation(state.templates["error"].format(reason=reason, command=cmd_text), (), True)


def _object_reachable(state: WorldState, item: Item) -> bool:
    """Close enough to pick up or slice: on the receptacle the agent is at, or on this room's floor."""
    if item.location == HAND:
        return False
    if item.location == state.near:
        return not state.receptacles[item.location].hides_contents
    return item.location == state.agent_room


def _visible_in_room(state: WorldState, item: Item) -> bool:
    if item.location == HAND or state.room_of(item) != state.agent_room:
        return False
    return not state.is_hidden(item)


def _go_to(state: WorldState, target: str) -> Observation:
    t = state.templates
    if target in state.rooms:
        state.agent_room = target
        state.near = None
        pairs, sightings = _room_view(state)
        text = t["move"].format(room=_paren(target), things=_things(state, pairs))
        return Observation(text + _hold_suffix(state), sightings)
    if target in state.receptacles:
        rec = state.receptacles[target]
        if rec.room != state.agent_room:
            raise _Inapplicable(f"{target} is not in {state.agent_room}")
        state.near = rec.label
        return _arrive(state, rec, rec.label)
    if target in state.objects:
        item = state.objects[target]
        if item.location == HAND:
            raise _Inapplicable(f"the agent is holding {target}")
        if not _visible_in_room(state, item):
            raise _Inapplicable(f"the agent cannot see {target} in {state.agent_room}")
        if item.location in state.receptacles:
            state.near = item.location
            return _arrive(state, state.receptacles[item.location], item.label)
        state.near = None
        text = t["arrive"].format(target=_paren(item.label), status="", things=_things(state, [(item.cls, item.id)]))
        return Observation(text + _hold_suffix(state), (Sighting(item.cls, item.id, state.agent_room, None),))
    raise _Inapplicable(f"there is no {target} in the house")


def _arrive(state: WorldState, rec: Receptacle, target_label: str) -> Observation:
    t = state.templates
    status = ""
    if rec.openable and target_label == rec.label:
        status = t["status_open" if rec.is_open else "status_closed"].format(target=_paren(rec.label))
    pairs, sightings = _receptacle_view(state, rec)
    text = t["arrive"].format(target=_paren(target_label), status=status, things=_things(state, pairs))
    return Observation(text + _hold_suffix(state), sightings)


def _need_object(state: WorldState, target: str) -> Item:
    if target not in state.objects:
        raise _Inapplicable(f"{target} is not a movable object")
    return state.objects[target]


def _need_near_receptacle(state: WorldState, target: str) -> Receptacle:
    if target not in state.receptacles:
        raise _Inapplicable(f"{target} is not a receptacle")
    if state.near != target:
        raise _Inapplicable(f"the agent is not close to {target}")
    return state.receptacles[target]


def _pick_up(state: WorldState, target: str) -> Observation:
    item = _need_object(state, target)
    if item.location == HAND:
        raise _Inapplicable(f"the agent already holds {target}")
    if len(state.held) >= state.hand_capacity:
        raise _Inapplicable("the agent's hands are full")
    if not _object_reachable(state, item):
        raise _Inapplicable(f"the agent is not close to {target}")
    item.location = HAND
    state.held.append(item.label)
    return Observation(state.templates["pick_up"].format(cls=item.cls, id=item.id))


def _put_down(state: WorldState, target: str) -> Observation:
    item = _need_object(state, target)
    if item.location != HAND:
        raise _Inapplicable(f"the agent does not hold {target}")
    if state.near is None:
        raise _Inapplicable("the agent is not close to any receptacle")
    rec = state.receptacles[state.near]
    if rec.hides_contents:
        raise _Inapplicable(f"{rec.label} is closed")
    item.location = rec.label
    state.held.remove(item.label)
    key = "put_down_in" if rec.relation == "inside" else "put_down_on"
    text = state.templates[key].format(cls=item.cls, receptacle=rec.cls)
    return Observation(text, (Sighting(item.cls, item.id, rec.room, rec.label),))


def _open(state: WorldState, target: str) -> Observation:
    rec = _need_near_receptacle(state, target)
    if not rec.openable:
        raise _Inapplicable(f"{target} cannot be opened")
    if rec.is_open:
        raise _Inapplicable(f"{target} is already open")
    rec.is_open = True
    pairs, sightings = _receptacle_view(state, rec)
    return Observation(state.templates["open"].format(cls=rec.cls, things=_things(state, pairs)), sightings)


def _close(state: WorldState, target: str) -> Observation:
    rec = _need_near_receptacle(state, target)
    if not rec.openable:
        raise _Inapplicable(f"{target} cannot be closed")
    if not rec.is_open:
        raise _Inapplicable(f"{target} is already closed")
    rec.is_open = False
    return Observation(state.templates["close"].format(cls=rec.cls))


def _switch(state: WorldState, target: str, on: bool) -> Observation:
    rec = _need_near_receptacle(state, target)
    if not rec.switchable:
        raise _Inapplicable(f"{target} cannot be switched")
    if rec.is_on == on:
        raise _Inapplicable(f"{target} is already {'on' if on else 'off'}")
    rec.is_on = on
    return Observation(state.templates["turn_on" if on else "turn_off"].format(cls=rec.cls))


def _holds_knife(state: WorldState) -> bool:
    return any(state.objects[h].cls in state.knife_classes for h in state.held)


def _slice(state: WorldState, target: str) -> Observation:
    item = _need_object(state, target)
    if not item.sliceable or item.sliced:
        raise _Inapplicable(f"{target} cannot be sliced")
    if not _holds_knife(state):
        raise _Inapplicable("the agent does not hold a knife")
    if not _object_reachable(state, item):
        raise _Inapplicable(f"the agent is not close to {target}")
    del state.objects[item.label]
    top = max((o.id for o in state.objects.values() if o.cls == item.cls), default=0)
    top = max(top, item.id)
    pieces = []
    for k in range(1, state.slice_pieces + 1):
        piece = Item(item.cls, top + k, item.location, sliceable=False, sliced=True)
        state.objects[piece.label] = piece
        pieces.append(piece)
    ids = ", ".join(str(p.id) for p in pieces)
    room = state.room_of(pieces[0])
    rec = item.location if item.location in state.receptacles else None
    sightings = tuple(Sighting(p.cls, p.id, room, rec) for p in pieces)
    return Observation(state.templates["slice"].format(cls=item.cls, ids=ids), sightings)


_HANDLERS = {
    "go to": _go_to,
    "pick up": _pick_up,
    "put down": _put_down,
    "open": _open,
    "close": _close,
    "turn on": lambda s, t: _switch(s, t, True),
    "turn off": lambda s, t: _switch(s, t, False),
    "slice": _slice,
}


def step(state: WorldState, cmd) -> tuple[WorldState, Observation]:
    """Apply one skill in place. ``cmd`` is a SkillCommand or raw command text."""
    if isinstance(cmd, str):
        raw = cmd
        try:
            cmd = parse_command(cmd, state.verbs)
        except CommandError as exc:
            return state, _error(state, raw.strip(), str(exc))
    if cmd.verb not in state.verbs:
        return state, _error(state, cmd.text, f"{cmd.verb!r} is not an available action")
    try:
        return state, _HANDLERS[cmd.verb](state, cmd.target)
    except _Inapplicable as exc:
        return state, _error(state, cmd.text, str(exc))


def available_skills(state: WorldState) -> list[SkillCommand]:
    """Every command that would step without an error in the current state."""
    room = state.agent_room
    here = state.receptacles_in(room)
    cmds = [SkillCommand("go to", r) for r in state.rooms]
    cmds += [SkillCommand("go to", r.label) for r in here]
    can_take = len(state.held) < state.hand_capacity
    slicing = "slice" in state.verbs and _holds_knife(state)
    takes, slices = [], []
    for o in state.objects.values():
        if _visible_in_room(state, o):
            cmds.append(SkillCommand("go to", o.label))
        if (can_take or slicing) and _object_reachable(state, o):
            if can_take:
                takes.append(SkillCommand("pick up", o.label))
            if slicing and o.sliceable and not o.sliced:
                slices.append(SkillCommand("slice", o.label))
    cmds += takes
    if state.near is not None:
        rec = state.receptacles[state.near]
        if not rec.hides_contents:
            cmds += [SkillCommand("put down", h) for h in state.held]
        if rec.openable:
            cmds.append(SkillCommand("close" if rec.is_open else "open", rec.label))
        if rec.switchable:
            if not rec.is_on:
                cmds.append(SkillCommand("turn on", rec.label))
            elif "turn off" in state.verbs:
                cmds.append(SkillCommand("turn off", rec.label))
    return cmds + slices


class Environment:
    """Stateful handle the agent tree acts through."""

    def __init__(self, state: WorldState):
        self.state = state

    @classmethod
    def from_file(cls, world_file) -> Environment:
        return cls(load_world(world_file))

    @property
    def profile(self) -> str:
        return self.state.profile

    def observe(self) -> Observation:
        return describe(self.state)

    def act(self, command: str) -> Observation:
        return step(self.state, command)[1]
