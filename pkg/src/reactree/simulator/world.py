"""World state and world-file loading."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

HAND = "hand"

HOUSEHOLD_VERBS = ("go to", "pick up", "put down", "open", "close", "turn on")
EXTENDED_VERBS = ("go to", "pick up", "put down", "slice", "open", "close", "turn on", "turn off")
PROFILE_VERBS = {"household": HOUSEHOLD_VERBS, "extended": EXTENDED_VERBS}


class WorldFileError(ValueError):
    """A world or task file that cannot be loaded; the message names the offending field."""


def canonical_class(name: str) -> str:
    """Class key used by goal predicates: lowercase with spaces and underscores removed."""
    return re.sub(r"[\s_]+", "", name.lower())


def split_label(label: str) -> tuple[str, int]:
    """``"kitchen cabinet 3"`` -> ``("kitchen cabinet", 3)``."""
    words = label.strip().lower().split()
    if len(words) < 2 or not words[-1].isdigit():
        raise ValueError(f"{label!r} does not end in an instance number")
    return " ".join(words[:-1]), int(words[-1])


def make_label(cls: str, ident: int) -> str:
    return f"{cls} {ident}"


@dataclass
class Receptacle:
    cls: str
    id: int
    room: str
    openable: bool = False
    is_open: bool = False
    switchable: bool = False
    is_on: bool = False
    nearby: tuple[str, ...] = ()
    relation: str = "on"
    label: str = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.label = make_label(self.cls, self.id)

    @property
    def hides_contents(self) -> bool:
        return self.openable and not self.is_open


@dataclass
class Item:
    cls: str
    id: int
    # receptacle label, room label (lying on the floor) or HAND
    location: str
    sliceable: bool = False
    sliced: bool = False
    label: str = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.label = make_label(self.cls, self.id)


@dataclass
class WorldState:
    rooms: list[str]
    receptacles: dict[str, Receptacle]
    objects: dict[str, Item]
    agent_room: str
    near: Optional[str] = None
    held: list[str] = field(default_factory=list)
    hand_capacity: int = 1
    profile: str = "household"
    slice_pieces: int = 3
    knife_classes: tuple[str, ...] = ("knife", "cutlery knife", "butter knife")
    turn_on_requires_closed: bool = True
    templates: dict[str, str] = field(default_factory=dict)
    name: str = ""

    @property
    def verbs(self) -> tuple[str, ...]:
        return PROFILE_VERBS[self.profile]

    def room_of(self, item: Item) -> Optional[str]:
        if item.location == HAND:
            return self.agent_room
        if item.location in self.receptacles:
            return self.receptacles[item.location].room
        return item.location

    def is_hidden(self, item: Item) -> bool:
        rec = self.receptacles.get(item.location)
        return rec is not None and rec.hides_contents

    def receptacles_in(self, room: str) -> list[Receptacle]:
        return [r for r in self.receptacles.values() if r.room == room]

    def vocabulary(self) -> set[str]:
        names = {canonical_class(r.cls) for r in self.receptacles.values()}
        names |= {canonical_class(o.cls) for o in self.objects.values()}
        return names


# -- loading --------------------------------------------------------------------


def default_templates() -> dict[str, str]:
    text = resources.files("reactree.data").joinpath("templates/household.json").read_text()
    return json.loads(text)


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise WorldFileError(f"{where}: missing required field {key!r}")
    return mapping[key]


def _label_of(raw: Any, where: str) -> str:
    if not isinstance(raw, str):
        raise WorldFileError(f"{where}: expected a label string, got {raw!r}")
    try:
        cls, ident = split_label(raw)
    except ValueError as exc:
        raise WorldFileError(f"{where}: {exc}") from None
    return make_label(cls, ident)


def world_from_dict(data: dict, base_dir: Optional[Path] = None) -> WorldState:
    rooms = [_label_of(r, f"rooms[{i}]") for i, r in enumerate(_require(data, "rooms", "world"))]
    if not rooms:
        raise WorldFileError("rooms: a world needs at least one room")
    if len(set(rooms)) != len(rooms):
        raise WorldFileError("rooms: duplicate room label")

    receptacles: dict[str, Receptacle] = {}
    for i, raw in enumerate(data.get("receptacles", [])):
        where = f"receptacles[{i}]"
        cls = str(_require(raw, "class", where)).lower()
        ident = _require(raw, "id", where)
        if not isinstance(ident, int) or ident < 1:
            raise WorldFileError(f"{where}.id: expected a positive integer")
        room = _label_of(_require(raw, "room", where), f"{where}.room")
        if room not in rooms:
            raise WorldFileError(f"{where}.room: unknown room {room!r}")
        openable = bool(raw.get("openable", False))
        switchable = bool(raw.get("switchable", False))
        rec = Receptacle(
            cls=cls,
            id=ident,
            room=room,
            openable=openable,
            is_open=bool(raw.get("open", False)),
            switchable=switchable,
            is_on=bool(raw.get("on", False)),
            nearby=tuple(_label_of(n, f"{where}.nearby") for n in raw.get("nearby", [])),
            relation=raw.get("relation", "inside" if openable else "on"),
        )
        if rec.is_open and not openable:
            raise WorldFileError(f"{where}: open is set but the receptacle is not openable")
        if rec.is_on and not switchable:
            raise WorldFileError(f"{where}: on is set but the receptacle is not switchable")
        if rec.relation not in ("on", "inside"):
            raise WorldFileError(f"{where}.relation: expected 'on' or 'inside'")
        if rec.label in receptacles or rec.label in rooms:
            raise WorldFileError(f"{where}: duplicate label {rec.label!r}")
        receptacles[rec.label] = rec

    for rec in receptacles.values():
        for other in rec.nearby:
            if other not in receptacles or receptacles[other].room != rec.room:
                raise WorldFileError(f"receptacle {rec.label!r}: nearby {other!r} is not a receptacle in {rec.room}")

    objects: dict[str, Item] = {}
    held: list[str] = []
    for i, raw in enumerate(data.get("objects", [])):
        where = f"objects[{i}]"
        cls = str(_require(raw, "class", where)).lower()
        ident = _require(raw, "id", where)
        if not isinstance(ident, int) or ident < 1:
            raise WorldFileError(f"{where}.id: expected a positive integer")
        location = _require(raw, "location", where)
        if location != HAND:
            location = _label_of(location, f"{where}.location")
            if location not in receptacles and location not in rooms:
                raise WorldFileError(f"{where}.location: unknown receptacle or room {location!r}")
        item = Item(cls=cls, id=ident, location=location, sliceable=bool(raw.get("sliceable", False)))
        if item.label in objects or item.label in receptacles or item.label in rooms:
            raise WorldFileError(f"{where}: duplicate label {item.label!r}")
        objects[item.label] = item
        if location == HAND:
            held.append(item.label)

    agent = data.get("agent", {})
    start = _label_of(agent.get("room", rooms[0]), "agent.room")
    if start not in rooms:
        raise WorldFileError(f"agent.room: unknown room {start!r}")
    capacity = int(data.get("hand_capacity", 1))
    if capacity < 1:
        raise WorldFileError("hand_capacity: must be at least 1")
    if len(held) > capacity:
        raise WorldFileError("objects: more objects start in hand than hand_capacity allows")
    profile = data.get("profile", "household")
    if profile not in PROFILE_VERBS:
        raise WorldFileError(f"profile: expected one of {sorted(PROFILE_VERBS)}")

    templates = default_templates()
    extra = data.get("templates")
    if isinstance(extra, str):
        path = Path(extra)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        try:
            extra = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise WorldFileError(f"templates: cannot read {path}: {exc}") from None
    if extra:
        templates.update(extra)

    return WorldState(
        rooms=rooms,
        receptacles=receptacles,
        objects=objects,
        agent_room=start,
        held=held,
        hand_capacity=capacity,
        profile=profile,
        slice_pieces=int(data.get("slice_pieces", 3)),
        knife_classes=tuple(data.get("knife_classes", ("knife", "cutlery knife", "butter knife"))),
        turn_on_requires_closed=bool(data.get("turn_on_requires_closed", True)),
        templates=templates,
        name=str(data.get("name", "")),
    )


def load_world(path) -> WorldState:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise WorldFileError(f"{path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise WorldFileError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise WorldFileError(f"{path}: top level must be an object")
    try:
        return world_from_dict(data, base_dir=path.parent)
    except WorldFileError as exc:
        raise WorldFileError(f"{path}: {exc}") from None
