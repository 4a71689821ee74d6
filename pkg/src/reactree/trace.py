"""Episode event log: one JSON record per line.

Kinds: ``node-created``, ``decision``, ``observation``, ``expansion``,
``node-result`` and ``episode-result``. Every record carries the decision
budget at the time it was written. The log alone is enough to rebuild the
tree, every agent node's trajectory and the episode metrics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

KINDS = ("node-created", "decision", "observation", "expansion", "node-result", "episode-result")


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    kind: str
    payload: dict
    used: int
    cap: int

    def to_json(self) -> str:
        return json.dumps(
            {"seq": self.seq, "kind": self.kind, "budget": {"used": self.used, "cap": self.cap}, "payload": self.payload},
            sort_keys=True,
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> TraceEvent:
        rec = json.loads(line)
        return cls(rec["seq"], rec["kind"], rec["payload"], rec["budget"]["used"], rec["budget"]["cap"])


class TraceRecorder:
    def __init__(self):
        self.events: list[TraceEvent] = []

    def emit(self, kind: str, payload: dict, budget) -> TraceEvent:
        if kind not in KINDS:
            raise ValueError(f"unknown trace event kind {kind!r}")
        event = TraceEvent(len(self.events), kind, payload, budget.used, budget.cap)
        self.events.append(event)
        return event


def dumps(events: Iterable[TraceEvent]) -> str:
    return "".join(e.to_json() + "\n" for e in events)


def write_trace(events: Iterable[TraceEvent], path) -> None:
    Path(path).write_text(dumps(events))


def read_trace(path) -> list[TraceEvent]:
    return [TraceEvent.from_json(line) for line in Path(path).read_text().splitlines() if line.strip()]


# -- reconstruction -------------------------------------------------------------------


@dataclass
class AgentRecord:
    id: int
    subgoal: str
    depth: int
    parent_flow: Optional[int]
    lines: list[str] = field(default_factory=list)
    decisions: int = 0
    status: str = "running"
    expanded: bool = False
    child_flow: Optional[int] = None

    @property
    def termination(self) -> str:
        return "expand" if self.expanded else self.status

    @property
    def trajectory(self) -> str:
        return "\n".join([f"Your task is to: {self.subgoal}", *self.lines])


@dataclass
class FlowRecord:
    id: int
    flow: str
    parent: int
    children: list[int]
    status: str = "running"


@dataclass
class Reconstruction:
    agents: dict[int, AgentRecord]
    flows: dict[int, FlowRecord]
    decisions: list[dict]
    episode: Optional[dict]
    final_used: int
    cap: int


def reconstruct(events: Iterable) -> Reconstruction:
    """Rebuild tree, trajectories and decision records from events (TraceEvent or parsed dicts)."""
    agents: dict[int, AgentRecord] = {}
    flows: dict[int, FlowRecord] = {}
    decisions: list[dict] = []
    episode = None
    used = 0
    cap = 0
    for ev in events:
        if isinstance(ev, dict):
            ev = TraceEvent(ev["seq"], ev["kind"], ev["payload"], ev["budget"]["used"], ev["budget"]["cap"])
        p = ev.payload
        used, cap = ev.used, ev.cap
        if ev.kind == "node-created":
            agents[p["node"]] = AgentRecord(p["node"], p["subgoal"], p["depth"], p.get("parent_flow"))
        elif ev.kind == "observation":
            if p["text"]:
                agents[p["node"]].lines.append(p["text"])
        elif ev.kind == "decision":
            rec = agents[p["node"]]
            rec.lines.append(p["line"])
            rec.decisions += 1
            decisions.append(p)
        elif ev.kind == "expansion":
            flows[p["flow_node"]] = FlowRecord(p["flow_node"], p["flow"], p["node"], list(p["children"]))
            agents[p["node"]].expanded = True
            agents[p["node"]].child_flow = p["flow_node"]
        elif ev.kind == "node-result":
            if "flow_node" in p:
                flows[p["flow_node"]].status = p["status"]
            else:
                agents[p["node"]].status = p["status"]
        elif ev.kind == "episode-result":
            episode = p
    return Reconstruction(agents, flows, decisions, episode, used, cap)
