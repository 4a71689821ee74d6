"""Agent-tree data model.

Agent nodes own a subgoal and a decision trajectory. Control-flow nodes sit
between an expanding agent node and the agent nodes created for its subgoals.
Agent nodes and control-flow nodes are numbered by two independent counters,
each in creation order: the root is 0 and every expansion appends its
children to the end of the numbering.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Union


class NodeStatus(str, Enum):
    RUNNING = "running"
    SUCCESS = "success"
    FAILURE = "failure"

    @property
    def terminal(self) -> bool:
        return self is not NodeStatus.RUNNING


class ControlFlowType(str, Enum):
    SEQUENCE = "sequence"
    FALLBACK = "fallback"
    PARALLEL = "parallel"


ALL_FLOWS = frozenset(ControlFlowType)

FLOW_CONFIGS = {
    "all": frozenset(ControlFlowType),
    "seq+fb": frozenset({ControlFlowType.SEQUENCE, ControlFlowType.FALLBACK}),
    "seq": frozenset({ControlFlowType.SEQUENCE}),
}


def control_flow_config(flag: str) -> frozenset[ControlFlowType]:
    """Allowed control-flow types for an ablation flag (``all``, ``seq+fb``, ``seq``)."""
    try:
        return FLOW_CONFIGS[flag]
    except KeyError:
        raise ValueError(
            f"unknown control-flow configuration {flag!r}; expected one of {sorted(FLOW_CONFIGS)}"
        ) from None


# -- decisions -----------------------------------------------------------------


@dataclass(frozen=True)
class Think:
    text: str

    def render(self) -> str:
        return f"Think: {self.text}"


@dataclass(frozen=True)
class Act:
    verb: str
    target: str

    @property
    def command(self) -> str:
        return f"{self.verb} {self.target}"

    def render(self) -> str:
        return f"Act: {self.command}"


@dataclass(frozen=True)
class Expand:
    flow: ControlFlowType
    subgoals: tuple[str, ...]

    def __post_init__(self):
        if not self.subgoals:
            raise ValueError("Expand needs at least one subgoal")

    def render(self) -> str:
        conditions = ", ".join(self.subgoals)
        return f"Expand: {{'control_flow': '{self.flow.value}', 'conditions': '{conditions}'}}"


@dataclass(frozen=True)
class Done:
    def render(self) -> str:
        return "Act: done"


@dataclass(frozen=True)
class DeclareFailure:
    # Set when the failure was imposed by the runtime rather than chosen by the policy.
    reason: str = ""

    def render(self) -> str:
        return "Act: failure"


AgentDecision = Union[Think, Act, Expand, Done, DeclareFailure]


def decision_kind(decision: AgentDecision) -> str:
    return {
        Think: "think",
        Act: "act",
        Expand: "expand",
        Done: "done",
        DeclareFailure: "failure",
    }[type(decision)]


# -- nodes -----------------------------------------------------------------------


@dataclass
class AgentNode:
    id: int
    subgoal: str
    depth: int = 0
    parent_flow: Optional[ControlFlowNode] = field(default=None, repr=False)
    child_flow: Optional[ControlFlowNode] = field(default=None, repr=False)
    # Alternating ("obs", text) / ("act", line) records, starting with an observation.
    context: list[tuple[str, str]] = field(default_factory=list, repr=False)
    status: NodeStatus = NodeStatus.RUNNING

    @property
    def expanded(self) -> bool:
        return self.child_flow is not None

    @property
    def parent(self) -> Optional[AgentNode]:
        return self.parent_flow.parent if self.parent_flow is not None else None

    def observe(self, text: str) -> None:
        if self.context and self.context[-1][0] == "obs":
            raise ValueError("context must alternate observation and action records")
        self.context.append(("obs", text))

    def record_action(self, line: str) -> None:
        if not self.context or self.context[-1][0] != "obs":
            raise ValueError("an action must follow an observation")
        self.context.append(("act", line))

    @property
    def steps_taken(self) -> int:
        return sum(1 for kind, _ in self.context if kind == "act")

    def finish(self, status: NodeStatus) -> None:
        _finish(self, status)


@dataclass
class ControlFlowNode:
    id: int
    flow: ControlFlowType
    parent: AgentNode = field(repr=False)
    children: list[AgentNode] = field(default_factory=list)
    status: NodeStatus = NodeStatus.RUNNING

    def finish(self, status: NodeStatus) -> None:
        _finish(self, status)


def _finish(node, status: NodeStatus) -> None:
    if not status.terminal:
        raise ValueError("a node can only finish with a terminal status")
    if node.status.terminal:
        raise ValueError(f"node {node.id} already finished with {node.status.value}")
    node.status = status


# -- budget ---------------------------------------------------------------------


@dataclass(frozen=True)
class DecisionBudget:
    """Episode-wide decision counter threaded through every node call."""

    used: int = 0
    cap: int = 200

    def __post_init__(self):
        if self.cap < 1:
            raise ValueError("decision cap must be at least 1")
        if self.used < 0:
            raise ValueError("used decisions cannot be negative")

    def spend(self) -> DecisionBudget:
        return DecisionBudget(self.used + 1, self.cap)

    @property
    def exhausted(self) -> bool:
        return self.used >= self.cap


# -- aggregation ------------------------------------------------------------------


def aggregate_parallel(statuses: Iterable[NodeStatus]) -> NodeStatus:
    """Majority vote over finished children; ties count as failure."""
    statuses = list(statuses)
    if not statuses:
        raise ValueError("cannot aggregate an empty status list")
    if any(not s.terminal for s in statuses):
        raise ValueError("all statuses must be terminal before aggregation")
    wins = sum(1 for s in statuses if s is NodeStatus.SUCCESS)
    losses = len(statuses) - wins
    return NodeStatus.SUCCESS if wins > losses else NodeStatus.FAILURE


# -- tree ------------------------------------------------------------------------------


class ExpansionRejected(ValueError):
    """An expansion request that must go back to the policy."""


class Tree:
    def __init__(
        self,
        goal: str,
        allowed_flows: Iterable[ControlFlowType] = ALL_FLOWS,
        max_depth: int = 8,
    ):
        if not goal or not goal.strip():
            raise ValueError("the root goal must be a nonempty string")
        self.allowed_flows = frozenset(allowed_flows)
        self.max_depth = max_depth
        self.agents: list[AgentNode] = []
        self.flows: list[ControlFlowNode] = []
        self.root = self._new_agent(goal.strip(), depth=0, parent_flow=None)

    def _new_agent(self, subgoal: str, depth: int, parent_flow) -> AgentNode:
        node = AgentNode(id=len(self.agents), subgoal=subgoal, depth=depth, parent_flow=parent_flow)
        self.agents.append(node)
        return node

    def check_expansion(self, parent: AgentNode, flow: ControlFlowType, subgoals) -> None:
        if parent.child_flow is not None:
            raise ExpansionRejected(f"agent node {parent.id} has already expanded")
        if not subgoals:
            raise ExpansionRejected("an expansion needs at least one subgoal")
        if flow not in self.allowed_flows:
            allowed = ", ".join(sorted(f.value for f in self.allowed_flows))
            raise ExpansionRejected(f"control flow {flow.value!r} is not allowed; use one of: {allowed}")

    def expand(self, parent: AgentNode, flow: ControlFlowType, subgoals: list[str]) -> ControlFlowNode:
        self.check_expansion(parent, flow, subgoals)
        flow_node = ControlFlowNode(id=len(self.flows), flow=flow, parent=parent)
        self.flows.append(flow_node)
        parent.child_flow = flow_node
        for subgoal in subgoals:
            flow_node.children.append(self._new_agent(subgoal, parent.depth + 1, flow_node))
        return flow_node

    def can_deepen(self, node: AgentNode) -> bool:
        return node.depth < self.max_depth

    def walk(self):
        """Yield (depth, node) pairs in pre-order, agent and flow nodes interleaved."""

        def visit(agent: AgentNode, level: int):
            yield level, agent
            if agent.child_flow is not None:
                yield level + 1, agent.child_flow
                for child in agent.child_flow.children:
                    yield from visit(child, level + 2)

        yield from visit(self.root, 0)
