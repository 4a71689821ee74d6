"""Execution of agent nodes and control-flow nodes over one shared decision budget."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from reactree.memory import DEFAULT_RETRIEVAL_BUDGET, EmbeddingProvider, EpisodicStore, WorkingMemory, retrieve
from reactree.policy import Policy, decide
from reactree.prompts import RECALL, SkillGrammar, build_prompt
from reactree.trace import TraceRecorder
from reactree.tree import (
    ALL_FLOWS,
    Act,
    AgentNode,
    ControlFlowNode,
    ControlFlowType,
    DecisionBudget,
    DeclareFailure,
    Done,
    Expand,
    NodeStatus,
    Think,
    Tree,
    aggregate_parallel,
    decision_kind,
)

MODES = ("reactree", "react")
# decision caps used when the configuration leaves it unset
DEFAULT_CAPS = {"household": 200, "extended": 100}


@dataclass
class EngineConfig:
    mode: str = "reactree"
    working_memory: bool = True
    allowed_flows: frozenset = field(default_factory=lambda: ALL_FLOWS)
    max_decisions: Optional[int] = None
    retrieval_budget: int = DEFAULT_RETRIEVAL_BUDGET
    seed: int = 0
    max_depth: int = 8
    max_retries: int = 2

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.max_decisions is not None and self.max_decisions < 1:
            raise ValueError(f"the decision cap must be at least 1, got {self.max_decisions}")


class Engine:
    """Runs one episode's agent tree against an environment.

    ``env`` needs ``observe()``, ``act(command)`` and ``profile``; both
    return observations with ``text``, ``sightings`` and ``error``.
    """

    def __init__(
        self,
        policy: Policy,
        env,
        config: Optional[EngineConfig] = None,
        store: Optional[EpisodicStore] = None,
        embedder: Optional[EmbeddingProvider] = None,
        trace: Optional[TraceRecorder] = None,
    ):
        self.policy = policy
        self.env = env
        self.config = config or EngineConfig()
        self.store = store
        self.embedder = embedder
        if store is not None and embedder is None:
            raise ValueError("retrieving from an episodic store needs an embedding provider")
        self.trace = trace if trace is not None else TraceRecorder()
        self.wm = WorkingMemory() if self.config.working_memory else None
        self.grammar = SkillGrammar.for_profile(env.profile, self.config.working_memory, self.config.allowed_flows)
        self.tree: Optional[Tree] = None
        self.cap_reached = False
        self.max_decisions = self.config.max_decisions or DEFAULT_CAPS.get(env.profile, 200)

    @property
    def expand_allowed(self) -> bool:
        return self.config.mode == "reactree"

    # -- entry point ---------------------------------------------------------------

    def run(self, goal: str) -> tuple[NodeStatus, DecisionBudget]:
        self.tree = Tree(goal, self.config.allowed_flows, self.config.max_depth)
        self.cap_reached = False
        budget = DecisionBudget(0, self.max_decisions)
        self._node_created(self.tree.root, budget)
        status, budget = self.exec_agent_node(self.tree.root, budget)
        if self.cap_reached:
            # the cap ends the whole run, whatever a parallel vote above the capped node said
            status = NodeStatus.FAILURE
        return status, budget

    # -- agent nodes ----------------------------------------------------------------

    def exec_agent_node(self, node: AgentNode, budget: DecisionBudget) -> tuple[NodeStatus, DecisionBudget]:
        if budget.exhausted:
            # nodes reached after the cap never sample a decision
            self.cap_reached = True
            return self._finish(node, NodeStatus.FAILURE, budget, note="decision budget exhausted before start"), budget

        examples = self._retrieve(node)
        first = self.env.observe()
        node.observe(first.text)
        self._remember(first, budget)
        self.trace.emit("observation", {"node": node.id, "step": 0, "text": first.text, "error": first.error}, budget)

        while True:
            bundle = build_prompt(node, examples, self.grammar, self.config.mode)
            out = decide(self.policy, bundle, self.grammar, self.expand_allowed, self.config.max_retries)
            decision, note = out.decision, out.note
            if isinstance(decision, Expand) and not self.tree.can_deepen(node):
                note = f"expansion refused at depth {node.depth} (max {self.tree.max_depth})"
                decision = DeclareFailure(note)
            budget = budget.spend()
            line = decision.render()
            node.record_action(line)
            self.trace.emit(
                "decision",
                {
                    "node": node.id,
                    "step": node.steps_taken,
                    "kind": decision_kind(decision),
                    "line": line,
                    "raw": out.raw,
                    "attempts": out.attempts,
                    "prompt_tokens": out.prompt_tokens,
                    "output_tokens": out.output_tokens,
                    "note": note,
                },
                budget,
            )

            if isinstance(decision, Done):
                return self._finish(node, NodeStatus.SUCCESS, budget), budget
            if isinstance(decision, DeclareFailure) or budget.exhausted:
                if not isinstance(decision, DeclareFailure):
                    self.cap_reached = True
                    note = "decision budget exhausted"
                return self._finish(node, NodeStatus.FAILURE, budget, note=note), budget
            if isinstance(decision, Act):
                obs = self._act(decision, budget)
                node.observe(obs.text)
                self.trace.emit(
                    "observation",
                    {"node": node.id, "step": node.steps_taken, "text": obs.text, "error": obs.error},
                    budget,
                )
            elif isinstance(decision, Think):
                node.observe("")
            elif isinstance(decision, Expand):
                flow = self.expand_tree(node, decision.flow, list(decision.subgoals), budget)
                status, budget = self.exec_control_flow_node(flow, budget)
                return self._finish(node, status, budget), budget

    def _act(self, decision: Act, budget: DecisionBudget):
        if decision.verb == RECALL:
            return _Recalled(self.wm.recall(decision.target))
        obs = self.env.act(decision.command)
        self._remember(obs, budget)
        return obs

    def _remember(self, obs, budget: DecisionBudget) -> None:
        if self.wm is not None:
            self.wm.update(obs.sightings, step=budget.used)

    def _retrieve(self, node: AgentNode) -> list:
        if self.store is None or not self.store.experiences:
            return []
        seed = self.config.seed * 1_000_003 + node.id
        return retrieve(self.store, node.subgoal, self.embedder, self.config.retrieval_budget, seed)

    def expand_tree(
        self, parent: AgentNode, flow: ControlFlowType, subgoals: list[str], budget: DecisionBudget
    ) -> ControlFlowNode:
        flow_node = self.tree.expand(parent, flow, subgoals)
        self.trace.emit(
            "expansion",
            {
                "node": parent.id,
                "flow_node": flow_node.id,
                "flow": flow.value,
                "subgoals": list(subgoals),
                "children": [c.id for c in flow_node.children],
            },
            budget,
        )
        for child in flow_node.children:
            self._node_created(child, budget)
        return flow_node

    # -- control-flow nodes ----------------------------------------------------------

    def exec_control_flow_node(self, node: ControlFlowNode, budget: DecisionBudget) -> tuple[NodeStatus, DecisionBudget]:
        if node.flow is ControlFlowType.SEQUENCE:
            status = NodeStatus.SUCCESS
            for child in node.children:
                child_status, budget = self.exec_agent_node(child, budget)
                if child_status is NodeStatus.FAILURE:
                    status = NodeStatus.FAILURE
                    break
        elif node.flow is ControlFlowType.FALLBACK:
            status = NodeStatus.FAILURE
            for child in node.children:
                child_status, budget = self.exec_agent_node(child, budget)
                if child_status is NodeStatus.SUCCESS:
                    status = NodeStatus.SUCCESS
                    break
        else:
            statuses = []
            for child in node.children:
                child_status, budget = self.exec_agent_node(child, budget)
                statuses.append(child_status)
            status = aggregate_parallel(statuses)
        node.finish(status)
        self.trace.emit("node-result", {"flow_node": node.id, "status": status.value}, budget)
        return status, budget

    # -- bookkeeping -----------------------------------------------------------------

    def _node_created(self, node: AgentNode, budget: DecisionBudget) -> None:
        payload = {
            "node": node.id,
            "subgoal": node.subgoal,
            "depth": node.depth,
            "parent_flow": node.parent_flow.id if node.parent_flow is not None else None,
        }
        self.trace.emit("node-created", payload, budget)

    def _finish(self, node: AgentNode, status: NodeStatus, budget: DecisionBudget, note: str = "") -> NodeStatus:
        node.finish(status)
        payload = {"node": node.id, "status": status.value, "expanded": node.expanded}
        if note:
            payload["note"] = note
        self.trace.emit("node-result", payload, budget)
        return status


@dataclass(frozen=True)
class _Recalled:
    text: str
    sightings: tuple = ()
    error: bool = False
