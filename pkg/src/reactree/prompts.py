"""Prompt assembly for agent nodes.

A prompt is a system text listing the decision types and permitted actions,
then in-context examples under ``Source domain:``, then the node's own
block under the target header: lineage preamble (non-root nodes only), the
task line, and the node's context so far.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from reactree.simulator.world import PROFILE_VERBS
from reactree.tokens import estimate_tokens
from reactree.tree import ALL_FLOWS, AgentNode, ControlFlowType

RECALL = "recall location of"

FLOW_PHRASES = {
    ControlFlowType.PARALLEL: "in parallel",
    ControlFlowType.SEQUENCE: "in sequence",
    ControlFlowType.FALLBACK: "using a fallback strategy",
}

FLOW_DESCRIPTIONS = {
    ControlFlowType.SEQUENCE: '"sequence" (achieve subgoals sequentially; if any subgoal fails, the sequence is interrupted)',
    ControlFlowType.FALLBACK: '"fallback" (attempt subgoals in order until one succeeds; if a subgoal is successful, the remaining subgoals are not attempted)',
    ControlFlowType.PARALLEL: '"parallel" (achieve subgoals in parallel; this enables tasks to continue independently, even if one subgoal fails)',
}

_FLOW_ORDER = (ControlFlowType.SEQUENCE, ControlFlowType.FALLBACK, ControlFlowType.PARALLEL)

TREE_INTRO = (
    "You are an advanced robot with ability to think, act, and expand behavior tree nodes "
    "in decision-making process. You can perform one of the following tasks:"
)
FLAT_INTRO = "You are an advanced robot with ability to think and act. You can perform one of the following tasks:"
THINK_LINE = "1. Think: Use reasoning to satisfy the current goal condition."
ACT_LINE = (
    "2. Act: Execute a specific action to accomplish the current goal condition. "
    "You should use one of actions of this list: [{actions}]"
)
EXPAND_LINE = (
    "3. Expand: Decompose the current goal condition into more detailed subgoals. "
    "When expanding, generate appropriate control flow and subgoals. Control flow can be {flows}."
)


@dataclass(frozen=True)
class SkillGrammar:
    verbs: tuple[str, ...]
    working_memory: bool = False
    allowed_flows: frozenset = ALL_FLOWS
    profile: str = "household"

    @classmethod
    def for_profile(cls, profile: str = "household", working_memory: bool = False, allowed_flows=ALL_FLOWS):
        return cls(PROFILE_VERBS[profile], working_memory, frozenset(allowed_flows), profile)

    @property
    def action_list(self) -> list[str]:
        actions = list(self.verbs)
        if self.working_memory:
            actions.append(RECALL)
        return actions + ["done", "failure"]


def _join_or(parts: Sequence[str]) -> str:
    if len(parts) == 1:
        return parts[0]
    if len(parts) == 2:
        return f"{parts[0]} or {parts[1]}"
    return ", ".join(parts[:-1]) + f", or {parts[-1]}"


def system_text(grammar: SkillGrammar, mode: str = "reactree") -> str:
    lines = [TREE_INTRO if mode == "reactree" else FLAT_INTRO, THINK_LINE]
    lines.append(ACT_LINE.format(actions=", ".join(grammar.action_list)))
    if mode == "reactree":
        flows = [FLOW_DESCRIPTIONS[f] for f in _FLOW_ORDER if f in grammar.allowed_flows]
        lines.append(EXPAND_LINE.format(flows=_join_or(flows)))
    return "\n".join(lines)


def sibling_list(subgoals: Sequence[str]) -> str:
    """``a, b, and c`` -- the last item always gets ``, and`` even for two items."""
    if len(subgoals) == 1:
        return subgoals[0]
    return ", ".join(subgoals[:-1]) + ", and " + subgoals[-1]


def lineage_preamble(node: AgentNode) -> str:
    flow = node.parent_flow
    if flow is None:
        return ""
    siblings = [child.subgoal for child in flow.children]
    return (
        f"Your primary goal is to: {flow.parent.subgoal}\n"
        f"To achieve this, you should perform your sibling tasks {FLOW_PHRASES[flow.flow]}. "
        f"At this level, your sibling tasks are: {sibling_list(siblings)}."
    )


def goal_line(subgoal: str) -> str:
    return f"Your task is to: {subgoal}"


def render_context(context: Iterable[tuple[str, str]]) -> list[str]:
    # empty observations (after a thought) produce no line
    return [text for _, text in context if text]


def node_trajectory(node: AgentNode) -> str:
    """Goal line plus context, without lineage: the text stored as an experience."""
    return "\n".join([goal_line(node.subgoal), *render_context(node.context)])


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    in_context: tuple[str, ...]
    lineage_preamble: str
    goal_line: str
    context_lines: tuple[str, ...]
    target_header: str = "Target_domain:"
    section_gap: str = "\n\n"
    subgoal: str = ""
    step: int = 0
    mode: str = "reactree"

    def user_text(self) -> str:
        target = [self.target_header]
        if self.lineage_preamble:
            target.append(self.lineage_preamble)
        target.append(self.goal_line)
        target.extend(self.context_lines)
        return "Source domain:\n" + "\n\n".join(self.in_context) + "\n\n" + "\n".join(target)

    def render(self) -> str:
        return self.system_text + self.section_gap + self.user_text()

    @property
    def tokens(self) -> int:
        return estimate_tokens(self.render())


def build_prompt(
    node: AgentNode,
    examples: Sequence = (),
    grammar: Optional[SkillGrammar] = None,
    mode: str = "reactree",
) -> PromptBundle:
    grammar = grammar or SkillGrammar.for_profile()
    texts = tuple(e if isinstance(e, str) else e.trajectory for e in examples)
    household = grammar.profile == "household"
    return PromptBundle(
        system_text=system_text(grammar, mode),
        in_context=texts,
        lineage_preamble=lineage_preamble(node) if mode == "reactree" else "",
        goal_line=goal_line(node.subgoal),
        context_lines=tuple(render_context(node.context)),
        target_header="Target_domain:" if household else "Target domain:",
        section_gap="\n" if household and mode == "react" else "\n\n",
        subgoal=node.subgoal,
        step=node.steps_taken,
        mode=mode,
    )
