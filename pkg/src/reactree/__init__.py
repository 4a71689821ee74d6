"""Agent trees with behavior-tree control flow, episodic and working memory,
and a partially observable household text simulator to run them in."""

from reactree.tree import (
    AgentNode,
    ControlFlowNode,
    ControlFlowType,
    DecisionBudget,
    NodeStatus,
    Tree,
    aggregate_parallel,
)

__version__ = "0.1.0"

__all__ = [
    "AgentNode",
    "ControlFlowNode",
    "ControlFlowType",
    "DecisionBudget",
    "NodeStatus",
    "Tree",
    "aggregate_parallel",
]
