"""Render a traced agent tree as an indented outline or Graphviz DOT."""

from __future__ import annotations

from typing import Iterable

from reactree.trace import Reconstruction, reconstruct

FLOW_SYMBOLS = {"sequence": "->", "fallback": "?", "parallel": "=>"}


def _rebuilt(events_or_tree) -> Reconstruction:
    if isinstance(events_or_tree, Reconstruction):
        return events_or_tree
    return reconstruct(events_or_tree)


def render_outline(events: Iterable) -> str:
    """One line per node; agent nodes show their number, flow nodes their symbol."""
    tree = _rebuilt(events)
    if 0 not in tree.agents:
        return ""
    lines: list[str] = []

    def agent(node_id: int, indent: int) -> None:
        rec = tree.agents[node_id]
        lines.append(f"{'  ' * indent}[{rec.id}] {rec.subgoal} ({rec.status}, {rec.decisions} decisions)")
        if rec.child_flow is not None:
            flow = tree.flows[rec.child_flow]
            lines.append(f"{'  ' * (indent + 1)}{FLOW_SYMBOLS[flow.flow]} {flow.flow} ({flow.status})")
            for child in flow.children:
                agent(child, indent + 2)

    agent(0, 0)
    return "\n".join(lines) + "\n"


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_dot(events: Iterable) -> str:
    tree = _rebuilt(events)
    out = ["digraph agent_tree {", "  node [fontname=Helvetica];"]
    for rec in sorted(tree.agents.values(), key=lambda r: r.id):
        color = {"success": "palegreen", "failure": "lightpink"}.get(rec.status, "white")
        label = _quote(f"{rec.id}: {rec.subgoal}")
        out.append(f"  a{rec.id} [shape=box, style=filled, fillcolor={color}, label={label}];")
    for flow in sorted(tree.flows.values(), key=lambda f: f.id):
        out.append(f"  f{flow.id} [shape=circle, label={_quote(FLOW_SYMBOLS[flow.flow])}];")
        out.append(f"  a{flow.parent} -> f{flow.id};")
        for child in flow.children:
            out.append(f"  f{flow.id} -> a{child};")
    out.append("}")
    return "\n".join(out) + "\n"
