"""Tasks, episodes, suites, memory bootstrapping and trace replay."""

from __future__ import annotations

import json
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from reactree.engine import Engine, EngineConfig
from reactree.memory import EmbeddingProvider, EpisodicStore, WorkingMemory, harvest
from reactree.policy import Policy, parse_transcript
from reactree.prompts import RECALL
from reactree.simulator import Environment, GoalCondition, evaluate_goal, load_world
from reactree.trace import TraceEvent, TraceRecorder, reconstruct

SUGGESTED_FAILURE_TAGS = ("ambiguous", "execution", "search", "expand")


def data_path(*parts: str) -> Path:
    return Path(str(resources.files("reactree.data").joinpath(*parts)))


# -- tasks ------------------------------------------------------------------------------


@dataclass(frozen=True)
class TaskSpec:
    id: str
    world: Path
    instruction: str
    goal: GoalCondition
    task_type: str = ""
    # scripted transcript: a bundled transcript name or a path relative to the manifest
    transcript: str = ""

    def __post_init__(self):
        if not self.instruction or not self.instruction.strip():
            raise ValueError(f"task {self.id!r}: the instruction must be a nonempty string")

    def validate(self) -> None:
        self.goal.validate(load_world(self.world))


def task_from_dict(raw: dict, base_dir: Path) -> TaskSpec:
    world = Path(raw["world"])
    if not world.is_absolute():
        world = base_dir / world
    task = TaskSpec(
        id=str(raw["id"]),
        world=world,
        instruction=raw.get("instruction", ""),
        goal=GoalCondition(dict(raw["goal"])),
        task_type=raw.get("type", ""),
        transcript=_resolve_transcript(raw.get("transcript", ""), base_dir),
    )
    task.validate()
    return task


def _resolve_transcript(ref: str, base_dir: Path) -> str:
    if not ref or "/" not in ref and not ref.endswith(".txt"):
        return ref
    path = Path(ref)
    return str(path if path.is_absolute() else base_dir / path)


def default_manifest() -> Path:
    return data_path("tasks", "wah_suite.json")


def load_manifest(path) -> list[TaskSpec]:
    path = Path(path)
    doc = json.loads(path.read_text())
    tasks = [task_from_dict(raw, path.parent) for raw in doc["tasks"]]
    ids = [t.id for t in tasks]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate task ids")
    return tasks


# -- metrics ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class TokenStats:
    max_input: int = 0
    mean_input: float = 0.0
    sd_input: float = 0.0
    mean_output: float = 0.0
    sd_output: float = 0.0


def compute_token_stats(events: Iterable) -> TokenStats:
    decisions = reconstruct(events).decisions
    if not decisions:
        return TokenStats()
    inputs = [d["prompt_tokens"] for d in decisions]
    outputs = [d["output_tokens"] for d in decisions]
    return TokenStats(
        max_input=max(inputs),
        mean_input=statistics.fmean(inputs),
        sd_input=statistics.pstdev(inputs),
        mean_output=statistics.fmean(outputs),
        sd_output=statistics.pstdev(outputs),
    )


@dataclass
class EpisodeResult:
    task_id: str
    task_type: str
    mode: str
    success: bool
    ssr: float
    tree_status: str
    decisions: int
    cap: int
    agent_nodes: int
    flow_nodes: int
    tokens: TokenStats
    per_predicate: dict = field(default_factory=dict)
    wall_time: float = 0.0
    trace: list = field(default_factory=list, repr=False)

    def to_dict(self, timings: bool = False) -> dict:
        out = asdict(self)
        out.pop("trace")
        if not timings:
            out.pop("wall_time")
        return out


def metrics_from_trace(events: Sequence) -> dict:
    """Everything an EpisodeResult reports, derived from the trace alone."""
    rebuilt = reconstruct(events)
    ep = rebuilt.episode or {}
    return {
        "task_id": ep.get("task_id", ""),
        "task_type": ep.get("task_type", ""),
        "mode": ep.get("mode", ""),
        "success": bool(ep.get("success", False)),
        "ssr": float(ep.get("ssr", 0.0)),
        "per_predicate": dict(ep.get("per_predicate", {})),
        "tree_status": ep.get("tree_status", "running"),
        "decisions": len(rebuilt.decisions),
        "cap": rebuilt.cap,
        "agent_nodes": len(rebuilt.agents),
        "flow_nodes": len(rebuilt.flows),
        "tokens": compute_token_stats(events),
    }


# -- episodes ----------------------------------------------------------------------------------


def run_episode(
    task: TaskSpec,
    policy: Policy,
    config: Optional[EngineConfig] = None,
    store: Optional[EpisodicStore] = None,
    embedder: Optional[EmbeddingProvider] = None,
) -> EpisodeResult:
    config = config or EngineConfig()
    env = Environment.from_file(task.world)
    task.goal.validate(env.state)
    recorder = TraceRecorder()
    engine = Engine(policy, env, config, store=store, embedder=embedder, trace=recorder)
    started = time.perf_counter()
    status, budget = engine.run(task.instruction)
    wall = time.perf_counter() - started
    success, ssr, per_predicate = evaluate_goal(env.state, task.goal)
    recorder.emit(
        "episode-result",
        {
            "task_id": task.id,
            "task_type": task.task_type,
            "mode": config.mode,
            "success": success,
            "ssr": ssr,
            "per_predicate": per_predicate,
            "tree_status": status.value,
            "decisions": budget.used,
        },
        budget,
    )
    return EpisodeResult(**metrics_from_trace(recorder.events), wall_time=wall, trace=recorder.events)


# -- suites ------------------------------------------------------------------------------------


def _pct(x: float) -> float:
    return round(100.0 * x, 2)


@dataclass
class SuiteReport:
    results: list[EpisodeResult]
    gsr: float
    ssr: float
    by_type: dict
    tags: dict = field(default_factory=dict)

    @classmethod
    def from_results(cls, results: Sequence[EpisodeResult]) -> SuiteReport:
        results = list(results)
        if not results:
            return cls([], 0.0, 0.0, {})
        by_type: dict[str, list[EpisodeResult]] = {}
        for r in results:
            by_type.setdefault(r.task_type or "untyped", []).append(r)
        return cls(
            results,
            gsr=_pct(sum(r.success for r in results) / len(results)),
            # macro average over tasks
            ssr=_pct(statistics.fmean(r.ssr for r in results)),
            by_type={
                t: {
                    "tasks": len(rs),
                    "gsr": _pct(sum(r.success for r in rs) / len(rs)),
                    "ssr": _pct(statistics.fmean(r.ssr for r in rs)),
                }
                for t, rs in sorted(by_type.items())
            },
        )

    def to_dict(self, timings: bool = False) -> dict:
        return {
            "tasks": len(self.results),
            "gsr": self.gsr,
            "ssr": self.ssr,
            "by_type": self.by_type,
            "results": [r.to_dict(timings) for r in self.results],
            "tags": self.tags,
        }

    def to_json(self, timings: bool = False) -> str:
        return json.dumps(self.to_dict(timings), indent=1, sort_keys=True) + "\n"


def run_suite(
    tasks: Sequence[TaskSpec],
    policy_for: Callable[[TaskSpec], Policy],
    config: Optional[EngineConfig] = None,
    store: Optional[EpisodicStore] = None,
    embedder: Optional[EmbeddingProvider] = None,
    workers: int = 1,
) -> SuiteReport:
    """Run every task; episodes only share the read-only store, so they may run concurrently."""

    def one(task: TaskSpec) -> EpisodeResult:
        return run_episode(task, policy_for(task), config, store, embedder)

    if workers <= 1:
        results = [one(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, tasks))
    return SuiteReport.from_results(results)


def tag_report(report: dict, task_id: str, tags: Iterable[str]) -> dict:
    known = {r["task_id"] for r in report["results"]}
    if task_id not in known:
        raise KeyError(f"task {task_id!r} is not in the report")
    merged = set(report.setdefault("tags", {}).get(task_id, []))
    merged.update(t.strip() for t in tags if t.strip())
    report["tags"][task_id] = sorted(merged)
    return report


# -- bootstrapping episodic memory --------------------------------------------------------------


def experiences_from_transcript(text: str) -> list[tuple[str, str, str]]:
    """(goal, trajectory, termination) per section of a hand-written transcript.

    A section ends in ``Act: done`` (success), ``Act: failure`` (failure) or
    an ``Expand:`` line (expand). Only decision lines are kept.
    """
    out = []
    for goal, lines in parse_transcript(text).lines.items():
        if not lines:
            continue
        last = lines[-1]
        if last.startswith("Expand:"):
            termination = "expand"
        elif last == "Act: done":
            termination = "success"
        elif last == "Act: failure":
            termination = "failure"
        else:
            raise ValueError(f"transcript section {goal!r} does not end in done, failure or an expansion")
        out.append((goal, "\n".join([f"Your task is to: {goal}", *lines]), termination))
    return out


@dataclass
class BootstrapSummary:
    seeded: int = 0
    episodes: int = 0
    successful: int = 0
    harvested: int = 0


def bootstrap(
    tasks: Sequence[TaskSpec],
    policy_for: Callable[[TaskSpec], Policy],
    store: EpisodicStore,
    embedder: EmbeddingProvider,
    config: Optional[EngineConfig] = None,
    seed_transcripts: Sequence[str] = (),
) -> BootstrapSummary:
    """Seed the store from hand-written transcripts, then keep only successful training runs."""
    summary = BootstrapSummary()
    for text in seed_transcripts:
        for goal, trajectory, termination in experiences_from_transcript(text):
            store.add(goal, trajectory, termination, embedder)
            summary.seeded += 1
    for task in tasks:
        # each episode retrieves from the store as it stood before the episode
        result = run_episode(task, policy_for(task), config, store, embedder)
        summary.episodes += 1
        summary.successful += result.success
        summary.harvested += harvest(result.trace, result.success, store, embedder)
    return summary


# -- replay ---------------------------------------------------------------------------------------


@dataclass
class ReplayReport:
    metrics: dict
    problems: list[str]

    @property
    def ok(self) -> bool:
        return not self.problems


def replay(events: Sequence[TraceEvent], task: Optional[TaskSpec] = None) -> ReplayReport:
    """Recompute metrics from a trace and check its structural invariants.

    With ``task`` given, the recorded actions are also re-executed in a fresh
    world: every observation and the final goal score must match the trace.
    """
    problems = []
    events = list(events)
    rebuilt = reconstruct(events)
    metrics = metrics_from_trace(events)

    for i, ev in enumerate(events):
        if ev.seq != i:
            problems.append(f"event {i} has sequence number {ev.seq}")
            break
    used = 0
    for ev in events:
        if ev.kind == "decision":
            used += 1
            if ev.used != used:
                problems.append(f"decision event {ev.seq} records budget {ev.used}, expected {used}")
        elif ev.used != used:
            problems.append(f"event {ev.seq} records budget {ev.used}, expected {used}")
    if used > rebuilt.cap:
        problems.append(f"{used} decisions exceed the cap of {rebuilt.cap}")

    agent_ids = sorted(rebuilt.agents)
    if agent_ids != list(range(len(agent_ids))):
        problems.append("agent node ids are not contiguous from 0")
    for flow in rebuilt.flows.values():
        if flow.parent not in rebuilt.agents:
            problems.append(f"flow node {flow.id} has no agent parent")
        if not flow.children:
            problems.append(f"flow node {flow.id} has no children")
        if flow.children != sorted(flow.children):
            problems.append(f"flow node {flow.id} children are not in creation order")
        parent = rebuilt.agents.get(flow.parent)
        if parent is not None and parent.status != flow.status:
            problems.append(f"agent node {parent.id} status {parent.status} differs from its flow's {flow.status}")

    ep = rebuilt.episode
    if ep is None:
        problems.append("trace has no episode-result event")
    else:
        if ep.get("decisions") != metrics["decisions"]:
            problems.append(f"episode reports {ep.get('decisions')} decisions, trace has {metrics['decisions']}")

    if task is not None:
        problems.extend(_resimulate(events, task, metrics))
    return ReplayReport(metrics, problems)


def _resimulate(events: Sequence[TraceEvent], task: TaskSpec, metrics: dict) -> list[str]:
    problems = []
    env = Environment.from_file(task.world)
    # recall answers are rebuilt from the replayed sightings, not trusted from the trace
    wm = WorkingMemory()
    pending = None
    for ev in events:
        p = ev.payload
        if ev.kind == "decision":
            line = p["line"]
            pending = None
            if p["kind"] == "act":
                command = line[len("Act: ") :]
                if command.startswith(RECALL + " "):
                    pending = wm.recall(command[len(RECALL) + 1 :])
                else:
                    obs = env.act(command)
                    wm.update(obs.sightings, step=ev.used)
                    pending = obs.text
        elif ev.kind == "observation" and p["step"] > 0 and pending is not None:
            if p["text"] != pending:
                problems.append(f"event {ev.seq}: replayed observation differs from the recorded one")
            pending = None
        elif ev.kind == "observation" and p["step"] == 0:
            obs = env.observe()
            wm.update(obs.sightings, step=ev.used)
            if p["text"] != obs.text:
                problems.append(f"event {ev.seq}: replayed node-start observation differs")
    success, ssr, _ = evaluate_goal(env.state, task.goal)
    if success != metrics["success"] or abs(ssr - metrics["ssr"]) > 1e-12:
        problems.append(f"replayed goal score ({success}, {ssr}) differs from the recorded one")
    return problems
