"""Command-line entry point: ``reactree <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Callable, Optional, Sequence

from reactree.engine import MODES, EngineConfig
from reactree.harness import (
    SUGGESTED_FAILURE_TAGS,
    TaskSpec,
    bootstrap,
    data_path,
    default_manifest,
    load_manifest,
    replay,
    run_episode,
    run_suite,
    tag_report,
    task_from_dict,
)
from reactree.memory import (
    DEFAULT_RETRIEVAL_BUDGET,
    EpisodicStore,
    HashingEmbedder,
    StoreMismatch,
    load_store,
    rank,
    save_store,
)
from reactree.policy import Policy, RemotePolicy, ScriptedPolicy, TranscriptMiss
from reactree.render import render_dot, render_outline
from reactree.simulator import GoalError, WorldFileError
from reactree.trace import read_trace, write_trace
from reactree.tree import FLOW_CONFIGS, control_flow_config

EXIT_CONFIG = 2


class ConfigError(Exception):
    pass


# -- argument helpers ------------------------------------------------------------------


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def _positive(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return n


def _add_episode_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", type=Path, help="task manifest (default: the bundled household suite)")
    p.add_argument("--mode", choices=MODES, default="reactree")
    p.add_argument(
        "--policy",
        default="scripted",
        help="'scripted' (each task's own transcript), 'scripted:<name|file|dir>' or 'remote'",
    )
    p.add_argument("--wm", type=_on_off, default=True, metavar="on|off", help="working memory")
    p.add_argument("--em", type=Path, help="episodic store to retrieve in-context examples from")
    p.add_argument("--flows", choices=sorted(FLOW_CONFIGS), default="all")
    p.add_argument("--max-decisions", type=_positive, help="decision cap (default: 200 household, 100 extended)")
    p.add_argument("--retrieval-budget", type=_positive, default=DEFAULT_RETRIEVAL_BUDGET)
    p.add_argument("--seed", type=int, default=0)


def _config(args) -> EngineConfig:
    return EngineConfig(
        mode=args.mode,
        working_memory=args.wm,
        allowed_flows=control_flow_config(args.flows),
        max_decisions=args.max_decisions,
        retrieval_budget=args.retrieval_budget,
        seed=args.seed,
    )


def _transcript_file(ref: str) -> Path:
    path = Path(ref)
    if path.is_file():
        return path
    bundled = data_path("transcripts", f"{ref}.txt")
    if bundled.is_file():
        return bundled
    raise ConfigError(f"no transcript file or bundled transcript named {ref!r}")


def policy_factory(spec: str) -> Callable[[TaskSpec], Policy]:
    if spec == "remote":
        remote = RemotePolicy()
        return lambda task: remote
    if spec == "scripted":

        def per_task(task: TaskSpec) -> Policy:
            if not task.transcript:
                raise ConfigError(f"task {task.id!r} names no transcript; pass --policy scripted:<file>")
            return ScriptedPolicy.from_file(_transcript_file(task.transcript))

        return per_task
    if spec.startswith("scripted:"):
        ref = spec[len("scripted:") :]
        if Path(ref).is_dir():
            directory = Path(ref)
            return lambda task: ScriptedPolicy.from_file(_transcript_file(str(directory / f"{task.id}.txt")))
        fixed = ScriptedPolicy.from_file(_transcript_file(ref))
        return lambda task: fixed
    raise ConfigError(f"unknown policy {spec!r}")


def _tasks(args) -> list[TaskSpec]:
    return load_manifest(args.manifest or default_manifest())


def _find_task(ref: str, manifest: Optional[Path]) -> TaskSpec:
    path = Path(ref)
    if path.suffix == ".json" and path.is_file():
        return task_from_dict(json.loads(path.read_text()), path.parent)
    for task in load_manifest(manifest or default_manifest()):
        if task.id == ref:
            return task
    raise ConfigError(f"no task {ref!r} in the manifest")


def _store(path: Optional[Path], embedder) -> Optional[EpisodicStore]:
    if path is None:
        return None
    if not path.is_file():
        raise ConfigError(f"episodic store {path} does not exist")
    return load_store(path, embedder)


def _write(path: Optional[Path], text: str) -> None:
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


# -- subcommands -------------------------------------------------------------------------


def cmd_run(args) -> int:
    task = _find_task(args.task, args.manifest)
    embedder = HashingEmbedder()
    result = run_episode(task, policy_factory(args.policy)(task), _config(args), _store(args.em, embedder), embedder)
    _write(args.trace_out, "".join(e.to_json() + "\n" for e in result.trace))
    report = json.dumps(result.to_dict(timings=True), indent=1, sort_keys=True)
    _write(args.report_out, report + "\n")
    print(report)
    print(render_outline(result.trace), end="")
    print(f"{'Success' if result.success else 'Failure'}: ssr {result.ssr:.2f}, {result.decisions} decisions")
    return 0


def cmd_suite(args) -> int:
    tasks = _tasks(args)
    embedder = HashingEmbedder()
    report = run_suite(
        tasks, policy_factory(args.policy), _config(args), _store(args.em, embedder), embedder, args.workers
    )
    if args.trace_dir is not None:
        args.trace_dir.mkdir(parents=True, exist_ok=True)
        for r in report.results:
            write_trace(r.trace, args.trace_dir / f"{r.task_id}.jsonl")
    _write(args.report_out, report.to_json())
    for r in report.results:
        print(f"{r.task_id:<24} {'success' if r.success else 'failure':<8} ssr {r.ssr:.2f}  {r.decisions} decisions")
    print(f"GSR {report.gsr:.2f}  SSR {report.ssr:.2f}  ({len(report.results)} tasks)")
    return 0


def cmd_bootstrap(args) -> int:
    embedder = HashingEmbedder()
    if args.store.is_file():
        store = load_store(args.store, embedder)
    else:
        store = EpisodicStore.for_embedder(embedder)
    seeds = [_transcript_file(str(p)).read_text() for p in args.seed_transcript]
    tasks = [] if args.seed_only else _tasks(args)
    summary = bootstrap(tasks, policy_factory(args.policy), store, embedder, _config(args), seeds)
    args.store.parent.mkdir(parents=True, exist_ok=True)
    save_store(store, args.store)
    print(json.dumps(asdict(summary), sort_keys=True))
    print(f"store {args.store}: {len(store)} experiences {store.counts()}")
    return 0


def cmd_memory_inspect(args) -> int:
    embedder = HashingEmbedder()
    store = load_store(args.store, embedder)
    print(f"embedder {store.embedder_id} (dim {store.dimension}), {len(store)} experiences")
    for term, n in store.counts().items():
        print(f"  {term}: {n}")
    if args.query:
        print(f"nearest to {args.query!r}:")
        for idx, sim in rank(store, embedder.embed(args.query), args.seed)[: args.k]:
            exp = store.experiences[idx]
            print(f"  {sim:.4f}  [{exp.termination}] {exp.goal} ({exp.token_count} tokens)")
    return 0


def cmd_replay(args) -> int:
    events = read_trace(args.trace)
    task = _find_task(args.task, args.manifest) if args.task else None
    rep = replay(events, task)
    m = dict(rep.metrics, tokens=asdict(rep.metrics["tokens"]))
    print(json.dumps(m, indent=1, sort_keys=True))
    if rep.ok:
        print("replay ok")
        return 0
    for problem in rep.problems:
        print(f"problem: {problem}")
    return 1


def cmd_render(args) -> int:
    events = read_trace(args.trace)
    parts = []
    if args.format in ("dot", "both"):
        parts.append(render_dot(events))
    if args.format in ("outline", "both"):
        parts.append(render_outline(events))
    text = "\n".join(parts)
    if args.out is not None:
        _write(args.out, text)
    else:
        print(text, end="")
    return 0


def cmd_tag(args) -> int:
    report = json.loads(args.report.read_text())
    tag_report(report, args.task_id, args.tags)
    args.report.write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    print(f"{args.task_id}: {', '.join(report['tags'][args.task_id])}")
    return 0


# -- parser ---------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reactree", description="Hierarchical agent-tree planner for household tasks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one task")
    p.add_argument("--task", required=True, help="task id in the manifest, or a task JSON file")
    _add_episode_flags(p)
    p.add_argument("--trace-out", type=Path)
    p.add_argument("--report-out", type=Path)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("suite", help="run every task in a manifest")
    _add_episode_flags(p)
    p.add_argument("--workers", type=_positive, default=1)
    p.add_argument("--report-out", type=Path)
    p.add_argument("--trace-dir", type=Path)
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("bootstrap", help="build an episodic store from transcripts and successful runs")
    _add_episode_flags(p)
    p.add_argument("--store", type=Path, required=True, help="store file to create or extend")
    p.add_argument("--seed-transcript", type=Path, action="append", default=[], help="hand-written transcript")
    p.add_argument("--seed-only", action="store_true", help="only seed from transcripts, run no tasks")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("memory", help="episodic store tools")
    msub = p.add_subparsers(dest="memory_command", required=True)
    mp = msub.add_parser("inspect", help="print store stats and nearest neighbours")
    mp.add_argument("--store", type=Path, required=True)
    mp.add_argument("--query", help="goal to find neighbours for")
    mp.add_argument("-k", type=_positive, default=5)
    mp.add_argument("--seed", type=int, default=0)
    mp.set_defaults(func=cmd_memory_inspect)

    p = sub.add_parser("replay", help="re-derive metrics from a trace and check its invariants")
    p.add_argument("trace", type=Path)
    p.add_argument("--task", help="also re-simulate the recorded actions on this task's world")
    p.add_argument("--manifest", type=Path)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("render", help="draw the tree recorded in a trace")
    p.add_argument("trace", type=Path)
    p.add_argument("--format", choices=("outline", "dot", "both"), default="both")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("tag", help="attach failure tags to a task in a suite report")
    p.add_argument("report", type=Path)
    p.add_argument("task_id")
    p.add_argument("tags", nargs="+", help=f"e.g. {', '.join(SUGGESTED_FAILURE_TAGS)}")
    p.set_defaults(func=cmd_tag)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (
        ConfigError,
        WorldFileError,
        GoalError,
        StoreMismatch,
        TranscriptMiss,
        FileNotFoundError,
        json.JSONDecodeError,
        KeyError,
        ValueError,
    ) as exc:
        print(f"reactree: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
