"""Decision sources and the decision-line grammar.

A policy turns a rendered prompt into one raw line. ``decide`` parses that
line, and on a malformed or disallowed line asks again with the rejection
reason attached, up to ``max_retries`` times, before giving up with a
failure decision. This stands in for constrained decoding on endpoints that
expose no logits.
"""

from __future__ import annotations

import ast
import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence

import httpx

from reactree.prompts import RECALL, PromptBundle, SkillGrammar
from reactree.tokens import estimate_tokens
from reactree.tree import (
    Act,
    AgentDecision,
    ControlFlowType,
    DeclareFailure,
    Done,
    Expand,
    Think,
)

log = logging.getLogger(__name__)

ENV_BASE_URL = "REACTREE_BASE_URL"
ENV_MODEL = "REACTREE_MODEL"
ENV_API_KEY = "REACTREE_API_KEY"

_DECISION_RE = re.compile(r"^\s*(think|act|expand)\s*:\s*(.*)$", re.IGNORECASE | re.DOTALL)


class ParseRejection(ValueError):
    """A policy line outside the decision grammar; ``str(exc)`` is fed back to the policy."""


class PolicyTransportError(RuntimeError):
    pass


class TranscriptMiss(LookupError):
    pass


# -- parsing ------------------------------------------------------------------------


def _expand_payload(payload: str) -> dict:
    payload = payload.strip()
    try:
        data = ast.literal_eval(payload)
    except (ValueError, SyntaxError):
        try:
            data = json.loads(payload)
        except json.JSONDecodeError:
            raise ParseRejection(
                "expand payload must look like {'control_flow': 'sequence', 'conditions': 'subgoal 1, subgoal 2'}"
            ) from None
    if not isinstance(data, dict):
        raise ParseRejection("expand payload must be a mapping with control_flow and conditions")
    return data


def parse_decision(raw: str, grammar: SkillGrammar, expand_allowed: bool = True) -> AgentDecision:
    line = raw.strip().splitlines()[0].strip() if raw.strip() else ""
    m = _DECISION_RE.match(line)
    if not m:
        raise ParseRejection("the line must start with Think:, Act: or Expand:")
    kind, body = m.group(1).lower(), m.group(2).strip()

    if kind == "think":
        if not body:
            raise ParseRejection("a thought cannot be empty")
        return Think(body)

    if kind == "act":
        action = " ".join(body.split())
        lowered = action.lower()
        if lowered == "done":
            return Done()
        if lowered == "failure":
            return DeclareFailure()
        verbs = list(grammar.verbs) + ([RECALL] if grammar.working_memory else [])
        for verb in sorted(verbs, key=len, reverse=True):
            if lowered.startswith(verb + " "):
                target = action[len(verb) + 1 :].strip()
                if target:
                    return Act(verb, target)
        raise ParseRejection(f"unknown action {action!r}; use one of: {', '.join(grammar.action_list)}")

    if not expand_allowed:
        raise ParseRejection("expanding is not available; use Think: or Act:")
    data = _expand_payload(body)
    flow_name = data.get("control_flow")
    conditions = data.get("conditions")
    try:
        flow = ControlFlowType(str(flow_name).strip().lower())
    except ValueError:
        raise ParseRejection(f"unknown control flow {flow_name!r}") from None
    if flow not in grammar.allowed_flows:
        allowed = ", ".join(f.value for f in ControlFlowType if f in grammar.allowed_flows)
        raise ParseRejection(f"control flow {flow.value!r} is not allowed; use one of: {allowed}")
    if isinstance(conditions, (list, tuple)):
        pieces = [str(c) for c in conditions]
    elif isinstance(conditions, str):
        # commas only: a subgoal like "find and pick up the wine" keeps its "and"
        pieces = conditions.split(",")
    else:
        raise ParseRejection("conditions must be a comma-separated string of subgoals")
    subgoals = tuple(p.strip() for p in pieces if p.strip())
    if not subgoals:
        raise ParseRejection("an expansion needs at least one subgoal")
    return Expand(flow, subgoals)


def normalize_line(raw: str, grammar: SkillGrammar, expand_allowed: bool = True) -> str:
    return parse_decision(raw, grammar, expand_allowed).render()


# -- policies ------------------------------------------------------------------------


class Policy(Protocol):
    def complete(self, bundle: PromptBundle, feedback: Sequence[str] = ()) -> str: ...


@dataclass
class PolicyTranscript:
    """Scripted decision lines per subgoal, looked up by step index."""

    lines: dict[str, list[str]] = field(default_factory=dict)
    default: Optional[str] = None

    def lookup(self, subgoal: str, step: int) -> str:
        script = self.lines.get(subgoal.strip(), [])
        if step < len(script):
            return script[step]
        if self.default is not None:
            return self.default
        raise TranscriptMiss(f"no scripted line for subgoal {subgoal!r} at step {step}")


def split_transcript(text: str) -> list[tuple[str, list[str]]]:
    """Split a transcript into (subgoal, lines after the task line) sections.

    Sections start at ``###`` headers; the subgoal is taken from the first
    ``Your task is to:`` line in each section.
    """
    sections: list[tuple[str, list[str]]] = []
    current: Optional[list[str]] = None
    for line in text.splitlines():
        if line.startswith("###"):
            current = None
            continue
        if current is None:
            if line.startswith("Your task is to:"):
                current = []
                sections.append((line[len("Your task is to:") :].strip(), current))
            continue
        current.append(line)
    return sections


def parse_transcript(text: str) -> PolicyTranscript:
    transcript = PolicyTranscript()
    for line in text.splitlines():
        if line.startswith("Default:"):
            transcript.default = line[len("Default:") :].strip()
    for subgoal, body in split_transcript(text):
        if subgoal in transcript.lines:
            raise ValueError(f"transcript lists subgoal {subgoal!r} twice")
        transcript.lines[subgoal] = [ln.strip() for ln in body if _DECISION_RE.match(ln)]
    return transcript


class ScriptedPolicy:
    def __init__(self, transcript: PolicyTranscript, name: str = "scripted"):
        self.transcript = transcript
        self.name = name

    @classmethod
    def from_file(cls, path) -> ScriptedPolicy:
        path = Path(path)
        return cls(parse_transcript(path.read_text()), name=f"scripted:{path.stem}")

    def complete(self, bundle: PromptBundle, feedback: Sequence[str] = ()) -> str:
        return self.transcript.lookup(bundle.subgoal, bundle.step)


class RemotePolicy:
    """Chat-completion endpoint, one fresh single-turn request per decision."""

    def __init__(
        self,
        base_url: Optional[str] = None,
        model: Optional[str] = None,
        api_key: Optional[str] = None,
        max_tokens: int = 128,
        attempts: int = 3,
        backoff: float = 0.5,
        timeout: float = 60.0,
        client: Optional[httpx.Client] = None,
    ):
        self.base_url = (base_url or os.environ.get(ENV_BASE_URL, "http://localhost:8000/v1")).rstrip("/")
        self.model = model or os.environ.get(ENV_MODEL, "default")
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY, "")
        self.max_tokens = max_tokens
        self.attempts = attempts
        self.backoff = backoff
        self.client = client or httpx.Client(timeout=timeout)
        self.name = f"remote:{self.model}"

    def request_body(self, bundle: PromptBundle, feedback: Sequence[str] = ()) -> dict:
        user = bundle.user_text()
        for note in feedback:
            user += f"\nYour previous output was rejected: {note}. Reply with a single valid line."
        return {
            "model": self.model,
            "messages": [
                {"role": "system", "content": bundle.system_text},
                {"role": "user", "content": user},
            ],
            "temperature": 0.0,
            "max_tokens": self.max_tokens,
            "stop": ["\n"],
        }

    def complete(self, bundle: PromptBundle, feedback: Sequence[str] = ()) -> str:
        body = self.request_body(bundle, feedback)
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        last = None
        for attempt in range(self.attempts):
            try:
                resp = self.client.post(f"{self.base_url}/chat/completions", json=body, headers=headers)
                resp.raise_for_status()
                content = resp.json()["choices"][0]["message"]["content"] or ""
                return content.strip().split("\n", 1)[0]
            except (httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
                last = exc
                log.warning("policy request attempt %d/%d failed: %r", attempt + 1, self.attempts, exc)
                if attempt + 1 < self.attempts and self.backoff > 0:
                    time.sleep(self.backoff * 2**attempt)
        raise PolicyTransportError(f"endpoint unreachable after {self.attempts} attempts: {last!r}")


# -- decide ----------------------------------------------------------------------------


@dataclass(frozen=True)
class PolicyOutput:
    decision: AgentDecision
    raw: str
    attempts: int
    prompt_tokens: int
    output_tokens: int
    note: str = ""


def decide(
    policy: Policy,
    bundle: PromptBundle,
    grammar: SkillGrammar,
    expand_allowed: bool = True,
    max_retries: int = 2,
) -> PolicyOutput:
    feedback: list[str] = []
    raw = ""
    prompt_tokens = bundle.tokens
    for attempt in range(1, max_retries + 2):
        try:
            raw = policy.complete(bundle, tuple(feedback))
        except PolicyTransportError as exc:
            return PolicyOutput(DeclareFailure(str(exc)), "", attempt, prompt_tokens, 0, f"transport failure: {exc}")
        prompt_tokens = bundle.tokens + sum(estimate_tokens(f) for f in feedback)
        try:
            decision = parse_decision(raw, grammar, expand_allowed)
        except ParseRejection as exc:
            feedback.append(str(exc))
            continue
        note = f"accepted after {attempt - 1} rejection(s): {'; '.join(feedback)}" if feedback else ""
        return PolicyOutput(decision, raw, attempt, prompt_tokens, estimate_tokens(raw), note)
    reason = f"rejected {len(feedback)} time(s): {'; '.join(feedback)}"
    return PolicyOutput(DeclareFailure(reason), raw, max_retries + 1, prompt_tokens, estimate_tokens(raw), reason)
