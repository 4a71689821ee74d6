import json

import httpx
import pytest

from reactree.policy import (
    ParseRejection,
    PolicyTransportError,
    RemotePolicy,
    ScriptedPolicy,
    TranscriptMiss,
    decide,
    parse_decision,
    parse_transcript,
)
from reactree.prompts import SkillGrammar, build_prompt
from reactree.tree import Act, ControlFlowType, DeclareFailure, Done, Expand, Think, AgentNode, control_flow_config

GRAMMAR = SkillGrammar.for_profile("household", working_memory=True)


def _bundle(subgoal="move the wine", steps=0):
    node = AgentNode(0, subgoal)
    node.observe("start")
    for _ in range(steps):
        node.record_action("Think: x")
        node.observe("")
    return build_prompt(node, (), GRAMMAR)


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("Think: I need the wine first.", Think("I need the wine first.")),
        ("act:  go to   kitchen 1", Act("go to", "kitchen 1")),
        ("Act: Recall location of wine", Act("recall location of", "wine")),
        ("Act: done", Done()),
        ("ACT: Failure", DeclareFailure()),
        ("Act: put down wine 1\nextra text", Act("put down", "wine 1")),
        (
            "Expand: {'control_flow': 'fallback', 'conditions': 'find and pick up the wine in kitchen 1, find it elsewhere'}",
            Expand(ControlFlowType.FALLBACK, ("find and pick up the wine in kitchen 1", "find it elsewhere")),
        ),
        ('Expand: {"control_flow": "Parallel", "conditions": ["a", " b "]}', Expand(ControlFlowType.PARALLEL, ("a", "b"))),
    ],
)
def test_parse_decision_accepts(raw, expected):
    assert parse_decision(raw, GRAMMAR) == expected


@pytest.mark.parametrize(
    "raw",
    [
        "",
        "I will go to the kitchen",
        "Think:",
        "Act: fly to kitchen 1",
        "Act: go to",
        "Expand: sequence of a and b",
        "Expand: {'control_flow': 'loop', 'conditions': 'a'}",
        "Expand: {'control_flow': 'sequence', 'conditions': ' , '}",
        "Expand: ['sequence', 'a']",
    ],
)
def test_parse_decision_rejects(raw):
    with pytest.raises(ParseRejection):
        parse_decision(raw, GRAMMAR)


def test_parse_decision_respects_grammar_options():
    no_wm = SkillGrammar.for_profile("household", working_memory=False)
    with pytest.raises(ParseRejection):
        parse_decision("Act: recall location of wine", no_wm)
    seq_only = SkillGrammar.for_profile("household", allowed_flows=control_flow_config("seq"))
    with pytest.raises(ParseRejection, match="not allowed"):
        parse_decision("Expand: {'control_flow': 'fallback', 'conditions': 'a'}", seq_only)
    with pytest.raises(ParseRejection, match="not available"):
        parse_decision("Expand: {'control_flow': 'sequence', 'conditions': 'a'}", GRAMMAR, expand_allowed=False)


class _Lines:
    def __init__(self, *lines):
        self.lines = list(lines)
        self.feedback = []

    def complete(self, bundle, feedback=()):
        self.feedback.append(tuple(feedback))
        return self.lines.pop(0)


def test_decide_retries_with_feedback():
    policy = _Lines("nonsense", "Act: fly 1", "Act: done")
    out = decide(policy, _bundle(), GRAMMAR)
    assert out.decision == Done() and out.attempts == 3
    assert len(policy.feedback[2]) == 2
    assert "accepted after 2 rejection(s)" in out.note


def test_decide_fails_after_three_rejections():
    policy = _Lines("a", "b", "c", "Act: done")
    out = decide(policy, _bundle(), GRAMMAR)
    assert isinstance(out.decision, DeclareFailure) and out.attempts == 3
    assert policy.lines == ["Act: done"]


def test_decide_turns_transport_errors_into_failure():
    class Down:
        def complete(self, bundle, feedback=()):
            raise PolicyTransportError("unreachable")

    out = decide(Down(), _bundle(), GRAMMAR)
    assert isinstance(out.decision, DeclareFailure) and "transport failure" in out.note


# -- remote endpoint ----------------------------------------------------------------------


def _remote(handler, **kw):
    return RemotePolicy("http://policy.test/v1", "m", backoff=0, client=httpx.Client(transport=httpx.MockTransport(handler)), **kw)


def test_remote_request_shape():
    seen = []

    def handler(request):
        seen.append(request)
        return httpx.Response(200, json={"choices": [{"message": {"content": " Act: done\nmore"}}]})

    policy = _remote(handler, api_key="k")
    assert policy.complete(_bundle(), ("bad line",)) == "Act: done"
    req = seen[0]
    assert req.url == "http://policy.test/v1/chat/completions"
    assert req.headers["authorization"] == "Bearer k"
    body = json.loads(req.content)
    assert body["model"] == "m" and body["temperature"] == 0.0 and body["stop"] == ["\n"]
    assert [m["role"] for m in body["messages"]] == ["system", "user"]
    assert body["messages"][1]["content"].endswith("Your previous output was rejected: bad line. Reply with a single valid line.")


def test_remote_without_key_sends_no_auth_header():
    seen = []

    def handler(request):
        seen.append(request)
        return httpx.Response(200, json={"choices": [{"message": {"content": "Act: done"}}]})

    _remote(handler, api_key="").complete(_bundle())
    assert "authorization" not in seen[0].headers


def test_remote_retries_then_gives_up():
    calls = []

    def flaky(request):
        calls.append(1)
        if len(calls) < 3:
            return httpx.Response(503)
        return httpx.Response(200, json={"choices": [{"message": {"content": "Think: ok"}}]})

    assert _remote(flaky).complete(_bundle()) == "Think: ok" and len(calls) == 3

    def broken(request):
        return httpx.Response(200, json={"unexpected": True})

    with pytest.raises(PolicyTransportError):
        _remote(broken, attempts=2).complete(_bundle())


# -- scripted -------------------------------------------------------------------------------


TRANSCRIPT = """\
### root
Your task is to: move the wine
start
Think: find it first
Act: done
"""


def test_scripted_policy_follows_steps():
    policy = ScriptedPolicy(parse_transcript(TRANSCRIPT))
    assert policy.complete(_bundle()) == "Think: find it first"
    assert policy.complete(_bundle(steps=1)) == "Act: done"
    with pytest.raises(TranscriptMiss):
        policy.complete(_bundle(steps=2))
    with pytest.raises(TranscriptMiss):
        policy.complete(_bundle("other goal"))


def test_scripted_default_line():
    policy = ScriptedPolicy(parse_transcript("Default: Act: failure\n" + TRANSCRIPT))
    assert policy.complete(_bundle("other goal")) == "Act: failure"


def test_transcript_rejects_duplicate_subgoals():
    with pytest.raises(ValueError, match="twice"):
        parse_transcript(TRANSCRIPT + TRANSCRIPT)
