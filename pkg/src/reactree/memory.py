"""Episodic memory (subgoal-level experiences retrieved by goal similarity)
and working memory (per-episode last-seen locations of movable objects)."""

from __future__ import annotations

import hashlib
import json
import random
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Protocol, Sequence

import numpy as np

from reactree.tokens import estimate_tokens

TERMINATIONS = ("success", "failure", "expand")
STORE_FORMAT = "reactree-episodic-store"
STORE_VERSION = 1
DEFAULT_RETRIEVAL_BUDGET = 5000
SIMILARITY_DECIMALS = 9


class UndefinedSimilarity(ValueError):
    pass


class StoreMismatch(ValueError):
    """Store written by a different embedder or in an unknown format version."""


# -- embeddings ---------------------------------------------------------------------


class EmbeddingProvider(Protocol):
    name: str
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


class HashingEmbedder:
    """Hashed bag of words over lowercase alphanumeric tokens, L2-normalized.

    Needs no model download and is stable across processes and platforms.
    """

    def __init__(self, dimension: int = 256):
        self.dimension = dimension
        self.name = f"hashed-bow-{dimension}"

    def _bucket(self, token: str) -> int:
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big") % self.dimension

    def embed(self, text: str) -> np.ndarray:
        tokens = re.findall(r"[a-z0-9]+", text.lower())
        if not tokens and text.strip():
            tokens = [text.strip().lower()]
        vec = np.zeros(self.dimension)
        for tok in tokens:
            vec[self._bucket(tok)] += 1.0
        norm = np.linalg.norm(vec)
        return vec / norm if norm else vec


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise UndefinedSimilarity("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


# -- episodic store ----------------------------------------------------------------


@dataclass
class Experience:
    goal: str
    trajectory: str
    embedding: np.ndarray
    termination: str
    token_count: int = -1

    def __post_init__(self):
        if self.termination not in TERMINATIONS:
            raise ValueError(f"termination must be one of {TERMINATIONS}, got {self.termination!r}")
        self.embedding = np.asarray(self.embedding, dtype=float)
        if self.token_count < 0:
            self.token_count = estimate_tokens(self.trajectory)

    def __eq__(self, other):
        if not isinstance(other, Experience):
            return NotImplemented
        return (
            self.goal == other.goal
            and self.trajectory == other.trajectory
            and self.termination == other.termination
            and self.token_count == other.token_count
            and np.array_equal(self.embedding, other.embedding)
        )


@dataclass
class EpisodicStore:
    embedder_id: str
    dimension: int
    experiences: list[Experience] = field(default_factory=list)

    @classmethod
    def for_embedder(cls, embedder: EmbeddingProvider) -> EpisodicStore:
        return cls(embedder.name, embedder.dimension)

    def __len__(self):
        return len(self.experiences)

    def add(self, goal: str, trajectory: str, termination: str, embedder: EmbeddingProvider) -> Experience:
        self.check_embedder(embedder)
        exp = Experience(goal, trajectory, embedder.embed(goal), termination)
        self.experiences.append(exp)
        return exp

    def check_embedder(self, embedder: EmbeddingProvider) -> None:
        if embedder.name != self.embedder_id or embedder.dimension != self.dimension:
            raise StoreMismatch(
                f"store was built with {self.embedder_id} (dim {self.dimension}); "
                f"session uses {embedder.name} (dim {embedder.dimension})"
            )

    def counts(self) -> dict[str, int]:
        out = dict.fromkeys(TERMINATIONS, 0)
        for exp in self.experiences:
            out[exp.termination] += 1
        return out


def save_store(store: EpisodicStore, path) -> None:
    doc = {
        "format": STORE_FORMAT,
        "version": STORE_VERSION,
        "embedder_id": store.embedder_id,
        "dimension": store.dimension,
        "experiences": [
            {
                "goal": e.goal,
                "trajectory": e.trajectory,
                "termination": e.termination,
                "token_count": e.token_count,
                # repr-precision floats round-trip exactly through json
                "embedding": [float(x) for x in e.embedding],
            }
            for e in store.experiences
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_store(path, embedder: Optional[EmbeddingProvider] = None) -> EpisodicStore:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != STORE_FORMAT:
        raise StoreMismatch(f"{path}: not an episodic store file")
    if doc.get("version") != STORE_VERSION:
        raise StoreMismatch(f"{path}: unsupported store version {doc.get('version')!r}")
    store = EpisodicStore(doc["embedder_id"], int(doc["dimension"]))
    if embedder is not None:
        store.check_embedder(embedder)
    for rec in doc["experiences"]:
        emb = np.array(rec["embedding"], dtype=float)
        if emb.shape != (store.dimension,):
            raise StoreMismatch(f"{path}: embedding of length {emb.size}, expected {store.dimension}")
        store.experiences.append(
            Experience(rec["goal"], rec["trajectory"], emb, rec["termination"], int(rec["token_count"]))
        )
    return store


# -- retrieval -----------------------------------------------------------------------


def stratified_tie_order(indices: Sequence[int], terminations: Sequence[str], rng: random.Random) -> list[int]:
    """Order a group of equally similar experiences.

    Termination states present in the group are visited round-robin in a
    shuffled order; each state's members are shuffled. ``indices`` must be in
    store order. Consumes ``rng`` as: one shuffle of the sorted state names,
    then one shuffle per state bucket in that shuffled state order.
    """
    buckets: dict[str, list[int]] = defaultdict(list)
    for idx, term in zip(indices, terminations):
        buckets[term].append(idx)
    states = sorted(buckets)
    rng.shuffle(states)
    for state in states:
        rng.shuffle(buckets[state])
    order = []
    depth = 0
    while len(order) < len(indices):
        for state in states:
            if depth < len(buckets[state]):
                order.append(buckets[state][depth])
        depth += 1
    return order


def rank(store: EpisodicStore, query: np.ndarray, rng_seed: int = 0) -> list[tuple[int, float]]:
    """All store indices, most similar first, ties ordered by seeded stratified sampling."""
    if not store.experiences:
        return []
    matrix = np.stack([e.embedding for e in store.experiences])
    norms = np.linalg.norm(matrix, axis=1) * np.linalg.norm(query)
    if np.any(norms == 0):
        raise UndefinedSimilarity("zero embedding in store or query")
    sims = np.round(matrix @ query / norms, SIMILARITY_DECIMALS)
    groups: dict[float, list[int]] = defaultdict(list)
    for idx, sim in enumerate(sims.tolist()):
        groups[sim].append(idx)
    rng = random.Random(rng_seed)
    ranked = []
    for sim in sorted(groups, reverse=True):
        members = groups[sim]
        if len(members) > 1:
            members = stratified_tie_order(members, [store.experiences[i].termination for i in members], rng)
        ranked.extend((i, sim) for i in members)
    return ranked


def retrieve(
    store: EpisodicStore,
    goal: str,
    embedder: EmbeddingProvider,
    budget_tokens: int = DEFAULT_RETRIEVAL_BUDGET,
    rng_seed: int = 0,
) -> list[Experience]:
    """Most similar experiences first, stopping at the first one that would overflow the token budget."""
    store.check_embedder(embedder)
    picked = []
    total = 0
    for idx, _ in rank(store, embedder.embed(goal), rng_seed):
        exp = store.experiences[idx]
        if total + exp.token_count > budget_tokens:
            break
        picked.append(exp)
        total += exp.token_count
    return picked


# -- working memory --------------------------------------------------------------------


@dataclass
class LastSeen:
    room: str
    receptacle: Optional[str]
    step: int


class WorkingMemory:
    """Shared blackboard of where each movable object instance was last seen."""

    def __init__(self):
        self.sightings: dict[str, dict[int, LastSeen]] = {}

    def update(self, sightings: Iterable, step: int = 0) -> None:
        for s in sightings:
            self.sightings.setdefault(s.cls, {})[s.id] = LastSeen(s.room, s.receptacle, step)

    def recall(self, object_class: str) -> str:
        words = object_class.strip().lower().split()
        instance = None
        if len(words) > 1 and words[-1].isdigit():
            instance = int(words.pop())
        cls = " ".join(words)
        seen = self.sightings.get(cls, {})
        if instance is not None:
            seen = {k: v for k, v in seen.items() if k == instance}
        if not seen:
            return f"You have not seen {object_class.strip()} before."
        sentences = []
        for ident in sorted(seen):
            loc = seen[ident]
            near = f" near {loc.receptacle}" if loc.receptacle else ""
            sentences.append(f"You saw {cls} {ident}{near} in {loc.room}.")
        return " ".join(sentences)


def wm_update(wm: WorkingMemory, sightings, step: int = 0) -> WorkingMemory:
    wm.update(sightings, step)
    return wm


def wm_recall(wm: WorkingMemory, object_class: str) -> str:
    return wm.recall(object_class)


# -- harvesting --------------------------------------------------------------------------


def harvest(trace_events, task_succeeded: bool, store: EpisodicStore, embedder: EmbeddingProvider) -> int:
    """Append one experience per agent node of a successful episode; failed episodes add nothing.

    Nodes that failed inside a successful episode are kept with termination ``failure``.
    """
    if not task_succeeded:
        return 0
    from reactree.trace import reconstruct

    rebuilt = reconstruct(trace_events)
    added = 0
    for node_id in sorted(rebuilt.agents):
        rec = rebuilt.agents[node_id]
        if rec.status == "running":
            continue
        store.add(rec.subgoal, rec.trajectory, rec.termination, embedder)
        added += 1
    return added
